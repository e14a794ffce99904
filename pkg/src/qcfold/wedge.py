"""Folded surface over one wedge and its tubular offset into a slab.

The wedge is D_k = {r <= 1, 0 <= theta <= pi/k}.  The surface map sends
(x, y) to (g(r) x/r, g(r) y/r, r h(r) theta): the planar radius is
remapped by the contraction profile and the excess stretch is folded into
the vertical coordinate.  Offsetting along the unit normal, scaled by
g'(r), extends the surface map to a slab around the wedge.
"""

from dataclasses import dataclass, field

import numpy as np

from .profiles import RadialProfile, wedge_bump_poly, bump_normalization

__all__ = [
    "WedgeConfig",
    "REGION_NAMES",
    "region_code",
    "surface_map",
    "surface_jacobian",
    "surface_normal",
    "offset_map",
    "classify_region",
]

# Region codes for one wedge cell of the cylinder.
REGION_NAMES = ("E_plus", "E_minus", "S1", "S1_prime", "S2", "S2_prime")
E_PLUS, E_MINUS, S1, S1_PRIME, S2, S2_PRIME = range(6)


def region_code(name):
    return REGION_NAMES.index(name)


@dataclass(frozen=True)
class WedgeConfig:
    """Geometry of one wedge cell: fold count k, slab half-thickness eps,
    graph-interpolation factor s, and the bump normalization.

    The bump psi is the wedge polynomial rescaled so that max psi = eps,
    and phi = s * psi bounds the slab |t| <= phi(x, y).
    """

    k: int
    eps: float
    s: float
    profile: RadialProfile
    psi_norm: float = field(default=0.0)

    def __post_init__(self):
        if self.k < 4:
            raise ValueError("need k >= 4 so the wedge angle is below pi/4")
        if not (0.0 < self.eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")
        if not (0.0 < self.s <= 1.0):
            raise ValueError("s must lie in (0, 1]")
        if self.psi_norm <= 0.0:
            object.__setattr__(self, "psi_norm", bump_normalization(self.k))

    @property
    def alpha(self):
        """Wedge opening angle pi/k."""
        return np.pi / self.k

    # --- membership -------------------------------------------------------

    def in_wedge(self, x, y, tol=1e-12):
        """Closed wedge D_k membership (polar test with tolerance)."""
        r = np.hypot(x, y)
        theta = np.arctan2(y, x)
        return (r <= 1.0 + tol) & (theta >= -tol) & (theta <= self.alpha + tol)

    def in_halo(self, x, y):
        """Membership in the open 1/k-widened wedge: r < 1 + 1/k and
        theta within 1/k of the angular range."""
        r = np.hypot(x, y)
        theta = np.arctan2(y, x)
        pad = 1.0 / self.k
        return (r < 1.0 + pad) & (theta > -pad) & (theta < self.alpha + pad)

    # --- bump -------------------------------------------------------------

    def psi(self, x, y, validate=True):
        """Bump with zero set exactly the wedge boundary, scaled to [0, eps]."""
        if validate and not np.all(self.in_wedge(x, y)):
            raise ValueError("psi is only defined on the wedge")
        return self.eps * wedge_bump_poly(self.k, x, y) / self.psi_norm

    def phi(self, x, y, validate=True):
        """Slab half-thickness s * psi at (x, y)."""
        return self.s * self.psi(x, y, validate=validate)


# --- surface map and differential ------------------------------------------


def _polar(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.hypot(x, y), np.arctan2(y, x)


def surface_map(config, x, y, validate=True):
    """Image of (x, y) on the folded surface, shape (..., 3).

    The polar angle is preserved, the planar radius becomes g(r), and the
    height is r*h(r)*theta.  For r < a this reduces to b*(x, y, 0) exactly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if validate and not np.all(config.in_halo(x, y)):
        raise ValueError("point outside the widened wedge")
    p = config.profile
    r, theta = _polar(x, y)
    inner = r < p.a
    safe = np.where(r > 0, r, 1.0)
    scale = np.where(inner, p.b, p.value(r) / safe)
    height = np.where(inner, 0.0, r * p.fold_height(r) * theta)
    return np.stack(np.broadcast_arrays(scale * x, scale * y, height), axis=-1)


def surface_jacobian(config, x, y, validate=True):
    """Analytic 3x2 differential of the surface map, shape (..., 3, 2).

    For r < a the columns are exactly b*e1, b*e2 (conformal scaling into
    the plane).  The height row follows from differentiating r*h(r)*theta.
    """
    if validate and not np.all(config.in_halo(x, y)):
        raise ValueError("point outside the widened wedge")
    p = config.profile
    shape = np.broadcast(np.asarray(x, dtype=float), np.asarray(y, dtype=float)).shape
    xf = np.broadcast_to(np.asarray(x, dtype=float), shape).ravel()
    yf = np.broadcast_to(np.asarray(y, dtype=float), shape).ravel()
    r, theta = _polar(xf, yf)
    out = np.zeros((xf.size, 3, 2), dtype=float)

    inner = r < p.a
    out[inner, 0, 0] = p.b
    out[inner, 1, 1] = p.b

    gen = ~inner
    if np.any(gen):
        rg, xg, yg, tg = r[gen], xf[gen], yf[gen], theta[gen]
        g = p.value(rg)
        gp = p.deriv(rg)
        h = p.fold_height(rg)
        hp = p.fold_height_deriv(rg)
        r2 = rg * rg
        r3 = r2 * rg
        cross = xg * yg * (gp / r2 - g / r3)
        out[gen, 0, 0] = yg ** 2 * g / r3 + xg ** 2 * gp / r2
        out[gen, 0, 1] = cross
        out[gen, 1, 0] = cross
        out[gen, 1, 1] = xg ** 2 * g / r3 + yg ** 2 * gp / r2
        out[gen, 2, 0] = (-yg + xg * tg) * h / rg + xg * tg * hp
        out[gen, 2, 1] = (xg + yg * tg) * h / rg + yg * tg * hp
    return out.reshape(shape + (3, 2))


def surface_normal(config, x, y, validate=True):
    """Unit normal to the folded surface: cross product of the two tangent
    columns, normalized.  Rank deficiency raises."""
    jac = surface_jacobian(config, x, y, validate=validate)
    n = np.cross(jac[..., 0], jac[..., 1])
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    if np.any(norm <= 1e-300):
        raise ArithmeticError("surface differential is rank deficient")
    return n / norm


def offset_map(config, x, y, t, validate=True, extended=False):
    """Tubular offset: surface point plus t * g'(r) * normal, shape (..., 3).

    The natural domain is the slab |t| <= phi(x, y); with ``extended`` the
    map is evaluated on |t| <= eps (used while calibrating eps).
    For r < a this is exactly b*(x, y, t).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if validate:
        if not np.all(config.in_wedge(x, y)):
            raise ValueError("planar point outside the wedge")
        cap = config.eps if extended else config.phi(x, y, validate=False)
        if np.any(np.abs(t) > cap + 1e-12):
            raise ValueError("offset coordinate outside the slab")
    p = config.profile
    r, _ = _polar(x, y)
    base = surface_map(config, x, y, validate=False)
    normal = surface_normal(config, x, y, validate=False)
    gp = np.where(r < p.a, p.b, p.deriv(r))
    return base + np.asarray(t)[..., None] * gp[..., None] * normal


def classify_region(config, z, tol=1e-12):
    """Region codes for points of the wedge cell D_k x [-2, 2].

    Ties at the slab graphs go to the slab (comparison by <=); t = 0 goes
    to E_plus.  Points outside the cell raise.
    """
    z = np.asarray(z, dtype=float)
    x, y, t = z[..., 0], z[..., 1], z[..., 2]
    if not np.all(config.in_wedge(x, y)):
        raise ValueError("point outside the wedge cell")
    if np.any(np.abs(t) > 2.0 + tol):
        raise ValueError("height coordinate outside [-2, 2]")
    phi = config.phi(x, y, validate=False)
    out = np.where(t >= 0, E_PLUS, E_MINUS)
    out = np.where((t > phi) & (t <= 1.0), S1, out)
    out = np.where(t > 1.0, S2, out)
    out = np.where((t < -phi) & (t >= -1.0), S1_PRIME, out)
    out = np.where(t < -1.0, S2_PRIME, out)
    return out
