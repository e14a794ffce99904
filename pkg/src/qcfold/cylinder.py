"""Full self-map of the cylinder T = closed unit disk x [-2, 2].

One wedge cell D_k x [-2, 2] carries five pieces: the slab E around the
folded surface, two transition regions S1 / S1' interpolating the slab
graphs to the planes t = +-1 along vertical lines, and two cap regions
S2 / S2' interpolating those planes to the identity on t = +-2.  The map
extends to the whole cylinder by reflecting across the wedge edge and
rotating to the remaining wedges, and is the identity outside T.

The "sufficiently small" constants of the construction are made concrete
by dyadic calibration searches with grid-sampled certificates:
``calibrate_epsilon`` picks the slab half-thickness, ``calibrate_s`` the
graph-interpolation factor.
"""

from dataclasses import dataclass

import numpy as np

from .profiles import RadialProfile, bump_normalization
from .wedge import (WedgeConfig, offset_map, surface_jacobian, REGION_NAMES,
                    E_PLUS, E_MINUS, S1, S1_PRIME, S2, S2_PRIME)
from . import verify

__all__ = [
    "CalibrationError",
    "map_transition_upper",
    "map_transition_lower",
    "map_cap_upper",
    "map_cap_lower",
    "wedge_cell_map",
    "CylinderMap",
    "calibrate_epsilon",
    "calibrate_s",
    "make_cylinder_map",
    "choose_k",
    "measure_map_stats",
]


class CalibrationError(RuntimeError):
    """No admissible calibration constant down to the search floor."""


# --- region maps on one wedge cell -------------------------------------------
#
# Each formula is smooth on the interior of its region and is evaluated as
# a formula (not through the region dispatch), so numeric differences of
# these functions never straddle an interface.


def _graph_offset(config, x, y, sign, s_value=None):
    """Offset-surface point at t = sign * s * psi(x, y) and that height."""
    s = config.s if s_value is None else s_value
    p = s * config.psi(x, y, validate=False)
    base = offset_map(config, x, y, sign * p, validate=False)
    return base, p


def map_transition_upper(config, x, y, t, s_value=None):
    """Transition S1: vertical line from the upper slab graph to t = 1.

    Linear in t; matches the slab map at t = s*psi and has height 1 at
    t = 1 with unchanged planar coordinates.
    """
    base, p = _graph_offset(config, x, y, +1.0, s_value)
    lam = (np.asarray(t, dtype=float) - p) / (1.0 - p)
    out = base.copy()
    out[..., 2] = base[..., 2] + lam * (1.0 - base[..., 2])
    return out


def map_transition_lower(config, x, y, t, s_value=None):
    """Transition S1': vertical line from the lower slab graph to t = -1."""
    base, p = _graph_offset(config, x, y, -1.0, s_value)
    lam = (np.asarray(t, dtype=float) + p) / (p - 1.0)
    out = base.copy()
    out[..., 2] = base[..., 2] + lam * (-1.0 - base[..., 2])
    return out


def map_cap_upper(config, x, y, t, s_value=None):
    """Cap S2: interpolates the top of S1 at t = 1 to the identity at t = 2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    base, _ = _graph_offset(config, x, y, +1.0, s_value)
    w = 2.0 - t
    out = np.empty(np.broadcast(x, t).shape + (3,), dtype=float)
    out[..., 0] = w * base[..., 0] + (t - 1.0) * x
    out[..., 1] = w * base[..., 1] + (t - 1.0) * y
    out[..., 2] = t
    return out


def map_cap_lower(config, x, y, t, s_value=None):
    """Cap S2': interpolates the bottom of S1' at t = -1 to the identity
    at t = -2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    base, _ = _graph_offset(config, x, y, -1.0, s_value)
    w = 2.0 + t
    out = np.empty(np.broadcast(x, t).shape + (3,), dtype=float)
    out[..., 0] = w * base[..., 0] + (-t - 1.0) * x
    out[..., 1] = w * base[..., 1] + (-t - 1.0) * y
    out[..., 2] = t
    return out


_REGION_MAPS = {
    S1: map_transition_upper,
    S1_PRIME: map_transition_lower,
    S2: map_cap_upper,
    S2_PRIME: map_cap_lower,
}


def wedge_cell_map(config, x, y, t):
    """Dispatch the five region formulas over one wedge cell.

    Points exactly on a shared graph go through the slab formula (the
    expressions agree there, so the tie-break is only about determinism).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast(x, y, t).shape
    xf = np.broadcast_to(x, shape).ravel()
    yf = np.broadcast_to(y, shape).ravel()
    tf = np.broadcast_to(t, shape).ravel()
    phi = config.phi(xf, yf, validate=False)
    out = np.empty((xf.size, 3), dtype=float)

    m = np.abs(tf) <= phi
    if np.any(m):
        out[m] = offset_map(config, xf[m], yf[m], tf[m], validate=False)
    masks = {
        S1: (tf > phi) & (tf <= 1.0),
        S2: tf > 1.0,
        S1_PRIME: (tf < -phi) & (tf >= -1.0),
        S2_PRIME: tf < -1.0,
    }
    for code, mask in masks.items():
        if np.any(mask):
            out[mask] = _REGION_MAPS[code](config, xf[mask], yf[mask], tf[mask])
    return out.reshape(shape + (3,))


def _reduce_to_cell(alpha, flat):
    """Fold a batch of points into the base wedge cell.

    Returns (w0, cell, refl): base-cell points, wedge index of the double
    cell, and whether the point came from the reflected half.
    """
    x, y, t = flat[:, 0], flat[:, 1], flat[:, 2]
    r = np.hypot(x, y)
    theta = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    cell = np.floor(theta / (2.0 * alpha))
    frac = theta - cell * (2.0 * alpha)
    refl = frac > alpha
    th0 = np.clip(np.where(refl, 2.0 * alpha - frac, frac), 0.0, alpha)
    w0 = np.stack([r * np.cos(th0), r * np.sin(th0), t], axis=-1)
    return w0, cell, refl


class CylinderMap:
    """The assembled homeomorphism of R^3: folds inside T, identity outside.

    The base formulas live on the wedge cell 0 <= theta <= pi/k; the cell
    theta in [pi/k, 2pi/k] is the reflection across the edge plane and the
    remaining wedges are rotations of that double cell.  Points with
    r >= 1 or |t| >= 2 are mapped to themselves exactly.
    """

    def __init__(self, config):
        self.config = config

    @property
    def k(self):
        return self.config.k

    @property
    def profile(self):
        return self.config.profile

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        shape = z.shape
        flat = z.reshape(-1, 3)
        x, y, t = flat[:, 0], flat[:, 1], flat[:, 2]
        r = np.hypot(x, y)
        out = flat.copy()
        inside = (r < 1.0) & (np.abs(t) < 2.0)
        if np.any(inside):
            out[inside] = self._inside(flat[inside])
        return out.reshape(shape)

    def _inside(self, flat):
        alpha = self.config.alpha
        w0, cell, refl = _reduce_to_cell(alpha, flat)
        base = wedge_cell_map(self.config, w0[:, 0], w0[:, 1], w0[:, 2])
        rr = np.hypot(base[:, 0], base[:, 1])
        th_out = np.arctan2(base[:, 1], base[:, 0])
        th_out = np.where(refl, 2.0 * alpha - th_out, th_out)
        th_out = th_out + cell * (2.0 * alpha)
        return np.stack([rr * np.cos(th_out), rr * np.sin(th_out), base[:, 2]],
                        axis=-1)

    def jacobian(self, z, step=None):
        """Pointwise 3x3 Jacobians of the assembled map, shape (..., 3, 3).

        Each point is folded into the base cell, the region formula there is
        differenced (the formulas extend smoothly past interfaces, so the
        stencil never straddles a fold line), and the result is conjugated
        back by the wedge isometry.  On and outside the boundary of T the
        Jacobian is the identity.
        """
        config = self.config
        if step is None:
            step = _fd_step(config)
        z = np.asarray(z, dtype=float)
        shape = z.shape
        flat = z.reshape(-1, 3)
        r = np.hypot(flat[:, 0], flat[:, 1])
        out = np.broadcast_to(np.eye(3), (flat.shape[0], 3, 3)).copy()
        inside = (r < 1.0) & (np.abs(flat[:, 2]) < 2.0)
        if np.any(inside):
            w0, cell, refl = _reduce_to_cell(config.alpha, flat[inside])
            j0 = _cell_formula_jacobian(config, w0, step)
            rot = _rotation_z(cell * 2.0 * config.alpha)
            mat = rot @ np.where(refl[:, None, None], _REFLECT_CACHE(config.alpha), np.eye(3))
            out[inside] = mat @ j0 @ np.swapaxes(mat, -1, -2)
        return out.reshape(shape[:-1] + (3, 3))


def _rotation_z(beta):
    beta = np.asarray(beta, dtype=float)
    c, s = np.cos(beta), np.sin(beta)
    out = np.zeros(beta.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def _REFLECT_CACHE(alpha):
    """Reflection across the plane through the wedge edge theta = alpha."""
    c, s = np.cos(2.0 * alpha), np.sin(2.0 * alpha)
    return np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, 1.0]])


def _cell_formula_jacobian(config, w0, step):
    """Jacobians of the base-cell map, differencing each region formula.

    Points are assigned to regions with the same tie-breaks as the
    dispatcher; since each formula is smooth on the whole (widened) cell,
    central differences are valid arbitrarily close to the interfaces.
    """
    x, y, t = w0[:, 0], w0[:, 1], w0[:, 2]
    phi = config.phi(x, y, validate=False)
    out = np.empty((w0.shape[0], 3, 3))
    masks = {
        "E": np.abs(t) <= phi,
        S1: (t > phi) & (t <= 1.0),
        S2: t > 1.0,
        S1_PRIME: (t < -phi) & (t >= -1.0),
        S2_PRIME: t < -1.0,
    }
    for code, mask in masks.items():
        if not np.any(mask):
            continue
        if code == "E":
            def f(q):
                return offset_map(config, q[..., 0], q[..., 1], q[..., 2],
                                  validate=False)
        else:
            fmap = _REGION_MAPS[code]

            def f(q, fmap=fmap):
                return fmap(config, q[..., 0], q[..., 1], q[..., 2])
        out[mask] = verify.numeric_jacobian(f, w0[mask], step)
    return out


# --- calibration searches -----------------------------------------------------


def _slab_grid(config, eps, n_r, n_t, n_s, r_min=2e-3):
    """Grid on D_k x [-eps, eps] in normalized polar coordinates."""
    r = np.linspace(r_min, 1.0 - 1e-4, n_r)
    u = np.linspace(5e-3, 1.0 - 5e-3, n_t)
    tau = np.linspace(-1.0, 1.0, n_s)
    rr, uu, tt = np.meshgrid(r, u, tau, indexing="ij")
    x = (rr * np.cos(uu * config.alpha)).ravel()
    y = (rr * np.sin(uu * config.alpha)).ravel()
    return x, y, (tt.ravel()) * eps


def _fd_step(config):
    """Central-difference step; shrinks with the wedge so stencils stay
    clear of the angular clamp of the bump polynomial."""
    return min(1e-7, 2e-3 * config.alpha)


def _slab_ok(config, eps, eta_target, n_r, n_t, n_s):
    x, y, t = _slab_grid(config, eps, n_r, n_t, n_s)
    z = np.stack([x, y, t], axis=-1)

    def f(pts):
        return offset_map(config, pts[..., 0], pts[..., 1], pts[..., 2],
                          validate=False)

    jac = verify.numeric_jacobian(f, z, _fd_step(config))
    det = np.linalg.det(jac)
    if np.any(det <= 0):
        return False
    norm = np.linalg.svd(jac, compute_uv=False)[..., 0]
    return bool(np.max(norm ** 3 / det) <= 1.0 + eta_target)


def calibrate_epsilon(profile, k, eta_target, *, eps_start=2.0 ** -1,
                      eps_min=2.0 ** -20, n_r=160, n_t=10, n_s=5,
                      psi_norm=None, final_check=True):
    """Largest dyadic slab half-thickness passing the slab certificates.

    Checks on a grid of D_k x [-eps, eps]: positive Jacobian determinant,
    dilatation at most 1 + eta_target, and (on the accepted value) an
    image-collision scan.  Raises CalibrationError if nothing passes down
    to the floor, which signals that k is too small for the target.
    """
    if psi_norm is None:
        psi_norm = bump_normalization(k)
    probe = WedgeConfig(k=k, eps=1.0, s=1.0, profile=profile, psi_norm=psi_norm)
    # the t = 0 plane is shared by every candidate slab; if the surface
    # already exceeds the budget no eps can pass
    if not _slab_ok(probe, 0.0, eta_target, n_r, n_t, 1):
        raise CalibrationError(
            f"surface dilatation at k={k} already exceeds 1+{eta_target}")
    eps = eps_start
    while eps >= eps_min:
        if _slab_ok(probe, eps, eta_target, n_r, n_t, n_s):
            break
        eps *= 0.5
    else:
        raise CalibrationError(
            f"no admissible slab thickness at k={k} down to {eps_min}")
    if final_check:
        config = WedgeConfig(k=k, eps=eps, s=1.0, profile=profile,
                             psi_norm=psi_norm)
        x, y, t = _slab_grid(config, eps, n_r // 2, n_t, n_s)
        pts = np.stack([x, y, t], axis=-1)
        bad = verify.injectivity_scan(
            lambda q: offset_map(config, q[..., 0], q[..., 1], q[..., 2],
                                 validate=False, extended=True),
            pts)
        if bad:
            raise CalibrationError(
                f"slab map not injective at k={k}, eps={eps}: {bad[:3]}")
    return eps


def _region_grid(config, code, n_r, n_t, n_s):
    """Interior sample grid of one region of the wedge cell."""
    r = np.linspace(2e-3, 1.0 - 1e-4, n_r)
    u = np.linspace(5e-3, 1.0 - 5e-3, n_t)
    w = np.linspace(0.02, 0.98, n_s)
    rr, uu, ww = np.meshgrid(r, u, w, indexing="ij")
    x = (rr * np.cos(uu * config.alpha)).ravel()
    y = (rr * np.sin(uu * config.alpha)).ravel()
    w = ww.ravel()
    phi = config.phi(x, y, validate=False)
    if code == S1:
        t = phi + w * (1.0 - phi)
    elif code == S1_PRIME:
        t = -phi - w * (1.0 - phi)
    elif code == S2:
        t = 1.0 + w
    elif code == S2_PRIME:
        t = -1.0 - w
    else:
        raise ValueError(f"no grid for region code {code}")
    return x, y, t


def _region_stats(config, code, s_value, n_r, n_t, n_s):
    """(max dilatation, max stretch, min det, images, points) on one region."""
    x, y, t = _region_grid(config, code, n_r, n_t, n_s)
    z = np.stack([x, y, t], axis=-1)
    fmap = _REGION_MAPS[code]

    def f(pts):
        return fmap(config, pts[..., 0], pts[..., 1], pts[..., 2],
                    s_value=s_value)

    jac = verify.numeric_jacobian(f, z, _fd_step(config))
    det = np.linalg.det(jac)
    sv = np.linalg.svd(jac, compute_uv=False)
    stretch = float(sv[..., 0].max())
    dil = float(np.max(sv[..., 0] ** 3 / np.where(det > 0, det, np.nan))) \
        if np.all(det > 0) else np.inf
    return dil, stretch, float(det.min()), f(z), z


def _contained_in_cell(config, images, tol=1e-9):
    """Image containment in the wedge cell T_k (radius, height, angle)."""
    r = np.hypot(images[..., 0], images[..., 1])
    th = np.arctan2(images[..., 1], images[..., 0])
    ang_tol = 1e-9 * config.alpha + 1e-12
    return bool(np.all(r <= 1.0 + tol) and np.all(np.abs(images[..., 2]) <= 2.0 + tol)
                and np.all(th >= -ang_tol) and np.all(th <= config.alpha + ang_tol))


def calibrate_s(config, *, K_margin=1.3, L_margin=1.3, s_start=1.0,
                s_min=2.0 ** -20, n_r=120, n_t=8, n_s=6):
    """Largest dyadic graph-interpolation factor whose transition and cap
    maps pass all five certificates.

    Targets are set from the s -> 0 baseline of the same formulas on the
    same grids: dilatation within K_margin, stretch within L_margin of the
    baseline, plus positive determinant, injectivity and containment of the
    image in the wedge cell.
    """
    codes = (S1, S1_PRIME, S2, S2_PRIME)
    base = {c: _region_stats(config, c, 0.0, n_r, n_t, n_s) for c in codes}
    K0 = max(base[c][0] for c in codes)
    L0 = max(base[c][1] for c in codes)
    if not np.isfinite(K0):
        raise CalibrationError(
            f"baseline transition maps degenerate at k={config.k}; "
            "the fold height is too large for this wedge count")

    def passes(s):
        pts_all, img_all = [], []
        for c in codes:
            dil, stretch, mindet, images, pts = _region_stats(
                config, c, s, n_r, n_t, n_s)
            if mindet <= 0 or dil > K_margin * K0 or stretch > L_margin * L0:
                return False
            if not _contained_in_cell(config, images):
                return False
            pts_all.append(pts)
            img_all.append(images)
        pts = np.concatenate(pts_all)
        images = np.concatenate(img_all)
        order = np.arange(pts.shape[0])
        bad = [(i, j) for i, j in verify._collision_pairs(images, 1e-9)
               if np.linalg.norm(images[i] - images[j]) < 1e-9
               and np.linalg.norm(pts[i] - pts[j]) >= 1e-3]
        return not bad

    s = s_start
    while s >= s_min:
        if passes(s):
            return s
        s *= 0.5
    raise CalibrationError(
        f"no admissible interpolation factor at k={config.k} down to {s_min}")


def make_cylinder_map(a, b, k, eta_target, *, profile=None, psi_norm=None,
                      **cal_kwargs):
    """Calibrate eps then s for (a, b, k) and return the assembled map."""
    if profile is None:
        profile = RadialProfile(a, b)
    if psi_norm is None:
        psi_norm = bump_normalization(k)
    eps = calibrate_epsilon(profile, k, eta_target, psi_norm=psi_norm,
                            **{k_: v for k_, v in cal_kwargs.items()
                               if k_ in ("n_r", "n_t", "n_s")})
    draft = WedgeConfig(k=k, eps=eps, s=1.0, profile=profile, psi_norm=psi_norm)
    s = calibrate_s(draft)
    config = WedgeConfig(k=k, eps=eps, s=s, profile=profile, psi_norm=psi_norm)
    return CylinderMap(config)


def choose_k(profile, m, *, k_start=8, k_cap=2 ** 16, eta_kwargs=None,
             **cal_kwargs):
    """Smallest k in a doubling sweep with measured slab dilatation excess
    below 2^-m, returned with its calibrated map.

    Raises CalibrationError when the sweep passes the cap.
    """
    if m < 1:
        raise ValueError("level must be >= 1")
    target = 2.0 ** -m
    eta_kwargs = eta_kwargs or {}
    k = k_start
    while k <= k_cap:
        try:
            cyl = make_cylinder_map(profile.a, profile.b, k, target,
                                    profile=profile, **cal_kwargs)
        except CalibrationError:
            k *= 2
            continue
        eta = verify.measure_eta(cyl.config, **eta_kwargs)
        if eta < target:
            return k, cyl, eta
        k *= 2
    raise CalibrationError(f"no k up to {k_cap} reaches eta < 2^-{m}")


def measure_map_stats(cyl, *, n_r=160, n_t=10, n_s=5):
    """Per-region dilatation / stretch / determinant statistics of the
    assembled map, evaluated region-formula-wise on one wedge cell.

    The reflection and rotation extensions are isometric conjugations, so
    one cell determines the statistics of the whole map.
    """
    config = cyl.config
    region = {}
    samples = 0
    gmax_dil, gmax_str, gmin_det = 1.0, 0.0, np.inf

    x, y, t = verify.slab_samples(config, n_r=n_r, n_t=n_t, n_s=n_s)
    z = np.stack([x, y, t], axis=-1)
    jac = verify.numeric_jacobian(
        lambda q: offset_map(config, q[..., 0], q[..., 1], q[..., 2],
                             validate=False), z, _fd_step(config))
    det = np.linalg.det(jac)
    sv = np.linalg.svd(jac, compute_uv=False)
    dil = float(np.max(sv[..., 0] ** 3 / np.where(det > 0, det, np.nan)))
    for name, half in (("E_plus", t >= 0), ("E_minus", t < 0)):
        d, s_, md = (float(np.max(sv[half, 0] ** 3 / det[half])),
                     float(sv[half, 0].max()), float(det[half].min()))
        region[name] = {"max_dilatation": d, "max_stretch": s_,
                        "min_jacobian_det": md, "samples": int(half.sum())}
    gmax_dil = max(gmax_dil, dil)
    gmax_str = max(gmax_str, float(sv[..., 0].max()))
    gmin_det = min(gmin_det, float(det.min()))
    samples += z.shape[0]

    for code in (S1, S1_PRIME, S2, S2_PRIME):
        dil, stretch, mindet, _, pts = _region_stats(
            config, code, None, n_r, n_t, n_s)
        region[REGION_NAMES[code]] = {
            "max_dilatation": dil, "max_stretch": stretch,
            "min_jacobian_det": mindet, "samples": int(pts.shape[0]),
        }
        gmax_dil = max(gmax_dil, dil)
        gmax_str = max(gmax_str, stretch)
        gmin_det = min(gmin_det, mindet)
        samples += pts.shape[0]

    return verify.DilatationReport(
        max_dilatation=gmax_dil, max_stretch=gmax_str,
        min_jacobian_det=gmin_det, samples=samples, region=region)
