"""Closed-form smooth radial profiles and the wedge bump.

Everything here is an explicit formula: the one-sided exponential kernel,
the smooth 0-to-1 step built from it, the radial contraction profile that
is ``b*r`` on ``[0, a]`` and ``r`` beyond 1, the fold-height profile that
stores the radial stretch excess, and a polynomial bump vanishing exactly
on the boundary of one angular wedge of the unit disk.

All functions accept scalars or numpy arrays and are pure; there is no
hidden state beyond the parameter objects.
"""

import numpy as np

__all__ = [
    "smooth_kernel",
    "smooth_kernel_d1",
    "smooth_kernel_d2",
    "smooth_step",
    "smooth_step_d1",
    "smooth_step_d2",
    "RadialProfile",
    "wedge_bump_poly",
    "bump_normalization",
]


def smooth_kernel(x):
    """exp(-1/x) for x > 0, identically 0 for x <= 0.

    Infinitely flat at 0; underflow for tiny positive x naturally rounds
    to 0, consistent with the limit.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x > 0
    with np.errstate(under="ignore"):
        out[m] = np.exp(-1.0 / x[m])
    return out


def smooth_kernel_d1(x):
    """Derivative exp(-1/x)/x^2 on x > 0, else 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x > 0
    with np.errstate(under="ignore"):
        out[m] = np.exp(-1.0 / x[m]) / x[m] ** 2
    return out


def smooth_kernel_d2(x):
    """Second derivative exp(-1/x)*(1-2x)/x^4 on x > 0, else 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x > 0
    with np.errstate(under="ignore"):
        out[m] = np.exp(-1.0 / x[m]) * (1.0 - 2.0 * x[m]) / x[m] ** 4
    return out


def _kernel_pair(x):
    x = np.asarray(x, dtype=float)
    return smooth_kernel(x), smooth_kernel(1.0 - x)


def smooth_step(x):
    """Smooth monotone step: 0 on (-inf, 0], 1 on [1, inf).

    Defined as k(x) / (k(x) + k(1-x)) with k the one-sided exponential
    kernel.  Symmetric: step(x) + step(1-x) = 1.
    """
    s0, s1 = _kernel_pair(x)
    d = s0 + s1
    safe = np.where(d > 0, d, 1.0)
    return np.where(d > 0, s0 / safe, 0.0)


def smooth_step_d1(x):
    """Derivative of the smooth step; positive exactly on (0, 1)."""
    x = np.asarray(x, dtype=float)
    s0, s1 = _kernel_pair(x)
    u0 = smooth_kernel_d1(x)
    u1 = smooth_kernel_d1(1.0 - x)
    d = s0 + s1
    safe = np.where(d > 0, d, 1.0)
    return np.where(d > 0, (u0 * s1 + s0 * u1) / safe ** 2, 0.0)


def smooth_step_d2(x):
    """Second derivative of the smooth step.

    Uses d(u0*s1 + s0*u1)/dx = k''(x) k(1-x) - k(x) k''(1-x); the cross
    terms cancel.
    """
    x = np.asarray(x, dtype=float)
    s0, s1 = _kernel_pair(x)
    u0 = smooth_kernel_d1(x)
    u1 = smooth_kernel_d1(1.0 - x)
    w0 = smooth_kernel_d2(x)
    w1 = smooth_kernel_d2(1.0 - x)
    d = s0 + s1
    safe = np.where(d > 0, d, 1.0)
    num = u0 * s1 + s0 * u1
    num_d = w0 * s1 - s0 * w1
    d_d = u0 - u1
    return np.where(d > 0, num_d / safe ** 2 - 2.0 * num * d_d / safe ** 3, 0.0)


class RadialProfile:
    """Radial contraction profile g and its fold-height companion h.

    Parameters a, b in (0, 1):

    * ``value(r)`` is ``b*r`` on [0, a], ``r`` on [1, inf), and a smooth
      strictly increasing interpolation in between.
    * ``deriv(r)`` stays within [b, L] and dominates ``value(r)/r``.
    * ``fold_height(r) = sqrt(deriv(r)^2 - (value(r)/r)^2)`` measures how
      much of the stretch must be carried out of the plane; it vanishes
      identically outside (a, 1).

    ``fold_height`` is evaluated in the factored form
    ``sqrt(deriv - value/r) * sqrt(deriv + value/r)`` so that it is exactly
    zero wherever the step derivative is zero; no negative-radicand guard
    is needed, but ``check_radicand`` below still validates the identity.

    ``lipschitz_measured`` is the grid maximum of ``deriv`` over [0, 2],
    the empirical stand-in for the derivative bound L(a).
    """

    def __init__(self, a, b, grid_n=20001):
        if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
            raise ValueError(f"profile parameters must lie in (0,1), got a={a}, b={b}")
        self.a = float(a)
        self.b = float(b)
        self._c0 = (1.0 - self.b) / (1.0 - self.a)
        r = np.linspace(0.0, 2.0, int(grid_n))
        self.lipschitz_measured = float(self.deriv(r).max())

    def __repr__(self):
        return (f"RadialProfile(a={self.a}, b={self.b}, "
                f"L={self.lipschitz_measured:.6g})")

    def _arg(self, r):
        return (np.asarray(r, dtype=float) - self.a) / (1.0 - self.a)

    def _ratio(self, r):
        """value(r)/r with the limit b at r = 0."""
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, self.value(r) / safe, self.b)

    def value(self, r):
        """g(r) = (1-b) * step((r-a)/(1-a)) * r + b*r; rejects r < 0."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("radius must be nonnegative")
        return (1.0 - self.b) * smooth_step(self._arg(r)) * r + self.b * r

    def deriv(self, r):
        """g'(r), from the closed form c0 * step'(arg) * r + g(r)/r."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("radius must be nonnegative")
        return self._c0 * smooth_step_d1(self._arg(r)) * r + self._ratio(r)

    def deriv2(self, r):
        """g''(r); needed for the analytic fold-height derivative."""
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        sd1 = smooth_step_d1(self._arg(r))
        sd2 = smooth_step_d2(self._arg(r))
        ratio_d = np.where(r > 0, (self.deriv(r) * r - self.value(r)) / safe ** 2, 0.0)
        return self._c0 * sd2 * r / (1.0 - self.a) + self._c0 * sd1 + ratio_d

    def _height_sq(self, r):
        """h^2 in factored form: c0 * step'(arg) * r * (g'(r) + g(r)/r)."""
        r = np.asarray(r, dtype=float)
        return self._c0 * smooth_step_d1(self._arg(r)) * r * (self.deriv(r) + self._ratio(r))

    def fold_height(self, r):
        """h(r) >= 0; identically 0 on [0, a] and [1, inf)."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("radius must be nonnegative")
        return np.sqrt(self._height_sq(r))

    def fold_height_deriv(self, r):
        """h'(r) = (h^2)' / (2h), with the smooth limit 0 where h = 0."""
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        sd1 = smooth_step_d1(self._arg(r))
        sd2 = smooth_step_d2(self._arg(r))
        ratio = self._ratio(r)
        ratio_d = np.where(r > 0, (self.deriv(r) * r - self.value(r)) / safe ** 2, 0.0)
        outer = self.deriv(r) + ratio
        w_d = (self._c0 * sd2 * r / (1.0 - self.a) * outer
               + self._c0 * sd1 * outer
               + self._c0 * sd1 * r * (self.deriv2(r) + ratio_d))
        h = np.sqrt(self._height_sq(r))
        return np.where(h > 1e-150, w_d / np.where(h > 0, 2.0 * h, 1.0), 0.0)

    def check_radicand(self, r, floor=-1e-12):
        """Validate g'(r)^2 - (g(r)/r)^2 >= floor; a violation beyond
        roundoff means the profile is inconsistent."""
        rad = self.deriv(r) ** 2 - self._ratio(r) ** 2
        worst = float(np.min(rad))
        if worst < floor:
            raise ArithmeticError(f"fold-height radicand {worst} below {floor}")
        return worst


def wedge_bump_poly(k, x, y):
    """Unnormalized bump P(x,y) = y*(x*sin(pi/k) - y*cos(pi/k))*(1-x^2-y^2).

    Positive exactly on the interior of the wedge {r <= 1, 0 <= theta <= pi/k}
    among its points and zero on all three boundary pieces (the two radial
    edges and the unit arc).  The polynomial is left unclamped so that every
    formula built on it stays smooth across the wedge edges; on the boundary
    itself roundoff can leave values of order +-1e-17.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha = np.pi / k
    return y * (x * np.sin(alpha) - y * np.cos(alpha)) * (1.0 - x * x - y * y)


def bump_normalization(k, n_r=256, n_t=64):
    """Grid-sampled maximum of the wedge bump polynomial over the wedge.

    The grid is laid out in normalized polar coordinates so the resolution
    does not degrade as the wedge narrows with k.
    """
    alpha = np.pi / k
    r = np.linspace(0.0, 1.0, n_r)
    t = np.linspace(0.0, 1.0, n_t) * alpha
    rr, tt = np.meshgrid(r, t, indexing="ij")
    p = wedge_bump_poly(k, rr * np.cos(tt), rr * np.sin(tt))
    return float(p.max())
