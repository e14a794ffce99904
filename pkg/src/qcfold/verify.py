"""Numerical differential analysis: Jacobians, dilatation, scan reports.

The dilatation of a 3x3 differential J with det J > 0 is ||J||^3 / det J
(operator norm cubed over the Jacobian determinant); a map is close to
conformal exactly when this is close to 1.  For a full-rank 3x2 surface
differential the analogue is the singular-value ratio.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .wedge import offset_map

__all__ = [
    "DilatationReport",
    "numeric_jacobian",
    "dilatation_3d",
    "surface_dilatation",
    "matrix_qc_delta",
    "measure_eta",
    "lipschitz_scan",
    "injectivity_scan",
    "graph_scan",
]


@dataclass
class DilatationReport:
    """Sampled Jacobian statistics for one map.

    ``region`` maps region names to per-region {max_dilatation, max_stretch,
    min_jacobian_det, samples} blocks.
    """

    max_dilatation: float
    max_stretch: float
    min_jacobian_det: float
    samples: int
    region: dict = field(default_factory=dict)

    def to_json(self, **extra):
        doc = {
            "max_dilatation": self.max_dilatation,
            "max_stretch": self.max_stretch,
            "min_jacobian_det": self.min_jacobian_det,
            "samples": self.samples,
            "region": self.region,
        }
        doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True)


def numeric_jacobian(f, z, step):
    """Central-difference 3x3 Jacobians of a map R^3 -> R^3.

    ``z`` has shape (..., 3); column i is (f(z + step e_i) - f(z - step e_i))
    / (2 step).  ``f`` must accept stacked points.
    """
    z = np.asarray(z, dtype=float)
    if step <= 0:
        raise ValueError("step must be positive")
    cols = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        cols.append((np.asarray(f(z + e)) - np.asarray(f(z - e))) / (2.0 * step))
    return np.stack(cols, axis=-1)


def dilatation_3d(jac):
    """||J||^3 / det(J) for stacked 3x3 Jacobians; det <= 0 raises."""
    jac = np.asarray(jac, dtype=float)
    det = np.linalg.det(jac)
    if np.any(det <= 0):
        raise ArithmeticError(
            f"orientation violation: min Jacobian determinant {det.min():.3e}")
    norm = np.linalg.svd(jac, compute_uv=False)[..., 0]
    return norm ** 3 / det


def surface_dilatation(jac):
    """Singular-value ratio sigma1/sigma2 of stacked full-rank 3x2 Jacobians."""
    jac = np.asarray(jac, dtype=float)
    sv = np.linalg.svd(jac, compute_uv=False)
    if np.any(sv[..., 1] <= 1e-300):
        raise ArithmeticError("surface differential is rank deficient")
    return sv[..., 0] / sv[..., 1]


def matrix_qc_delta(mat, scale):
    """Deviation statistics for the almost-conformality criterion.

    Returns (max | |column_i| - scale |, max |<column_i, column_j>|, i != j).
    Small deviations certify the matrix is close to ``scale`` times an
    orthogonal matrix, hence has dilatation close to 1.
    """
    mat = np.asarray(mat, dtype=float)
    norms = np.linalg.norm(mat, axis=-2)
    col_dev = np.abs(norms - scale).max()
    gram = np.swapaxes(mat, -1, -2) @ mat
    n = mat.shape[-1]
    off = gram[..., ~np.eye(n, dtype=bool)]
    return float(col_dev), float(np.abs(off).max()) if off.size else 0.0


def slab_samples(config, n_r=400, n_t=24, n_s=5, r_min=1e-3, margin=0.9):
    """Sample points of the slab  {|t| < phi}  over the open wedge.

    Polar grid in normalized coordinates, heights at fractions of the local
    phi so the sampling follows the slab as it pinches toward the wedge
    boundary.  Returns (x, y, t) flattened.
    """
    alpha = config.alpha
    r = np.linspace(r_min, 1.0 - 1e-4, n_r)
    u = np.linspace(1e-3, 1.0 - 1e-3, n_t)  # angular fraction, open
    tau = np.linspace(-margin, margin, n_s)
    rr, uu, tt = np.meshgrid(r, u, tau, indexing="ij")
    x = (rr * np.cos(uu * alpha)).ravel()
    y = (rr * np.sin(uu * alpha)).ravel()
    t = (tt.ravel()) * config.phi(x, y, validate=False)
    return x, y, t


def measure_eta(config, n_r=400, n_t=24, n_s=5, step=1e-7):
    """Max dilatation minus 1 of the slab map over the sampled slab.

    The slab map is smooth on the widened wedge, so plain central
    differences apply.  Any nonpositive determinant raises.
    """
    x, y, t = slab_samples(config, n_r=n_r, n_t=n_t, n_s=n_s)
    z = np.stack([x, y, t], axis=-1)

    def f(pts):
        return offset_map(config, pts[..., 0], pts[..., 1], pts[..., 2],
                          validate=False)

    jac = numeric_jacobian(f, z, step)
    return float(dilatation_3d(jac).max() - 1.0)


def lipschitz_scan(f, points, rng=None, n_pairs=None, jacobian_step=None):
    """Max stretch estimate for a map on sampled points.

    Uses ratios over random point pairs and, when ``jacobian_step`` is
    given, spectral norms of numeric Jacobians at the points; reports the
    max of both.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if rng is None:
        rng = np.random.default_rng(0)
    if n_pairs is None:
        n_pairs = 4 * n
    i = rng.integers(0, n, size=n_pairs)
    j = rng.integers(0, n, size=n_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    du = np.linalg.norm(points[i] - points[j], axis=-1)
    fv = np.asarray(f(points))
    dv = np.linalg.norm(fv[i] - fv[j], axis=-1)
    est = float((dv / du).max()) if du.size else 0.0
    if jacobian_step is not None:
        jac = numeric_jacobian(f, points, jacobian_step)
        est = max(est, float(np.linalg.svd(jac, compute_uv=False)[..., 0].max()))
    return est


def _collision_pairs(images, dist_tol, block_cap=64):
    """Candidate index pairs whose images quantize to the same cell.

    Cell size is 4*dist_tol with all half-cell-shifted grids, so any pair
    within dist_tol shares a cell in at least one grid.  Within a cell all
    pairs are enumerated (capped; cells stay tiny for injective maps).
    """
    pairs = set()
    d = images.shape[1]
    for shift in range(2 ** d):
        offs = np.array([(shift >> i) & 1 for i in range(d)]) * 0.5
        qs = np.floor(images / (4.0 * dist_tol) + offs).astype(np.int64)
        order = np.lexsort(qs.T)
        qs_sorted = qs[order]
        same = np.all(qs_sorted[1:] == qs_sorted[:-1], axis=1)
        boundaries = np.flatnonzero(~same)
        start = 0
        for end in np.append(boundaries + 1, len(order)):
            block = order[start:end]
            if 1 < block.size <= block_cap:
                for ii in range(block.size):
                    for jj in range(ii + 1, block.size):
                        u, v = block[ii], block[jj]
                        pairs.add((min(u, v), max(u, v)))
            start = end
    return pairs


def injectivity_scan(f, points, dist_tol=1e-9, sep_tol=1e-3):
    """Collision report: image pairs closer than dist_tol whose domain
    points are separated by at least sep_tol.  Empty list means the scan
    found no injectivity violation."""
    points = np.asarray(points, dtype=float)
    images = np.asarray(f(points), dtype=float)
    bad = []
    for i, j in _collision_pairs(images, dist_tol):
        if np.linalg.norm(images[i] - images[j]) < dist_tol and \
           np.linalg.norm(points[i] - points[j]) >= sep_tol:
            bad.append((int(i), int(j)))
    return bad


def graph_scan(surface_points, domain_points, proj_tol=1e-9, sep_tol=1e-3):
    """Vertical-line single-valuedness report for a parametric surface.

    Flags pairs whose (x, y)-projections coincide within proj_tol although
    the domain points are separated by at least sep_tol.
    """
    surface_points = np.asarray(surface_points, dtype=float)
    domain_points = np.asarray(domain_points, dtype=float)
    proj = surface_points[:, :2]
    bad = []
    for i, j in _collision_pairs(proj, proj_tol):
        if np.linalg.norm(proj[i] - proj[j]) < proj_tol and \
           np.linalg.norm(domain_points[i] - domain_points[j]) >= sep_tol:
            bad.append((int(i), int(j)))
    return bad
