"""Nested disjoint-ball covers and the composed folding map.

Level m of the construction applies the cylinder map, conjugated by a
similarity, inside the cylinder B(z, r) x [-2r, 2r] over every ball of
the level-m cover, and is the identity elsewhere.  Children of a ball
live inside the slab neighborhood of the parent's map and away from its
fold lines, so each child is either wholly inside the contraction disk
("inner") or wholly inside the annulus.  Composing levels deepest-first
gives the finite-depth approximation of the limit map.

Deep nodes are stored relative to their parent (center in the parent's
unit-disk frame plus a radius ratio): absolute coordinates underflow the
float grid after a few levels because each level shrinks by the slab
thickness.  All precision-sensitive work (Jacobians, stretches) walks
chains in local frames, where every step is well conditioned.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .cylinder import CylinderMap

__all__ = [
    "SingularSet",
    "CoverNode",
    "CoverTree",
    "CoverError",
    "build_vitali_cover",
    "build_cover_tree",
    "apply_level",
    "compose_depth",
    "find_chain",
    "chain_nodes",
    "chain_factors",
    "dilatation_ledger",
    "chain_dilatation",
    "chain_stretch",
    "sample_chain_points",
    "Truncation",
]


class CoverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SingularSet:
    """Fold lines of one wedge count: unit circle, inner circle of radius a,
    and the 2k radial edge segments."""

    k: int
    a: float

    def distance(self, x, y):
        """Planar distance from points of the closed unit disk to the set."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        rho = np.hypot(x, y)
        step = np.pi / self.k
        delta = np.mod(np.arctan2(y, x), step)
        delta = np.minimum(delta, step - delta)
        d_edges = rho * np.sin(delta)
        return np.minimum(np.minimum(np.abs(1.0 - rho), np.abs(rho - self.a)),
                          d_edges)


@dataclass
class CoverNode:
    """One ball of the nested cover.

    ``rel_center``/``ratio`` position the ball in its parent's unit-disk
    frame (for level-1 nodes they are absolute).  ``center``/``radius``
    are the cascaded absolute values, informational only at deep levels.
    ``region`` is "inner" or "annulus" for levels >= 2, "root" at level 1.
    """

    rel_center: tuple
    ratio: float
    level: int
    multi_index: tuple
    k_level: int
    region: str
    center: tuple
    radius: float
    children: list = field(default_factory=list)

    def to_dict(self):
        return {
            "center": [self.center[0], self.center[1]],
            "radius": self.radius,
            "level": self.level,
            "k": self.k_level,
            "region": self.region,
            "rel_center": [self.rel_center[0], self.rel_center[1]],
            "ratio": self.ratio,
            "children": [c.to_dict() for c in self.children],
        }


@dataclass
class CoverTree:
    """Cover hierarchy plus the per-level calibrated cylinder maps."""

    roots: list
    maps: dict          # level -> CylinderMap
    etas: dict          # level -> measured slab dilatation excess
    k_levels: dict      # level -> k
    depth: int
    seed: int
    stats: dict = field(default_factory=dict)

    def level_nodes(self, m):
        out = []

        def walk(node):
            if node.level == m:
                out.append(node)
                return
            for c in node.children:
                walk(c)

        for r in self.roots:
            walk(r)
        return out

    def leaves(self):
        return self.level_nodes(self.depth)

    def config(self, level):
        return self.maps[level].config

    def to_json(self, **extra):
        doc = {
            "depth": self.depth,
            "seed": self.seed,
            "k_levels": {str(k): v for k, v in self.k_levels.items()},
            "etas": {str(k): v for k, v in self.etas.items()},
            "stats": self.stats,
            "roots": [r.to_dict() for r in self.roots],
        }
        doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True)


# --- region geometry ----------------------------------------------------------


def _region_area(region):
    """Area of a union of disks/rectangles, by deterministic grid fraction."""
    lo, hi = _region_bbox(region)
    n = 512
    gx = np.linspace(lo[0], hi[0], n)
    gy = np.linspace(lo[1], hi[1], n)
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    inside = _region_contains(region, xx.ravel(), yy.ravel())
    cell = (hi[0] - lo[0]) * (hi[1] - lo[1]) / (n * n)
    return float(inside.sum()) * cell


def _region_bbox(region):
    los, his = [], []
    for piece in region:
        kind = piece[0]
        if kind == "disk":
            _, cx, cy, r = piece
            los.append((cx - r, cy - r))
            his.append((cx + r, cy + r))
        elif kind == "rect":
            _, x0, y0, x1, y1 = piece
            los.append((x0, y0))
            his.append((x1, y1))
        else:
            raise ValueError(f"unknown region piece {kind!r}")
    los = np.array(los)
    his = np.array(his)
    return los.min(axis=0), his.max(axis=0)


def _region_contains(region, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.zeros(x.shape, dtype=bool)
    for piece in region:
        if piece[0] == "disk":
            _, cx, cy, r = piece
            inside |= (x - cx) ** 2 + (y - cy) ** 2 <= r * r
        else:
            _, x0, y0, x1, y1 = piece
            inside |= (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    return inside


def _region_inner_cap(region, x, y):
    """Largest admissible radius at (x, y) keeping a ball inside the region.

    Per-piece distance to the boundary, maximized over pieces containing
    the point (a ball inside any one piece is inside the union).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cap = np.full(x.shape, -np.inf)
    for piece in region:
        if piece[0] == "disk":
            _, cx, cy, r = piece
            d = r - np.hypot(x - cx, y - cy)
        else:
            _, x0, y0, x1, y1 = piece
            d = np.minimum(np.minimum(x - x0, x1 - x), np.minimum(y - y0, y1 - y))
        cap = np.maximum(cap, d)
    return cap


class _GapOracle:
    """Exact minimum-gap queries against the accepted ball list.

    gap(x, y) = min over balls of (distance to center - radius); a k-d tree
    over the centers is refreshed lazily, with the untreed tail checked by
    one vectorized scan.
    """

    def __init__(self, r_cap, capacity=1024):
        from scipy.spatial import cKDTree
        self._cKDTree = cKDTree
        self.r_cap = r_cap
        self._buf_c = np.empty((capacity, 2))
        self._buf_r = np.empty(capacity)
        self.n = 0
        self.tree = None
        self.n_treed = 0

    @property
    def centers(self):
        return self._buf_c[:self.n]

    @property
    def radii(self):
        return self._buf_r[:self.n]

    def add(self, x, y, r):
        if self.n == self._buf_c.shape[0]:
            self._buf_c = np.vstack([self._buf_c, np.empty_like(self._buf_c)])
            self._buf_r = np.append(self._buf_r, np.empty_like(self._buf_r))
        self._buf_c[self.n] = (x, y)
        self._buf_r[self.n] = r
        self.n += 1
        if self.n - self.n_treed >= 512:
            self.tree = self._cKDTree(self._buf_c[:self.n].copy())
            self.n_treed = self.n

    def gap(self, x, y, upto):
        """Exact whenever the result is below ``upto``."""
        best = np.inf
        if self.tree is not None:
            idx = self.tree.query_ball_point([x, y], upto + self.r_cap)
            if idx:
                c = self._buf_c[idx]
                d = np.hypot(c[:, 0] - x, c[:, 1] - y) - self._buf_r[idx]
                best = float(d.min())
        if self.n > self.n_treed:
            c = self._buf_c[self.n_treed:self.n]
            d = (np.hypot(c[:, 0] - x, c[:, 1] - y)
                 - self._buf_r[self.n_treed:self.n])
            best = min(best, float(d.min()))
        return best


def build_vitali_cover(seed_region, lam, coverage_tol, *, seed=0,
                       r_min_factor=2.0 ** -9, n_px=1024, max_sweeps=64,
                       refine_iters=24):
    """Greedy disjoint-ball packing of a planar region.

    Proposal centers come from distance-transform peaks of an occupancy
    bitmap; each proposal is refined by coordinate ascent on the exact gap
    function (min over accepted balls of distance-to-center minus radius,
    capped by the distance to the region boundary) and accepted with
    radius just under its exact gap, so disjointness never depends on the
    bitmap resolution.  Sweeps continue until the covered area fraction
    reaches 1 - coverage_tol; radii below r_min_factor * lam are rejected
    and a sweep cap raises CoverError.  Deterministic given the seed.

    Returns (centers (n, 2), radii (n,)).
    """
    from scipy import ndimage

    area = _region_area(seed_region)
    if area <= 0:
        raise ValueError("seed region must have positive area")
    lo, hi = _region_bbox(seed_region)
    extent = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    cell = extent / n_px
    occupied = np.zeros((n_px, n_px), dtype=bool)
    gx = lo[0] + (np.arange(n_px) + 0.5) * cell
    gy = lo[1] + (np.arange(n_px) + 0.5) * cell
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    oracle = _GapOracle(lam / 2.0)
    covered = 0.0
    r_min = r_min_factor * lam
    target = 1.0 - coverage_tol
    region_px = _region_contains(seed_region,
                                 *np.meshgrid(gx, gy, indexing="ij"))

    def mark(cx, cy, r):
        i0 = max(int((cx - r - lo[0]) / cell) - 1, 0)
        i1 = min(int((cx + r - lo[0]) / cell) + 2, n_px)
        j0 = max(int((cy - r - lo[1]) / cell) - 1, 0)
        j1 = min(int((cy + r - lo[1]) / cell) + 2, n_px)
        if i0 >= i1 or j0 >= j1:
            return
        px, py = np.meshgrid(gx[i0:i1], gy[j0:j1], indexing="ij")
        occupied[i0:i1, j0:j1] |= \
            (px - cx) ** 2 + (py - cy) ** 2 <= max(r, 0.71 * cell) ** 2

    def exact_cap(x, y, upto):
        cap = min(upto, float(_region_inner_cap(seed_region, x, y)))
        if cap <= 0:
            return cap
        return min(cap, oracle.gap(x, y, cap))

    def refine(x, y):
        """Coordinate ascent on the exact gap from a bitmap proposal."""
        g0 = exact_cap(x, y, lam / 2.0)
        h = max(g0, cell)
        for _ in range(refine_iters):
            improved = False
            for dx, dy in ((h, 0), (-h, 0), (0, h), (0, -h)):
                g1 = exact_cap(x + dx, y + dy, lam / 2.0)
                if g1 > g0:
                    x, y, g0 = x + dx, y + dy, g1
                    improved = True
                    break
            if not improved:
                h *= 0.5
                if h < 0.02 * max(g0, cell):
                    break
        return x, y, g0

    for sweep in range(max_sweeps):
        free = region_px & ~occupied
        if not free.any():
            break
        dist = ndimage.distance_transform_edt(free) * cell
        peaks_mask = free & \
            (dist >= ndimage.maximum_filter(dist, size=5) - 1e-15)
        ii, jj = np.nonzero(peaks_mask)
        order = np.argsort(-dist[ii, jj])
        ii, jj = ii[order], jj[order]
        jitter = (rng.random(2) - 0.5) * cell
        progressed = False
        for pi, pj in zip(ii, jj):
            if occupied[pi, pj]:
                continue
            x0, y0, g = refine(gx[pi] + jitter[0], gy[pj] + jitter[1])
            r = 0.995 * g
            if r < r_min:
                continue
            oracle.add(x0, y0, r)
            covered += math.pi * r * r
            mark(x0, y0, r)
            progressed = True
            if covered / area >= target:
                return oracle.centers.copy(), oracle.radii.copy()
        if not progressed:
            break
    raise CoverError(
        f"coverage {covered / area:.4f} below {target} "
        f"(radius floor {r_min:.3g}, bitmap cell {cell:.3g})")


# --- tree construction --------------------------------------------------------


def _pack_children(config, singular, rng, *, branching, lam_rel, r_min_rel,
                   slab_margin=0.9, n_darts=512):
    """Disjoint child balls in the parent's unit-disk frame.

    A dart at w gets radius min(lam_rel/2, 0.95 * distance to the fold
    lines, slab cap); the slab cap is then certified on a ring sample so
    the child cylinder B x [-2r, 2r] sits under the phi-graph with the
    required margin.  Returns (centers, radii, regions).
    """
    halton = qmc.Halton(d=2, scramble=True, seed=rng)
    centers, radii, regions = [], [], []
    a = config.profile.a
    darts = 2.0 * halton.random(n_darts) - 1.0
    darts = darts[np.hypot(darts[:, 0], darts[:, 1]) < 1.0]
    ring = np.exp(2j * np.pi * np.arange(8) / 8)

    def phi_at(x, y):
        return _phi_reduced(config, x, y)

    for wx, wy in darts:
        if len(centers) >= branching:
            break
        d_sing = float(singular.distance(wx, wy))
        cap = min(lam_rel / 2.0, 0.95 * d_sing)
        if cap < r_min_rel:
            continue
        r = cap
        ok = False
        for _ in range(8):
            rx = wx + r * ring.real
            ry = wy + r * ring.imag
            phis = phi_at(np.append(rx, wx), np.append(ry, wy))
            if 2.0 * r <= slab_margin * float(phis.min()):
                ok = True
                break
            r *= 0.5
            if r < r_min_rel:
                break
        if not ok:
            continue
        if centers:
            arr = np.asarray(centers)
            if np.any(np.hypot(arr[:, 0] - wx, arr[:, 1] - wy)
                      < np.asarray(radii) + r + 1e-12):
                continue
        rho = math.hypot(wx, wy)
        if rho + r < a:
            region = "inner"
        elif rho - r > a:
            region = "annulus"
        else:
            continue  # cannot happen after the singular-distance cap
        centers.append((wx, wy))
        radii.append(r)
        regions.append(region)
    return centers, radii, regions


def _phi_reduced(config, x, y):
    """phi at planar points of the unit disk, folded into the base wedge."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    alpha = config.alpha
    theta = np.mod(np.arctan2(y, x), 2.0 * alpha)
    theta = np.where(theta > alpha, 2.0 * alpha - theta, theta)
    return config.phi(r * np.cos(theta), r * np.sin(theta), validate=False)


def build_cover_tree(root_centers, root_radii, level_maps, etas, depth, *,
                     seed=0, branching=4, child_frac=0.02, r_min_frac=0.25):
    """Grow the nested cover to ``depth`` levels under the given per-level
    cylinder maps.

    ``level_maps`` maps level -> CylinderMap (level m's map acts inside the
    level-m cylinders).  Children of a level-m node are packed with target
    diameter ``child_frac`` times the parent map's maximal slab thickness,
    subject to the fold-line and slab certificates and to the absolute cap
    radius <= 2^-(level+1).  Per-level census and coverage fractions are
    recorded in ``tree.stats``.
    """
    root_centers = np.asarray(root_centers, dtype=float)
    root_radii = np.asarray(root_radii, dtype=float)
    if np.any(root_radii > 2.0 ** -2):
        raise CoverError("level-1 balls must have radius <= 1/4")
    k_levels = {m: level_maps[m].k for m in level_maps}
    roots = [
        CoverNode(rel_center=(c[0], c[1]), ratio=float(r), level=1,
                  multi_index=(i,), k_level=k_levels[1], region="root",
                  center=(c[0], c[1]), radius=float(r))
        for i, (c, r) in enumerate(zip(root_centers, root_radii))
    ]
    stats = {1: {"nodes": len(roots), "inner": 0, "annulus": 0,
                 "coverage": float(np.sum(root_radii ** 2))}}

    frontier = roots
    for m in range(1, depth):
        config = level_maps[m].config
        singular = SingularSet(k=config.k, a=config.profile.a)
        phi_max = config.s * config.eps
        lam_rel = 2.0 * child_frac * phi_max
        next_frontier = []
        census = {"nodes": 0, "inner": 0, "annulus": 0, "coverage": 0.0}
        for node in frontier:
            rng = np.random.default_rng(
                np.random.SeedSequence((seed,) + node.multi_index))
            cap_abs = 2.0 ** -(m + 2) / node.radius if node.radius > 0 else np.inf
            centers, radii, regions = _pack_children(
                config, singular, rng, branching=branching,
                lam_rel=min(lam_rel, cap_abs),
                r_min_rel=r_min_frac * lam_rel / 2.0)
            for i, ((wx, wy), r, reg) in enumerate(zip(centers, radii, regions)):
                child = CoverNode(
                    rel_center=(wx, wy), ratio=float(r), level=m + 1,
                    multi_index=node.multi_index + (i,),
                    k_level=k_levels.get(m + 1, 0), region=reg,
                    center=(node.center[0] + node.radius * wx,
                            node.center[1] + node.radius * wy),
                    radius=node.radius * float(r))
                node.children.append(child)
                next_frontier.append(child)
                census["nodes"] += 1
                census[reg] += 1
                census["coverage"] += r * r
            census["coverage"] = census["coverage"]
        if census["nodes"]:
            census["coverage"] /= len(frontier)
        stats[m + 1] = census
        frontier = next_frontier
        if not frontier:
            raise CoverError(f"no admissible children at level {m + 1}")

    return CoverTree(roots=roots, maps=dict(level_maps), etas=dict(etas),
                     k_levels=k_levels, depth=depth, seed=seed, stats=stats)


# --- chain machinery ----------------------------------------------------------


def find_chain(tree, z):
    """Nodes of every level whose cylinder contains the absolute point z.

    Hierarchical descent in local frames; meaningful while the local
    coordinates stay resolvable (shallow levels for absolute inputs).
    """
    z = np.asarray(z, dtype=float)
    chain = []
    w = z
    candidates = tree.roots
    while True:
        hit = None
        for node in candidates:
            wx = (w[0] - node.rel_center[0]) / node.ratio
            wy = (w[1] - node.rel_center[1]) / node.ratio
            wt = w[2] / node.ratio
            if wx * wx + wy * wy <= 1.0 and abs(wt) <= 2.0:
                hit = node
                w = np.array([wx, wy, wt])
                break
        if hit is None:
            return chain
        chain.append(hit)
        candidates = hit.children


def chain_nodes(tree, leaf):
    """Ancestor chain (level 1 .. leaf.level) of a node, by multi-index."""
    chain = []
    nodes = tree.roots
    for depth in range(1, leaf.level + 1):
        idx = leaf.multi_index[:depth]
        node = next(n for n in nodes if n.multi_index == idx)
        chain.append(node)
        nodes = node.children
    return chain


def _lift(node, w):
    """Local coordinates in ``node``'s frame -> its parent's frame."""
    return np.stack([node.rel_center[0] + node.ratio * w[..., 0],
                     node.rel_center[1] + node.ratio * w[..., 1],
                     node.ratio * w[..., 2]], axis=-1)


def _lower(node, w):
    """Parent-frame coordinates -> ``node``'s local frame."""
    return np.stack([(w[..., 0] - node.rel_center[0]) / node.ratio,
                     (w[..., 1] - node.rel_center[1]) / node.ratio,
                     w[..., 2] / node.ratio], axis=-1)


def apply_level(tree, m, z):
    """The level-m map at an absolute point: conjugated cylinder map inside
    a level-m cylinder, identity otherwise."""
    chain = find_chain(tree, z)
    if len(chain) < m:
        return np.asarray(z, dtype=float).copy()
    w = np.asarray(z, dtype=float)
    for node in chain[:m]:
        w = _lower(node, w)
    w = tree.maps[m](w)
    for node in reversed(chain[:m]):
        w = _lift(node, w)
    return w


def compose_depth(tree, z, depth, truncation=None):
    """Finite-depth composition at an absolute point, deepest level first."""
    chain = find_chain(tree, z)
    chain = chain[:depth]
    if not chain:
        return np.asarray(z, dtype=float).copy()
    w = np.asarray(z, dtype=float)
    for node in chain:
        w = _lower(node, w)
    w = _compose_local(tree, chain, w, truncation)
    return w


def _active_levels(tree, chain, w_deep, truncation):
    """Levels whose map acts, after the optional stopped-walk truncation."""
    p = len(chain)
    if truncation is None:
        return list(range(p, 0, -1))
    steps = chain_steps(tree, chain, w_deep)
    running = 0
    cutoff = p + 1
    for q, st in enumerate(steps, start=1):
        running += st
        if running == -truncation.depth_limit:
            cutoff = q
            break
    return [q for q in range(p, 0, -1) if q < cutoff]


def _compose_local(tree, chain, w_deep, truncation=None):
    """Apply the chain's maps from the deepest frame up; returns the
    absolute image (the level-1 lift is absolute)."""
    p = len(chain)
    active = set(_active_levels(tree, chain, w_deep, truncation))
    w = w_deep
    for q in range(p, 0, -1):
        if q in active:
            w = tree.maps[q](w)
        w = _lift(chain[q - 1], w)
    return w


def chain_steps(tree, chain, w_deep):
    """Walk steps +1 (inner) / -1 (annulus) along the chain at a point.

    Level q < p is read off the level-(q+1) node's region tag; the deepest
    level uses the point's own position in its ball.
    """
    p = len(chain)
    steps = []
    for q in range(1, p):
        steps.append(1 if chain[q].region == "inner" else -1)
    a = tree.config(p).profile.a if p in tree.maps else None
    rho = math.hypot(w_deep[..., 0], w_deep[..., 1])
    steps.append(1 if (a is not None and rho < a) else -1)
    return steps


def chain_factors(tree, chain, w_deep=None, annulus_factors=None):
    """Multiplicative per-level Lipschitz factors along a chain.

    Inner levels contribute exactly b; annulus levels contribute the
    per-level factor from ``annulus_factors`` (default: the profile's
    measured derivative bound).  When ``w_deep`` is omitted only the
    levels above the deepest are reported (the walk prefix of the ball).
    """
    p = len(chain)
    profile = tree.maps[1].profile
    out = []
    for q in range(1, p):
        if chain[q].region == "inner":
            out.append(profile.b)
        else:
            f = annulus_factors[q] if annulus_factors else profile.lipschitz_measured
            out.append(f)
    if w_deep is not None:
        rho = math.hypot(w_deep[..., 0], w_deep[..., 1])
        if rho < profile.a:
            out.append(profile.b)
        else:
            f = annulus_factors[p] if annulus_factors else profile.lipschitz_measured
            out.append(f)
    return out


def dilatation_ledger(tree, chain, k_dilatation):
    """Accumulated dilatation bound for a chain of length p:
    product of (1 + eta(k_q)) over q < p times the measured dilatation of
    the deepest map.  Asserts the product stays below e * K."""
    p = len(chain)
    bound = 1.0
    for q in range(1, p):
        bound *= 1.0 + tree.etas[q]
    bound *= k_dilatation
    if bound > math.e * k_dilatation + 1e-12:
        raise ArithmeticError("ledger bound exceeded e*K; eta schedule broken")
    return bound


def chain_dilatation(tree, chain, w_deep, step=None, truncation=None):
    """Pointwise dilatation of the composed map at a chain point.

    The Jacobian is the plain product of the per-level local Jacobians:
    similarity conjugation contributes no rotation, so the scalar factors
    cancel between levels.
    """
    p = len(chain)
    active = set(_active_levels(tree, chain, w_deep, truncation))
    w = w_deep
    jac = np.eye(3)
    for q in range(p, 0, -1):
        if q in active:
            jq = tree.maps[q].jacobian(w, step=step)
            jac = jq @ jac
            w = tree.maps[q](w)
        w = _lift(chain[q - 1], w)
    det = np.linalg.det(jac)
    if det <= 0:
        raise ArithmeticError("orientation violation along chain")
    return float(np.linalg.svd(jac, compute_uv=False)[0] ** 3 / det)


def chain_stretch(tree, chain, w, direction=None, probe=1e-6,
                  truncation=None):
    """Directional stretch of the composed map at a chain point.

    Product over levels of the local directional derivative magnitude,
    measured with a probe of fixed length in each level's frame and the
    direction transported along the composition.  The similarity lifts
    preserve directions and cancel in every ratio, so the product stays
    well conditioned at any depth (a literal point pair would collapse
    below float resolution after one similarity lift).
    """
    p = len(chain)
    active = set(_active_levels(tree, chain, w, truncation))
    u = np.asarray(w, dtype=float)
    if direction is None:
        direction = np.array([1.0, 0.0, 0.0])
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    stretch = 1.0
    for q in range(p, 0, -1):
        if q in active:
            fu = tree.maps[q](u)
            fv = tree.maps[q](u + probe * e)
            d = fv - fu
            norm = np.linalg.norm(d)
            stretch *= norm / probe
            if norm > 0:
                e = d / norm
            u = fu
        u = _lift(chain[q - 1], u)
    return float(stretch)


def sample_chain_points(tree, n, rng, *, slab_fraction=0.5, margin=0.35):
    """Random (chain, local point) pairs at the tree's full depth.

    Points are drawn in the deepest node's cylinder frame, away from the
    region interfaces so that difference stencils stay one-sided: a slab
    point at a fraction of the local phi, or a transition/cap point at a
    safe height.
    """
    leaves = tree.leaves()
    if not leaves:
        raise CoverError("tree has no leaves at its depth")
    out = []
    config = tree.config(tree.depth)
    for _ in range(n):
        leaf = leaves[rng.integers(0, len(leaves))]
        chain = chain_nodes(tree, leaf)
        rho = math.sqrt(rng.uniform(0.0, 1.0)) * 0.92
        theta = rng.uniform(0.0, 2.0 * np.pi)
        wx, wy = rho * math.cos(theta), rho * math.sin(theta)
        if rng.uniform() < slab_fraction:
            phi = float(_phi_reduced(config, wx, wy))
            wt = rng.uniform(-margin, margin) * phi
        else:
            wt = rng.choice([-1.0, 1.0]) * rng.uniform(0.45, 0.9)
        out.append((chain, np.array([wx, wy, wt])))
    return out


@dataclass(frozen=True)
class Truncation:
    """Stopped-walk modification: once the chain walk first reaches
    -depth_limit, every map at that level and deeper acts as the identity
    on the offending cylinder."""

    depth_limit: int

    def untouched(self, tree, chain, w_deep):
        """A'' membership: the walk never reaches the stop level."""
        steps = chain_steps(tree, chain, w_deep)
        running = 0
        for st in steps:
            running += st
            if running == -self.depth_limit:
                return False
        return True
