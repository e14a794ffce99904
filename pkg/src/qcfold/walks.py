"""Multiplicative walk statistics and Hausdorff-content bookkeeping.

The per-level contraction bookkeeping of the composed map is a product of
i.i.d. factors: b with probability p (the chain enters the contraction
disk) and L with probability 1-p.  Its geometric mean mu = b^p L^(1-p)
drives everything: for mu < 1 the selected-ball content at level m decays
like (c mu)^(2(m-1)).  The stopped additive walk (+1 inner / -1 annulus,
absorbed at -M) prices the measure lost to the Lipschitz truncation.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import cover as _cover

__all__ = [
    "SimParams",
    "path_rng",
    "compute_mu",
    "check_params",
    "sample_walk_paths",
    "empirical_log_mean",
    "content_bound",
    "content_tail",
    "content_delta",
    "estimate_content",
    "termination_prob",
    "simulate_termination",
    "budget_schedule",
]


@dataclass(frozen=True)
class SimParams:
    """Measure-experiment parameters.

    ``p`` is the inner-disk probability (the square of the profile's inner
    radius when tied to a fold), ``b``/``L`` the contraction/expansion
    factors, ``c`` the content margin in (1, 1/mu), ``M`` the walk stop
    depth, ``R`` the bounding radius of the cover, ``kappa`` the leftover
    measure budget.
    """

    p: float
    b: float
    L: float
    c: float = 0.0
    M: int = 3
    R: float = 1.0
    kappa: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.c <= 0.0:
            mu = compute_mu(self.p, self.b, self.L)
            if mu < 1.0:
                object.__setattr__(self, "c", (1.0 + 1.0 / mu) / 2.0)

    @property
    def mu(self):
        return compute_mu(self.p, self.b, self.L)


def compute_mu(p, b, L):
    """Geometric mean b^p * L^(1-p) of the two-valued factor."""
    if not (0.0 < p < 1.0 or p in (0.0, 1.0)):
        raise ValueError("probability must lie in [0, 1]")
    if b <= 0 or L <= 0:
        raise ValueError("factors must be positive")
    return float(b ** p * L ** (1.0 - p))


def check_params(params):
    """Admissibility report for SimParams; empty list means admissible."""
    bad = []
    mu = params.mu
    if not (0.0 < params.p < 1.0):
        bad.append(f"p={params.p} outside (0,1)")
    if mu >= 1.0:
        bad.append(f"mu={mu:.6g} not below 1")
    if params.p <= 0.5:
        bad.append(f"p={params.p} not above 1/2 (stopped-walk regime)")
    if params.b > 1.0 / params.L:
        bad.append(f"b={params.b} above 1/L={1.0 / params.L:.6g}")
    if mu < 1.0 and not (1.0 < params.c < 1.0 / mu):
        bad.append(f"c={params.c} outside (1, {1.0 / mu:.6g})")
    if params.M < 1:
        bad.append("M must be >= 1")
    if params.kappa <= 0:
        bad.append("kappa must be positive")
    return bad


def path_rng(seed, index):
    """Independent per-path generator derived from (seed, path index).

    Machine-independent and order-independent: each path's stream depends
    only on its own index.
    """
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed,
                                                spawn_key=(index,))))


def sample_walk_paths(params, length, n_paths, *, chunk=4096):
    """Draws of the two-valued factor for n_paths walks of fixed length.

    Returns (Y, Ytilde): multiplicative endpoints as log Y (n_paths,) and
    additive endpoints (n_paths,), built from the same draws.
    """
    log_y = np.empty(n_paths)
    y_add = np.empty(n_paths, dtype=np.int64)
    lb, lL = math.log(params.b), math.log(params.L)
    for i in range(n_paths):
        u = path_rng(params.seed, i).random(length)
        inner = u < params.p
        n_in = int(inner.sum())
        log_y[i] = n_in * lb + (length - n_in) * lL
        y_add[i] = 2 * n_in - length
    return log_y, y_add


def single_path(params, index, length):
    """One walk's factors (multiplicative) and steps (additive)."""
    u = path_rng(params.seed, index).random(length)
    inner = u < params.p
    factors = np.where(inner, params.b, params.L)
    steps = np.where(inner, 1, -1)
    return factors, steps


def empirical_log_mean(params, length, n_paths):
    """Mean and std of (1/length) log Y over sampled paths, for the
    almost-sure convergence check against log mu."""
    log_y, _ = sample_walk_paths(params, length, n_paths)
    scaled = log_y / length
    return float(scaled.mean()), float(scaled.std(ddof=1))


# --- content bookkeeping -------------------------------------------------------


def content_delta(m):
    """Cover fineness at level m."""
    return 2.0 ** -m


def content_bound(m, R, c, mu):
    """Level-m content bound R^2 (c mu)^(2(m-1))."""
    if c * mu >= 1.0:
        raise ValueError("need c*mu < 1 for the content bound")
    return float(R * R * (c * mu) ** (2 * (m - 1)))


def content_tail(m, R, c, mu):
    """Tail sum of the level bounds from m on: bound(m) / (1 - (c mu)^2)."""
    return content_bound(m, R, c, mu) / (1.0 - (c * mu) ** 2)


def _chain_log_y(tree, chain, b, L):
    """log of the walk product over the chain prefix (levels 1..p-1)."""
    out = 0.0
    for node in chain[1:]:
        out += math.log(b) if node.region == "inner" else math.log(L)
    return out


def estimate_content(tree, m, params, annulus_factors=None):
    """Empirical level-m content of the tree against the theory bound.

    Selects level-m balls whose walk prefix satisfies
    Y_(m-1) <= (c mu)^(m-1), sums (r * Yhat_(m-1))^2 over them with
    Yhat using the per-level measured annulus factors (at most L), and
    checks the diameter and content bounds.  Returns a row dict.
    """
    mu = params.mu
    c = params.c
    nodes = tree.level_nodes(m)
    if not nodes:
        raise _cover.CoverError(f"no nodes at level {m}")
    thresh = (m - 1) * math.log(c * mu) + 1e-12
    bound = content_bound(m, params.R, c, mu)
    selected = 0
    content = 0.0
    sum_r2 = 0.0
    for node in nodes:
        chain = _cover.chain_nodes(tree, node)
        log_y = _chain_log_y(tree, chain, params.b, params.L)
        sum_r2 += node.radius ** 2
        if log_y <= thresh:
            selected += 1
            factors = _cover.chain_factors(tree, chain,
                                           annulus_factors=annulus_factors)
            y_hat = math.prod(factors)
            diam_f = 2.0 * node.radius * y_hat
            if diam_f > 2.0 * node.radius * (c * mu) ** (m - 1) * (1 + 1e-9):
                raise ArithmeticError(
                    f"selected ball at level {m} violates the diameter bound")
            content += (node.radius * y_hat) ** 2
    if sum_r2 > params.R ** 2 + 1e-9:
        raise ArithmeticError("disjoint balls exceed the bounding radius mass")
    if content > bound * (1 + 1e-9):
        raise ArithmeticError(f"empirical content exceeds the bound at level {m}")
    return {
        "m": m,
        "delta_m": content_delta(m),
        "bound": bound,
        "tail": content_tail(m, params.R, c, mu),
        "empirical_content": content,
        "selected_fraction": selected / len(nodes),
    }


def selection_probability(params, m, n_paths=20000):
    """Monte Carlo estimate (mean, std-of-mean) of the selection event
    Y_(m-1) <= (c mu)^(m-1) for the i.i.d. walk."""
    if m == 1:
        return 1.0, 0.0
    log_y, _ = sample_walk_paths(params, m - 1, n_paths)
    hit = log_y <= (m - 1) * math.log(params.c * params.mu) + 1e-12
    mean = float(hit.mean())
    return mean, math.sqrt(max(mean * (1 - mean), 1e-12) / n_paths)


# --- stopped walk ---------------------------------------------------------------


def termination_prob(p, M):
    """Absorption probability ((1-p)/p)^M of the +1/-1 walk stopped at -M,
    for upward drift p > 1/2."""
    if not 0.5 < p < 1.0:
        raise ValueError("termination formula needs p in (1/2, 1)")
    if M < 1:
        raise ValueError("M must be >= 1")
    return float(((1.0 - p) / p) ** M)


def simulate_termination(params, n_walks, *, step_cap=10_000, block=256,
                         escape_height=64):
    """Empirical absorption frequency of walks stopped at -M.

    Each walk draws from its own (seed, index) stream in blocks until
    absorbed or the step cap; walks alive at the cap count as
    non-terminating.  A walk that has drifted ``escape_height`` above the
    start is also counted as non-terminating early: its remaining
    absorption probability ((1-p)/p)^(escape_height+M) is folded into the
    reported unresolved tail bound.
    """
    hits = 0
    p, M = params.p, params.M
    ratio = (1.0 - p) / p
    for i in range(n_walks):
        rng = path_rng(params.seed, i)
        pos = 0
        absorbed = False
        steps = 0
        while steps < step_cap and pos < escape_height:
            u = rng.random(block)
            inc = np.where(u < p, 1, -1)
            run = pos + np.cumsum(inc)
            down = np.nonzero(run == -M)[0]
            if down.size:
                absorbed = True
                break
            pos = int(run[-1])
            steps += block
        if absorbed:
            hits += 1
    freq = hits / n_walks
    tail = ratio ** (escape_height + M)
    return {"frequency": freq, "n_walks": n_walks, "step_cap": step_cap,
            "escape_height": escape_height, "unresolved_tail_bound": tail}


def budget_schedule(kappa, levels, p, *, mass=None):
    """Per-level stop depths: smallest M with P_M <= 2^-k * kappa / mass_k.

    ``mass`` optionally weights each level by its normalized annulus mass
    (default 1).  The budgets sum to at most kappa by the geometric series.
    """
    out = {}
    ratio = (1.0 - p) / p
    for k in range(1, levels + 1):
        mk = 1.0 if mass is None else mass.get(k, 1.0)
        budget = 2.0 ** -k * kappa / mk
        M = 1
        while ratio ** M > budget:
            M += 1
            if M > 10_000:
                raise ValueError("no finite stop depth meets the budget")
        out[k] = M
    return out


def walk_report(params, *, lln_length=200, lln_paths=100_000,
                term_walks=100_000, term_Ms=(1, 2, 3)):
    """Headline walk experiments as a JSON-ready dict."""
    mean, std = empirical_log_mean(params, lln_length, lln_paths)
    doc = {
        "mu": params.mu,
        "log_mu": math.log(params.mu),
        "lln": {"length": lln_length, "paths": lln_paths,
                "mean_log_rate": mean, "std_log_rate": std,
                "sigma_of_mean": std / math.sqrt(lln_paths)},
        "termination": {},
    }
    for M in term_Ms:
        q = SimParams(p=params.p, b=params.b, L=params.L, c=params.c, M=M,
                      R=params.R, kappa=params.kappa, seed=params.seed)
        sim = simulate_termination(q, term_walks)
        doc["termination"][str(M)] = {
            "theory": termination_prob(params.p, M),
            "empirical": sim["frequency"],
            "n_walks": sim["n_walks"],
        }
    return doc
