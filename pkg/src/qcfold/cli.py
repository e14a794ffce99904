"""Command-line driver: surface | verify | calibrate | compose | measure.

One JSON config file carries the experiment parameters; flags only
override paths and the seed (QCFOLD_SEED in the environment wins over the
file).  Every report embeds the hash of the resolved config, and repeated
runs with the same config and seed produce byte-identical artifacts.
Commands exit nonzero with a machine-readable failure list when an
asserted invariant fails.
"""

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .profiles import RadialProfile
from . import verify as verify_mod
from . import cylinder, cover, walks, objmesh, figures

_DEFAULTS = {
    "a": 0.3,
    "b": 0.997,
    "k_list": [4, 16, 64],
    "grid": [200, 12, 5],
    "seed": 0,
    "depth": 3,
    "coverage_tol": 0.3,
    "c": 0.0,
    "M": 1,
    "kappa": 0.1,
    "out_dir": "qcfold_out",
    "branching": 4,
    "samples": 200,
    "p": None,
    "L": None,
}


def load_config(path, seed_override=None, out_override=None):
    with open(path) as fh:
        raw = json.load(fh)
    unknown = set(raw) - set(_DEFAULTS)
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    cfg = dict(_DEFAULTS)
    cfg.update(raw)
    env_seed = os.environ.get("QCFOLD_SEED")
    if env_seed is not None:
        cfg["seed"] = int(env_seed)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    if out_override is not None:
        cfg["out_dir"] = out_override
    return cfg


def config_hash(cfg):
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, rows, columns, header_comment):
    with open(path, "w") as fh:
        fh.write(f"# {header_comment}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(f"{row[c]:.12g}" if isinstance(row[c], float)
                              else str(row[c]) for c in columns) + "\n")


def _fail(report, failures, out_path):
    report["failures"] = failures
    _write_json(out_path, report)
    return 1 if failures else 0


# --- commands -----------------------------------------------------------------


def cmd_surface(cfg, out):
    """Mesh the folded disk for every k and write OBJ + render."""
    h = config_hash(cfg)
    prof = RadialProfile(cfg["a"], cfg["b"])
    n_r, n_t = cfg["grid"][0], cfg["grid"][1]
    failures = []
    report = {"config_hash": h, "surfaces": []}
    for k in cfg["k_list"]:
        cyl = cylinder.make_cylinder_map(cfg["a"], cfg["b"], k,
                                         eta_target=4.0, profile=prof)
        verts, faces, raw = objmesh.surface_mesh(cyl.config, n_r=n_r, n_t=n_t)
        obj_path = out / f"surface_k{k}.obj"
        objmesh.write_obj(obj_path, verts, faces,
                          comments=[f"config_hash={h}", f"k={k}"])
        figures.save_surface(verts, faces, out / f"surface_k{k}.png")
        # inner vertices must be plane points scaled by b
        rad = np.hypot(verts[:, 0], verts[:, 1])
        inner = rad < cfg["b"] * cfg["a"] - 1e-9
        flat = bool(np.all(np.abs(verts[inner, 2]) < 1e-12))
        if not flat:
            failures.append(f"k={k}: inner vertices left the plane")
        report["surfaces"].append({
            "k": k, "vertices": int(verts.shape[0]),
            "vertices_before_weld": int(raw), "faces": int(faces.shape[0]),
            "obj": obj_path.name,
        })
    return _fail(report, failures, out / "surface_report.json")


def cmd_verify(cfg, out):
    """Slab calibration and dilatation decay across the k list."""
    h = config_hash(cfg)
    if not cfg["k_list"]:
        raise SystemExit("verify needs a nonempty k_list")
    prof = RadialProfile(cfg["a"], cfg["b"])
    n_r, n_t, n_s = cfg["grid"]
    report = {"config_hash": h, "a": cfg["a"], "b": cfg["b"],
              "lipschitz_measured": prof.lipschitz_measured, "runs": []}
    failures = []
    etas = []
    for k in cfg["k_list"]:
        psi_norm = None
        eta_probe = _surface_eta_probe(prof, k, n_r, n_t)
        try:
            eps = cylinder.calibrate_epsilon(prof, k, 2.0 * eta_probe,
                                             n_r=n_r, n_t=n_t, n_s=n_s)
        except cylinder.CalibrationError as exc:
            failures.append(f"k={k}: {exc}")
            continue
        config = cylinder.WedgeConfig(k=k, eps=eps, s=1.0, profile=prof)
        eta = verify_mod.measure_eta(config, n_r=n_r, n_t=n_t, n_s=n_s)
        etas.append(eta)
        report["runs"].append({"k": k, "eps": eps, "eta": eta,
                               "surface_eta": eta_probe})
    if len(etas) == len(cfg["k_list"]) and len(etas) > 1:
        if not all(e0 > e1 for e0, e1 in zip(etas, etas[1:])):
            failures.append(f"eta values not strictly decreasing: {etas}")
    ks = [run["k"] for run in report["runs"]]
    if ks:
        figures.save_eta_decay(ks, etas, out / "eta_decay.png")
    return _fail(report, failures, out / "verify_report.json")


def _surface_eta_probe(prof, k, n_r, n_t):
    """Dilatation excess of the fold surface itself (zero-thickness slab)."""
    config = cylinder.WedgeConfig(k=k, eps=1.0, s=1.0, profile=prof)
    x, y, t = cylinder._slab_grid(config, 0.0, n_r, n_t, 1)
    z = np.stack([x, y, t], axis=-1)
    jac = verify_mod.numeric_jacobian(
        lambda q: cylinder.offset_map(config, q[..., 0], q[..., 1],
                                      q[..., 2], validate=False),
        z, cylinder._fd_step(config))
    return float(verify_mod.dilatation_3d(jac).max() - 1.0)


def cmd_calibrate(cfg, out):
    """Full per-k calibration (eps then s) with map statistics."""
    h = config_hash(cfg)
    if not cfg["k_list"]:
        raise SystemExit("calibrate needs a nonempty k_list")
    prof = RadialProfile(cfg["a"], cfg["b"])
    failures = []
    report = {"config_hash": h, "a": cfg["a"], "b": cfg["b"],
              "lipschitz_measured": prof.lipschitz_measured, "runs": []}
    for k in cfg["k_list"]:
        try:
            cyl = cylinder.make_cylinder_map(cfg["a"], cfg["b"], k,
                                             eta_target=4.0, profile=prof)
        except cylinder.CalibrationError as exc:
            failures.append(f"k={k}: {exc}")
            continue
        stats = cylinder.measure_map_stats(cyl)
        if stats.min_jacobian_det <= 0:
            failures.append(f"k={k}: orientation violation in map stats")
        report["runs"].append({
            "k": k, "eps": cyl.config.eps, "s": cyl.config.s,
            "max_dilatation": stats.max_dilatation,
            "max_stretch": stats.max_stretch,
            "min_jacobian_det": stats.min_jacobian_det,
            "samples": stats.samples,
            "region": stats.region,
        })
    figures.save_profile_curves(prof, out / "profile_curves.png")
    return _fail(report, failures, out / "calibration_report.json")


def build_tree_from_config(cfg):
    """Shared tree construction: per-level maps with eta(k_m) < 2^-m,
    root cover of the unit disk, nested children."""
    prof = RadialProfile(cfg["a"], cfg["b"])
    depth = cfg["depth"]
    maps, etas, k_levels = {}, {}, {}
    k_list = cfg["k_list"]
    explicit = len(k_list) == depth and all(k > 0 for k in k_list)
    k_floor = 8
    for m in range(1, depth + 1):
        target = 2.0 ** -m
        if explicit:
            k = k_list[m - 1]
            cyl = cylinder.make_cylinder_map(cfg["a"], cfg["b"], k,
                                             eta_target=target, profile=prof)
            eta = verify_mod.measure_eta(cyl.config)
            if eta >= target:
                raise cylinder.CalibrationError(
                    f"explicit k={k} at level {m} has eta={eta:.4f} >= {target}")
        else:
            k, cyl, eta = cylinder.choose_k(prof, m, k_start=k_floor)
        maps[m], etas[m], k_levels[m] = cyl, eta, k
        k_floor = k
    roots_c, roots_r = cover.build_vitali_cover(
        [("disk", 0.0, 0.0, 1.0)], lam=0.5,
        coverage_tol=cfg["coverage_tol"], seed=cfg["seed"])
    tree = cover.build_cover_tree(roots_c, roots_r, maps, etas, depth,
                                  seed=cfg["seed"],
                                  branching=cfg["branching"])
    return prof, tree


def cmd_compose(cfg, out):
    """Build the nested cover tree, check the dilatation ledger, and
    emit the tree with per-level content rows."""
    h = config_hash(cfg)
    failures = []
    try:
        prof, tree = build_tree_from_config(cfg)
    except (cylinder.CalibrationError, cover.CoverError) as exc:
        return _fail({"config_hash": h}, [str(exc)], out / "compose_report.json")

    stats = {m: cylinder.measure_map_stats(tree.maps[m], n_r=100, n_t=8,
                                           n_s=4)
             for m in tree.maps}
    k_dil = max(s.max_dilatation for s in stats.values())
    annulus = _annulus_factors(tree)

    rng = np.random.default_rng(np.random.SeedSequence((cfg["seed"], 77)))
    pts = cover.sample_chain_points(tree, cfg["samples"], rng)
    worst_ratio = 0.0
    for chain, w in pts:
        led = cover.dilatation_ledger(tree, chain, k_dil)
        dil = cover.chain_dilatation(tree, chain, w)
        worst_ratio = max(worst_ratio, dil / led)
        if dil > led * 1.05:
            failures.append(
                f"chain {chain[-1].multi_index}: dilatation {dil:.3f} "
                f"exceeds ledger {led:.3f} + 5%")
            break

    params = walks.SimParams(p=prof.a ** 2, b=prof.b,
                             L=prof.lipschitz_measured,
                             c=cfg["c"] if cfg["c"] else 0.0,
                             M=cfg["M"], kappa=cfg["kappa"],
                             seed=cfg["seed"])
    bad = walks.check_params(params)
    rows = []
    if bad:
        failures.extend(f"sim params: {msg}" for msg in bad)
    else:
        for m in range(1, tree.depth + 1):
            rows.append(walks.estimate_content(tree, m, params,
                                               annulus_factors=annulus))
        _write_csv(out / "content.csv", rows,
                   ["m", "delta_m", "bound", "tail", "empirical_content",
                    "selected_fraction"],
                   f"config_hash={h}")
        figures.save_content_decay(rows, out / "content_decay.png")

    (out / "tree.json").write_text(tree.to_json(config_hash=h))
    report = {
        "config_hash": h,
        "k_levels": tree.k_levels,
        "etas": tree.etas,
        "k_dilatation": k_dil,
        "ledger_worst_ratio": worst_ratio,
        "stats": tree.stats,
        "mu": params.mu if not bad else None,
    }
    return _fail(report, failures, out / "compose_report.json")


def _annulus_factors(tree):
    """Per-level stretch of the slab map over the annulus radii."""
    out = {}
    for m, cyl in tree.maps.items():
        config = cyl.config
        x, y, t = verify_mod.slab_samples(config, n_r=200, n_t=10, n_s=5,
                                          r_min=config.profile.a)
        z = np.stack([x, y, t], axis=-1)
        jac = verify_mod.numeric_jacobian(
            lambda q: cylinder.offset_map(config, q[..., 0], q[..., 1],
                                          q[..., 2], validate=False),
            z, cylinder._fd_step(config))
        out[m] = float(np.linalg.svd(jac, compute_uv=False)[..., 0].max())
    return out


def cmd_measure(cfg, out):
    """Pure walk experiments: geometric-mean convergence, stopped-walk
    absorption, leftover budgets and the content-bound decay."""
    h = config_hash(cfg)
    p = cfg["p"] if cfg["p"] is not None else cfg["a"] ** 2
    L = cfg["L"] if cfg["L"] is not None else \
        RadialProfile(cfg["a"], cfg["b"]).lipschitz_measured
    params = walks.SimParams(p=p, b=cfg["b"], L=L,
                             c=cfg["c"] if cfg["c"] else 0.0,
                             M=cfg["M"], kappa=cfg["kappa"],
                             seed=cfg["seed"])
    failures = [f"sim params: {m}" for m in walks.check_params(params)]
    doc = {"config_hash": h, "params": {
        "p": params.p, "b": params.b, "L": params.L, "c": params.c,
        "M": params.M, "kappa": params.kappa, "seed": params.seed}}
    if not failures:
        doc.update(walks.walk_report(params, lln_paths=20_000,
                                     term_walks=20_000))
        for M, block in doc["termination"].items():
            if abs(block["empirical"] - block["theory"]) > \
                    0.02 * max(block["theory"], 1e-9) + 3e-3:
                failures.append(
                    f"termination M={M}: empirical {block['empirical']:.5f} "
                    f"far from {block['theory']:.5f}")
        doc["budget_schedule"] = walks.budget_schedule(params.kappa,
                                                       cfg["depth"], params.p)
        rows = [{"m": m, "delta_m": walks.content_delta(m),
                 "bound": walks.content_bound(m, params.R, params.c, params.mu),
                 "tail": walks.content_tail(m, params.R, params.c, params.mu),
                 "empirical_content": float("nan"),
                 "selected_fraction": float("nan")}
                for m in range(1, cfg["depth"] + 1)]
        _write_csv(out / "content_bounds.csv", rows,
                   ["m", "delta_m", "bound", "tail", "empirical_content",
                    "selected_fraction"], f"config_hash={h}")
        figures.save_termination(doc["termination"], out / "termination.png")
    return _fail(doc, failures, out / "measure_report.json")


# --- entry point ----------------------------------------------------------------


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="qcfold",
        description="Numerical verification of the folding construction: "
                    "calibrated cylinder maps, nested-cover composition, "
                    "and measure experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("surface", cmd_surface), ("verify", cmd_verify),
                     ("calibrate", cmd_calibrate), ("compose", cmd_compose),
                     ("measure", cmd_measure)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--out-dir", default=None,
                        help="override the config's output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config's seed")
        sp.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    cfg = load_config(args.config, seed_override=args.seed,
                      out_override=args.out_dir)
    if not isinstance(cfg["k_list"], list):
        parser.error("k_list must be a list")
    if args.fn in (cmd_surface, cmd_verify, cmd_calibrate) and not cfg["k_list"]:
        parser.error("k_list must be nonempty for this command")
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return args.fn(cfg, out)


if __name__ == "__main__":
    sys.exit(main())
