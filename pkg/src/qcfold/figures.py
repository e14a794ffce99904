"""Report figures rendered to files next to the delimited outputs.

All renderers take explicit data plus an output path and save a PNG with
pinned metadata, so byte-level output depends only on the inputs.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": "qcfold"}

__all__ = [
    "save_eta_decay",
    "save_profile_curves",
    "save_content_decay",
    "save_termination",
    "save_surface",
]


def _finish(fig, path):
    fig.savefig(path, dpi=130, metadata=_META)
    plt.close(fig)


def save_eta_decay(k_list, etas, path):
    """Measured slab dilatation excess against the wedge count."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.loglog(k_list, etas, "o-", color="tab:blue")
    ax.set_xlabel("wedge count k")
    ax.set_ylabel(r"max dilatation $-$ 1 on the slab")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _finish(fig, path)


def save_profile_curves(profile, path, r_max=1.5, n=800):
    """The radial profile, its derivative and the fold height."""
    r = np.linspace(0.0, r_max, n)
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.plot(r, profile.value(r), label="g")
    ax.plot(r, profile.deriv(r), label="g'")
    ax.plot(r, profile.fold_height(r), label="h")
    ax.axvline(profile.a, color="gray", lw=0.6, ls=":")
    ax.axvline(1.0, color="gray", lw=0.6, ls=":")
    ax.set_xlabel("radius")
    ax.legend(loc="upper left")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _finish(fig, path)


def save_content_decay(rows, path):
    """Per-level content bound, tail and empirical sums (semilog)."""
    m = [row["m"] for row in rows]
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.semilogy(m, [row["bound"] for row in rows], "o-", label="bound")
    ax.semilogy(m, [row["tail"] for row in rows], "s--", label="tail")
    emp = [max(row["empirical_content"], 1e-300) for row in rows]
    ax.semilogy(m, emp, "d-", label="empirical")
    ax.set_xlabel("level m")
    ax.set_ylabel("content")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _finish(fig, path)


def save_termination(doc, path):
    """Stopped-walk absorption frequencies against theory."""
    Ms = sorted(int(m) for m in doc)
    theory = [doc[str(m)]["theory"] for m in Ms]
    emp = [doc[str(m)]["empirical"] for m in Ms]
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    width = 0.35
    ax.bar(np.array(Ms) - width / 2, theory, width, label="theory")
    ax.bar(np.array(Ms) + width / 2, emp, width, label="empirical")
    ax.set_xlabel("stop depth M")
    ax.set_ylabel("absorption probability")
    ax.set_xticks(Ms)
    ax.legend()
    fig.tight_layout()
    _finish(fig, path)


def save_surface(vertices, faces, path, elev=35, azim=-60):
    """3D render of the folded surface mesh."""
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    ax.plot_trisurf(vertices[:, 0], vertices[:, 1], vertices[:, 2],
                    triangles=faces, cmap="viridis", linewidth=0.05,
                    antialiased=True)
    ax.view_init(elev=elev, azim=azim)
    ax.set_box_aspect((1, 1, 0.6))
    fig.tight_layout()
    _finish(fig, path)
