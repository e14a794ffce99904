"""Wavefront OBJ export of the folded surface.

The surface is the image of the flat disk under the assembled map: the
fold image of each wedge, reflected and rotated around the axis.  Vertices
are deduplicated across wedge seams so the triangulation is watertight.
"""

import numpy as np

from .wedge import surface_map

__all__ = ["surface_mesh", "write_obj"]


def surface_mesh(config, n_r=64, n_t=16, dedup_tol=1e-9):
    """Triangulated image of the folded disk over all 2k wedges.

    Returns (vertices (n, 3), faces (m, 3) int, raw_count): the raw count
    is the vertex total before seam deduplication.  The base wedge grid is
    n_r x n_t in normalized polar coordinates; the other wedges are its
    isometric copies, so their images are reflections/rotations of the
    base image.
    """
    k = config.k
    alpha = config.alpha
    r = np.linspace(0.0, 1.0, n_r)
    u = np.linspace(0.0, 1.0, n_t)
    rr, uu = np.meshgrid(r, u, indexing="ij")
    base = surface_map(config, (rr * np.cos(uu * alpha)).ravel(),
                       (rr * np.sin(uu * alpha)).ravel(), validate=False)
    base = base.reshape(n_r, n_t, 3)

    verts = []
    faces = []
    for cell in range(k):
        for refl in (False, True):
            # image points of this wedge: reflect the angular coordinate
            # across the edge at alpha, then rotate by the cell offset
            pts = base.reshape(-1, 3)
            rad = np.hypot(pts[:, 0], pts[:, 1])
            ang = np.arctan2(pts[:, 1], pts[:, 0])
            if refl:
                ang = 2.0 * alpha - ang
            ang = ang + cell * 2.0 * alpha
            block = np.stack([rad * np.cos(ang), rad * np.sin(ang),
                              pts[:, 2]], axis=-1).reshape(n_r, n_t, 3)
            offset = len(verts)
            verts.extend(block.reshape(-1, 3))
            idx = np.arange(n_r * n_t).reshape(n_r, n_t) + offset
            for i in range(n_r - 1):
                for j in range(n_t - 1):
                    q00, q01 = idx[i, j], idx[i, j + 1]
                    q10, q11 = idx[i + 1, j], idx[i + 1, j + 1]
                    if refl:
                        faces.append((q00, q11, q10))
                        faces.append((q00, q01, q11))
                    else:
                        faces.append((q00, q10, q11))
                        faces.append((q00, q11, q01))

    verts = np.asarray(verts)
    raw_count = verts.shape[0]
    # weld seam vertices: quantize, keep first occurrence
    key = np.round(verts / dedup_tol).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True,
                                  return_inverse=True)
    welded = verts[first]
    remap = inverse
    faces = np.asarray(faces, dtype=np.int64)
    faces = remap[faces]
    # drop degenerate triangles produced by welding the apex fan
    good = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & \
           (faces[:, 0] != faces[:, 2])
    return welded, faces[good], raw_count


def write_obj(path, vertices, faces, comments=()):
    """Plain-text OBJ: one ``v`` line per vertex (9 significant digits),
    one ``f`` line per triangle (1-based indices)."""
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        for v in vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
