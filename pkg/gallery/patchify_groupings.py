"""Four ways to cut a room into patches, and how much they overlap.

Run from the repository root:  python gallery/patchify_groupings.py
Writes one patch-colored PLY per grouping into gallery_out/.
"""
# %%
from pathlib import Path

import numpy as np

from plainpoint.synthetic import synthetic_scene
from plainpoint.fileio import patch_colored_cloud, save_point_cloud
from plainpoint.patchify import GROUPINGS, patchify

out = Path("gallery_out")
out.mkdir(exist_ok=True)

pc = synthetic_scene(seed=3, num_points=8000)
print(len(pc), "points, bounding box", pc.coords.min(0).round(2), pc.coords.max(0).round(2))

# %% overlap: how many patch slots hold a point that some other patch also holds
M, K = 128, 64
for group in GROUPINGS:
    ps = patchify(pc, M, K, group, radius=0.25)
    rows = ps.unique_rows()
    owners = np.bincount(np.concatenate(rows), minlength=len(pc))
    shared = np.mean(owners > 1)
    covered = np.mean(owners > 0)
    sizes = ps.pre_dup_counts
    print(f"{group:<7} covered {covered:6.1%}  shared {shared:6.1%}  "
          f"points/patch before cut: min {sizes.min():4d} median {int(np.median(sizes)):4d} max {sizes.max():5d}")
    save_point_cloud(patch_colored_cloud(pc, ps, seed=0), out / f"patches_{group}.ply")

# %% fpc vs kmeans on uneven density: k-means drifts its centers into dense regions
fpc = patchify(pc, M, K, "fpc")
km = patchify(pc, M, K, "kmeans")
spread = lambda ps: np.linalg.norm(ps.keys.coords[:, None] - ps.keys.coords[None], axis=-1)
for name, ps in (("fpc", fpc), ("kmeans", km)):
    d = spread(ps)
    np.fill_diagonal(d, np.inf)
    print(f"{name:<7} nearest-key distance: mean {d.min(1).mean():.3f}  min {d.min():.3f}")
print("k-means ran", km.iterations, "iterations")
