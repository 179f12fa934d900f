"""Why the global position embedding only pools over visible keys.

The pooled feature g sees every key it is given. If masked keys were in that
set, the embedding of each visible patch would carry their positions too.
"""
# %%
import numpy as np

from plainpoint.embed import GlobalPosEmbed, MLPPosEmbed
from plainpoint.mae import DROP_PATCH_RATIOS, partition_patches
from plainpoint.nn import ForwardContext, ParameterStore
from plainpoint.rng import Rng

ctx = ForwardContext()
r = Rng(0)
keys = r.random((32, 3))
part = partition_patches(32, DROP_PATCH_RATIOS, r.split("partition"))
visible = part.reserved
hidden = np.setdiff1d(np.arange(32), visible)
print("visible", visible.tolist())

glob = GlobalPosEmbed(ParameterStore(1), "g", 64)
mlp = MLPPosEmbed(ParameterStore(1), "m", 64)

# %% move the hidden keys far away
moved = keys.copy()
moved[hidden] += 3.0

for name, emb in (("mlp", mlp), ("global", glob)):
    right = np.abs(emb(moved[visible], ctx).data - emb(keys[visible], ctx).data).max()
    # the wrong way: embed everything, then keep the visible rows
    wrong = np.abs(emb(moved, ctx).data[visible] - emb(keys, ctx).data[visible]).max()
    print(f"{name:<6} visible-only pooling: {right:.2e}   pooling over all keys: {wrong:.2e}")

# %% and the pooled feature really is global: one visible key moves every row
nudged = keys[visible].copy()
nudged[0] += 0.5
delta = np.abs(glob(nudged, ctx).data - glob(keys[visible], ctx).data).max(axis=1)
print("per-row change after moving visible key 0:", delta.round(4))
