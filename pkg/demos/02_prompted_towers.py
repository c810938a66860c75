# %% [markdown]
# # Prompted towers
#
# Both towers are frozen. Learnable text prompts are appended at the first
# ``M`` layers of the text tower; a shared mapper turns them into visual
# prompts for the vision tower, and the first-layer visual prompts carry a
# sinusoidal frame encoding.

# %%
import numpy as np

from duse import tensor as T
from duse.config import RunConfig
from duse.htpc import build_visual_schedule, resolve_prompt_depth, temporal_position_encoding
from duse.model import DuseModel

# %% [markdown]
# Depth strategies for a 12-layer and a 24-layer tower.

# %%
for k in (6, 12, 24):
    print(k, {s: resolve_prompt_depth(s, k) for s in ("Shallow", "Normal", "Deep")})

# %% [markdown]
# The frame encoding: even columns are sines, odd ones cosines.

# %%
pe = temporal_position_encoding(4, 8)
print(np.round(pe, 3))

# %% [markdown]
# Build the default model and look at the prompt schedule for an 8-frame clip.
# Layer 0 has one prompt stream per frame; deeper layers share theirs.

# %%
cfg = RunConfig()
model = DuseModel(cfg, ["a happy face", "a sad face", "a neutral face", "an angry face"])
schedule = build_visual_schedule(model.cluster, model.mapper, 8)
print("prompted layers:", model.depth, [tuple(s.shape) for s in schedule])

# %% [markdown]
# Feature shapes: ``F_T`` is one row per class, ``F_V`` one row per frame.

# %%
clip = np.random.default_rng(0).uniform(size=(8, 1, 16, 16))
with T.no_grad():
    f_t = model.text_features()
    f_v = model.video_features(clip)
print("F_T", f_t.shape, "F_V", f_v.shape)

# %% [markdown]
# Without the frame encoding the tower is blind to frame order: swapping two
# frames just swaps their feature rows. With it, the rows change.

# %%
swapped = clip[[1, 0, *range(2, 8)]]
with T.no_grad():
    for use_pe in (False, True):
        model.use_pe = use_pe
        a, b = model.video_features(clip).data, model.video_features(swapped).data
        print(f"pe={use_pe}: max |F_V(clip)[0] - F_V(swapped)[1]| = {np.abs(a[0] - b[1]).max():.3e}")
