# %% [markdown]
# # The aggregator
#
# Frame features go through temporal self-attention and an attention pool.
# The pooled vector then attends, per head, over the projected class
# texts; the result is mixed with the visual head feature by ``beta``.

# %%
import numpy as np

from duse.lsea import LseaParams, aggregate, attention_pool, fuse, semantic_attention_head
from duse.tensor import Tensor

rng = np.random.default_rng(1)
params = LseaParams(dim=16, num_heads=4, beta=0.7, seed=3)
frames = Tensor(rng.normal(size=(6, 16)))
texts = Tensor(rng.normal(size=(4, 16)))

# %% [markdown]
# One full pass, with the intermediate trace.

# %%
fused, text_side, trace = aggregate(frames, texts, params)
print("pool weights:", np.round(trace.pool_weights, 3))
print("class attention per head:\n", np.round(trace.alpha, 3))
print("V_g:", fused.shape, "text side:", text_side.shape)

# %% [markdown]
# When one frame scores far above the rest, pooling returns that frame.

# %%
rows = rng.normal(size=(4, 3)) * 0.1
rows[1, 0] = 25.0
pooled, w = attention_pool(Tensor(rows), Tensor(np.array([[1.0], [0.0], [0.0]])))
print("weights:", np.round(w.data, 6), "gap to frame 1:", np.abs(pooled.data - rows[1]).max())

# %% [markdown]
# Semantic attention uses cosine similarity, so scaling the query changes nothing.

# %%
v = rng.normal(size=5)
cls_rows = rng.normal(size=(3, 5))
for scale in (1.0, 10.0):
    _, alpha = semantic_attention_head(Tensor(scale * v), Tensor(cls_rows))
    print(scale, np.round(alpha.data, 6))

# %% [markdown]
# ``V_g`` moves on a straight line between the semantic (beta = 0) and
# visual (beta = 1) endpoints.

# %%
pooled = Tensor(rng.normal(size=16))
g0, g1 = fuse(pooled, texts, params, beta=0.0).data, fuse(pooled, texts, params, beta=1.0).data
for beta in (0.3, 0.5, 0.7, 0.9):
    g = fuse(pooled, texts, params, beta=beta).data
    print(beta, np.abs(g - (g0 + beta * (g1 - g0))).max())
