# %% [markdown]
# # Autodiff and the gradient oracle
#
# Every trainable piece of the model is built from a small reverse-mode
# engine over float64 numpy arrays. Its gradients are checked against
# central finite differences, first on toy functions and then on the whole
# pipeline at a tiny size.

# %%
import numpy as np

from duse import tensor as T
from duse.diagnostics import pipeline_gradcheck, tiny_config
from duse.tensor import Tensor, finite_difference_check

# %% [markdown]
# A tensor used twice gets the sum of both path gradients.

# %%
x = Tensor(1.5, requires_grad=True)
(x * x + x).backward()
print("d/dx (x^2 + x) at 1.5 =", x.grad)

# %% [markdown]
# Cross-entropy on top of softmax: the gradient w.r.t. the logits is
# ``softmax - onehot``.

# %%
z = Tensor(np.array([2.0, 0.0, -1.0]), requires_grad=True)
(-T.log_softmax(z)[0]).backward()
p = np.exp(z.data) / np.exp(z.data).sum()
print("autodiff:", z.grad)
print("closed form:", p - np.eye(3)[0])
print("max rel err vs finite differences:", finite_difference_check(lambda: -T.log_softmax(z)[0], [z]))

# %% [markdown]
# The whole pipeline (two prompted towers, the aggregator and the
# contrastive loss) on the tiny configuration. Each trainable tensor is
# probed entry by entry.

# %%
errors = pipeline_gradcheck(tiny_config())
for name, err in errors.items():
    print(f"{name:<20} {err:.2e}")
print("worst:", max(errors.values()))
