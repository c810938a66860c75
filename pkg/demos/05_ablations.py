# %% [markdown]
# # Ablation grids
#
# The harness trains one model per variant from the same seeds and data.
# On synthetic clips the numbers say nothing about real expression data;
# the point is the shape of the tables and that reruns agree exactly.

# %%
from duse.config import RunConfig
from duse.training import GRIDS, ablation_run

cfg = RunConfig().replace(**{
    "train.clips_per_class": 10,
    "train.eval_clips_per_class": 5,
    "train.epochs": 3,
})

# %%
for name, grid in GRIDS.items():
    print(f"-- {name}")
    for row in ablation_run(cfg, grid()):
        print(f"{row['variant']:<20} uar {row['uar']:.3f}  war {row['war']:.3f}  loss {row['loss']:.4f}")

# %% [markdown]
# Same seeds, same table.

# %%
print(ablation_run(cfg, GRIDS["beta"]()) == ablation_run(cfg, GRIDS["beta"]()))
