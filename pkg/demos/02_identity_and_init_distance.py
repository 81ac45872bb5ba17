# %% [markdown]
# # Why identity mappings are hard to learn from a random start
#
# First the construction: a plain ReLU network can always be made deeper
# without changing what it computes, by appending a ReLU layer whose weights
# are the identity matrix.

# %%
import numpy as np

from gresnet import layers as L
from gresnet import model as M
from gresnet.tensor import Rng

net = M.build(M.NetworkConfig("classical", 3, seed=0))
x = np.random.default_rng(0).random((16, 784))
deeper = M.insert_identity_layer(net)
same = M.forward(net, x, L.INFER)[0].tobytes() == M.forward(deeper, x, L.INFER)[0].tobytes()
print(f"{net.num_blocks} -> {deeper.num_blocks} middle layers, identical logits: {same}")

# %% [markdown]
# But a randomly initialized weight matrix sits far from both ``I`` and ``0``.
# Per component the expected squared distance to the origin is the
# initialization variance; summed over an n x n matrix with variance ~ 1/n it
# grows linearly in n. A scalar gate needs to travel a fixed distance instead.

# %%
rng = Rng(1)
print(f"{'scheme':>15} {'n':>5} {'E[W^2]':>10} {'Var':>10} {'total':>10}")
for scheme in ("he_uniform", "glorot_uniform"):
    prev = None
    for n in (25, 50, 100, 200):
        r = M.init_distance_report(scheme, n, 1000, rng)
        growth = "" if prev is None else f"  x{r['total_abs_distance'] / prev:.2f}"
        print(f"{scheme:>15} {n:>5} {r['per_component_var']:10.5f} {r['analytic_var']:10.5f} "
              f"{r['total_abs_distance']:10.3f}{growth}")
        prev = r["total_abs_distance"]
