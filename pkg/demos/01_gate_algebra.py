# %% [markdown]
# # The scalar gate on a residual block
#
# A gated residual block computes ``u = relu(k) * f_r(x) + x`` where ``f_r`` is
# two Dot-BN-ReLU layers. One scalar decides how much of the residual branch
# gets through.

# %%
import numpy as np

from gresnet import layers as L

rng = np.random.default_rng(0)
width = 5


def layer():
    return L.LayerParams(L.DenseParams(rng.normal(0, 0.5, (width, width))), L.BatchNormParams.init(width))


block = L.GatedBlockParams(layer(), layer(), np.array(1.0))
x = rng.normal(size=(8, width))

# %% [markdown]
# With ``k = 1`` the block is an ordinary residual block, bit for bit.

# %%
plain = L.BlockParams(block.layer1, block.layer2)
u_res, _ = L.residual_block_forward(x, plain, L.TRAIN)
u_gate, _ = L.gated_block_forward(x, block, L.TRAIN)
print("k=1 equals ResNet block:", u_res.tobytes() == u_gate.tobytes())

# %% [markdown]
# Any ``k <= 0`` closes the gate and the block hands its input straight through.
# Reaching that state takes one scalar, whatever the layer width.

# %%
for k in (0.0, -0.3, -5.0):
    block.k[...] = k
    u, _ = L.gated_block_forward(x, block, L.TRAIN)
    print(f"k={k:5}: output is input -> {u.tobytes() == x.tobytes()}")

# %% [markdown]
# Values above 1 amplify the residual, values in (0, 1) damp it.

# %%
fr, _ = L.residual_fn_forward(x, block, L.TRAIN)
for k in (0.5, 2.0):
    block.k[...] = k
    u, _ = L.gated_block_forward(x, block, L.TRAIN)
    print(f"k={k}: (u - x) / f_r(x) =", np.round(np.median((u - x)[fr > 0] / fr[fr > 0]), 12))

# %% [markdown]
# The gradient reaching ``k`` is the residual output weighted by the incoming
# gradient; a closed gate gets none, so it stays closed.

# %%
go = rng.normal(size=x.shape)
for k in (0.7, -0.7):
    block.k[...] = k
    _, cache = L.gated_block_forward(x, block, L.TRAIN)
    _, _, grad_k = L.gated_block_backward(go, cache)
    print(f"k={k}: dL/dk = {grad_k:.4f}")
