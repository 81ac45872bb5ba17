# %% [markdown]
# # Depth, gates and pruning on a small handwritten-digit set
#
# MNIST itself is not bundled here, so this walk-through uses scikit-learn's
# 8x8 digits, upscaled to 28x28 and written out as MNIST-named IDX files. The
# numbers are not comparable to MNIST results; the point is to exercise the
# whole pipeline in a minute.

# %%
import tempfile

import numpy as np
from scipy.ndimage import zoom
from sklearn.datasets import load_digits

from gresnet import model as M
from gresnet import pruning as P
from gresnet.data import Dataset, load_mnist, write_idx
from gresnet.training import train

digits = load_digits()
imgs = np.stack([zoom(im, 28 / 8, order=1) for im in digits.images])
imgs = np.clip(np.rint(imgs / 16 * 255), 0, 255) / 255.0
data_dir = tempfile.mkdtemp()
for prefix, sl in (("train", slice(0, 1300)), ("t10k", slice(1300, None))):
    ds = Dataset(imgs[sl].reshape(-1, 784), digits.target[sl])
    write_idx(ds, f"{data_dir}/{prefix}-images-idx3-ubyte", f"{data_dir}/{prefix}-labels-idx1-ubyte")
train_ds, test_ds = load_mnist(data_dir, "train"), load_mnist(data_dir, "test")
print(len(train_ds), "train /", len(test_ds), "test images")

# %% [markdown]
# Train the three families at a moderate depth. Deep plain networks lag; the
# shortcut families train quickly.

# %%
nets = {}
for family in ("classical", "resnet", "gresnet"):
    net, rep, _ = train(M.NetworkConfig(family, 20, seed=0), train_ds, test_ds, epochs=10)
    nets[family] = net
    errs = " ".join(f"{r['test_error']:5.1f}" for r in rep.per_epoch)
    print(f"{family:>9}: {errs}")

# %% [markdown]
# Learned gates. Blocks with small ``k`` are close to identity mappings.

# %%
for i, k in M.k_profile(nets["gresnet"]):
    print(f"block {i:2d}  k = {k:6.3f}  " + "#" * int(max(k, 0) * 20))

# %% [markdown]
# Remove blocks one at a time: greedily by smallest ``k``, or at random
# (averaged over five permutations).

# %%
greedy = P.prune_curve(nets["gresnet"], test_ds, P.GREEDY_K)
_, g_random = P.random_curves(nets["gresnet"], test_ds, range(5))
_, r_random = P.random_curves(nets["resnet"], test_ds, range(5))
print("removed  gresnet-greedy  gresnet-random  resnet-random")
for (n, a), (_, b), (_, c) in zip(greedy.accuracy_curve, g_random, r_random):
    print(f"{n:7d}  {a:14.1f}  {b:14.1f}  {c:13.1f}")
