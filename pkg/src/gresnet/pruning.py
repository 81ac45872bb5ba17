"""Whole-block removal: greedy-by-k and random pruning curves.

A removed block is switched to pass-through (``u = x``) rather than deleted,
so its parameters stay in the network and a curve can be computed by
flipping flags on one working copy. BN running statistics are left as
trained.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import model as M
from .tensor import Rng

GREEDY_K = "greedy_k"
RANDOM = "random"
STRATEGIES = (GREEDY_K, RANDOM)


@dataclass
class PruneReport:
    strategy: str
    removal_order: list
    accuracy_curve: list  # [(num_removed, accuracy %), ...]
    seed: int | None = None

    def accuracies(self):
        return np.array([acc for _, acc in self.accuracy_curve])

    def to_dict(self):
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "removal_order": list(self.removal_order),
            "accuracy_curve": [list(p) for p in self.accuracy_curve],
        }


def _require_blocks(net):
    if net.family not in ("resnet", "gresnet"):
        raise ValueError(f"block removal needs a resnet or gresnet, got {net.family}")


def remove_block(net, block_index):
    """Return a copy of ``net`` whose block ``block_index`` (1-based) is pass-through.

    Parameter arrays are shared with ``net``, which itself is left unchanged.
    """
    _require_blocks(net)
    if not 1 <= block_index <= len(net.blocks):
        raise IndexError(f"block index {block_index} outside 1..{len(net.blocks)}")
    blocks = list(net.blocks)
    blocks[block_index - 1] = dataclasses.replace(blocks[block_index - 1], active=False)
    return dataclasses.replace(net, blocks=blocks)


def greedy_order(net):
    """Block numbers by ascending k; ties keep network order."""
    profile = M.k_profile(net)
    ks = np.array([k for _, k in profile])
    return [profile[i][0] for i in np.argsort(ks, kind="stable")]


def random_order(net, seed):
    return [int(i) + 1 for i in Rng(seed).permutation(len(net.blocks))]


def prune_curve(net, ds, strategy, seed=None):
    """Remove blocks one at a time and record test accuracy after each removal."""
    _require_blocks(net)
    if strategy == GREEDY_K:
        if net.family != "gresnet":
            raise ValueError("greedy pruning ranks blocks by k, which only a gresnet has")
        order = greedy_order(net)
    elif strategy == RANDOM:
        if seed is None:
            raise ValueError("random pruning needs a seed")
        order = random_order(net, seed)
    else:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")

    work = dataclasses.replace(net, blocks=[dataclasses.replace(b, active=True) for b in net.blocks])
    curve = [(0, M.accuracy(work, ds.images, ds.labels))]
    for n_removed, idx in enumerate(order, start=1):
        work.blocks[idx - 1].active = False
        curve.append((n_removed, M.accuracy(work, ds.images, ds.labels)))
    return PruneReport(strategy, order, curve, seed)


def random_curves(net, ds, seeds):
    """One random-pruning report per seed, plus the pointwise mean accuracy curve."""
    reports = [prune_curve(net, ds, RANDOM, s) for s in seeds]
    mean = np.mean([r.accuracies() for r in reports], axis=0)
    return reports, [(i, float(a)) for i, a in enumerate(mean)]


def auc(curve):
    """Trapezoidal area under an accuracy curve, x = number of removed blocks."""
    x = np.array([p[0] for p in curve], dtype=float)
    y = np.array([p[1] for p in curve], dtype=float)
    return float(np.sum((y[1:] + y[:-1]) * np.diff(x)) / 2.0)
