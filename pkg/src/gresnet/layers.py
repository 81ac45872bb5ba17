"""Forward/backward primitives for the fully-connected MNIST models.

Every ``*_forward`` returns ``(output, cache)`` and the matching
``*_backward`` takes ``(grad_out, cache)``. Mode is either ``"train"`` or
``"infer"``; it only matters for batch normalization.

A layer in the middle of the network is Dot-BN-ReLU. A residual block is two
such layers plus the shortcut, ``u = f_r(x) + x``; a gated block scales the
residual branch by a scalar gate, ``u = relu(k) * f_r(x) + x``.
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, ShapeError

TRAIN = "train"
INFER = "infer"
MODES = (TRAIN, INFER)

BN_MOMENTUM = 0.9
BN_EPSILON = 1e-5


class CacheError(TypeError):
    pass


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _check_cache(cache, kind, grad_out):
    if not isinstance(cache, kind):
        raise CacheError(f"expected {kind.__name__}, got {type(cache).__name__}")
    if grad_out.shape != cache.out_shape:
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match forward output {cache.out_shape}"
        )


# --------------------------------------------------------------------------
# parameters


@dataclass
class DenseParams:
    W: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=DTYPE)
        if self.W.ndim != 2:
            raise ShapeError(f"W must be 2-D, got shape {self.W.shape}")
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=DTYPE)
            if self.b.shape != (self.W.shape[1],):
                raise ShapeError(f"bias shape {self.b.shape} does not match W {self.W.shape}")

    @property
    def in_dim(self):
        return self.W.shape[0]

    @property
    def out_dim(self):
        return self.W.shape[1]


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    epsilon: float = BN_EPSILON

    @classmethod
    def init(cls, width, momentum=BN_MOMENTUM, epsilon=BN_EPSILON):
        return cls(
            gamma=np.ones(width),
            beta=np.zeros(width),
            running_mean=np.zeros(width),
            running_var=np.ones(width),
            momentum=momentum,
            epsilon=epsilon,
        )

    def __post_init__(self):
        for name in ("gamma", "beta", "running_mean", "running_var"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=DTYPE))
        w = self.gamma.shape
        if len(w) != 1 or any(getattr(self, n).shape != w for n in ("beta", "running_mean", "running_var")):
            raise ShapeError("gamma, beta and running statistics must be vectors of equal length")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"BN momentum must lie in (0, 1), got {self.momentum}")
        if self.epsilon <= 0:
            raise ValueError(f"BN epsilon must be positive, got {self.epsilon}")

    @property
    def width(self):
        return self.gamma.shape[0]


@dataclass
class LayerParams:
    """One Dot-BN-ReLU layer (the dense part carries no bias)."""

    dense: DenseParams
    bn: BatchNormParams


@dataclass
class BlockParams:
    layer1: LayerParams
    layer2: LayerParams

    @property
    def width(self):
        return self.layer1.dense.in_dim


@dataclass
class GatedBlockParams(BlockParams):
    # 0-d array so the optimizer can update it in place
    k: np.ndarray = field(default_factory=lambda: np.array(1.0))

    def __post_init__(self):
        self.k = np.array(self.k, dtype=DTYPE)
        if self.k.shape != ():
            raise ShapeError(f"k must be a scalar, got shape {self.k.shape}")


# --------------------------------------------------------------------------
# gate


def gate(k):
    return max(float(k), 0.0)


def gate_grad(k):
    return 1.0 if float(k) > 0.0 else 0.0


# --------------------------------------------------------------------------
# dense


@dataclass
class DenseCache:
    x: np.ndarray
    params: DenseParams
    out_shape: tuple


def dense_forward(x, p):
    if x.ndim != 2 or x.shape[1] != p.in_dim:
        raise ShapeError(f"input shape {x.shape} does not fit weights {p.W.shape}")
    y = x @ p.W
    if p.b is not None:
        y += p.b
    return y, DenseCache(x, p, y.shape)


def dense_backward(grad_out, cache):
    _check_cache(cache, DenseCache, grad_out)
    p = cache.params
    grad_x = grad_out @ p.W.T
    grad_W = cache.x.T @ grad_out
    grad_b = grad_out.sum(axis=0) if p.b is not None else None
    return grad_x, grad_W, grad_b


# --------------------------------------------------------------------------
# batch normalization


@dataclass
class BNCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    params: BatchNormParams
    mode: str
    out_shape: tuple


def bn_forward(x, p, mode):
    _check_mode(mode)
    if x.ndim != 2 or x.shape[1] != p.width:
        raise ShapeError(f"input shape {x.shape} does not fit BN width {p.width}")
    if mode == TRAIN:
        n = x.shape[0]
        if n < 2:
            raise ValueError(f"train-mode batch normalization needs a batch of at least 2, got {n}")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        m = p.momentum
        p.running_mean *= m
        p.running_mean += (1.0 - m) * mean
        p.running_var *= m
        p.running_var += (1.0 - m) * var
    else:
        mean = p.running_mean
        var = p.running_var
    inv_std = 1.0 / np.sqrt(var + p.epsilon)
    xhat = (x - mean) * inv_std
    y = xhat * p.gamma + p.beta
    return y, BNCache(xhat, inv_std, p, mode, y.shape)


def bn_backward(grad_out, cache):
    _check_cache(cache, BNCache, grad_out)
    if cache.mode != TRAIN:
        raise CacheError("bn_backward needs a cache from a train-mode forward")
    xhat = cache.xhat
    n = xhat.shape[0]
    grad_beta = grad_out.sum(axis=0)
    grad_gamma = (grad_out * xhat).sum(axis=0)
    dxhat = grad_out * cache.params.gamma
    grad_x = (cache.inv_std / n) * (
        n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
    )
    return grad_x, grad_gamma, grad_beta


# --------------------------------------------------------------------------
# relu


@dataclass
class ReluCache:
    mask: np.ndarray
    out_shape: tuple


def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, 0.0), ReluCache(mask, x.shape)


def relu_backward(grad_out, cache):
    _check_cache(cache, ReluCache, grad_out)
    return np.where(cache.mask, grad_out, 0.0)


# --------------------------------------------------------------------------
# Dot-BN-ReLU layer


@dataclass
class LayerCache:
    dense: DenseCache
    bn: BNCache
    relu: ReluCache
    out_shape: tuple


def layer_forward(x, p, mode):
    h, c_dense = dense_forward(x, p.dense)
    h, c_bn = bn_forward(h, p.bn, mode)
    y, c_relu = relu_forward(h)
    return y, LayerCache(c_dense, c_bn, c_relu, y.shape)


def layer_backward(grad_out, cache):
    """Returns ``grad_x`` and a dict with keys ``W``, ``gamma``, ``beta``."""
    _check_cache(cache, LayerCache, grad_out)
    g = relu_backward(grad_out, cache.relu)
    g, grad_gamma, grad_beta = bn_backward(g, cache.bn)
    grad_x, grad_W, _ = dense_backward(g, cache.dense)
    return grad_x, {"W": grad_W, "gamma": grad_gamma, "beta": grad_beta}


# --------------------------------------------------------------------------
# residual and gated blocks


@dataclass
class ResidualCache:
    layer1: LayerCache
    layer2: LayerCache
    out_shape: tuple


def residual_fn_forward(x, p, mode):
    """The residual branch alone, f_r(x): two Dot-BN-ReLU layers."""
    h, c1 = layer_forward(x, p.layer1, mode)
    fr, c2 = layer_forward(h, p.layer2, mode)
    return fr, ResidualCache(c1, c2, fr.shape)


def residual_fn_backward(grad_out, cache):
    _check_cache(cache, ResidualCache, grad_out)
    g, grads2 = layer_backward(grad_out, cache.layer2)
    grad_x, grads1 = layer_backward(g, cache.layer1)
    grads = {f"layer1.{k}": v for k, v in grads1.items()}
    grads.update({f"layer2.{k}": v for k, v in grads2.items()})
    return grad_x, grads


def _check_width(x, p):
    if x.ndim != 2 or x.shape[1] != p.width:
        raise ShapeError(f"input shape {x.shape} does not fit block width {p.width}")


def residual_block_forward(x, p, mode):
    _check_width(x, p)
    fr, cache = residual_fn_forward(x, p, mode)
    return fr + x, cache


def residual_block_backward(grad_out, cache):
    grad_fr_x, grads = residual_fn_backward(grad_out, cache)
    return grad_fr_x + grad_out, grads


@dataclass
class GatedCache:
    residual: ResidualCache
    fr: np.ndarray
    g: float
    k: float
    params: GatedBlockParams
    out_shape: tuple


def gated_block_forward(x, p, mode):
    _check_width(x, p)
    fr, res_cache = residual_fn_forward(x, p, mode)
    k = float(p.k)
    g = gate(k)
    # a closed gate must hand back x untouched, not x + 0 * f_r(x)
    u = fr * g + x if g != 0.0 else x.copy()
    return u, GatedCache(res_cache, fr, g, k, p, u.shape)


def gated_block_backward(grad_out, cache):
    """Returns ``(grad_x, inner_grads, grad_k)``."""
    _check_cache(cache, GatedCache, grad_out)
    grad_k = gate_grad(cache.k) * float(np.sum(grad_out * cache.fr))
    if cache.g == 0.0:
        grads = _zero_block_grads(cache.params)
        return grad_out.copy(), grads, grad_k
    grad_fr_x, grads = residual_fn_backward(grad_out * cache.g, cache.residual)
    return grad_fr_x + grad_out, grads, grad_k


def _zero_block_grads(p):
    grads = {}
    for name in ("layer1", "layer2"):
        lp = getattr(p, name)
        grads[f"{name}.W"] = np.zeros_like(lp.dense.W)
        grads[f"{name}.gamma"] = np.zeros_like(lp.bn.gamma)
        grads[f"{name}.beta"] = np.zeros_like(lp.bn.beta)
    return grads


# --------------------------------------------------------------------------
# softmax + cross-entropy


@dataclass
class SoftmaxCache:
    probs: np.ndarray
    labels: np.ndarray


def softmax_xent_forward(logits, labels):
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integer class indices, got dtype {labels.dtype}")
    if n and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    loss = -log_probs[np.arange(n), labels].mean()
    return float(loss), SoftmaxCache(np.exp(log_probs), labels)


def softmax_xent_backward(cache):
    n = cache.probs.shape[0]
    grad = cache.probs.copy()
    grad[np.arange(n), cache.labels] -= 1.0
    return grad / n
