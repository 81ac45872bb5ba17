"""Fully-connected MNIST networks: classical, ResNet and gated ResNet.

All three share the same end layers: a bare affine input projection
(784 -> width, with bias) and an affine output layer (width -> 10, with bias)
feeding a softmax. Only the ``depth`` middle layers differ:

* ``classical``: ``depth`` Dot-BN-ReLU layers,
* ``resnet``: ``depth // 2`` blocks ``u = f_r(x) + x``,
* ``gresnet``: ``depth // 2`` blocks ``u = relu(k) * f_r(x) + x``, k starting at 1.
"""

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import layers as L
from .tensor import DTYPE, RNG_ALGORITHM, Rng, ShapeError

FAMILIES = ("classical", "resnet", "gresnet")
INIT_SCHEME = "he_uniform"
FIRST_LAYER = "affine"

PLAIN = "plain"
RESIDUAL = "residual"
GATED = "gated"
IDENTITY_RELU = "identity_relu"

# independent Rng sub-streams per network part, so every part's init depends
# only on (seed, part) and not on how many parts came before it
_INPUT_STREAM = 1
_OUTPUT_STREAM = 2
_BLOCK_STREAM = 1000


@dataclass(frozen=True)
class NetworkConfig:
    family: str
    depth: int
    width: int = 50
    in_dim: int = 784
    num_classes: int = 10
    seed: int = 0
    bn_momentum: float = L.BN_MOMENTUM
    bn_epsilon: float = L.BN_EPSILON

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.depth < 0:
            raise ValueError(f"depth must be non-negative, got {self.depth}")
        if self.family != "classical" and self.depth % 2:
            raise ValueError(f"{self.family} needs an even depth (two layers per block), got {self.depth}")
        if min(self.width, self.in_dim, self.num_classes) < 1:
            raise ValueError("width, in_dim and num_classes must be positive")

    @property
    def num_blocks(self):
        return self.depth if self.family == "classical" else self.depth // 2

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class Block:
    kind: str
    params: object
    active: bool = True


@dataclass
class Network:
    config: NetworkConfig
    input_layer: L.DenseParams
    blocks: list
    output_layer: L.DenseParams
    init_scheme: str = INIT_SCHEME

    @property
    def family(self):
        return self.config.family

    @property
    def num_blocks(self):
        return len(self.blocks)


# --------------------------------------------------------------------------
# construction


def he_uniform(rng, fan_in, fan_out):
    a = np.sqrt(6.0 / fan_in)
    return rng.uniform(fan_in, fan_out, -a, a)


def _layer(rng, cfg):
    return L.LayerParams(
        L.DenseParams(he_uniform(rng, cfg.width, cfg.width)),
        L.BatchNormParams.init(cfg.width, cfg.bn_momentum, cfg.bn_epsilon),
    )


def build(config):
    cfg = config
    r_in = Rng(cfg.seed, _INPUT_STREAM)
    input_layer = L.DenseParams(he_uniform(r_in, cfg.in_dim, cfg.width), np.zeros(cfg.width))
    blocks = []
    for i in range(cfg.num_blocks):
        rng = Rng(cfg.seed, _BLOCK_STREAM + i)
        if cfg.family == "classical":
            blocks.append(Block(PLAIN, _layer(rng, cfg)))
            continue
        l1, l2 = _layer(rng, cfg), _layer(rng, cfg)
        if cfg.family == "resnet":
            blocks.append(Block(RESIDUAL, L.BlockParams(l1, l2)))
        else:
            blocks.append(Block(GATED, L.GatedBlockParams(l1, l2, np.array(1.0))))
    r_out = Rng(cfg.seed, _OUTPUT_STREAM)
    output_layer = L.DenseParams(
        he_uniform(r_out, cfg.width, cfg.num_classes), np.zeros(cfg.num_classes)
    )
    return Network(cfg, input_layer, blocks, output_layer)


# --------------------------------------------------------------------------
# parameter enumeration


def _layer_arrays(prefix, lp, learnable):
    if learnable:
        return {f"{prefix}W": lp.dense.W, f"{prefix}gamma": lp.bn.gamma, f"{prefix}beta": lp.bn.beta}
    return {f"{prefix}running_mean": lp.bn.running_mean, f"{prefix}running_var": lp.bn.running_var}


def _block_arrays(block, learnable):
    p = block.params
    if block.kind == PLAIN:
        return _layer_arrays("", p, learnable)
    if block.kind == IDENTITY_RELU:
        return {"W": p.W} if learnable else {}
    out = _layer_arrays("layer1.", p.layer1, learnable)
    out.update(_layer_arrays("layer2.", p.layer2, learnable))
    if block.kind == GATED and learnable:
        out["k"] = p.k
    return out


def parameters(net):
    """Learnable arrays by name, in declaration order. Blocks are numbered from 1."""
    out = {"input.W": net.input_layer.W, "input.b": net.input_layer.b}
    for i, block in enumerate(net.blocks, start=1):
        for name, arr in _block_arrays(block, True).items():
            out[f"blocks.{i}.{name}"] = arr
    out["output.W"] = net.output_layer.W
    out["output.b"] = net.output_layer.b
    return out


def state_arrays(net):
    """Every array a checkpoint must hold: parameters plus BN running statistics."""
    out = {"input.W": net.input_layer.W, "input.b": net.input_layer.b}
    for i, block in enumerate(net.blocks, start=1):
        merged = _block_arrays(block, True)
        merged.update(_block_arrays(block, False))
        for name, arr in merged.items():
            out[f"blocks.{i}.{name}"] = arr
    out["output.W"] = net.output_layer.W
    out["output.b"] = net.output_layer.b
    return out


def gate_names(net):
    return [f"blocks.{i}.k" for i, b in enumerate(net.blocks, start=1) if b.kind == GATED]


def copy_network(net):
    return copy_with_arrays(net, {k: v.copy() for k, v in state_arrays(net).items()})


def copy_with_arrays(net, arrays):
    clone = _skeleton(net.config, [(b.kind, b.active) for b in net.blocks], net.init_scheme)
    for name, arr in state_arrays(clone).items():
        arr[...] = arrays[name]
    return clone


# --------------------------------------------------------------------------
# forward / backward


@dataclass
class NetCache:
    input: L.DenseCache
    blocks: list
    output: L.DenseCache
    logits: np.ndarray


def _block_forward(block, h, mode):
    p = block.params
    if block.kind == PLAIN:
        return L.layer_forward(h, p, mode)
    if block.kind == RESIDUAL:
        return L.residual_block_forward(h, p, mode)
    if block.kind == GATED:
        return L.gated_block_forward(h, p, mode)
    if block.kind == IDENTITY_RELU:
        z, c_dense = L.dense_forward(h, p)
        y, c_relu = L.relu_forward(z)
        return y, (c_dense, c_relu)
    raise ValueError(f"unknown block kind {block.kind!r}")


def _block_backward(block, grad, cache):
    if block.kind == PLAIN:
        return L.layer_backward(grad, cache)
    if block.kind == RESIDUAL:
        return L.residual_block_backward(grad, cache)
    if block.kind == GATED:
        grad_x, grads, grad_k = L.gated_block_backward(grad, cache)
        grads["k"] = np.array(grad_k)
        return grad_x, grads
    c_dense, c_relu = cache
    g = L.relu_backward(grad, c_relu)
    grad_x, grad_W, _ = L.dense_backward(g, c_dense)
    return grad_x, {"W": grad_W}


def forward(net, x, mode=L.INFER):
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != 2 or x.shape[1] != net.config.in_dim:
        raise ShapeError(f"expected input of shape (batch, {net.config.in_dim}), got {x.shape}")
    h, c_in = L.dense_forward(x, net.input_layer)
    caches = []
    for block in net.blocks:
        if not block.active:
            caches.append(None)
            continue
        h, c = _block_forward(block, h, mode)
        caches.append(c)
    logits, c_out = L.dense_forward(h, net.output_layer)
    return logits, NetCache(c_in, caches, c_out, logits)


def backward(net, cache, labels):
    """Gradients of the mean cross-entropy for every parameter in :func:`parameters`."""
    _, sm = L.softmax_xent_forward(cache.logits, labels)
    return _backward_from(net, cache, L.softmax_xent_backward(sm))


def _backward_from(net, cache, grad_logits):
    grads = {}
    g, grads["output.W"], grads["output.b"] = L.dense_backward(grad_logits, cache.output)
    for i in range(len(net.blocks), 0, -1):
        block = net.blocks[i - 1]
        c = cache.blocks[i - 1]
        if c is None:
            local = {k: np.zeros_like(v) for k, v in _block_arrays(block, True).items()}
        else:
            g, local = _block_backward(block, g, c)
        for name, arr in local.items():
            grads[f"blocks.{i}.{name}"] = arr
    _, grads["input.W"], grads["input.b"] = L.dense_backward(g, cache.input)
    return grads


def loss_and_grads(net, x, labels, mode=L.TRAIN):
    """One training-mode pass: returns ``(loss, logits, grads)``."""
    logits, cache = forward(net, x, mode)
    loss, sm = L.softmax_xent_forward(logits, labels)
    return loss, logits, _backward_from(net, cache, L.softmax_xent_backward(sm))


def predict(net, x):
    logits, _ = forward(net, x, L.INFER)
    return np.argmax(logits, axis=1)


def accuracy(net, images, labels, batch_size=10000):
    correct = 0
    for start in range(0, len(labels), batch_size):
        pred = predict(net, images[start:start + batch_size])
        correct += int(np.sum(pred == labels[start:start + batch_size]))
    return 100.0 * correct / len(labels)


# --------------------------------------------------------------------------
# identity insertion


def insert_identity_layer(net, W=None):
    """Append a bias-free ReLU layer with identity weights after the last middle layer.

    The result computes the same function as ``net`` because the inserted
    layer sees ReLU outputs, and relu(x @ I) == x for x >= 0. Pass ``W`` to
    insert some other weight matrix instead.
    """
    if net.family != "classical":
        raise ValueError(f"identity insertion is defined for classical networks, got {net.family}")
    width = net.config.width
    W = np.eye(width) if W is None else np.array(W, dtype=DTYPE)
    if W.shape != (width, width):
        raise ShapeError(f"inserted weights must be {width}x{width}, got {W.shape}")
    clone = copy_network(net)
    clone.blocks.append(Block(IDENTITY_RELU, L.DenseParams(W)))
    clone.config = dataclasses.replace(net.config, depth=net.config.depth + 1)
    return clone


# --------------------------------------------------------------------------
# gates


def _require_gated(net):
    if net.family != "gresnet":
        raise ValueError(f"k is only defined for gresnet networks, got {net.family}")


def k_profile(net):
    """``[(block_number, k), ...]`` in network order, block numbers starting at 1."""
    _require_gated(net)
    return [(i, float(b.params.k)) for i, b in enumerate(net.blocks, start=1) if b.kind == GATED]


def mean_k(net):
    profile = k_profile(net)
    if not profile:
        raise ValueError("network has no gated blocks")
    return float(np.mean([k for _, k in profile]))


def set_k(net, values):
    """Set every gate to ``values`` (a scalar or one value per gated block)."""
    gated = [b for b in net.blocks if b.kind == GATED]
    values = np.broadcast_to(np.asarray(values, dtype=DTYPE), (len(gated),))
    for b, v in zip(gated, values):
        b.params.k[...] = v


# --------------------------------------------------------------------------
# initialization distance


def scheme_bound(scheme, n):
    """Half-width ``a`` of the uniform scheme U(-a, a) for fan-in ``n``."""
    if scheme == "he_uniform":
        return np.sqrt(6.0 / n)
    if scheme == "glorot_uniform":
        return np.sqrt(6.0 / (n + n))
    if scheme == "zero":
        return 0.0
    if scheme.startswith("uniform:"):
        return float(scheme.split(":", 1)[1])
    raise ValueError(f"unknown init scheme {scheme!r}")


def init_distance_report(scheme, n, trials=1000, rng=None):
    """Monte Carlo distance between freshly initialized n x n weights and the origin.

    The component-wise distance is E[(W - 0)^2] = Var[W]. ``total_abs_distance``
    sums that distance over all n^2 components, so for variance ~ 1/n it grows
    like n. The L1 and Euclidean norms of W are reported alongside.
    """
    if trials < 1000:
        raise ValueError(f"need at least 1000 trials, got {trials}")
    a = scheme_bound(scheme, n)
    rng = rng if rng is not None else Rng(0)
    sq = l1 = l2 = 0.0
    for _ in range(trials):
        W = rng.uniform(n, n, -a, a) if a > 0 else np.zeros((n, n))
        s = float(np.sum(W * W))
        sq += s
        l1 += float(np.sum(np.abs(W)))
        l2 += np.sqrt(s)
    return {
        "scheme": scheme,
        "n": n,
        "trials": trials,
        "analytic_var": a * a / 3.0,
        "per_component_var": sq / (trials * n * n),
        "total_abs_distance": sq / trials,
        "l1_norm": l1 / trials,
        "euclidean_norm": l2 / trials,
    }


# --------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"GRESNET\x00"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _skeleton(config, kinds, init_scheme=INIT_SCHEME):
    w = config.width

    def layer():
        return L.LayerParams(
            L.DenseParams(np.zeros((w, w))),
            L.BatchNormParams.init(w, config.bn_momentum, config.bn_epsilon),
        )

    blocks = []
    for kind, active in kinds:
        if kind == PLAIN:
            params = layer()
        elif kind == RESIDUAL:
            params = L.BlockParams(layer(), layer())
        elif kind == GATED:
            params = L.GatedBlockParams(layer(), layer(), np.array(0.0))
        elif kind == IDENTITY_RELU:
            params = L.DenseParams(np.zeros((w, w)))
        else:
            raise CheckpointError(f"unknown block kind {kind!r}")
        blocks.append(Block(kind, params, bool(active)))
    return Network(
        config,
        L.DenseParams(np.zeros((config.in_dim, w)), np.zeros(w)),
        blocks,
        L.DenseParams(np.zeros((w, config.num_classes)), np.zeros(config.num_classes)),
        init_scheme,
    )


def checkpoint_bytes(net, optimizer=None, extra=None):
    arrays = state_arrays(net)
    header = {
        "format": "gresnet-checkpoint",
        "format_version": CHECKPOINT_VERSION,
        "config": net.config.to_dict(),
        "init_scheme": net.init_scheme,
        "first_layer": FIRST_LAYER,
        "rng": RNG_ALGORITHM,
        "optimizer": optimizer or {},
        "blocks": [{"kind": b.kind, "active": b.active} for b in net.blocks],
        "arrays": [{"name": k, "shape": list(v.shape), "dtype": "<f8"} for k, v in arrays.items()],
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<IQ", CHECKPOINT_VERSION, len(head)), head]
    parts += [np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values()]
    return b"".join(parts)


def save_checkpoint(net, path, optimizer=None, extra=None):
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(net, optimizer, extra))


def parse_checkpoint(raw):
    """Returns ``(network, header)``."""
    n_magic = len(CHECKPOINT_MAGIC)
    if raw[:n_magic] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a gresnet checkpoint (bad magic)")
    try:
        version, head_len = struct.unpack("<IQ", raw[n_magic:n_magic + 12])
    except struct.error:
        raise CheckpointError("truncated checkpoint header") from None
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    start = n_magic + 12
    try:
        header = json.loads(raw[start:start + head_len].decode())
        config = NetworkConfig(**header["config"])
        kinds = [(b["kind"], b["active"]) for b in header["blocks"]]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    net = _skeleton(config, kinds, header.get("init_scheme", INIT_SCHEME))
    targets = state_arrays(net)
    offset = start + head_len
    for entry in header["arrays"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in targets or targets[name].shape != shape:
            raise CheckpointError(f"checkpoint array {name} {shape} does not fit the network")
        size = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + size > len(raw):
            raise CheckpointError(f"checkpoint truncated inside array {name}")
        targets[name][...] = np.frombuffer(raw, dtype="<f8", count=size // 8, offset=offset).reshape(shape)
        offset += size
    if offset != len(raw):
        raise CheckpointError(f"{len(raw) - offset} unexpected trailing bytes in checkpoint")
    missing = set(targets) - {e["name"] for e in header["arrays"]}
    if missing:
        raise CheckpointError(f"checkpoint lacks arrays {sorted(missing)}")
    return net, header


def load_checkpoint(path):
    with open(path, "rb") as f:
        return parse_checkpoint(f.read())
