import struct

import numpy as np
import pytest

from gresnet import layers as L
from gresnet import model as M
from gresnet.tensor import Rng
from oracles import central_diff, rel_err


def _x(n=6, seed=0):
    return np.random.default_rng(seed).random((n, 784))


def _trained_ish(net, seed=1):
    """Perturb BN stats and gates so tests do not only see the fresh init."""
    rng = np.random.default_rng(seed)
    for i, arr in M.state_arrays(net).items():
        if i.endswith(("gamma", "running_var")):
            arr[...] = rng.uniform(0.5, 1.5, arr.shape)
        elif i.endswith(("beta", "running_mean", ".b")):
            arr[...] = rng.normal(0, 0.3, arr.shape)
    return net


def test_build_gresnet_blocks_start_at_k1():
    net = M.build(M.NetworkConfig("gresnet", 10))
    assert net.num_blocks == 5
    assert all(b.kind == M.GATED and float(b.params.k) == 1.0 for b in net.blocks)
    assert net.input_layer.W.shape == (784, 50) and net.input_layer.b is not None
    assert net.output_layer.W.shape == (50, 10)
    assert M.mean_k(net) == 1.0


def test_build_classical_structure():
    net = M.build(M.NetworkConfig("classical", 2))
    assert [b.kind for b in net.blocks] == [M.PLAIN, M.PLAIN]
    assert net.blocks[0].params.dense.b is None


def test_build_deterministic():
    a = M.state_arrays(M.build(M.NetworkConfig("gresnet", 6, seed=9)))
    b = M.state_arrays(M.build(M.NetworkConfig("gresnet", 6, seed=9)))
    c = M.state_arrays(M.build(M.NetworkConfig("gresnet", 6, seed=10)))
    assert list(a) == list(b)
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    assert a["input.W"].tobytes() != c["input.W"].tobytes()


def test_he_uniform_bounds():
    net = M.build(M.NetworkConfig("resnet", 2, seed=3))
    assert np.abs(net.input_layer.W).max() <= np.sqrt(6 / 784)
    assert np.abs(net.blocks[0].params.layer1.dense.W).max() <= np.sqrt(6 / 50)
    np.testing.assert_array_equal(net.input_layer.b, 0.0)


@pytest.mark.parametrize("family", ["resnet", "gresnet"])
def test_odd_depth_rejected(family):
    with pytest.raises(ValueError, match="even"):
        M.NetworkConfig(family, 3)


@pytest.mark.parametrize("mode", [L.TRAIN, L.INFER])
def test_closed_gates_collapse_to_end_layers(mode):
    net = _trained_ish(M.build(M.NetworkConfig("gresnet", 8, seed=4)))
    M.set_k(net, -1.0)
    bare = M.build(M.NetworkConfig("gresnet", 0, seed=4))
    bare.input_layer.b[:] = net.input_layer.b
    bare.output_layer.b[:] = net.output_layer.b
    x = _x()
    a, _ = M.forward(net, x, mode)
    b, _ = M.forward(bare, x, mode)
    assert a.tobytes() == b.tobytes()


def test_resnet_and_gresnet_k1_identical():
    x = _x()
    for mode in (L.TRAIN, L.INFER):
        r, _ = M.forward(M.build(M.NetworkConfig("resnet", 6, seed=2)), x, mode)
        g, _ = M.forward(M.build(M.NetworkConfig("gresnet", 6, seed=2)), x, mode)
        assert r.tobytes() == g.tobytes()


def _kink_distance(cache):
    dist = np.inf
    for c in cache.blocks:
        for lc in (c.residual.layer1, c.residual.layer2):
            z = lc.bn.xhat * lc.bn.params.gamma + lc.bn.params.beta
            dist = min(dist, np.abs(z).min())
    return dist


def _gradcheck_setup():
    """First seeded 3-block gresnet whose ReLU inputs all stay 1e-3 away from 0."""
    for seed in range(100):
        net = _trained_ish(M.build(M.NetworkConfig("gresnet", 6, seed=seed)), seed)
        M.set_k(net, [0.7, 1.4, 0.9])
        x = _x(4, seed=seed)
        _, cache = M.forward(net, x, L.TRAIN)
        if _kink_distance(cache) > 1e-3:
            return net, x, cache
    raise RuntimeError("no kink-free configuration found")


def test_end_to_end_gradient_matches_finite_differences():
    net, x, cache = _gradcheck_setup()
    labels = np.array([1, 7, 3, 3])
    grads = M.backward(net, cache, labels)
    params = M.parameters(net)
    assert set(grads) == set(params)

    def loss():
        logits, _ = M.forward(net, x, L.TRAIN)
        return L.softmax_xent_forward(logits, labels)[0]

    rng = np.random.default_rng(0)
    names = list(params)
    analytic, numeric = [], []
    chosen = [f"blocks.{i}.k" for i in (1, 2, 3)]
    chosen += [names[i] for i in rng.integers(0, len(names), 47)]
    for name in chosen:
        arr = params[name]
        flat = int(rng.integers(0, arr.size))
        analytic.append(grads[name].reshape(-1)[flat])
        numeric.append(central_diff(loss, arr, 1e-5, index=[flat])[0])
    assert len(analytic) == 50
    assert rel_err(analytic, numeric) <= 1e-4


def test_backward_includes_every_k():
    net = M.build(M.NetworkConfig("gresnet", 4))
    _, cache = M.forward(net, _x(4), L.TRAIN)
    grads = M.backward(net, cache, np.array([0, 1, 2, 3]))
    assert {"blocks.1.k", "blocks.2.k"} <= set(grads)
    assert grads["blocks.1.k"].shape == ()


def test_predict_ties_to_lowest_index():
    net = M.build(M.NetworkConfig("classical", 1))
    net.output_layer.W[:] = 0.0
    net.output_layer.b[:] = 0.0
    net.output_layer.b[[3, 6]] = 1.0
    np.testing.assert_array_equal(M.predict(net, _x(5)), 3)


def test_predict_invariant_to_constant_shift():
    net = _trained_ish(M.build(M.NetworkConfig("gresnet", 2, seed=8)))
    x = _x(50)
    before = M.predict(net, x)
    net.output_layer.b += 12.5
    np.testing.assert_array_equal(M.predict(net, x), before)


def test_forward_shape_error():
    with pytest.raises(ValueError):
        M.forward(M.build(M.NetworkConfig("classical", 1)), np.zeros((2, 100)))


# -- identity insertion -----------------------------------------------------


def test_identity_insertion_preserves_logits():
    net = _trained_ish(M.build(M.NetworkConfig("classical", 3, seed=6)))
    x = _x(20)
    before, _ = M.forward(net, x, L.INFER)
    once = M.insert_identity_layer(net)
    twice = M.insert_identity_layer(once)
    assert once.num_blocks == 4 and twice.num_blocks == 5
    for deeper in (once, twice):
        after, _ = M.forward(deeper, x, L.INFER)
        assert after.tobytes() == before.tobytes()


def test_identity_insertion_zero_weights_differs():
    net = M.build(M.NetworkConfig("classical", 2, seed=6))
    x = _x(8)
    before, _ = M.forward(net, x, L.INFER)
    after, _ = M.forward(M.insert_identity_layer(net, W=np.zeros((50, 50))), x, L.INFER)
    assert not np.allclose(before, after)


def test_identity_insertion_only_for_classical():
    with pytest.raises(ValueError):
        M.insert_identity_layer(M.build(M.NetworkConfig("resnet", 2)))


# -- init distance ----------------------------------------------------------


def test_init_distance_uniform_moment():
    r = M.init_distance_report("uniform:0.3", 40, 1000, Rng(0))
    assert abs(r["per_component_var"] / (0.3**2 / 3) - 1) <= 0.03


@pytest.mark.parametrize("scheme", ["he_uniform", "glorot_uniform"])
def test_init_distance_grows_linearly(scheme):
    small = M.init_distance_report(scheme, 50, 1000, Rng(1))
    large = M.init_distance_report(scheme, 100, 1000, Rng(2))
    assert abs(large["total_abs_distance"] / small["total_abs_distance"] - 2) <= 0.2
    assert abs(small["per_component_var"] / small["analytic_var"] - 1) <= 0.03


def test_init_distance_zero_scheme():
    r = M.init_distance_report("zero", 30, 1000)
    assert r["per_component_var"] == 0.0 and r["total_abs_distance"] == 0.0
    r = M.init_distance_report("uniform:0", 30, 1000)
    assert r["total_abs_distance"] == 0.0


def test_init_distance_needs_trials():
    with pytest.raises(ValueError):
        M.init_distance_report("he_uniform", 10, 999)


# -- gates ------------------------------------------------------------------


def test_k_profile_numbering():
    net = M.build(M.NetworkConfig("gresnet", 6))
    M.set_k(net, [0.5, -1.0, 3.0])
    assert M.k_profile(net) == [(1, 0.5), (2, -1.0), (3, 3.0)]
    assert M.mean_k(net) == pytest.approx(2.5 / 3)


def test_k_requires_gresnet():
    with pytest.raises(ValueError):
        M.mean_k(M.build(M.NetworkConfig("resnet", 2)))


# -- checkpoints ------------------------------------------------------------


def test_checkpoint_round_trip_bitwise(tmp_path):
    net = _trained_ish(M.build(M.NetworkConfig("gresnet", 4, seed=3)))
    M.set_k(net, [0.25, -2.0])
    net.blocks[1].active = False
    path = tmp_path / "net.gresnet"
    M.save_checkpoint(net, path, optimizer={"lr": 0.002})
    loaded, header = M.load_checkpoint(path)
    assert header["config"] == net.config.to_dict()
    assert header["optimizer"] == {"lr": 0.002}
    assert [b.active for b in loaded.blocks] == [True, False]
    a, b = M.state_arrays(net), M.state_arrays(loaded)
    assert list(a) == list(b)
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    assert M.checkpoint_bytes(loaded, {"lr": 0.002}) == path.read_bytes()


def test_checkpoint_bad_magic_and_version(tmp_path):
    raw = M.checkpoint_bytes(M.build(M.NetworkConfig("classical", 1)))
    with pytest.raises(M.CheckpointError, match="magic"):
        M.parse_checkpoint(b"X" + raw[1:])
    n = len(M.CHECKPOINT_MAGIC)
    bumped = raw[:n] + struct.pack("<I", 99) + raw[n + 4:]
    with pytest.raises(M.CheckpointError, match="version"):
        M.parse_checkpoint(bumped)
    with pytest.raises(M.CheckpointError, match="truncated"):
        M.parse_checkpoint(raw[:-8])
