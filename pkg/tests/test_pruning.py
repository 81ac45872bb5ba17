import numpy as np
import pytest

from gresnet import layers as L
from gresnet import model as M
from gresnet import pruning as P
from gresnet.data import Dataset


def _net(family="gresnet", depth=8, seed=0):
    net = M.build(M.NetworkConfig(family, depth, seed=seed))
    rng = np.random.default_rng(seed)
    for name, arr in M.state_arrays(net).items():
        if name.endswith("beta"):
            arr[...] = rng.normal(0, 0.3, arr.shape)
    return net


def _ds(net, n=200, seed=0):
    x = np.random.default_rng(seed).random((n, 784))
    return Dataset(x, M.predict(net, x), split="test")


def _logits(net, x):
    return M.forward(net, x, L.INFER)[0]


def test_remove_closed_gate_block_keeps_logits():
    net = _net()
    M.set_k(net, [1.0, -0.5, 2.0, 0.3])
    x = np.random.default_rng(1).random((10, 784))
    assert _logits(P.remove_block(net, 2), x).tobytes() == _logits(net, x).tobytes()


def test_remove_every_block_gives_end_layers():
    net = _net("resnet")
    pruned = net
    for i in range(1, net.num_blocks + 1):
        pruned = P.remove_block(pruned, i)
    bare = M.build(M.NetworkConfig("resnet", 0, seed=0))
    x = np.random.default_rng(2).random((10, 784))
    assert _logits(pruned, x).tobytes() == _logits(bare, x).tobytes()


def test_remove_block_leaves_original():
    net = _net()
    pruned = P.remove_block(net, 3)
    assert all(b.active for b in net.blocks)
    assert [b.active for b in pruned.blocks] == [True, True, False, True]


def test_remove_block_order_independent():
    net = _net()
    a = P.remove_block(P.remove_block(net, 1), 4)
    b = P.remove_block(P.remove_block(net, 4), 1)
    x = np.random.default_rng(3).random((10, 784))
    assert [blk.active for blk in a.blocks] == [blk.active for blk in b.blocks]
    assert _logits(a, x).tobytes() == _logits(b, x).tobytes()


def test_remove_block_errors():
    with pytest.raises(IndexError):
        P.remove_block(_net(), 0)
    with pytest.raises(IndexError):
        P.remove_block(_net(), 5)
    with pytest.raises(ValueError):
        P.remove_block(M.build(M.NetworkConfig("classical", 2)), 1)


def test_greedy_removes_negative_k_first():
    net = _net()
    M.set_k(net, [1.0, 2.0, -0.1, 0.5])
    rep = P.prune_curve(net, _ds(net), P.GREEDY_K)
    assert rep.removal_order[0] == 3


def test_greedy_order_is_stable_ascending_k():
    net = _net("gresnet", 12)
    ks = [0.5, 0.2, 0.5, 0.2, 1.0, 0.2]
    M.set_k(net, ks)
    order = P.greedy_order(net)
    assert order == [2, 4, 6, 1, 3, 5]
    assert [ks[i - 1] for i in order] == sorted(ks)


def test_curve_shape_and_start_point():
    net = _net()
    ds = _ds(net)
    rep = P.prune_curve(net, ds, P.RANDOM, seed=5)
    assert [n for n, _ in rep.accuracy_curve] == list(range(net.num_blocks + 1))
    assert rep.accuracy_curve[0][1] == M.accuracy(net, ds.images, ds.labels)
    assert sorted(rep.removal_order) == list(range(1, net.num_blocks + 1))
    assert all(b.active for b in net.blocks)


def test_random_curve_deterministic():
    net = _net()
    ds = _ds(net)
    a = P.prune_curve(net, ds, P.RANDOM, seed=5)
    b = P.prune_curve(net, ds, P.RANDOM, seed=5)
    assert a.to_dict() == b.to_dict()


def test_all_closed_gates_give_flat_curve():
    net = _net()
    M.set_k(net, [-1.0, 0.0, -3.0, -0.2])
    ds = _ds(net)
    for rep in (P.prune_curve(net, ds, P.GREEDY_K), P.prune_curve(net, ds, P.RANDOM, seed=1)):
        assert len(set(rep.accuracies())) == 1


def test_greedy_on_resnet_rejected():
    net = _net("resnet")
    with pytest.raises(ValueError, match="k"):
        P.prune_curve(net, _ds(net), P.GREEDY_K)


def test_random_curves_mean():
    net = _net()
    ds = _ds(net)
    reports, mean = P.random_curves(net, ds, [0, 1, 2])
    assert len(reports) == 3
    expected = np.mean([r.accuracies() for r in reports], axis=0)
    np.testing.assert_allclose([a for _, a in mean], expected)


def test_auc_trapezoid():
    assert P.auc([(0, 100.0), (1, 80.0), (2, 60.0)]) == pytest.approx(160.0)
