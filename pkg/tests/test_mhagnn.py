import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magnet import tensor as T
from magnet.cparse import lower
from magnet.embed import build_vocab, hashed_table
from magnet.metapath import ALL_METAPATH_TYPES, annotate, apply_filter
from magnet.mhagnn import (MHAGNN, ModelConfig, bigru_encode, canonical_order, collate,
                           edge_attention, featurize, forward, granular_linear, init_params,
                           layer_forward, node_attention, project, readout)

from golden_graphs import GOLDEN
from helpers import random_graph


@pytest.fixture(autouse=True)
def f64():
    with T.precision("f64"):
        yield


CFG = ModelConfig(precision="f64")


def _t(x):
    return T.Tensor(np.asarray(x, dtype=np.float64))


def test_projection_zero_and_identity():
    p = init_params(CFG, 0)
    rng = np.random.default_rng(0)
    h = _t(rng.standard_normal((5, 64)))
    gran = np.array([0, 1, 2, 0, 1])
    for proj in ("K", "Q", "V"):
        for g in ("St", "Ex", "Sy"):
            p[f"layer0.{proj}.{g}.W"].data[:] = 0
            p[f"layer0.{proj}.{g}.b"].data[:] = 0
    assert all(np.all(x.data == 0) for x in project(p, 0, h, gran))
    for g in ("St", "Ex", "Sy"):
        p[f"layer0.K.{g}.W"].data[:] = np.eye(64)
    np.testing.assert_array_equal(project(p, 0, h, gran)[0].data, h.data)
    with pytest.raises(T.ShapeError):
        project(p, 0, _t(np.zeros((2, 10))), np.array([0, 1]))


def test_projection_uses_row_granularity():
    p = init_params(CFG, 3)
    rng = np.random.default_rng(1)
    h = rng.standard_normal((6, 64))
    gran = np.array([2, 0, 1, 1, 0, 2])
    out = granular_linear(p, "layer1.V", _t(h), gran).data
    for i, g in enumerate(gran):
        name = ("St", "Ex", "Sy")[g]
        want = h[i] @ p[f"layer1.V.{name}.W"].data + p[f"layer1.V.{name}.b"].data
        np.testing.assert_allclose(out[i], want, atol=1e-12)


def test_node_attention_cases():
    k = _t(np.random.default_rng(0).standard_normal((4, 16)))
    q = _t(np.random.default_rng(1).standard_normal((4, 16)))
    assert np.allclose(node_attention(_t(np.zeros(32)), k, q).data, 0.5)
    out = node_attention(_t(np.random.default_rng(2).standard_normal(32)), k, q).data
    assert np.all((out > 0) & (out < 1))
    w = np.zeros(32)
    w[0] = 1
    e1 = np.zeros(16)
    e1[0] = 1
    val = node_attention(_t(w), _t(e1), _t(np.random.default_rng(3).standard_normal(16))).item()
    assert val == pytest.approx(0.7310585786, abs=1e-9)


def test_edge_attention_cases():
    e1 = np.zeros(16)
    e1[0] = 1
    assert edge_attention(_t(e1), _t(np.eye(16)), _t(e1), 1.0, 64, 4).item() == pytest.approx(0.25)
    rng = np.random.default_rng(4)
    k, w, q = rng.standard_normal(16), rng.standard_normal((16, 16)), rng.standard_normal(16)
    assert edge_attention(_t(k), _t(w), _t(q), 0.0, 64, 4).item() == 0.0
    assert edge_attention(_t(k), _t(w), _t(q), 1.7, 64, 4).item() == pytest.approx(
        k @ w @ q * 1.7 / 4)


def test_single_incoming_edge():
    rng = np.random.default_rng(5)
    p = init_params(CFG, 0)
    g = random_graph(rng, n_nodes=3, n_edges=0)
    g.src, g.dst, g.kind = np.array([0]), np.array([1]), np.array([2])
    batch = collate([g])
    h = _t(rng.standard_normal((3, 64)))
    trace = {}
    out = layer_forward(p, 0, CFG, h, batch, trace).data
    np.testing.assert_allclose(trace["attention"][0], 1.0)
    v = project(p, 0, h, batch.gran)[2].data
    np.testing.assert_allclose(out[1], 1 / (1 + np.exp(-v[0])) + h.data[1], atol=1e-12)
    np.testing.assert_array_equal(out[[0, 2]], h.data[[0, 2]])


def _softmax_sums(att, dst, n_nodes):
    sums = np.zeros((n_nodes, att.shape[1]))
    np.add.at(sums, dst, att)
    return sums[np.unique(dst)]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 25), st.booleans(), st.booleans())
def test_attention_normalised(seed, n, edge_att, node_att):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(precision="f64", edge_attention=edge_att, node_attention=node_att)
    batch = collate([random_graph(rng, n_nodes=n), random_graph(rng, n_nodes=4)])
    trace = {}
    forward(init_params(cfg, seed % 1000), cfg, batch, trace)
    for att in trace["attention"]:
        np.testing.assert_allclose(_softmax_sums(att, batch.dst, batch.n_nodes), 1.0, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(4, 20))
def test_isolated_nodes_unchanged(seed, n):
    rng = np.random.default_rng(seed)
    batch = collate([random_graph(rng, n_nodes=n, isolated=2)])
    trace = {}
    forward(init_params(CFG, 1), CFG, batch, trace)
    iso = [n - 2, n - 1]
    for prev, cur in zip(trace["h"], trace["h"][1:]):
        assert np.array_equal(prev[iso], cur[iso])


def test_bigru_length_one_tied_weights():
    p = init_params(CFG, 0)
    for name in ("w_ih", "w_hh", "b_ih", "b_hh"):
        p[f"gru.bwd.{name}"] = p[f"gru.fwd.{name}"]
    g = random_graph(np.random.default_rng(0), n_nodes=3, n_edges=0)
    g.x0, g.gran, g.node_ids = g.x0[:1], g.gran[:1], g.node_ids[:1]
    out = bigru_encode(p, CFG, _t(np.random.default_rng(1).standard_normal((1, 64))),
                       collate([g])).data
    assert out.shape == (1, 64)
    np.testing.assert_array_equal(out[0, :32], out[0, 32:])


def test_bigru_matches_manual_recurrence():
    p = init_params(CFG, 2)
    rng = np.random.default_rng(2)
    g = random_graph(rng, n_nodes=3, n_edges=0)
    h = rng.standard_normal((3, 64))
    out = bigru_encode(p, CFG, _t(h), collate([g])).data
    sig = lambda v: 1 / (1 + np.exp(-v))

    def run(seq, d):
        w_ih, w_hh = p[f"gru.{d}.w_ih"].data, p[f"gru.{d}.w_hh"].data
        b_ih, b_hh = p[f"gru.{d}.b_ih"].data, p[f"gru.{d}.b_hh"].data
        s, states = np.zeros(32), []
        for x in seq:
            gi, gh = x @ w_ih + b_ih, s @ w_hh + b_hh
            r, z = sig(gi[:32] + gh[:32]), sig(gi[32:64] + gh[32:64])
            n = np.tanh(gi[64:] + r * gh[64:])
            s = (1 - z) * n + z * s
            states.append(s)
        return np.array(states)

    np.testing.assert_allclose(out[:, :32], run(h, "fwd"), atol=1e-12)
    np.testing.assert_allclose(out[:, 32:], run(h[::-1], "bwd")[::-1], atol=1e-12)


def test_readout_closed_form_and_permutation():
    cfg = ModelConfig(precision="f64", readout_hidden=())
    p = init_params(cfg, 0)
    p["readout.omega_max"].data[:] = 0
    p["readout.mlp.0.W"].data[:] = np.eye(64)
    p["readout.mlp.0.b"].data[:] = 0
    rng = np.random.default_rng(0)
    g = random_graph(rng, n_nodes=3, n_edges=0)
    g.gran = np.array([0, 1, 1])
    batch = collate([g])
    ht = rng.standard_normal((3, 64))
    out = readout(p, cfg, _t(ht), batch).data.reshape(3, 64)
    v = ht[0]
    np.testing.assert_allclose(out[0], v / (1 + np.exp(-v)), atol=1e-12)
    assert out.shape == (3, 64)
    p2 = init_params(ModelConfig(precision="f64"), 1)
    perm = collate([g])
    ht2 = ht[[0, 2, 1]]
    a = readout(p2, CFG, _t(ht), batch).data
    b = readout(p2, CFG, _t(ht2), perm).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_empty_granularity_contributes_zero():
    p = init_params(CFG, 0)
    g = random_graph(np.random.default_rng(0), n_nodes=4, n_edges=0)
    g.gran = np.array([0, 0, 2, 2])
    out = readout(p, CFG, _t(np.random.default_rng(1).standard_normal((4, 64))),
                  collate([g])).data
    assert out.shape == (1, 192)
    assert np.all(out[0, 64:128] == 0)


@pytest.mark.parametrize("flag,dim", [(None, 192), ("multi_granularity", 64),
                                      ("edge_attention", 192), ("node_attention", 192)])
def test_forward_shapes_and_ablation_dims(flag, dim):
    cfg = ModelConfig(precision="f64", **({flag: False} if flag else {}))
    batch = collate([random_graph(np.random.default_rng(i), n_nodes=6 + i) for i in range(3)])
    trace = {}
    logits = forward(init_params(cfg, 0), cfg, batch, trace)
    assert logits.shape == (3, 2)
    assert trace["g_vec"].shape == (3, dim)


def test_batching_matches_single_graphs():
    rng = np.random.default_rng(9)
    graphs = [random_graph(rng, n_nodes=n) for n in (4, 9, 6)]
    model = MHAGNN(CFG, seed=4)
    together = model(collate(graphs)).data
    alone = np.vstack([model(collate([g])).data for g in graphs])
    np.testing.assert_allclose(together, alone, atol=1e-10)


def test_initial_loss_near_ln2():
    rng = np.random.default_rng(0)
    graphs = [random_graph(rng, n_nodes=12, label=i % 2) for i in range(16)]
    batch = collate(graphs)
    model = MHAGNN(CFG, seed=0)
    loss = T.cross_entropy(model(batch), batch.labels).item()
    assert abs(loss - np.log(2)) < 0.15


def test_layer_gradients():
    rng = np.random.default_rng(3)
    cfg = ModelConfig(precision="f64", layers=1)
    p = init_params(cfg, 0)
    batch = collate([random_graph(rng, n_nodes=10)])
    h = T.Tensor(rng.standard_normal((10, 64)), requires_grad=True)
    proj = T.Tensor(rng.standard_normal((10, 64)))
    names = ["layer0.node_att", "layer0.edge_W", "layer0.edge_mu", "layer0.V.Ex.W"]
    err = T.grad_check(lambda: T.tsum(layer_forward(p, 0, cfg, h, batch) * proj),
                       [h] + [p[k] for k in names], max_coords=12)
    assert err < 1e-3


def test_featurize_golden_graph():
    g = lower(GOLDEN["while_break"]["source"])
    table = hashed_table(build_vocab([g]))
    mg = apply_filter(annotate(g), ALL_METAPATH_TYPES)
    fi = featurize(mg, table, label=1)
    assert fi.n_nodes == len(g.nodes) and len(fi.src) == len(g.edges)
    assert [int(i) for i in fi.node_ids] == [n.id for n in canonical_order(g.nodes)]
    # synthetic entry/exit nodes come last
    assert [g.node(int(i)).raw_type for i in fi.node_ids[-2:]] == ["CFGEntryNode",
                                                                    "CFGExitNode"]
    assert np.all(fi.x0[-2:] == 0)
    assert MHAGNN(CFG).predict(collate([fi]))[0].shape == (1,)


def test_init_is_seeded():
    a, b = init_params(CFG, 5), init_params(CFG, 5)
    assert list(a) == list(b)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert not np.array_equal(a["input.St.W"].data, init_params(CFG, 6)["input.St.W"].data)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(d_hidden=64, heads=5)
    with pytest.raises(ValueError):
        ModelConfig(layers=0)
