"""Meta-path based hierarchical attentional graph network.

Graphs are featurised into flat index arrays and processed as a batch (a
disjoint union of graphs).  Within a batch, nodes of each graph are laid out
in canonical order: ascending first token, span-less nodes last by id.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .embed import node_matrix
from .metapath import EDGE_INDEX, EDGE_KINDS, GRANULARITIES

N_GRAN = len(GRANULARITIES)
N_EDGE = len(EDGE_KINDS)
ACTIVATIONS = {"sigmoid": T.sigmoid, "tanh": T.tanh, "relu": T.relu}


@dataclass
class ModelConfig:
    d_in: int = 100
    d_hidden: int = 64
    layers: int = 2
    heads: int = 4
    activation: str = "sigmoid"
    readout_hidden: tuple = (64,)
    classifier_hidden: int = 64
    edge_attention: bool = True
    node_attention: bool = True
    multi_granularity: bool = True
    precision: str = "f32"

    def __post_init__(self):
        self.readout_hidden = tuple(self.readout_hidden)
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.d_hidden % self.heads:
            raise ValueError("d_hidden must be divisible by heads")
        if self.d_hidden % 2:
            raise ValueError("d_hidden must be even for the bidirectional GRU")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def head_dim(self):
        return self.d_hidden // self.heads

    @property
    def dtype(self):
        return T.PRECISIONS[self.precision]

    def to_dict(self):
        d = asdict(self)
        d["readout_hidden"] = list(self.readout_hidden)
        return d


# -- parameters ---------------------------------------------------------------

def init_params(cfg, seed=0):
    """All trainable tensors keyed by name, in a fixed creation order."""
    rng = np.random.default_rng(seed)
    dt = cfg.dtype
    dh, h, dk = cfg.d_hidden, cfg.heads, cfg.head_dim
    p = {}

    def lin(name, n_in, n_out, scale=1.0):
        p[f"{name}.W"] = T.xavier_init((n_in, n_out), rng, dt, scale)
        p[f"{name}.b"] = T.Tensor(np.zeros(n_out, dt), requires_grad=True)

    for g in GRANULARITIES:
        lin(f"input.{g.short}", cfg.d_in, dh)
    for l in range(cfg.layers):
        for proj in ("K", "Q", "V"):
            for g in GRANULARITIES:
                lin(f"layer{l}.{proj}.{g.short}", dh, dh)
        p[f"layer{l}.node_att"] = T.xavier_init((N_GRAN, h, 2 * dk), rng, dt)
        p[f"layer{l}.edge_W"] = T.xavier_init((N_EDGE, h, dk, dk), rng, dt)
        p[f"layer{l}.edge_mu"] = T.Tensor(np.ones(N_EDGE, dt), requires_grad=True)
    hg = dh // 2
    for direction in ("fwd", "bwd"):
        p[f"gru.{direction}.w_ih"] = T.xavier_init((dh, 3 * hg), rng, dt)
        p[f"gru.{direction}.w_hh"] = T.xavier_init((hg, 3 * hg), rng, dt)
        p[f"gru.{direction}.b_ih"] = T.Tensor(np.zeros(3 * hg, dt), requires_grad=True)
        p[f"gru.{direction}.b_hh"] = T.Tensor(np.zeros(3 * hg, dt), requires_grad=True)
    p["readout.omega_avg"] = T.Tensor(np.ones(N_GRAN, dt), requires_grad=True)
    p["readout.omega_max"] = T.Tensor(np.ones(N_GRAN, dt), requires_grad=True)
    widths = (dh,) + cfg.readout_hidden + (dh,)
    for i in range(len(widths) - 1):
        lin(f"readout.mlp.{i}", widths[i], widths[i + 1])
    g_dim = N_GRAN * dh if cfg.multi_granularity else dh
    lin("classifier.0", g_dim, cfg.classifier_hidden)
    # small output layer keeps the initial loss close to ln 2
    lin("classifier.1", cfg.classifier_hidden, 2, scale=0.1)
    for name, t in p.items():
        t.name = name
    return p


# -- featurisation ------------------------------------------------------------

@dataclass
class GraphInput:
    x0: np.ndarray  # (N, d_in) initial node vectors
    gran: np.ndarray  # (N,) granularity index
    src: np.ndarray  # (E,)
    dst: np.ndarray  # (E,)
    kind: np.ndarray  # (E,) edge kind index
    node_ids: np.ndarray  # (N,) original node id of each row
    label: int = None

    @property
    def n_nodes(self):
        return len(self.gran)


def canonical_order(nodes):
    return sorted(nodes, key=lambda n: (n.span is None, n.span[0] if n.span else 0, n.id))


def featurize(mg, table, label=None, cache=None):
    """Numeric view of a filtered MetaPathGraph with rows in canonical node order."""
    nodes = canonical_order(mg.graph.nodes)
    row = {n.id: i for i, n in enumerate(nodes)}
    gran = np.array([mg.node_gran[n.id].index for n in nodes], dtype=np.intp)
    edges = sorted(((row[e.dst], row[e.src], EDGE_INDEX[e.kind]) for e in mg.graph.edges))
    e = np.array(edges, dtype=np.intp).reshape(-1, 3)
    return GraphInput(
        x0=node_matrix(nodes, table, cache),
        gran=gran,
        src=e[:, 1].copy(), dst=e[:, 0].copy(), kind=e[:, 2].copy(),
        node_ids=np.array([n.id for n in nodes], dtype=np.intp),
        label=label,
    )


@dataclass
class Batch:
    x0: np.ndarray
    gran: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    kind: np.ndarray
    graph_of_node: np.ndarray
    lengths: np.ndarray
    offsets: np.ndarray
    labels: np.ndarray
    # bidirectional GRU layout
    idx_fwd: np.ndarray = field(default=None)
    idx_bwd: np.ndarray = field(default=None)
    seq_mask: np.ndarray = field(default=None)
    pos_fwd: np.ndarray = field(default=None)
    pos_bwd: np.ndarray = field(default=None)

    @property
    def n_graphs(self):
        return len(self.lengths)

    @property
    def n_nodes(self):
        return len(self.gran)


def collate(inputs):
    lengths = np.array([g.n_nodes for g in inputs], dtype=np.intp)
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.intp)
    N = int(lengths.sum())
    B = len(inputs)
    Tm = int(lengths.max()) if B else 0
    idx_fwd = np.full((B, Tm), N, dtype=np.intp)
    idx_bwd = np.full((B, Tm), N, dtype=np.intp)
    mask = np.zeros((B, Tm))
    pos_fwd = np.empty(N, dtype=np.intp)
    pos_bwd = np.empty(N, dtype=np.intp)
    for b, (off, n) in enumerate(zip(offsets, lengths)):
        rows = off + np.arange(n)
        idx_fwd[b, :n] = rows
        idx_bwd[b, :n] = rows[::-1]
        mask[b, :n] = 1
        pos_fwd[rows] = b * Tm + np.arange(n)
        pos_bwd[rows] = b * Tm + (n - 1 - np.arange(n))
    labels = np.array([-1 if g.label is None else g.label for g in inputs], dtype=np.intp)
    return Batch(
        x0=np.concatenate([g.x0 for g in inputs]),
        gran=np.concatenate([g.gran for g in inputs]),
        src=np.concatenate([g.src + o for g, o in zip(inputs, offsets)]),
        dst=np.concatenate([g.dst + o for g, o in zip(inputs, offsets)]),
        kind=np.concatenate([g.kind for g in inputs]),
        graph_of_node=np.repeat(np.arange(B), lengths),
        lengths=lengths, offsets=offsets, labels=labels,
        idx_fwd=idx_fwd, idx_bwd=idx_bwd, seq_mask=mask, pos_fwd=pos_fwd, pos_bwd=pos_bwd,
    )


# -- model pieces -------------------------------------------------------------

def _linear(p, name, x):
    return T.matmul(x, p[f"{name}.W"]) + p[f"{name}.b"]


def _gran_masks(gran, dtype):
    return [(gran == i).astype(dtype)[:, None] for i in range(N_GRAN)]


def granular_linear(p, prefix, x, gran):
    """Row i transformed by the linear map of its own granularity."""
    masks = _gran_masks(gran, x.dtype)
    out = None
    for g, m in zip(GRANULARITIES, masks):
        if not m.any():
            continue
        term = _linear(p, f"{prefix}.{g.short}", x) * m
        out = term if out is None else out + term
    return out


def project(p, l, h_prev, gran):
    """(K, Q, V) for layer l, each (N, d_hidden)."""
    if h_prev.shape[1] != p[f"layer{l}.K.St.W"].shape[0]:
        raise T.ShapeError(f"project: rows of width {h_prev.shape[1]}, expected "
                           f"{p[f'layer{l}.K.St.W'].shape[0]}")
    return tuple(granular_linear(p, f"layer{l}.{proj}", h_prev, gran) for proj in ("K", "Q", "V"))


def node_attention(w, k_src, q_dst):
    """sigmoid(w . [k_src || q_dst]) over the last axis; w carries the target-granularity weights."""
    dk = k_src.shape[-1]
    return T.sigmoid(T.tsum(w[..., :dk] * k_src + w[..., dk:] * q_dst, axis=-1))


def edge_attention(k_src, w_edge, q_dst, mu, d_hidden, heads):
    """(k_src W q_dst^T) * mu / sqrt(d_hidden / heads) for aligned (..., dk) slices."""
    bil = T.tsum(T.tsum(T.reshape(k_src, k_src.shape + (1,)) * w_edge, axis=-2) * q_dst, axis=-1)
    return bil * mu * (1.0 / np.sqrt(d_hidden / heads))


def _edge_logits(p, l, cfg, ks, qt, batch):
    """Per-(edge, head) bilinear edge-type scores; each edge kind multiplies only its own edges."""
    w_edge = p[f"layer{l}.edge_W"]
    parts, order = [], []
    for r in range(N_EDGE):
        idx = np.flatnonzero(batch.kind == r)
        if not len(idx):
            continue
        k_r = T.transpose(T.gather(ks, idx), (1, 0, 2))  # (h, E_r, dk)
        parts.append(T.transpose(T.matmul(k_r, w_edge[r]), (1, 0, 2)))
        order.append(idx)
    kw = T.concat(parts, axis=0) if len(parts) > 1 else parts[0]
    kw = T.gather(kw, np.argsort(np.concatenate(order)))
    mu = T.reshape(T.gather(p[f"layer{l}.edge_mu"], batch.kind), (-1, 1))
    return T.tsum(kw * qt, axis=-1) * mu * (1.0 / np.sqrt(cfg.d_hidden / cfg.heads))


def layer_forward(p, l, cfg, h_prev, batch, trace=None):
    """One attention layer; nodes without retained in-edges keep h_prev unchanged."""
    N, E = batch.n_nodes, len(batch.src)
    hd, dk = cfg.heads, cfg.head_dim
    if E == 0:
        if trace is not None:
            trace.setdefault("attention", []).append(np.zeros((0, hd)))
        return h_prev
    K, Q, V = project(p, l, h_prev, batch.gran)
    ks = T.reshape(T.gather(K, batch.src), (E, hd, dk))
    qt = T.reshape(T.gather(Q, batch.dst), (E, hd, dk))
    vs = T.reshape(T.gather(V, batch.src), (E, hd, dk))
    logits = T.Tensor(np.zeros((E, hd), dtype=h_prev.dtype))
    if cfg.node_attention:
        w = T.gather(p[f"layer{l}.node_att"], batch.gran[batch.dst])
        logits = logits + node_attention(w, ks, qt)
    if cfg.edge_attention:
        logits = logits + _edge_logits(p, l, cfg, ks, qt, batch)
    # softmax over each target's incoming edges, per head
    peak = np.full((N, hd), -np.inf, dtype=logits.dtype)
    np.maximum.at(peak, batch.dst, logits.data)
    ex = T.exp(logits - peak[batch.dst])
    denom = T.segment_sum(ex, batch.dst, N)
    att = ex / T.gather(denom, batch.dst)
    if trace is not None:
        trace.setdefault("attention", []).append(att.data.copy())
    msg = T.segment_sum(T.reshape(att, (E, hd, 1)) * vs, batch.dst, N)
    msg = T.reshape(msg, (N, cfg.d_hidden))
    has_in = np.zeros((N, 1), dtype=h_prev.dtype)
    has_in[batch.dst] = 1
    return h_prev + ACTIVATIONS[cfg.activation](msg) * has_in


def bigru_encode(p, cfg, h, batch):
    """Forward || backward GRU states over each graph's canonical node sequence."""
    N = batch.n_nodes
    pad = T.concat([h, T.Tensor(np.zeros((1, h.shape[1]), dtype=h.dtype))], axis=0)
    hg = cfg.d_hidden // 2
    outs = []
    for direction, idx, pos in (("fwd", batch.idx_fwd, batch.pos_fwd),
                                ("bwd", batch.idx_bwd, batch.pos_bwd)):
        seq = T.gather(pad, idx)
        states = T.gru_sequence(seq, batch.seq_mask, p[f"gru.{direction}.w_ih"],
                                p[f"gru.{direction}.w_hh"], p[f"gru.{direction}.b_ih"],
                                p[f"gru.{direction}.b_hh"])
        flat = T.reshape(states, (-1, hg))
        outs.append(T.gather(flat, pos))
    assert outs[0].shape[0] == N
    return T.concat(outs, axis=1)


def readout(p, cfg, ht, batch, trace=None):
    """Gated average+max pooling per granularity, concatenated per graph."""
    B = batch.n_graphs
    if not cfg.multi_granularity:
        return T.segment_sum(ht, batch.graph_of_node, B)
    G = B * N_GRAN
    groups = batch.graph_of_node * N_GRAN + batch.gran
    counts = np.bincount(groups, minlength=G).astype(ht.dtype)
    avg = T.segment_sum(ht, groups, G) * (1.0 / np.maximum(counts, 1))[:, None]
    mx = T.segment_max(ht, groups, G)
    gran_of_group = np.tile(np.arange(N_GRAN), B)
    w_avg = T.reshape(T.gather(p["readout.omega_avg"], gran_of_group), (G, 1))
    w_max = T.reshape(T.gather(p["readout.omega_max"], gran_of_group), (G, 1))
    pooled = w_avg * avg + w_max * mx
    z = pooled
    n_mlp = len(cfg.readout_hidden) + 1
    for i in range(n_mlp):
        z = _linear(p, f"readout.mlp.{i}", z)
        if i < n_mlp - 1:
            z = T.relu(z)
    gate = T.sigmoid(z)
    if trace is not None:
        trace["gate"] = gate.data.reshape(B, N_GRAN, -1).copy()
    return T.reshape(gate * pooled, (B, N_GRAN * cfg.d_hidden))


def classify(p, g_vec):
    hidden = T.relu(_linear(p, "classifier.0", g_vec))
    return _linear(p, "classifier.1", hidden)


def loss_fn(logits, labels, class_weights=None):
    return T.cross_entropy(logits, labels, class_weights)


def forward(p, cfg, batch, trace=None):
    """Logits (B, 2) for a collated batch; fills trace with intermediates when given."""
    x0 = T.Tensor(batch.x0.astype(cfg.dtype))
    h = granular_linear(p, "input", x0, batch.gran)
    if trace is not None:
        trace["h"] = [h.data.copy()]
    for l in range(cfg.layers):
        h = layer_forward(p, l, cfg, h, batch, trace)
        if trace is not None:
            trace["h"].append(h.data.copy())
    ht = bigru_encode(p, cfg, h, batch)
    g_vec = readout(p, cfg, ht, batch, trace)
    if trace is not None:
        trace["g_vec"] = g_vec.data.copy()
    return classify(p, g_vec)


class MHAGNN:
    def __init__(self, config=None, params=None, seed=0):
        self.config = config or ModelConfig()
        self.params = params if params is not None else init_params(self.config, seed)

    def __call__(self, batch, trace=None):
        return forward(self.params, self.config, batch, trace)

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    def predict(self, batch):
        """(probabilities of class 1, graph representations) without recording gradients."""
        trace = {}
        with T.no_grad():
            logits = forward(self.params, self.config, batch, trace)
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        prob = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        return prob[:, 1], trace["g_vec"]
