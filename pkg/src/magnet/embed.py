"""Initial node vectors from node value strings.

Two sources of token vectors: a skip-gram model with negative sampling
trained on the training corpus, or a deterministic hash-seeded unit vector
per token. A node's vector is the mean of its value's token vectors.
"""
import hashlib
import json
import re
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

OOV = "<unk>"
EMBED_DIM = 100

_VALUE_TOKEN_RE = re.compile(r"""
    [A-Za-z_][A-Za-z_0-9]*
  | 0[xX][0-9a-fA-F]+[uUlL]* | \d+\.?\d*(?:[eE][+-]?\d+)?[uUlLfF]* | \.\d+
  | "(?:[^"\\]|\\.)*" | '(?:[^'\\]|\\.)+'
  | <<=|>>=|->|\+\+|--|<<|>>|<=|>=|==|!=|&&|\|\||[-+*/%&|^]=
  | \S
""", re.VERBOSE)


def value_tokens(value):
    """Code tokens of a node value string."""
    return _VALUE_TOKEN_RE.findall(value or "")


@dataclass
class Vocab:
    tokens: list = field(default_factory=lambda: [OOV])
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def id(self, token):
        return self.index.get(token, 0)


def graph_token_sequence(graph):
    """Token stream of a graph: node values concatenated in source order."""
    nodes = sorted(graph.nodes, key=lambda n: (n.span is None, n.span[0] if n.span else 0, n.id))
    return [t for n in nodes for t in value_tokens(n.value)]


def build_vocab(corpus, min_freq=1):
    """Vocabulary over node-value tokens of a graph corpus; tokens below min_freq map to OOV."""
    counts = Counter()
    for g in corpus:
        for n in g.nodes:
            counts.update(value_tokens(n.value))
    kept = sorted((t for t, c in counts.items() if c >= min_freq and t != OOV),
                  key=lambda t: (-counts[t], t))
    return Vocab([OOV] + kept, {t: counts[t] for t in kept})


def hashed_embedding(token, d=EMBED_DIM):
    seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")
    v = np.random.default_rng(seed).standard_normal(d)
    return v / np.linalg.norm(v)


@dataclass
class EmbeddingTable:
    vocab: Vocab
    matrix: np.ndarray  # (|V|, d)
    provenance: str = "hashed"  # skipgram | hashed

    @property
    def dim(self):
        return self.matrix.shape[1]

    def vector(self, token):
        if token in self.vocab:
            return self.matrix[self.vocab.id(token)]
        if self.provenance == "hashed":
            return hashed_embedding(token, self.dim)
        return self.matrix[0]


def hashed_table(vocab, d=EMBED_DIM):
    matrix = np.stack([hashed_embedding(t, d) for t in vocab.tokens])
    return EmbeddingTable(vocab, matrix, "hashed")


def _skipgram_pairs(ids, seq_ids, window, rng):
    """(center, context) id pairs with word2vec-style randomly shrunk windows."""
    n = len(ids)
    reach = rng.integers(1, window + 1, size=n)
    centers, contexts = [], []
    for k in range(1, window + 1):
        i = np.arange(n - k)
        j = i + k
        same = seq_ids[i] == seq_ids[j]
        fwd = same & (reach[i] >= k)
        bwd = same & (reach[j] >= k)
        centers.extend((ids[i[fwd]], ids[j[bwd]]))
        contexts.extend((ids[j[fwd]], ids[i[bwd]]))
    return np.concatenate(centers), np.concatenate(contexts)


def _mean_update(w, rows, grad, alpha):
    order = np.argsort(rows, kind="stable")
    uniq, starts, hits = np.unique(rows[order], return_index=True, return_counts=True)
    sums = np.add.reduceat(grad[order], starts, axis=0)
    w[uniq] -= alpha * sums / hits[:, None]


def train_skipgram(sequences, vocab, d=EMBED_DIM, window=5, negatives=5, epochs=5, seed=0,
                   lr=0.025, batch_size=1024):
    """Skip-gram with negative sampling; returns (EmbeddingTable, per-epoch mean loss)."""
    rng = np.random.default_rng(seed)
    ids = np.concatenate([[vocab.id(t) for t in s] for s in sequences] or [[]]).astype(np.intp)
    seq_ids = np.concatenate([np.full(len(s), k) for k, s in enumerate(sequences)] or [[]])
    V = len(vocab)
    w_in = ((rng.random((V, d)) - 0.5) / d)
    w_out = np.zeros((V, d))
    freq = np.bincount(ids, minlength=V).astype(float) ** 0.75
    if freq.sum() == 0:
        return EmbeddingTable(vocab, w_in, "skipgram"), []
    noise_cdf = np.cumsum(freq / freq.sum())

    losses = []
    pairs_per_epoch = None
    total_steps = None
    step = 0
    for _ in range(epochs):
        c, o = _skipgram_pairs(ids, seq_ids, window, rng)
        if pairs_per_epoch is None:
            pairs_per_epoch = len(c)
            total_steps = max(1, epochs * -(-pairs_per_epoch // batch_size))
        perm = rng.permutation(len(c))
        c, o = c[perm], o[perm]
        epoch_loss = 0.0
        for start in range(0, len(c), batch_size):
            cb, ob = c[start:start + batch_size], o[start:start + batch_size]
            nb = np.searchsorted(noise_cdf, rng.random((len(cb), negatives)))
            nb = np.minimum(nb, V - 1)
            alpha = lr * max(1e-4, 1.0 - step / total_steps)
            step += 1
            vc, uo, un = w_in[cb], w_out[ob], w_out[nb]
            s_pos = 1.0 / (1.0 + np.exp(-np.einsum("bd,bd->b", vc, uo)))
            s_neg = 1.0 / (1.0 + np.exp(np.einsum("bd,bkd->bk", vc, un)))
            epoch_loss -= np.log(s_pos + 1e-12).sum() + np.log(s_neg + 1e-12).sum()
            g_pos = (s_pos - 1.0)[:, None]
            g_neg = (1.0 - s_neg)[:, :, None]
            d_vc = g_pos * uo + (g_neg * un).sum(axis=1)
            # rows hit many times in one batch get the mean of their updates,
            # otherwise frequent tokens in a small vocabulary blow up
            out_rows = np.concatenate([ob, nb.reshape(-1)])
            out_grad = np.concatenate([g_pos * vc, (g_neg * vc[:, None, :]).reshape(-1, d)])
            _mean_update(w_out, out_rows, out_grad, alpha)
            _mean_update(w_in, cb, d_vc, alpha)
        losses.append(epoch_loss / max(1, len(c)))
    return EmbeddingTable(vocab, w_in, "skipgram"), losses


def node_init(node, table):
    """Mean of the value's token vectors; zero vector for empty or synthetic values."""
    toks = value_tokens(node.value)
    if not toks:
        return np.zeros(table.dim)
    return np.mean([table.vector(t) for t in toks], axis=0)


def node_matrix(nodes, table, cache=None):
    """Stack node_init over nodes, memoising by value string."""
    cache = {} if cache is None else cache
    out = np.empty((len(nodes), table.dim))
    for i, n in enumerate(nodes):
        v = cache.get(n.value)
        if v is None:
            v = cache[n.value] = node_init(n, table)
        out[i] = v
    return out


# -- standalone export ---------------------------------------------------------

_MAGIC = b"MAGEMB\x00\x01"


def export_table(table, path):
    """Binary layout: magic, uint32 header length, JSON header, row-major float32 LE rows."""
    header = json.dumps({"version": 1, "provenance": table.provenance, "rows": len(table.vocab),
                         "dim": table.dim, "tokens": table.vocab.tokens},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(table.matrix, dtype="<f4").tobytes())


def import_table(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not an embedding table")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        data = np.frombuffer(fh.read(), dtype="<f4")
    matrix = data.reshape(header["rows"], header["dim"]).astype(np.float64)
    return EmbeddingTable(Vocab(header["tokens"]), matrix, header["provenance"])
