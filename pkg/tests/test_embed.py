import numpy as np
import pytest

from magnet.cparse import CodeGraph, CodeNode, lower
from magnet.embed import (EMBED_DIM, OOV, build_vocab, export_table, graph_token_sequence,
                          hashed_embedding, hashed_table, import_table, node_init,
                          node_matrix, train_skipgram, value_tokens)
from magnet.toy import ToySpec, generate_toy_corpus


def _g(*values):
    return CodeGraph("f", [CodeNode(i, "Identifier", v, (i, i)) for i, v in enumerate(values)], [])


def test_value_tokens():
    assert value_tokens("x = a+b") == ["x", "=", "a", "+", "b"]
    assert value_tokens("p -> q += 0x1F") == ["p", "->", "q", "+=", "0x1F"]
    assert value_tokens("") == []


def test_vocab_contents():
    v = build_vocab([_g("a = b", "a + 1", "")])
    assert {"a", "=", "b", "+", "1", OOV} <= set(v.tokens)
    assert v.tokens[0] == OOV and v.id("zzz") == 0


def test_vocab_min_freq():
    v = build_vocab([_g("a = b", "a + 1")], min_freq=2)
    assert v.tokens == [OOV, "a"]
    assert v.id("b") == 0


def test_hashed_vectors():
    a1, a2, b = hashed_embedding("a"), hashed_embedding("a"), hashed_embedding("b")
    assert np.array_equal(a1, a2)
    assert np.linalg.norm(a1) == pytest.approx(1.0, abs=1e-6)
    assert a1 @ b < 1.0
    assert a1.shape == (EMBED_DIM,)


def test_node_init():
    table = hashed_table(build_vocab([_g("a = b")]))
    rows = {t: table.vector(t) for t in ("a", "=", "b")}
    assert np.array_equal(node_init(CodeNode(0, "Identifier", "a"), table), rows["a"])
    assert np.array_equal(node_init(CodeNode(0, "CFGEntryNode", ""), table), np.zeros(100))
    want = (rows["a"] + rows["="] + rows["b"]) / 3
    np.testing.assert_allclose(node_init(CodeNode(0, "AssignmentExpression", "a = b"), table),
                               want)
    np.testing.assert_allclose(node_init(CodeNode(0, "AssignmentExpression", "b = a"), table),
                               want)


def test_hashed_oov_falls_back_to_hash():
    table = hashed_table(build_vocab([_g("a")]))
    assert np.array_equal(table.vector("never_seen"), hashed_embedding("never_seen"))


def test_node_matrix_dimension():
    g = lower("int f(int a){return a + 1;}")
    table = hashed_table(build_vocab([g]))
    assert node_matrix(g.nodes, table).shape == (len(g.nodes), 100)


@pytest.fixture(scope="module")
def toy_sequences():
    graphs = [lower(s.record.code) for s in generate_toy_corpus(ToySpec(n=500, seed=0))]
    vocab = build_vocab(graphs)
    return vocab, [graph_token_sequence(g) for g in graphs]


def test_skipgram_loss_decreases(toy_sequences):
    vocab, seqs = toy_sequences
    table, losses = train_skipgram(seqs, vocab, epochs=3, seed=0)
    assert losses[-1] < losses[0]
    for a, b in zip(losses, losses[1:]):
        assert b <= a * 1.05
    assert table.matrix.shape == (len(vocab), 100) and table.provenance == "skipgram"
    assert np.isfinite(table.matrix).all()


def test_skipgram_deterministic():
    seqs = [["a", "b", "c", "a", "b"], ["c", "a", "b"]]
    vocab = build_vocab([_g(" ".join(s)) for s in seqs])
    t1, l1 = train_skipgram(seqs, vocab, epochs=2, seed=5)
    t2, l2 = train_skipgram(seqs, vocab, epochs=2, seed=5)
    assert np.array_equal(t1.matrix, t2.matrix) and l1 == l2


def test_skipgram_cooccurring_tokens_are_similar():
    rng = np.random.default_rng(0)
    noise = [f"w{i}" for i in range(30)]
    seqs = []
    for _ in range(300):
        s = list(rng.choice(noise, size=12))
        k = int(rng.integers(0, 11))
        s[k:k + 2] = ["lock", "unlock"]
        seqs.append(s)
    vocab = build_vocab([_g(" ".join(s)) for s in seqs])
    table, _ = train_skipgram(seqs, vocab, epochs=5, seed=0, window=2)
    m = table.matrix / np.linalg.norm(table.matrix, axis=1, keepdims=True)
    cos = m @ m.T
    mean = cos[np.triu_indices(len(vocab), 1)].mean()
    assert cos[vocab.id("lock"), vocab.id("unlock")] > mean


def test_export_import(tmp_path):
    table = hashed_table(build_vocab([_g("a = b", "c")]))
    export_table(table, tmp_path / "t.bin")
    back = import_table(tmp_path / "t.bin")
    assert back.vocab.tokens == table.vocab.tokens and back.provenance == "hashed"
    np.testing.assert_allclose(back.matrix, table.matrix, atol=1e-7)
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        import_table(tmp_path / "bad.bin")
