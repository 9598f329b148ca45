import math

import numpy as np
import pytest

from magnet import checkpoint as ckpt
from magnet.cparse import lower
from magnet.embed import build_vocab
from magnet.graphio import split_random
from magnet.metapath import annotate, collect_stats, select_active
from magnet.metrics import compute_metrics
from magnet.mhagnn import ModelConfig
from magnet.toy import ToySpec, generate_toy_corpus
from magnet.trainer import (TrainConfig, default_min_count, evaluate, fit, load_samples, predict,
                            split_samples, train)

SMALL = ModelConfig(d_in=16, d_hidden=16, heads=2, readout_hidden=(16,), classifier_hidden=16)


@pytest.fixture(scope="module")
def toy40():
    samples = generate_toy_corpus(ToySpec(40, seed=3))
    recs = [s.record for s in samples]
    assign = split_random(recs, seed=0)
    return recs, assign, split_samples(load_samples(recs), assign)


def _cfg(**kw):
    base = dict(epochs=3, batch_size=8, lr=5e-3, embedding="hashed")
    base.update(kw)
    return TrainConfig(**base)


def test_toy_corpus_is_balanced_and_lowers():
    samples = generate_toy_corpus(ToySpec(500, seed=0))
    labels = [s.record.label for s in samples]
    assert len(samples) == 500 and sum(labels) == 250
    assert len({s.record.id for s in samples}) == 500
    for s in samples[:60]:
        g = lower(s.record.code)
        assert g.nodes


def test_toy_twins_differ_only_around_planted_line():
    samples = generate_toy_corpus(ToySpec(40, seed=1))
    by_pair = {}
    for s in samples:
        by_pair.setdefault(s.pair, {})[s.record.label] = s
    for twins in by_pair.values():
        vul, clean = twins[1], twins[0]
        a, b = vul.record.code.splitlines(), clean.record.code.splitlines()
        assert len(a) == len(b)
        changed = [i + 1 for i, (x, y) in enumerate(zip(a, b)) if x != y]
        assert vul.planted_line in changed
        assert max(changed) - min(changed) <= 2
        assert "memcpy" in a[vul.planted_line - 1] or "=" in a[vul.planted_line - 1]
        assert a[vul.planted_line - 1].strip() == b[clean.planted_line - 1].strip()


def test_toy_fraction_and_determinism():
    a = generate_toy_corpus(ToySpec(30, vulnerable_fraction=0.2, seed=5))
    b = generate_toy_corpus(ToySpec(30, vulnerable_fraction=0.2, seed=5))
    assert sum(s.record.label for s in a) == 6
    assert [s.record.code for s in a] == [s.record.code for s in b]


def test_default_min_count():
    assert default_min_count(99) == 0
    assert default_min_count(100) == 3


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(embedding="glove")


def test_empty_split_raises(toy40):
    _, _, s = toy40
    with pytest.raises(ValueError):
        fit(s["train"], [], SMALL, _cfg())
    res = fit(s["train"], s["valid"], SMALL, _cfg(epochs=0))
    with pytest.raises(ValueError):
        evaluate(res.checkpoint, [])


def test_initial_loss_near_ln2(toy40):
    _, _, s = toy40
    res = fit(s["train"], s["valid"], SMALL, _cfg(epochs=0))
    assert abs(res.history[0]["train_loss"] - math.log(2)) < 0.15
    assert res.history[0]["best"]


def test_history_shape_and_best_flag(toy40):
    _, _, s = toy40
    res = fit(s["train"], s["valid"], SMALL, _cfg(epochs=3))
    assert [h["epoch"] for h in res.history] == [0, 1, 2, 3]
    assert sum(h["best"] for h in res.history) == 1
    best = [h for h in res.history if h["best"]][0]
    assert best["valid"]["f1"] == max(h["valid"]["f1"] for h in res.history)
    for h in res.history:
        assert set(h["valid"]) == {"loss", "accuracy", "precision", "recall", "f1"}


def test_patience_stops_early(toy40):
    _, _, s = toy40
    res = fit(s["train"], s["valid"], SMALL, _cfg(epochs=50, lr=1e-9, patience=2))
    assert len(res.history) <= 4


def test_training_is_deterministic(toy40):
    _, _, s = toy40
    a = fit(s["train"], s["valid"], SMALL, _cfg(seed=7))
    b = fit(s["train"], s["valid"], SMALL, _cfg(seed=7))
    assert ckpt.to_bytes(a.checkpoint) == ckpt.to_bytes(b.checkpoint)
    assert a.history == b.history
    c = fit(s["train"], s["valid"], SMALL, _cfg(seed=8))
    assert ckpt.to_bytes(a.checkpoint) != ckpt.to_bytes(c.checkpoint)


def test_preprocessing_sees_train_split_only(toy40):
    recs, assign, s = toy40
    res = train(recs, assign, SMALL, _cfg(epochs=1))
    ck = res.checkpoint
    graphs = [x.graph for x in s["train"]]
    assert ck.vocab.tokens == build_vocab(graphs).tokens
    stats = collect_stats(annotate(g) for g in graphs)
    assert ck.active_metapaths == select_active(stats, default_min_count(len(graphs)))
    held_out = build_vocab([x.graph for x in s["valid"] + s["test"]])
    only_held_out = set(held_out.tokens) - set(build_vocab(graphs).tokens)
    assert not only_held_out & set(ck.vocab.tokens)


def test_skipgram_vectors_depend_on_train_split_only(toy40):
    _, _, s = toy40
    cfg = _cfg(epochs=0, embedding="skipgram", skipgram_epochs=1)
    a = fit(s["train"], s["valid"], SMALL, cfg)
    b = fit(s["train"], s["test"], SMALL, cfg)
    assert np.array_equal(a.checkpoint.embedding.matrix, b.checkpoint.embedding.matrix)
    assert a.checkpoint.embedding.provenance == "skipgram"


def test_evaluate_matches_metrics_on_predictions(toy40):
    _, _, s = toy40
    ck = fit(s["train"], s["valid"], SMALL, _cfg()).checkpoint
    res = evaluate(ck, s["test"])
    m = compute_metrics(res.predictions, res.labels)
    for k in ("tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f1"):
        assert getattr(res.metrics, k) == getattr(m, k)
    rows = predict(ck, s["test"])
    assert [r[0] for r in rows] == [x.id for x in s["test"]]
    assert [r[1] for r in rows] == list(res.predictions)
    assert np.allclose([r[2] for r in rows], res.probabilities)
    assert res.representations.shape == (len(s["test"]), 3 * SMALL.d_hidden)
    assert sum(res.metrics.stratified_accuracy.values()) > 0


def test_checkpoint_round_trip(tmp_path, toy40):
    _, _, s = toy40
    ck = fit(s["train"], s["valid"], SMALL, _cfg(epochs=1)).checkpoint
    ckpt.save(ck, tmp_path / "m.ckpt")
    back = ckpt.load(tmp_path / "m.ckpt")
    assert ckpt.to_bytes(back) == ckpt.to_bytes(ck)
    assert back.active_metapaths == ck.active_metapaths
    assert back.vocab.tokens == ck.vocab.tokens
    assert evaluate(back, s["test"]).metrics == evaluate(ck, s["test"]).metrics


def test_checkpoint_errors(tmp_path):
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load(tmp_path / "absent.ckpt")
    (tmp_path / "junk").write_bytes(b"not a checkpoint at all")
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load(tmp_path / "junk")


def test_small_model_overfits_a_handful_of_samples():
    samples = generate_toy_corpus(ToySpec(8, seed=2))
    recs = [x.record for x in samples]
    data = load_samples(recs)
    res = fit(data, data, SMALL, _cfg(epochs=300, batch_size=8, lr=1e-2,
                                      stop_at_train_accuracy=1.0))
    assert res.history[-1]["train_accuracy"] == 1.0
    ev = evaluate(res.checkpoint, data)
    assert ev.metrics.accuracy == 1.0
