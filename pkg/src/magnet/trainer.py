"""Training and evaluation loops."""
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint
from .cparse import lower
from .embed import build_vocab, graph_token_sequence, hashed_table, train_skipgram
from .graphio import load_sample_graph, select
from .metapath import annotate, apply_filter, collect_stats, select_active
from .metrics import (MissingClassError, centroid_distance, compute_metrics,
                      stratified_accuracy)
from .mhagnn import MHAGNN, ModelConfig, collate, featurize, init_params, loss_fn

log = logging.getLogger(__name__)

SMALL_CORPUS = 100  # below this many training graphs no meta-path type is filtered


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 5e-4
    seed: int = 0
    class_weights: tuple = None
    patience: int = None  # epochs without a validation F1 improvement before stopping
    min_metapath_count: int = None  # None: 3, or 0 when the train split is small
    embedding: str = "skipgram"  # skipgram | hashed
    skipgram_epochs: int = 5
    eval_batch_size: int = 64
    stop_at_train_accuracy: float = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.embedding not in ("skipgram", "hashed"):
            raise ValueError(f"unknown embedding source {self.embedding!r}")
        if self.class_weights is not None:
            self.class_weights = tuple(float(w) for w in self.class_weights)

    def to_dict(self):
        d = asdict(self)
        if d["class_weights"] is not None:
            d["class_weights"] = list(d["class_weights"])
        return d


@dataclass
class Sample:
    id: str
    graph: object  # CodeGraph
    label: int = None


@dataclass
class TrainResult:
    checkpoint: Checkpoint  # best validation F1
    last_params: dict
    history: list = field(default_factory=list)


@dataclass
class EvalResult:
    metrics: object
    ids: list
    labels: np.ndarray
    probabilities: np.ndarray
    predictions: np.ndarray
    representations: np.ndarray
    node_counts: np.ndarray

    def prediction_rows(self):
        return [(i, int(p), float(q)) for i, p, q in
                zip(self.ids, self.predictions, self.probabilities)]


# -- data ----------------------------------------------------------------------

def _record_graph(args):
    record, base_dir = args
    if record.code is not None:
        return lower(record.code)
    return load_sample_graph(record, base_dir)


def load_samples(records, base_dir=".", jobs=1):
    """Lower or read each record's graph; order follows records."""
    work = [(r, base_dir) for r in records]
    if jobs and jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            graphs = list(pool.map(_record_graph, work, chunksize=16))
    else:
        graphs = [_record_graph(w) for w in work]
    return [Sample(r.id, g, r.label) for r, g in zip(records, graphs)]


def split_samples(samples, assign):
    out = {"train": [], "valid": [], "test": []}
    for s in samples:
        if s.id in assign:
            out[assign[s.id]].append(s)
    return out


def default_min_count(n_train_graphs):
    return 0 if n_train_graphs < SMALL_CORPUS else 3


def fit_preprocessing(train_samples, train_cfg, d_in):
    """Vocabulary, token vectors and active meta-path set, from training graphs only."""
    graphs = [s.graph for s in train_samples]
    min_count = train_cfg.min_metapath_count
    if min_count is None:
        min_count = default_min_count(len(graphs))
    active = select_active(collect_stats(annotate(g) for g in graphs), min_count)
    vocab = build_vocab(graphs)
    if train_cfg.embedding == "hashed":
        table = hashed_table(vocab, d_in)
    else:
        table, _ = train_skipgram([graph_token_sequence(g) for g in graphs], vocab, d=d_in,
                                  epochs=train_cfg.skipgram_epochs, seed=train_cfg.seed)
    # checkpoints store float32; train on exactly the values that will be saved
    table.matrix = table.matrix.astype(np.float32).astype(np.float64)
    return vocab, table, active


def featurize_samples(samples, table, active):
    cache = {}
    return [featurize(apply_filter(annotate(s.graph), active), table, s.label, cache)
            for s in samples]


def _batches(inputs, size, order=None):
    order = np.arange(len(inputs)) if order is None else order
    for start in range(0, len(order), size):
        yield collate([inputs[i] for i in order[start:start + size]])


# -- evaluation ----------------------------------------------------------------

def _run(model, inputs, batch_size):
    probs, reps = [], []
    with T.precision(model.config.precision):
        for batch in _batches(inputs, batch_size):
            p, g = model.predict(batch)
            probs.append(p)
            reps.append(g)
    return np.concatenate(probs), np.concatenate(reps)


def _loss_of(probs, labels, class_weights=None):
    p = np.where(labels == 1, probs, 1.0 - probs)
    w = np.ones(len(labels)) if class_weights is None else np.asarray(class_weights)[labels]
    return float(-(w * np.log(np.clip(p, 1e-12, 1.0))).sum() / w.sum())


def _score(ids, inputs, labels, probs, reps, quiet=False):
    preds = (probs > 0.5).astype(int)
    node_counts = np.array([g.n_nodes for g in inputs])
    with warnings.catch_warnings():
        if quiet:
            warnings.simplefilter("ignore", RuntimeWarning)
        m = compute_metrics(preds, labels)
    try:
        m.centroid_distance = centroid_distance(reps, labels)
    except MissingClassError:
        m.centroid_distance = None
    m.stratified_accuracy = stratified_accuracy(node_counts, preds, labels)
    return EvalResult(m, list(ids), labels, probs, preds, reps, node_counts)


def evaluate_inputs(model, inputs, ids=None, batch_size=64, quiet=False):
    if not inputs:
        raise ValueError("cannot evaluate an empty split")
    labels = np.array([g.label for g in inputs], dtype=np.intp)
    if (labels < 0).any():
        raise ValueError("evaluation needs labelled samples")
    probs, reps = _run(model, inputs, batch_size)
    ids = ids if ids is not None else [str(i) for i in range(len(inputs))]
    return _score(ids, inputs, labels, probs, reps, quiet)


def model_of(ck):
    return MHAGNN(ck.model_config, ck.params)


def evaluate(ck, samples, batch_size=64):
    """Metrics of a checkpoint on labelled samples, including centroid distance."""
    if not samples:
        raise ValueError("cannot evaluate an empty split")
    inputs = featurize_samples(samples, ck.embedding, ck.active_metapaths)
    return evaluate_inputs(model_of(ck), inputs, [s.id for s in samples], batch_size)


def predict(ck, samples, batch_size=64):
    """(id, predicted label, probability of class 1) per sample."""
    inputs = featurize_samples(samples, ck.embedding, ck.active_metapaths)
    probs, _ = _run(model_of(ck), inputs, batch_size)
    return [(s.id, int(p > 0.5), float(p)) for s, p in zip(samples, probs)]


# -- training ------------------------------------------------------------------

def _snapshot(params):
    return {k: T.Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in params.items()}


def _summary(m, loss):
    return {"loss": loss, "accuracy": m.accuracy, "precision": m.precision, "recall": m.recall,
            "f1": m.f1}


def fit(train_samples, valid_samples, model_cfg=None, train_cfg=None, on_epoch=None,
        preprocessing=None):
    """Train on train_samples, selecting the checkpoint with the best validation F1.

    preprocessing, when given, is a (vocab, table, active) triple previously
    returned by fit_preprocessing for the same training samples.
    """
    model_cfg = model_cfg or ModelConfig()
    train_cfg = train_cfg or TrainConfig()
    if not train_samples or not valid_samples:
        raise ValueError("train and valid splits must be nonempty")
    if preprocessing is None:
        preprocessing = fit_preprocessing(train_samples, train_cfg, model_cfg.d_in)
    vocab, table, active = preprocessing
    train_in = featurize_samples(train_samples, table, active)
    valid_in = featurize_samples(valid_samples, table, active)
    y_train = np.array([s.label for s in train_samples], dtype=np.intp)
    y_valid = np.array([s.label for s in valid_samples], dtype=np.intp)
    cw = train_cfg.class_weights
    bs, ebs = train_cfg.batch_size, train_cfg.eval_batch_size

    with T.precision(model_cfg.precision):
        params = init_params(model_cfg, train_cfg.seed)
        model = MHAGNN(model_cfg, params)
        state = T.AdamState(lr=train_cfg.lr)
        rng = np.random.default_rng(train_cfg.seed)

        def validate():
            probs, reps = _run(model, valid_in, ebs)
            res = _score([s.id for s in valid_samples], valid_in, y_valid, probs, reps, quiet=True)
            return res.metrics, _loss_of(probs, y_valid, cw)

        def train_eval():
            probs, _ = _run(model, train_in, ebs)
            acc = float(np.mean((probs > 0.5) == y_train))
            return _loss_of(probs, y_train, cw), acc

        history = []
        t_loss, t_acc = train_eval()
        vm, v_loss = validate()
        history.append({"epoch": 0, "train_loss": t_loss, "train_accuracy": t_acc,
                        "valid": _summary(vm, v_loss), "valid_centroid_distance":
                        vm.centroid_distance})
        best_f1, best_params, best_epoch, stale = vm.f1, _snapshot(params), 0, 0
        if on_epoch:
            on_epoch(history[-1])

        for epoch in range(1, train_cfg.epochs + 1):
            order = rng.permutation(len(train_in))
            total, seen, correct = 0.0, 0, 0
            for batch in _batches(train_in, bs, order):
                logits = model(batch)
                loss = loss_fn(logits, batch.labels, cw)
                T.backward(loss)
                T.adam_step(params, state)
                total += float(loss.data) * batch.n_graphs
                seen += batch.n_graphs
                correct += int(np.sum(logits.data.argmax(axis=1) == batch.labels))
            t_loss, t_acc = total / seen, correct / seen
            if train_cfg.stop_at_train_accuracy is not None:
                t_loss, t_acc = train_eval()
            vm, v_loss = validate()
            entry = {"epoch": epoch, "train_loss": t_loss, "train_accuracy": t_acc,
                     "valid": _summary(vm, v_loss), "valid_centroid_distance":
                     vm.centroid_distance}
            history.append(entry)
            if on_epoch:
                on_epoch(entry)
            if not math.isfinite(t_loss):
                log.warning("training loss is not finite at epoch %d; stopping", epoch)
                break
            if vm.f1 > best_f1:
                best_f1, best_params, best_epoch, stale = vm.f1, _snapshot(params), epoch, 0
            else:
                stale += 1
            if train_cfg.patience is not None and stale >= train_cfg.patience:
                break
            if (train_cfg.stop_at_train_accuracy is not None
                    and t_acc >= train_cfg.stop_at_train_accuracy):
                if best_epoch != epoch:
                    best_params, best_epoch = _snapshot(params), epoch
                break

    for entry in history:
        entry["best"] = entry["epoch"] == best_epoch
    ck = Checkpoint(model_cfg, best_params, vocab, table, active, train_cfg.seed,
                    train_cfg.to_dict(), history)
    return TrainResult(ck, params, history)


def train(records, assign, model_cfg=None, train_cfg=None, base_dir=".", jobs=1, on_epoch=None):
    """Train from manifest records and a split assignment."""
    used = select(records, assign, "train") + select(records, assign, "valid")
    samples = split_samples(load_samples(used, base_dir, jobs), assign)
    return fit(samples["train"], samples["valid"], model_cfg, train_cfg, on_epoch)
