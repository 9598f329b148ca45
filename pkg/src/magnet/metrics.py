import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

NODE_BUCKETS = ((0, 50, "[0,50]"), (50, 100, "(50,100]"), (100, 150, "(100,150]"),
                (150, 200, "(150,200]"), (200, None, ">200"))


class LengthMismatch(ValueError):
    pass


class MissingClassError(ValueError):
    pass


@dataclass
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    centroid_distance: float = None
    stratified_accuracy: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _ratio(num, den, what):
    if den == 0:
        warnings.warn(f"{what} undefined (zero denominator); reporting 0", RuntimeWarning,
                      stacklevel=3)
        return 0.0
    return num / den


def compute_metrics(predictions, labels):
    """Confusion-matrix metrics with class 1 (vulnerable) as positive.

    Precision, recall and F1 are 0 when their denominator is 0.
    """
    pred = np.asarray(predictions).astype(int).reshape(-1)
    lab = np.asarray(labels).astype(int).reshape(-1)
    if pred.shape != lab.shape:
        raise LengthMismatch(f"{len(pred)} predictions for {len(lab)} labels")
    tp = int(np.sum((pred == 1) & (lab == 1)))
    fp = int(np.sum((pred == 1) & (lab == 0)))
    fn = int(np.sum((pred == 0) & (lab == 1)))
    tn = int(np.sum((pred == 0) & (lab == 0)))
    precision = _ratio(tp, tp + fp, "precision")
    recall = _ratio(tp, tp + fn, "recall")
    f1 = _ratio(2 * precision * recall, precision + recall, "F1")
    accuracy = _ratio(tp + tn, tp + fp + fn + tn, "accuracy")
    return Metrics(tp, fp, fn, tn, accuracy, precision, recall, f1)


def centroid_distance(representations, labels):
    """Euclidean distance between the mean representation of each class."""
    reps = np.asarray(representations, dtype=np.float64)
    if reps.ndim == 1:
        reps = reps[:, None]
    lab = np.asarray(labels).reshape(-1)
    if not (lab == 0).any() or not (lab == 1).any():
        raise MissingClassError("centroid distance needs samples of both classes")
    return float(np.linalg.norm(reps[lab == 1].mean(axis=0) - reps[lab == 0].mean(axis=0)))


def node_bucket(n):
    for lo, hi, name in NODE_BUCKETS:
        if hi is None or n <= hi:
            if n >= lo:
                return name
    return NODE_BUCKETS[-1][2]


def stratified_accuracy(node_counts, predictions, labels):
    """Accuracy per node-count bucket; buckets without samples are omitted."""
    counts = np.asarray(node_counts).reshape(-1)
    pred = np.asarray(predictions).reshape(-1)
    lab = np.asarray(labels).reshape(-1)
    out = {}
    for _, _, name in NODE_BUCKETS:
        sel = np.array([node_bucket(c) == name for c in counts], dtype=bool)
        if sel.any():
            out[name] = float(np.mean(pred[sel] == lab[sel]))
    return out
