"""Matplotlib figures for the CLI reports; always rendered off-screen to files."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import NODE_BUCKETS  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_META = {"png": {"Software": None}, "svg": {"Date": None}, "pdf": {"CreationDate": None}}


def _save(fig, path):
    fmt = str(path).rsplit(".", 1)[-1].lower()
    fig.savefig(path, metadata=_META.get(fmt), dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def metapath_distribution(rows, active, path, title="Meta-path distribution"):
    """Bar chart of (type, count) rows; filtered types drawn hatched in grey."""
    labels = [t.label() for t, _ in rows]
    counts = [c for _, c in rows]
    total = sum(counts) or 1
    colors = ["#3b6ea5" if t in active else "#bbbbbb" for t, _ in rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.32 * len(rows)), 4))
    bars = ax.bar(range(len(rows)), [100.0 * c / total for c in counts], color=colors)
    for bar, (t, _) in zip(bars, rows):
        if t not in active:
            bar.set_hatch("//")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=90, fontsize=7)
    ax.set_ylabel("share of edges (%)")
    ax.set_title(title)
    return _save(fig, path)


def training_history(history, path):
    epochs = [h["epoch"] for h in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.6))
    ax1.plot(epochs, [h["train_loss"] for h in history], label="train")
    ax1.plot(epochs, [h["valid"]["loss"] for h in history], label="valid")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("cross-entropy")
    ax1.legend()
    ax2.plot(epochs, [h["train_accuracy"] for h in history], label="train accuracy")
    ax2.plot(epochs, [h["valid"]["accuracy"] for h in history], label="valid accuracy")
    ax2.plot(epochs, [h["valid"]["f1"] for h in history], label="valid F1")
    best = [h["epoch"] for h in history if h.get("best")]
    if best:
        ax2.axvline(best[0], color="#999999", linestyle=":", label="kept")
    ax2.set_ylim(-0.02, 1.02)
    ax2.set_xlabel("epoch")
    ax2.legend(fontsize=8)
    return _save(fig, path)


def stratified_accuracy(strata, path, title="Accuracy by graph size"):
    names = [name for _, _, name in NODE_BUCKETS]
    values = [strata.get(n, 0.0) for n in names]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    bars = ax.bar(names, values, color="#3b6ea5")
    for bar, n in zip(bars, names):
        if n not in strata:
            bar.set_alpha(0.0)
            ax.text(bar.get_x() + bar.get_width() / 2, 0.02, "n/a", ha="center", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("number of graph nodes")
    ax.set_ylabel("accuracy")
    ax.set_title(title)
    return _save(fig, path)
