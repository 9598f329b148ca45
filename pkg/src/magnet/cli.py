"""Command-line entry point: ``magnet <command> ...``.

Exit codes: 0 success, 1 usage, 2 bad input or parse failure, 3 missing or
unusable checkpoint/state.
"""
import argparse
import logging
import os
import sys
import warnings
from pathlib import Path

from . import checkpoint as ckpt
from . import plotting
from .cparse import LexError, ParseError, lower, parse_function, tokenize
from .explain import explain
from .graphio import (GRAPH_SUFFIX, FormatError, MissingDateError, read_manifest, read_splits,
                      select, split_by_time, split_from_manifest, split_random, splits_path,
                      write_graph, write_manifest, write_splits)
from .metapath import UnknownTypeError, annotate, collect_stats, select_active
from .metrics import Metrics
from .mhagnn import ModelConfig
from .toy import ToySpec, generate_toy_corpus
from .trainer import (Sample, TrainConfig, default_min_count, evaluate, load_samples, predict,
                      split_samples, train)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_STATE = 0, 1, 2, 3
TIME_CUTOFFS = ("2018-01-04", "2019-01-15")

log = logging.getLogger("magnet")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("MAGNET_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"MAGNET_SEED must be an integer, got {env!r}") from None


def _tsv(rows, out=None):
    out = out or sys.stdout
    for row in rows:
        out.write("\t".join("" if v is None else str(v) for v in row) + "\n")


def _report_dir(args):
    if not getattr(args, "report_dir", None):
        return None
    d = Path(args.report_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _sources(path):
    p = Path(path)
    if p.is_dir():
        return sorted(p.glob("*.c"))
    if not p.exists():
        raise InputError(f"{path}: no such file or directory")
    return [p]


def _lower_file(path):
    text = path.read_text(encoding="utf-8")
    try:
        return lower(text)
    except LexError as exc:
        raise InputError(f"{path}:{exc.line}:{exc.column}: {exc}") from None
    except ParseError as exc:
        tokens = tokenize(text)
        line = tokens[exc.token_index].line if exc.token_index < len(tokens) else "EOF"
        raise InputError(f"{path}:{line}: {exc} (token {exc.token_text!r})") from None


# -- commands ------------------------------------------------------------------

def cmd_parse(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = _sources(args.input)
    for path in files:
        g = _lower_file(path)
        write_graph(g, out / (path.stem + GRAPH_SUFFIX))
        print(f"{path}\t{out / (path.stem + GRAPH_SUFFIX)}\t{len(g.nodes)}\t{len(g.edges)}")
    return EXIT_OK


def _manifest_samples(path, jobs):
    records = read_manifest(path)
    if not records:
        raise InputError(f"{path}: manifest is empty")
    return records, load_samples(records, Path(path).parent, jobs)


def cmd_stats(args):
    records, samples = _manifest_samples(args.manifest, args.jobs)
    stats = collect_stats(annotate(s.graph) for s in samples)
    min_count = args.min_metapath_count
    if min_count is None:
        min_count = default_min_count(len(samples))
    active = select_active(stats, min_count)
    total = stats.total
    rows = [(t.label(), t.label(numeric=False), c, f"{100.0 * c / max(total, 1):.3f}",
             "kept" if t in active else "filtered") for t, c in stats.rows() if c > 0]
    _tsv([("type", "name", "count", "percent", "status")] + rows)
    print(f"# graphs={len(samples)} edges={total} types={len(rows)} kept={len(active)} "
          f"min_count={min_count}")
    d = _report_dir(args)
    if d:
        with open(d / "metapath_stats.tsv", "w", encoding="utf-8") as fh:
            _tsv([("type", "name", "count", "percent", "status")] + rows, fh)
        seen = [(t, c) for t, c in stats.rows() if c > 0]
        plotting.metapath_distribution(seen, active, d / "metapath_distribution.png")
    return EXIT_OK


def _model_config(args):
    return ModelConfig(d_in=args.embed_dim, d_hidden=args.hidden, layers=args.layers,
                       heads=args.heads, precision=args.precision)


def _assignment(args, records, seed):
    if args.split == "manifest":
        return split_from_manifest(records)
    if args.split == "time":
        return split_by_time(records, args.valid_cutoff, args.test_cutoff)
    return split_random(records, seed=seed)


HISTORY_HEADER = ("epoch", "train_loss", "train_accuracy", "valid_loss", "valid_accuracy",
                  "valid_precision", "valid_recall", "valid_f1", "valid_centroid_distance",
                  "kept")


def _history_rows(history):
    for h in history:
        v = h["valid"]
        yield (h["epoch"], f"{h['train_loss']:.6f}", f"{h['train_accuracy']:.4f}",
               f"{v['loss']:.6f}", f"{v['accuracy']:.4f}", f"{v['precision']:.4f}",
               f"{v['recall']:.4f}", f"{v['f1']:.4f}",
               "" if h["valid_centroid_distance"] is None
               else f"{h['valid_centroid_distance']:.6f}", int(bool(h.get("best"))))


def cmd_train(args):
    seed = _seed(args)
    records = read_manifest(args.manifest)
    assign = _assignment(args, records, seed)
    write_splits(assign, splits_path(args.manifest))
    for name in ("train", "valid"):
        if not select(records, assign, name):
            raise InputError(f"the {name} split is empty")
    try:
        model_cfg = _model_config(args)
        train_cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                                seed=seed, class_weights=args.class_weights,
                                patience=args.patience, min_metapath_count=args.min_metapath_count,
                                embedding=args.embedding)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    _tsv([HISTORY_HEADER])

    def progress(entry):
        h = dict(entry, best=False)
        _tsv(_history_rows([h]))
        sys.stdout.flush()

    result = train(records, assign, model_cfg, train_cfg, Path(args.manifest).parent, args.jobs,
                   on_epoch=progress)
    ckpt.save(result.checkpoint, args.out)
    kept = [h["epoch"] for h in result.history if h["best"]][0]
    print(f"# checkpoint={args.out} kept_epoch={kept}")
    d = _report_dir(args)
    if d:
        with open(d / "history.tsv", "w", encoding="utf-8") as fh:
            _tsv([HISTORY_HEADER] + list(_history_rows(result.history)), fh)
        plotting.training_history(result.history, d / "history.png")
    return EXIT_OK


METRIC_KEYS = ("tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f1",
               "centroid_distance")


def format_metrics(m):
    lines = ["metric\tvalue"]
    for k in METRIC_KEYS:
        v = getattr(m, k)
        lines.append(f"{k}\t{'' if v is None else v}")
    for bucket, acc in m.stratified_accuracy.items():
        lines.append(f"stratified_accuracy:{bucket}\t{acc}")
    return "\n".join(lines) + "\n"


def parse_metrics_report(text):
    """Inverse of format_metrics."""
    values, strata = {}, {}
    for line in text.splitlines():
        if not line or line.startswith("#") or line == "metric\tvalue":
            continue
        key, value = line.split("\t")
        if key.startswith("stratified_accuracy:"):
            strata[key.split(":", 1)[1]] = float(value)
        elif key in ("tp", "fp", "fn", "tn"):
            values[key] = int(value)
        else:
            values[key] = float(value) if value else None
    missing = set(METRIC_KEYS) - set(values)
    if missing:
        raise ValueError(f"metrics report lacks {sorted(missing)}")
    return Metrics(stratified_accuracy=strata, **values)


def cmd_eval(args):
    ck = ckpt.load(args.checkpoint)
    records = read_manifest(args.manifest)
    sp = splits_path(args.manifest)
    if args.split == "all":
        chosen = records
    else:
        if not sp.exists():
            raise InputError(f"{sp}: split file not found (run train first)")
        chosen = select(records, read_splits(sp), args.split)
    if not chosen:
        raise InputError(f"the {args.split} split is empty")
    samples = load_samples(chosen, Path(args.manifest).parent, args.jobs)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        result = evaluate(ck, samples)
    sys.stdout.write(format_metrics(result.metrics))
    for w in caught:
        print(f"# warning: {w.message}")
    d = _report_dir(args)
    if d:
        (d / "metrics.tsv").write_text(format_metrics(result.metrics), encoding="utf-8")
        with open(d / "predictions.tsv", "w", encoding="utf-8") as fh:
            _tsv([("id", "label", "predicted", "probability")]
                 + [(i, int(y), p, f"{q:.6f}") for (i, p, q), y in
                    zip(result.prediction_rows(), result.labels)], fh)
        plotting.stratified_accuracy(result.metrics.stratified_accuracy,
                                     d / "stratified_accuracy.png")
    return EXIT_OK


def cmd_predict(args):
    ck = ckpt.load(args.checkpoint)
    samples = []
    for item in args.inputs:
        if item.endswith(".jsonl"):
            samples += load_samples(read_manifest(item), Path(item).parent, args.jobs)
        else:
            samples += [Sample(str(p), _lower_file(p)) for p in _sources(item)]
    if not samples:
        raise InputError("nothing to predict")
    _tsv([("id", "predicted", "probability")])
    _tsv((i, y, f"{p:.6f}") for i, y, p in predict(ck, samples))
    return EXIT_OK


def cmd_explain(args):
    ck = ckpt.load(args.checkpoint)
    path = Path(args.source)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    _lower_file(path)  # uniform diagnostics for bad input
    report = explain(ck, path.read_text(encoding="utf-8"))
    color = args.color == "always" or (args.color == "auto" and sys.stdout.isatty())
    if color:
        sys.stdout.write(report.render_ansi())
    _tsv([("line", "statement", "weight", "text")] + report.to_rows())
    if args.html:
        Path(args.html).write_text(report.render_html(), encoding="utf-8")
    d = _report_dir(args)
    if d:
        (d / f"{path.stem}.explain.html").write_text(report.render_html(), encoding="utf-8")
    return EXIT_OK


def cmd_toygen(args):
    spec = ToySpec(n=args.n, vulnerable_fraction=args.fraction, seed=_seed(args))
    if spec.n < 2:
        raise UsageError("-n must be at least 2")
    if not 0.0 <= spec.vulnerable_fraction <= 1.0:
        raise UsageError("--fraction must be within [0, 1]")
    out = Path(args.out)
    (out / "sources").mkdir(parents=True, exist_ok=True)
    samples = generate_toy_corpus(spec)
    for s in samples:
        (out / "sources" / f"{s.record.id}.c").write_text(s.record.code, encoding="utf-8")
    write_manifest([s.record for s in samples], out / "manifest.jsonl")
    with open(out / "planted.tsv", "w", encoding="utf-8") as fh:
        _tsv([("id", "label", "planted_line", "pair")]
             + [(s.record.id, s.record.label, s.planted_line, s.pair) for s in samples], fh)
    print(f"{out / 'manifest.jsonl'}\t{len(samples)}\t"
          f"{sum(s.record.label for s in samples)} vulnerable")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (default: $MAGNET_SEED, else 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for graph lowering")
    p.add_argument("--report-dir", help="write figures and TSV reports here")


def build_parser():
    ap = _Parser(prog="magnet", description="Meta-path attentional GNN vulnerability detector")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="lower C sources to graph documents")
    p.add_argument("input", help="a .c file or a directory of them")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("stats", help="meta-path distribution of a manifest")
    p.add_argument("manifest")
    p.add_argument("--min-metapath-count", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True, help="checkpoint path")
    p.add_argument("--split", choices=("random", "time", "manifest"), default="random")
    p.add_argument("--valid-cutoff", default=TIME_CUTOFFS[0])
    p.add_argument("--test-cutoff", default=TIME_CUTOFFS[1])
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--class-weights", type=float, nargs=2, default=None)
    p.add_argument("--embedding", choices=("skipgram", "hashed"), default="skipgram")
    p.add_argument("--min-metapath-count", type=int, default=None,
                   help="default 3, or 0 when the train split has fewer than 100 graphs")
    p.add_argument("--layers", type=int, default=ModelConfig.layers)
    p.add_argument("--heads", type=int, default=ModelConfig.heads)
    p.add_argument("--hidden", type=int, default=ModelConfig.d_hidden)
    p.add_argument("--embed-dim", type=int, default=ModelConfig.d_in)
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--split", choices=("train", "valid", "test", "all"), default="test")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="label new functions")
    p.add_argument("checkpoint")
    p.add_argument("inputs", nargs="+", help=".c files, directories or .jsonl manifests")
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="statement attention heatmap for one function")
    p.add_argument("checkpoint")
    p.add_argument("source")
    p.add_argument("--html", help="write a standalone HTML heatmap")
    p.add_argument("--color", choices=("auto", "always", "never"), default="auto")
    _common(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("toygen", help="generate a planted-pattern toy corpus")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("-n", type=int, default=500)
    p.add_argument("--fraction", type=float, default=0.5, help="share of vulnerable samples")
    _common(p)
    p.set_defaults(func=cmd_toygen)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("magnet: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"magnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ckpt.CheckpointError as exc:
        print(f"magnet: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_STATE
    except (InputError, FormatError, MissingDateError, UnknownTypeError, LexError,
            ParseError, UnicodeDecodeError, FileNotFoundError, IsADirectoryError) as exc:
        msg = exc.args[0] if isinstance(exc, UnknownTypeError) and exc.args else exc
        print(f"magnet: input error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
