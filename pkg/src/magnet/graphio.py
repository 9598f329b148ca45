"""On-disk formats: graph documents, sample manifests and split files."""
import datetime as dt
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cparse import CodeEdge, CodeGraph, CodeNode, EdgeKind, NODE_TYPES

log = logging.getLogger(__name__)

GRAPH_VERSION = "magnet-csg/1"
GRAPH_SUFFIX = ".csg.json"
SPLITS = ("train", "valid", "test")


class FormatError(ValueError):
    pass


class MissingDateError(ValueError):
    def __init__(self, sample_id):
        super().__init__(f"sample {sample_id!r} has no update_date")
        self.sample_id = sample_id


# -- graph documents ---------------------------------------------------------

def graph_to_document(g):
    nodes = []
    for n in sorted(g.nodes, key=lambda n: n.id):
        d = {"id": n.id, "type": n.raw_type, "value": n.value}
        if n.span is not None:
            d["span"] = [n.span[0], n.span[1]]
        nodes.append(d)
    edges = [{"src": e.src, "dst": e.dst, "etype": e.kind.value} for e in g.edges]
    return {"version": GRAPH_VERSION, "function_name": g.function_name,
            "nodes": nodes, "edges": edges}


def dumps_graph(g):
    return json.dumps(graph_to_document(g), sort_keys=True, separators=(",", ":")) + "\n"


def write_graph(g, path=None):
    """Serialize g canonically; write to path when given, return the text either way."""
    text = dumps_graph(g)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def document_to_graph(doc):
    if not isinstance(doc, dict):
        raise FormatError("graph document must be an object")
    if doc.get("version") != GRAPH_VERSION:
        raise FormatError(f"unsupported graph version {doc.get('version')!r}")
    for key in ("function_name", "nodes", "edges"):
        if key not in doc:
            raise FormatError(f"missing field {key!r}")
    nodes, ids = [], set()
    for i, nd in enumerate(doc["nodes"]):
        try:
            nid, ntype = nd["id"], nd["type"]
        except (KeyError, TypeError):
            raise FormatError(f"node #{i}: missing id or type") from None
        if not isinstance(nid, int) or isinstance(nid, bool):
            raise FormatError(f"node #{i}: id must be an integer")
        if nid in ids:
            raise FormatError(f"duplicate node id {nid}")
        if ntype not in NODE_TYPES:
            raise FormatError(f"node {nid}: unknown node type {ntype!r}")
        span = nd.get("span")
        if span is not None:
            if not (isinstance(span, list) and len(span) == 2 and span[0] <= span[1]):
                raise FormatError(f"node {nid}: malformed span {span!r}")
            span = (int(span[0]), int(span[1]))
        ids.add(nid)
        nodes.append(CodeNode(nid, ntype, str(nd.get("value", "")), span))
    edges = []
    for i, ed in enumerate(doc["edges"]):
        try:
            src, dst, etype = ed["src"], ed["dst"], ed["etype"]
        except (KeyError, TypeError):
            raise FormatError(f"edge #{i}: missing src, dst or etype") from None
        try:
            kind = EdgeKind(etype)
        except ValueError:
            raise FormatError(f"edge #{i}: unknown edge type {etype!r}") from None
        if src not in ids or dst not in ids:
            raise FormatError(f"edge #{i}: dangling endpoint ({src} -> {dst})")
        edges.append(CodeEdge(src, dst, kind))
    nodes.sort(key=lambda n: n.id)
    return CodeGraph(str(doc["function_name"]), nodes, edges)


def read_graph(doc_or_path):
    """Load a CodeGraph from a document dict, a JSON string, or a file path."""
    if isinstance(doc_or_path, dict):
        return document_to_graph(doc_or_path)
    if isinstance(doc_or_path, str) and doc_or_path.lstrip().startswith("{"):
        text = doc_or_path
    else:
        text = Path(doc_or_path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
    return document_to_graph(doc)


# -- manifests -----------------------------------------------------------------

@dataclass
class SampleRecord:
    id: str
    label: int
    code: str = None
    graph: str = None
    update_date: dt.date = None
    split: str = None

    def to_json(self):
        d = {"id": self.id, "label": self.label}
        if self.code is not None:
            d["code"] = self.code
        if self.graph is not None:
            d["graph"] = self.graph
        if self.update_date is not None:
            d["update_date"] = self.update_date.isoformat()
        if self.split is not None:
            d["split"] = self.split
        return d


def _record(obj, lineno):
    def fail(msg):
        return FormatError(f"line {lineno}: {msg}")

    if not isinstance(obj, dict):
        raise fail("record must be an object")
    if "id" not in obj:
        raise fail("missing id")
    label = obj.get("label")
    if label not in (0, 1) or isinstance(label, bool):
        raise fail(f"label must be 0 or 1, got {label!r}")
    code, graph = obj.get("code"), obj.get("graph")
    if (code is None) == (graph is None):
        raise fail("exactly one of 'code' or 'graph' is required")
    date = obj.get("update_date")
    if date is not None:
        try:
            date = dt.date.fromisoformat(str(date)[:10])
        except ValueError:
            raise fail(f"bad update_date {date!r}") from None
    split = obj.get("split")
    if split is not None and split not in SPLITS:
        raise fail(f"bad split {split!r}")
    return SampleRecord(str(obj["id"]), label, code, graph, date, split)


def read_manifest(path):
    records, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            rec = _record(obj, lineno)
            if rec.id in seen:
                raise FormatError(f"line {lineno}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def write_manifest(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def load_sample_graph(record, base_dir="."):
    """CodeGraph for a record: lowered from inline code or read from its graph file."""
    if record.code is not None:
        from .cparse import lower
        return lower(record.code)
    path = Path(record.graph)
    if not path.is_absolute():
        path = Path(base_dir) / path
    return read_graph(path)


# -- splits --------------------------------------------------------------------

def split_random(records, ratios=(8, 1, 1), seed=0):
    """Seeded disjoint train/valid/test partition.

    valid and test sizes are floored; train takes the remainder.
    """
    n = len(records)
    if n < 3:
        raise ValueError("need at least 3 samples to split")
    total = sum(ratios)
    n_valid = n * ratios[1] // total
    n_test = n * ratios[2] // total
    n_train = n - n_valid - n_test
    order = np.random.default_rng(seed).permutation(n)
    assign = {}
    for rank, i in enumerate(order):
        split = "train" if rank < n_train else "valid" if rank < n_train + n_valid else "test"
        assign[records[i].id] = split
    return {r.id: assign[r.id] for r in records}


def split_by_time(records, valid_cutoff, test_cutoff):
    """train: date < valid_cutoff; valid: [valid_cutoff, test_cutoff); test: >= test_cutoff."""
    valid_cutoff = _as_date(valid_cutoff)
    test_cutoff = _as_date(test_cutoff)
    assign = {}
    for r in records:
        if r.update_date is None:
            raise MissingDateError(r.id)
        if r.update_date < valid_cutoff:
            assign[r.id] = "train"
        elif r.update_date < test_cutoff:
            assign[r.id] = "valid"
        else:
            assign[r.id] = "test"
    for name in ("valid", "test"):
        if name not in assign.values():
            log.warning("time split leaves the %s set empty", name)
    return assign


def split_from_manifest(records):
    missing = [r.id for r in records if r.split is None]
    if missing:
        raise FormatError(f"records without a split field: {missing[:5]}")
    return {r.id: r.split for r in records}


def _as_date(d):
    return d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d))


def splits_path(manifest_path):
    p = Path(manifest_path)
    name = p.name[:-len(".jsonl")] if p.name.endswith(".jsonl") else p.stem
    return p.with_name(name + ".splits.json")


def write_splits(assign, path):
    Path(path).write_text(json.dumps(assign, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def read_splits(path):
    try:
        assign = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid split file: {exc}") from None
    bad = {v for v in assign.values() if v not in SPLITS}
    if bad:
        raise FormatError(f"unknown split names {sorted(bad)}")
    return assign


def select(records, assign, split):
    return [r for r in records if assign.get(r.id) == split]
