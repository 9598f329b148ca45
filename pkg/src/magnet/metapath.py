"""Node-type granularities and (source, edge, target) meta-path annotation."""
import itertools
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

from .cparse import CodeGraph, EdgeKind
from .cparse.nodetypes import EXPRESSION_TYPES, STATEMENT_TYPES, SYMBOL_TYPES


class Granularity(str, Enum):
    STATEMENT = "Statement"
    EXPRESSION = "Expression"
    SYMBOL = "Symbol"

    @property
    def short(self):
        return {"Statement": "St", "Expression": "Ex", "Symbol": "Sy"}[self.value]

    @property
    def index(self):
        return _GRAN_INDEX[self]


GRANULARITIES = (Granularity.STATEMENT, Granularity.EXPRESSION, Granularity.SYMBOL)
EDGE_KINDS = (EdgeKind.AST, EdgeKind.CFG, EdgeKind.DFG, EdgeKind.NCS)
_GRAN_INDEX = {g: i for i, g in enumerate(GRANULARITIES)}
EDGE_INDEX = {k: i for i, k in enumerate(EDGE_KINDS)}

_GROUPS = {}
for _names, _gran in ((STATEMENT_TYPES, Granularity.STATEMENT),
                      (EXPRESSION_TYPES, Granularity.EXPRESSION),
                      (SYMBOL_TYPES, Granularity.SYMBOL)):
    for _n in _names:
        _GROUPS[_n] = _gran


class UnknownTypeError(KeyError):
    pass


def granularity_of(raw_type):
    try:
        return _GROUPS[raw_type]
    except KeyError:
        raise UnknownTypeError(f"unknown node type {raw_type!r}") from None


def grouping():
    """Granularity -> tuple of raw type names."""
    return {g: tuple(n for n, gg in _GROUPS.items() if gg is g) for g in GRANULARITIES}


class MetaPathType(NamedTuple):
    src: Granularity
    edge: EdgeKind
    dst: Granularity

    def label(self, numeric=True):
        """Short label such as ``(St,0,Ex)``; numeric edge codes follow the AST/DFG/CFG/NCS=0..3 convention."""
        e = self.edge.code if numeric else self.edge.value
        return f"({self.src.short},{e},{self.dst.short})"


ALL_METAPATH_TYPES = tuple(MetaPathType(s, e, d)
                           for s, e, d in itertools.product(GRANULARITIES, EDGE_KINDS, GRANULARITIES))


def max_metapath_types(t_n, t_e):
    if t_n < 1 or t_e < 1:
        raise ValueError("type counts must be positive")
    return t_n * t_n * t_e


@dataclass
class MetaPathGraph:
    graph: CodeGraph
    node_gran: dict  # node id -> Granularity
    edge_types: list  # parallel to graph.edges
    active_types: frozenset = None  # None until a filter is applied

    @property
    def edges(self):
        return self.graph.edges


def annotate(g):
    node_gran = {n.id: granularity_of(n.raw_type) for n in g.nodes}
    types = [MetaPathType(node_gran[e.src], e.kind, node_gran[e.dst]) for e in g.edges]
    return MetaPathGraph(g, node_gran, types)


@dataclass
class MetaPathStats:
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self):
        return sum(self.counts.values())

    def merge(self, other):
        return MetaPathStats(self.counts + other.counts)

    def rows(self):
        """(type, count) for all 36 types, most frequent first, ties in canonical order."""
        order = {t: i for i, t in enumerate(ALL_METAPATH_TYPES)}
        return sorted(((t, self.counts.get(t, 0)) for t in ALL_METAPATH_TYPES),
                      key=lambda tc: (-tc[1], order[tc[0]]))


def collect_stats(corpus):
    counts = Counter()
    for mg in corpus:
        counts.update(mg.edge_types)
    return MetaPathStats(counts)


def select_active(stats, min_count=3):
    if min_count < 0:
        raise ValueError("min_count must be non-negative")
    return frozenset(t for t in ALL_METAPATH_TYPES if stats.counts.get(t, 0) >= min_count)


def apply_filter(mg, active):
    active = frozenset(active)
    keep = [i for i, t in enumerate(mg.edge_types) if t in active]
    g = CodeGraph(mg.graph.function_name, list(mg.graph.nodes), [mg.graph.edges[i] for i in keep])
    return MetaPathGraph(g, dict(mg.node_gran), [mg.edge_types[i] for i in keep], active)


def type_from_label(label):
    """Inverse of MetaPathType.label(numeric=False), e.g. ``(St,AST,Ex)``."""
    by_short = {g.short: g for g in GRANULARITIES}
    s, e, d = label.strip("()").split(",")
    return MetaPathType(by_short[s], EdgeKind(e), by_short[d])
