from dataclasses import dataclass, field
from enum import Enum


class EdgeKind(str, Enum):
    AST = "AST"
    CFG = "CFG"
    DFG = "DFG"
    NCS = "NCS"

    @property
    def code(self):
        """Numeric edge code used on meta-path distribution plots."""
        return _EDGE_CODES[self]


_EDGE_CODES = {EdgeKind.AST: 0, EdgeKind.DFG: 1, EdgeKind.CFG: 2, EdgeKind.NCS: 3}


@dataclass(frozen=True)
class CodeNode:
    id: int
    raw_type: str
    value: str = ""
    span: tuple = None  # inclusive token range; None for synthetic nodes


@dataclass(frozen=True)
class CodeEdge:
    src: int
    dst: int
    kind: EdgeKind


@dataclass
class CodeGraph:
    function_name: str
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)

    def node(self, node_id):
        return self._index()[node_id]

    def _index(self):
        return {n.id: n for n in self.nodes}

    def edges_of(self, kind):
        kind = EdgeKind(kind)
        return [e for e in self.edges if e.kind is kind]

    def __eq__(self, other):
        if not isinstance(other, CodeGraph):
            return NotImplemented
        return (self.function_name == other.function_name
                and sorted(self.nodes, key=lambda n: n.id) == sorted(other.nodes, key=lambda n: n.id)
                and sorted(self.edges, key=_edge_key) == sorted(other.edges, key=_edge_key))


def _edge_key(e):
    return (e.kind.value, e.src, e.dst)
