"""C frontend: lower a single function into a heterogeneous code structure graph."""
from .flow import build_cfg, build_dfg, build_ncs, lower, to_graph
from .graph import CodeEdge, CodeGraph, CodeNode, EdgeKind
from .lexer import LexError, Token, tokenize
from .nodetypes import (EXPRESSION_TYPES, GENERIC_TYPES, NODE_TYPES, STATEMENT_TYPES,
                        SYMBOL_TYPES, SYNTHETIC_TYPES)
from .parser import Ast, AstNode, ParseError, parse_function

__all__ = [
    "Ast", "AstNode", "CodeEdge", "CodeGraph", "CodeNode", "EdgeKind", "LexError", "ParseError",
    "Token", "build_cfg", "build_dfg", "build_ncs", "lower", "parse_function", "to_graph",
    "tokenize", "NODE_TYPES", "STATEMENT_TYPES", "EXPRESSION_TYPES", "SYMBOL_TYPES",
    "GENERIC_TYPES", "SYNTHETIC_TYPES",
]
