"""Control flow, data flow and natural-code-sequence edges over a parsed function."""
from .graph import CodeEdge, CodeGraph, CodeNode, EdgeKind
from .lexer import tokenize
from .nodetypes import SYNTHETIC_TYPES
from .parser import parse_function

# Statement nodes that appear as CFG vertices. Compound and else wrappers do not.
CFG_STATEMENTS = frozenset({
    "IdentifierDeclStatement", "ExpressionStatement", "ReturnStatement", "BreakStatement",
    "ContinueStatement", "IfStatement", "WhileStatement", "ForStatement",
})


def entry_exit_ids(ast):
    n = len(ast.nodes)
    return n, n + 1


def build_cfg(ast):
    """Intra-procedural CFG over statement nodes plus synthetic entry/exit.

    Returns CFG edges in discovery order with duplicates removed.
    """
    entry, exit_ = entry_exit_ids(ast)
    nodes = ast.nodes
    edges = []
    seen = set()

    def add(src, dst):
        if (src, dst) not in seen:
            seen.add((src, dst))
            edges.append(CodeEdge(src, dst, EdgeKind.CFG))

    def first(sid, follow, loop):
        """Wire statement sid so that it falls through to follow; return its first vertex."""
        n = nodes[sid]
        t = n.raw_type
        if t == "CompoundStatement":
            f = follow
            for child in reversed(n.children):
                f = first(child, f, loop)
            return f
        if t in ("ExpressionStatement", "IdentifierDeclStatement"):
            add(sid, follow)
            return sid
        if t == "ReturnStatement":
            add(sid, exit_)
            return sid
        if t == "BreakStatement":
            add(sid, loop[0] if loop else follow)
            return sid
        if t == "ContinueStatement":
            add(sid, loop[1] if loop else follow)
            return sid
        if t == "IfStatement":
            then_id = n.children[1]
            then_first = first(then_id, follow, loop)
            if len(n.children) > 2:
                else_body = nodes[n.children[2]].children[0]
                else_first = first(else_body, follow, loop)
            else:
                else_first = follow
            add(sid, then_first)
            add(sid, else_first)
            return sid
        if t == "WhileStatement":
            body_first = first(n.children[1], sid, (follow, sid))
            add(sid, body_first)
            add(sid, follow)
            return sid
        if t == "ForStatement":
            init = cond = inc = None
            for c in n.children[:-1]:
                ct = nodes[c].raw_type
                if ct == "ForInit":
                    init = nodes[c].children[0]
                elif ct == "Condition":
                    cond = c
                else:
                    inc = c
            cont = inc if inc is not None else sid
            body_first = first(n.children[-1], cont, (follow, cont))
            if inc is not None:
                add(inc, sid)
            add(sid, body_first)
            if cond is not None:
                add(sid, follow)
            if init is not None:
                add(init, sid)
                return init
            return sid
        raise AssertionError(f"unexpected statement type {t}")

    body = ast.root.children[-1]
    add(entry, first(body, exit_, None))
    return edges


def defs_uses(ast, sid):
    """(defs, uses) variable-name sets for a CFG statement vertex."""
    n = ast.nodes[sid]
    nodes = ast.nodes
    defs, uses = set(), set()

    def expr(eid):
        e = nodes[eid]
        if e.raw_type == "AssignmentExpression":
            lhs, rhs = e.children
            if nodes[lhs].raw_type == "Identifier":
                defs.add(nodes[lhs].value)
                if e.op != "=":
                    uses.add(nodes[lhs].value)
            else:
                # element or pointer stores: no alias analysis, treat as uses
                expr(lhs)
            expr(rhs)
            return
        if e.raw_type == "UnaryExpression":
            target = [c for c in e.children if nodes[c].raw_type != "IncDec"][0]
            if nodes[target].raw_type == "Identifier":
                defs.add(nodes[target].value)
                uses.add(nodes[target].value)
            else:
                expr(target)
            return
        if e.raw_type == "Identifier":
            uses.add(e.value)
            return
        if e.raw_type == "Callee":
            if not (len(e.children) == 1 and nodes[e.children[0]].raw_type == "Identifier"):
                for c in e.children:
                    expr(c)
            return
        for c in e.children:
            expr(c)

    t = n.raw_type
    if t == "IdentifierDeclStatement":
        for d in n.children:
            decl = nodes[d]
            name = nodes[decl.children[1]].value
            for c in decl.children[2:]:
                expr(c)
            # every declarator defines its variable, initialized or not
            defs.add(name)
    elif t in ("ExpressionStatement", "ReturnStatement"):
        for c in n.children:
            expr(c)
    elif t in ("IfStatement", "WhileStatement", "ForStatement"):
        for c in n.children:
            if nodes[c].raw_type == "Condition":
                expr(c)
    return defs, uses


def build_dfg(ast, cfg):
    """Def-use edges between statement vertices via reaching definitions along the CFG."""
    entry, exit_ = entry_exit_ids(ast)
    succ, pred = {}, {}
    vertices = []
    for e in cfg:
        for v in (e.src, e.dst):
            if v not in succ:
                succ[v], pred[v] = [], []
                vertices.append(v)
        succ[e.src].append(e.dst)
        pred[e.dst].append(e.src)
    vertices.sort()

    du = {}
    for v in vertices:
        du[v] = defs_uses(ast, v) if v not in (entry, exit_) else (set(), set())

    defs_of = {}
    for v in vertices:
        for name in du[v][0]:
            defs_of.setdefault(name, set()).add((v, name))

    gen = {v: {(v, name) for name in du[v][0]} for v in vertices}
    kill = {v: set().union(*(defs_of[name] for name in du[v][0])) - gen[v] if du[v][0] else set()
            for v in vertices}
    reach_in = {v: set() for v in vertices}
    reach_out = {v: set(gen[v]) for v in vertices}

    work = list(vertices)
    queued = set(work)
    while work:
        v = work.pop(0)
        queued.discard(v)
        new_in = set().union(*(reach_out[p] for p in pred[v])) if pred[v] else set()
        reach_in[v] = new_in
        new_out = gen[v] | (new_in - kill[v])
        if new_out != reach_out[v]:
            reach_out[v] = new_out
            for s in succ[v]:
                if s not in queued:
                    queued.add(s)
                    work.append(s)

    pairs = set()
    for v in vertices:
        uses = du[v][1]
        for d, name in reach_in[v]:
            if name in uses:
                pairs.add((d, v))
    return [CodeEdge(s, d, EdgeKind.DFG) for s, d in sorted(pairs)]


def ncs_leaves(ast):
    leaves = [n for n in ast.nodes if not n.children and n.span is not None]
    leaves.sort(key=lambda n: (n.span[0], n.id))
    return leaves


def build_ncs(ast):
    """Chain AST leaves in ascending first-token order."""
    leaves = ncs_leaves(ast)
    return [CodeEdge(a.id, b.id, EdgeKind.NCS) for a, b in zip(leaves, leaves[1:])]


def ast_edges(ast):
    return [CodeEdge(n.id, c, EdgeKind.AST) for n in ast.nodes for c in n.children]


def to_graph(ast):
    entry, exit_ = entry_exit_ids(ast)
    nodes = [CodeNode(n.id, n.raw_type, n.value, n.span) for n in ast.nodes]
    nodes.append(CodeNode(entry, "CFGEntryNode", "", None))
    nodes.append(CodeNode(exit_, "CFGExitNode", "", None))
    cfg = build_cfg(ast)
    edges = (ast_edges(ast)
             + sorted(cfg, key=lambda e: (e.src, e.dst))
             + build_dfg(ast, cfg)
             + build_ncs(ast))
    return CodeGraph(ast.function_name, nodes, edges)


def lower(source):
    """Lower one C function to a CodeGraph with AST, CFG, DFG and NCS edges.

    Raises LexError / ParseError without producing a partial graph.
    """
    return to_graph(parse_function(tokenize(source)))


def is_synthetic(node):
    return node.raw_type in SYNTHETIC_TYPES
