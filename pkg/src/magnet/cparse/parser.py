"""Recursive-descent parser for a restricted subset of C function definitions.

The tree uses CPG-style node type names so that lowered graphs are
interchangeable with graphs produced by external code-property-graph tools.
"""
from dataclasses import dataclass, field

from .lexer import tokenize

TYPE_KEYWORDS = frozenset({
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned",
})
TYPE_QUALIFIERS = frozenset({"const", "volatile", "static", "register", "extern", "auto"})
# Common library typedef names treated as builtin types (user typedefs are not supported).
KNOWN_TYPE_NAMES = frozenset({
    "size_t", "ssize_t", "bool", "_Bool", "ptrdiff_t", "intptr_t", "uintptr_t",
    "int8_t", "int16_t", "int32_t", "int64_t", "uint8_t", "uint16_t", "uint32_t", "uint64_t",
})
UNSUPPORTED_KEYWORDS = frozenset({
    "switch", "case", "default", "goto", "do", "struct", "union", "enum", "typedef",
})

ASSIGN_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="})

# (operators, node type), loosest binding first
BINARY_LEVELS = (
    ({"||"}, "OrExpression"),
    ({"&&"}, "AndExpression"),
    ({"|"}, "InclusiveOrExpression"),
    ({"^"}, "ExclusiveOrExpression"),
    ({"&"}, "BitAndExpression"),
    ({"==", "!="}, "EqualityExpression"),
    ({"<", ">", "<=", ">="}, "RelationalExpression"),
    ({"<<", ">>"}, "ShiftExpression"),
    ({"+", "-"}, "AdditiveExpression"),
    ({"*", "/", "%"}, "MultiplicativeExpression"),
)


class ParseError(ValueError):
    def __init__(self, message, token_index, token_text=None):
        where = f"token {token_index}"
        if token_text is not None:
            where += f" ({token_text!r})"
        super().__init__(f"{message} at {where}")
        self.token_index = token_index
        self.token_text = token_text


@dataclass
class AstNode:
    id: int
    raw_type: str
    value: str
    span: tuple  # inclusive (first, last) token indices
    children: list = field(default_factory=list)
    parent: int = None
    op: str = None  # operator text for operator-bearing expressions


@dataclass
class Ast:
    function_name: str
    tokens: list
    nodes: list  # indexed by id, preorder; nodes[0] is the Function root

    @property
    def root(self):
        return self.nodes[0]

    def walk(self, node_id):
        stack = [node_id]
        while stack:
            n = self.nodes[stack.pop()]
            yield n
            stack.extend(reversed(n.children))


class _Node:
    __slots__ = ("type", "start", "end", "children", "value", "op")

    def __init__(self, type_, start, end, children=(), value=None, op=None):
        self.type = type_
        self.start = start
        self.end = end
        self.children = list(children)
        self.value = value
        self.op = op


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.pos = 0
        # token extent of each expression including enclosing parentheses
        self.extent = {}

    # -- token helpers -------------------------------------------------
    def peek(self, offset=0):
        i = self.pos + offset
        return self.toks[i] if i < len(self.toks) else None

    def at(self, text, offset=0):
        t = self.peek(offset)
        return t is not None and t.text == text

    def error(self, message):
        t = self.peek()
        if t is None:
            return ParseError(message + " (unexpected end of input)", len(self.toks))
        return ParseError(message, t.index, t.text)

    def expect(self, text):
        t = self.peek()
        if t is None or t.text != text:
            raise self.error(f"expected {text!r}")
        self.pos += 1
        return t

    def text(self, start, end):
        return " ".join(t.text for t in self.toks[start:end + 1])

    def is_type_start(self, offset=0):
        t = self.peek(offset)
        if t is None:
            return False
        if t.text in TYPE_KEYWORDS or t.text in TYPE_QUALIFIERS:
            return True
        return t.kind == "identifier" and t.text in KNOWN_TYPE_NAMES

    def check_supported(self):
        t = self.peek()
        if t is None:
            return
        if t.text in UNSUPPORTED_KEYWORDS:
            raise self.error(f"unsupported construct {t.text!r}")
        if t.text == "#":
            raise self.error("preprocessor directives are not supported")

    # -- declarations ----------------------------------------------------
    def type_spec(self):
        start = self.pos
        while self.is_type_start():
            self.pos += 1
        if self.pos == start:
            self.check_supported()
            raise self.error("expected type")
        return start, self.pos - 1

    def pointer_stars(self):
        n = 0
        while self.at("*"):
            self.pos += 1
            n += 1
        return n

    def identifier(self):
        t = self.peek()
        if t is None or t.kind != "identifier":
            self.check_supported()
            raise self.error("expected identifier")
        self.pos += 1
        return _Node("Identifier", t.index, t.index, value=t.text)

    def function(self):
        self.check_supported()
        ts, te = self.type_spec()
        stars = self.pointer_stars()
        ret_value = self.text(ts, te) + " *" * stars
        ret = _Node("ReturnType", ts, self.pos - 1, value=ret_value)
        name = self.identifier()
        lp = self.expect("(").index
        params = []
        if self.at("void") and self.at(")", 1):
            self.pos += 1
        elif not self.at(")"):
            while True:
                params.append(self.parameter())
                if self.at(","):
                    self.pos += 1
                    continue
                break
        rp = self.expect(")").index
        plist = _Node("ParameterList", lp, rp, params, value=self.text(lp + 1, rp - 1))
        body = self.compound()
        if self.peek() is not None:
            raise self.error("trailing tokens after function body")
        return _Node("Function", ts, body.end, [ret, name, plist, body], value=name.value)

    def parameter(self):
        ts, te = self.type_spec()
        stars = self.pointer_stars()
        name = self.identifier()
        suffix = ""
        if self.at("["):
            self.pos += 1
            self.expect("]")
            suffix = " [ ]"
        ptype = _Node("ParameterType", ts, te,
                      value=self.text(ts, te) + " *" * stars + suffix)
        return _Node("Parameter", ts, self.pos - 1, [ptype, name], value=self.text(ts, self.pos - 1))

    def declaration(self):
        """Declaration statement; the caller consumes the terminating ';' when needed."""
        ts, te = self.type_spec()
        base = self.text(ts, te)
        decls = []
        while True:
            stars = self.pointer_stars()
            dstart = self.pos
            name = self.identifier()
            children = []
            type_value = base + " *" * stars
            if self.at("["):
                self.pos += 1
                if not self.at("]"):
                    children.append(self.expression())
                self.expect("]")
                type_value += " [ ]"
            init = None
            if self.at("="):
                self.pos += 1
                if self.at("{"):
                    init = self.initializer_list()
                else:
                    init = self.assignment()
            dtype = _Node("IdentifierDeclType", ts, te, value=type_value)
            kids = [dtype, name] + children + ([init] if init is not None else [])
            decl = _Node("IdentifierDecl", dstart, self.pos - 1, kids,
                         value=self.text(dstart, self.pos - 1))
            decls.append(decl)
            if self.at(","):
                self.pos += 1
                continue
            break
        end = self.pos - 1
        return _Node("IdentifierDeclStatement", ts, end, decls, value=self.text(ts, end))

    def initializer_list(self):
        start = self.expect("{").index
        items = []
        while not self.at("}"):
            items.append(self.assignment())
            if self.at(","):
                self.pos += 1
            elif not self.at("}"):
                raise self.error("expected ',' or '}' in initializer list")
        end = self.expect("}").index
        return _Node("InitializerList", start, end, items, value=self.text(start, end))

    # -- statements --------------------------------------------------------
    def compound(self):
        start = self.expect("{").index
        stmts = []
        while not self.at("}"):
            if self.peek() is None:
                raise self.error("unterminated block")
            stmts.append(self.statement())
        end = self.expect("}").index
        return _Node("CompoundStatement", start, end, stmts, value="")

    def statement(self):
        self.check_supported()
        t = self.peek()
        if t is None:
            raise self.error("expected statement")
        if t.text == "{":
            return self.compound()
        if t.text == "if":
            return self.if_statement()
        if t.text == "while":
            return self.while_statement()
        if t.text == "for":
            return self.for_statement()
        if t.text == "return":
            start = t.index
            self.pos += 1
            kids = [] if self.at(";") else [self.expression()]
            end = self.expect(";").index
            return _Node("ReturnStatement", start, end, kids, value=self.text(start, end - 1))
        if t.text in ("break", "continue"):
            self.pos += 1
            end = self.expect(";").index
            kind = "BreakStatement" if t.text == "break" else "ContinueStatement"
            return _Node(kind, t.index, end, value=t.text)
        if t.text == ";":
            raise self.error("empty statements are not supported")
        if self.is_type_start():
            decl = self.declaration()
            end = self.expect(";").index
            decl.end = end
            return decl
        return self.expression_statement()

    def expression_statement(self, terminator=";"):
        expr = self.expression()
        start, last = self.extent[id(expr)]
        if terminator is not None:
            last = self.expect(terminator).index
            value = self.text(start, last - 1)
        else:
            value = self.text(start, last)
        return _Node("ExpressionStatement", start, last, [expr], value=value)

    def condition(self):
        self.expect("(")
        expr = self.expression()
        self.expect(")")
        s, e = self.extent[id(expr)]
        return _Node("Condition", s, e, [expr], value=self.text(s, e))

    def if_statement(self):
        start = self.expect("if").index
        cond = self.condition()
        header_end = self.pos - 1
        then = self.statement()
        kids = [cond, then]
        end = then.end
        if self.at("else"):
            es = self.expect("else").index
            other = self.statement()
            kids.append(_Node("ElseStatement", es, other.end, [other], value="else"))
            end = other.end
        return _Node("IfStatement", start, end, kids, value=self.text(start, header_end))

    def while_statement(self):
        start = self.expect("while").index
        cond = self.condition()
        header_end = self.pos - 1
        body = self.statement()
        return _Node("WhileStatement", start, body.end, [cond, body],
                     value=self.text(start, header_end))

    def for_statement(self):
        start = self.expect("for").index
        self.expect("(")
        kids = []
        if not self.at(";"):
            istart = self.pos
            if self.is_type_start():
                init = self.declaration()
            else:
                init = self.expression_statement(terminator=None)
            kids.append(_Node("ForInit", istart, self.pos - 1, [init],
                              value=self.text(istart, self.pos - 1)))
        self.expect(";")
        if not self.at(";"):
            expr = self.expression()
            s, e = self.extent[id(expr)]
            kids.append(_Node("Condition", s, e, [expr], value=self.text(s, e)))
        self.expect(";")
        if not self.at(")"):
            kids.append(self.expression_statement(terminator=None))
        header_end = self.expect(")").index
        body = self.statement()
        kids.append(body)
        return _Node("ForStatement", start, body.end, kids, value=self.text(start, header_end))

    # -- expressions -------------------------------------------------------
    def mark(self, node, start=None, end=None):
        self.extent[id(node)] = (node.start if start is None else start,
                                 node.end if end is None else end)
        return node

    def span_of(self, node):
        return self.extent[id(node)]

    def expression(self):
        if self.at(","):
            raise self.error("expected expression")
        expr = self.assignment()
        if self.at(","):
            raise self.error("comma operator is not supported")
        return expr

    def assignment(self):
        lhs = self.conditional()
        t = self.peek()
        if t is not None and t.text in ASSIGN_OPS:
            self.pos += 1
            rhs = self.assignment()
            s, e = self.span_of(lhs)[0], self.span_of(rhs)[1]
            node = _Node("AssignmentExpression", s, e, [lhs, rhs], value=self.text(s, e), op=t.text)
            return self.mark(node)
        return lhs

    def conditional(self):
        cond = self.binary(0)
        if self.at("?"):
            self.pos += 1
            a = self.expression()
            self.expect(":")
            b = self.conditional()
            s, e = self.span_of(cond)[0], self.span_of(b)[1]
            return self.mark(_Node("ConditionalExpression", s, e, [cond, a, b],
                                   value=self.text(s, e), op="?:"))
        return cond

    def binary(self, level):
        if level == len(BINARY_LEVELS):
            return self.cast()
        ops, kind = BINARY_LEVELS[level]
        left = self.binary(level + 1)
        while self.peek() is not None and self.peek().text in ops:
            op = self.peek().text
            self.pos += 1
            right = self.binary(level + 1)
            s, e = self.span_of(left)[0], self.span_of(right)[1]
            left = self.mark(_Node(kind, s, e, [left, right], value=self.text(s, e), op=op))
        return left

    def cast(self):
        if self.at("(") and self.is_type_start(1):
            start = self.pos
            self.pos += 1
            ts, _ = self.type_spec()
            self.pointer_stars()
            te = self.pos - 1
            self.expect(")")
            target = _Node("CastTarget", ts, te, value=self.text(ts, te))
            operand = self.cast()
            e = self.span_of(operand)[1]
            return self.mark(_Node("CastExpression", start, e, [target, operand],
                                   value=self.text(start, e)))
        return self.unary()

    def unary(self):
        t = self.peek()
        if t is None:
            raise self.error("expected expression")
        if t.text in ("++", "--"):
            self.pos += 1
            operand = self.unary()
            e = self.span_of(operand)[1]
            incdec = _Node("IncDec", t.index, t.index, value=t.text)
            return self.mark(_Node("UnaryExpression", t.index, e, [incdec, operand],
                                   value=self.text(t.index, e), op=t.text))
        if t.text in ("-", "+", "!", "~", "*", "&"):
            self.pos += 1
            operand = self.cast()
            e = self.span_of(operand)[1]
            op_node = _Node("UnaryOperator", t.index, t.index, value=t.text)
            return self.mark(_Node("UnaryOperationExpression", t.index, e, [op_node, operand],
                                   value=self.text(t.index, e), op=t.text))
        if t.text == "sizeof":
            self.pos += 1
            kw = _Node("Sizeof", t.index, t.index, value="sizeof")
            if self.at("(") and self.is_type_start(1):
                self.pos += 1
                ts, _ = self.type_spec()
                self.pointer_stars()
                te = self.pos - 1
                e = self.expect(")").index
                operand = _Node("SizeofOperand", ts, te, value=self.text(ts, te))
            else:
                inner = self.unary()
                s, e = self.span_of(inner)
                operand = _Node("SizeofOperand", s, e, [inner], value=self.text(s, e))
            return self.mark(_Node("SizeofExpression", t.index, e, [kw, operand],
                                   value=self.text(t.index, e)))
        return self.postfix()

    def postfix(self):
        node = self.primary()
        while True:
            t = self.peek()
            if t is None:
                return node
            s = self.span_of(node)[0]
            if t.text == "[":
                self.pos += 1
                index = self.expression()
                e = self.expect("]").index
                node = self.mark(_Node("ArrayIndexing", s, e, [node, index], value=self.text(s, e)))
            elif t.text == "(":
                ns, ne = self.span_of(node)
                callee = _Node("Callee", ns, ne, [node], value=self.text(ns, ne))
                lp = self.expect("(").index
                args = []
                while not self.at(")"):
                    arg = self.assignment()
                    a_s, a_e = self.span_of(arg)
                    args.append(_Node("Argument", a_s, a_e, [arg], value=self.text(a_s, a_e)))
                    if self.at(","):
                        self.pos += 1
                    elif not self.at(")"):
                        raise self.error("expected ',' or ')' in argument list")
                rp = self.expect(")").index
                alist = _Node("ArgumentList", lp, rp, args, value=self.text(lp + 1, rp - 1))
                node = self.mark(_Node("CallExpression", s, rp, [callee, alist],
                                       value=self.text(s, rp)))
            elif t.text in ("++", "--"):
                self.pos += 1
                incdec = _Node("IncDec", t.index, t.index, value=t.text)
                node = self.mark(_Node("UnaryExpression", s, t.index, [node, incdec],
                                       value=self.text(s, t.index), op=t.text))
            elif t.text in (".", "->"):
                raise self.error("member access is not supported")
            else:
                return node

    def primary(self):
        t = self.peek()
        if t is None:
            raise self.error("expected expression")
        if t.kind == "identifier":
            self.pos += 1
            return self.mark(_Node("Identifier", t.index, t.index, value=t.text))
        if t.kind == "literal":
            self.pos += 1
            return self.mark(_Node("PrimaryExpression", t.index, t.index, value=t.text))
        if t.text == "(":
            lp = t.index
            self.pos += 1
            inner = self.expression()
            rp = self.expect(")").index
            self.extent[id(inner)] = (lp, rp)
            return inner
        self.check_supported()
        raise self.error("expected expression")


def _flatten(root):
    nodes = []

    def visit(n, parent):
        node = AstNode(len(nodes), n.type, n.value if n.value is not None else "",
                       (n.start, n.end), parent=parent, op=n.op)
        nodes.append(node)
        for c in n.children:
            node.children.append(visit(c, node.id))
        return node.id

    # iterative traversal would be needed only for pathological nesting depth
    visit(root, None)
    return nodes


def parse_function(tokens):
    """Parse a token list holding exactly one function definition into an Ast."""
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    if not tokens:
        raise ParseError("no tokens", 0)
    parser = _Parser(tokens)
    root = parser.function()
    nodes = _flatten(root)
    return Ast(function_name=root.value, tokens=list(tokens), nodes=nodes)
