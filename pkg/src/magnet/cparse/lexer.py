import re
from dataclasses import dataclass

KEYWORDS = frozenset({
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "int", "long", "register", "return",
    "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned",
    "void", "volatile", "while",
})

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n\f\v]+)
  | (?P<line_comment>//[^\n]*)
  | (?P<block_comment>/\*.*?\*/)
  | (?P<number>(?:0[xX][0-9a-fA-F]+|\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)[uUlLfF]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<char>'(?:[^'\\\n]|\\.)+')
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><<=|>>=|->|\+\+|--|<<|>>|<=|>=|==|!=|&&|\|\||\+=|-=|\*=|/=|%=|&=|\|=|\^=|[-+*/%<>=!~&|^.])
  | (?P<punct>[(){}\[\];,?:#])
""", re.VERBOSE | re.DOTALL)


class LexError(ValueError):
    def __init__(self, message, line, column):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str  # identifier | keyword | literal | operator | punctuation
    text: str
    index: int
    line: int = 1
    column: int = 1


def _position(source, offset):
    line = source.count("\n", 0, offset) + 1
    column = offset - (source.rfind("\n", 0, offset) + 1) + 1
    return line, column


def tokenize(source):
    """Split C source into tokens, dropping whitespace and comments.

    Raises LexError (with line/column) on bytes outside the supported lexicon
    or when the input holds no tokens at all.
    """
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            line, col = _position(source, pos)
            if source.startswith("/*", pos):
                raise LexError("unterminated comment", line, col)
            raise LexError(f"unrecognized character {source[pos]!r}", line, col)
        group = m.lastgroup
        text = m.group()
        if group not in ("ws", "line_comment", "block_comment"):
            if group == "ident":
                kind = "keyword" if text in KEYWORDS else "identifier"
            elif group in ("number", "string", "char"):
                kind = "literal"
            elif group == "punct":
                kind = "punctuation"
            else:
                kind = "operator"
            line, col = _position(source, pos)
            tokens.append(Token(kind, text, len(tokens), line, col))
        pos = m.end()
    if not tokens:
        raise LexError("no function present", 1, 1)
    return tokens
