"""Statement-level attention heatmaps."""
import html
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .cparse import parse_function, to_graph, tokenize
from .cparse.flow import CFG_STATEMENTS
from .metapath import annotate, apply_filter
from .mhagnn import collate, featurize, forward

# (lower bound, name, ANSI colour, HTML colour), hottest first
BANDS = (
    (0.75, "red", "\x1b[41;97m", "#e0443e"),
    (0.5, "orange", "\x1b[48;5;208;30m", "#f39c3d"),
    (0.25, "yellow", "\x1b[43;30m", "#f4d35e"),
    (0.0, "green", "\x1b[42;30m", "#8fd18a"),
)
ANSI_RESET = "\x1b[0m"


def band(weight):
    for lo, name, ansi, color in BANDS:
        if weight >= lo:
            return name, ansi, color
    return BANDS[-1][1:]


@dataclass
class StatementScore:
    node_id: int
    raw_type: str
    line: int
    text: str
    weight: float


@dataclass
class ExplainReport:
    function_name: str
    source_lines: list
    statements: list = field(default_factory=list)

    @property
    def line_weights(self):
        """Line number -> heaviest statement starting on that line."""
        out = {}
        for s in self.statements:
            out[s.line] = max(out.get(s.line, 0.0), s.weight)
        return out

    def ranked(self):
        return sorted(self.statements, key=lambda s: (-s.weight, s.line, s.node_id))

    def to_rows(self):
        return [(s.line, s.raw_type, round(s.weight, 6), s.text) for s in self.statements]

    def render_ansi(self):
        weights = self.line_weights
        out = []
        for i, text in enumerate(self.source_lines, 1):
            if i in weights:
                ansi = band(weights[i])[1]
                out.append(f"{weights[i]:5.2f} {ansi}{text}{ANSI_RESET}")
            else:
                out.append(f"      {text}")
        return "\n".join(out) + "\n"

    def render_html(self):
        weights = self.line_weights
        rows = []
        for i, text in enumerate(self.source_lines, 1):
            code = html.escape(text) or "&nbsp;"
            if i in weights:
                name, _, color = band(weights[i])
                rows.append(f'<tr class="{name}"><td class="w">{weights[i]:.2f}</td>'
                            f'<td class="n">{i}</td>'
                            f'<td style="background:{color}"><code>{code}</code></td></tr>')
            else:
                rows.append(f'<tr><td class="w"></td><td class="n">{i}</td>'
                            f'<td><code>{code}</code></td></tr>')
        legend = " ".join(f'<span style="background:{c};padding:0 6px">{n} &ge; {lo:.2f}</span>'
                          for lo, n, _, c in BANDS)
        title = html.escape(self.function_name)
        return ("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
                f"<title>attention: {title}</title><style>"
                "body{font-family:sans-serif}table{border-collapse:collapse}"
                "td{padding:0 6px;white-space:pre}td.w,td.n{color:#777;text-align:right}"
                "code{font-family:monospace}</style></head><body>"
                f"<h3>{title}</h3><p>{legend}</p><table>\n" + "\n".join(rows)
                + "\n</table></body></html>\n")


def statement_mass(attention, src, n_nodes):
    """Attention a node attracts as a message source, summed over heads and edges."""
    mass = np.zeros(n_nodes)
    np.add.at(mass, src, attention.sum(axis=1))
    return mass


def explain(ck, source):
    """Final-layer attention per statement of one function, max-normalised to 1."""
    tokens = tokenize(source)
    graph = to_graph(parse_function(tokens))
    mg = apply_filter(annotate(graph), ck.active_metapaths)
    g = featurize(mg, ck.embedding)
    batch = collate([g])
    trace = {}
    with T.precision(ck.model_config.precision), T.no_grad():
        forward(ck.params, ck.model_config, batch, trace)
    mass = statement_mass(trace["attention"][-1], batch.src, batch.n_nodes)
    row_of = {int(n): i for i, n in enumerate(g.node_ids)}
    stmts = [n for n in graph.nodes if n.raw_type in CFG_STATEMENTS]
    raw = np.array([mass[row_of[n.id]] for n in stmts])
    peak = raw.max() if len(raw) else 0.0
    weights = raw / peak if peak > 0 else np.ones(len(raw))
    lines = source.splitlines()
    report = ExplainReport(graph.function_name, lines)
    for n, w in zip(stmts, weights):
        first = tokens[n.span[0]]
        report.statements.append(StatementScore(n.id, n.raw_type, first.line,
                                                lines[first.line - 1].strip(), float(w)))
    report.statements.sort(key=lambda s: (s.line, s.node_id))
    return report
