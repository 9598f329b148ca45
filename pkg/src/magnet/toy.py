"""Synthetic planted-vulnerability corpus.

Every sample embeds one guarded region: a hazardous statement and a benign
counter update, with a guard ``if (...) { ... }`` that checks the hazard's
operands.  In a clean sample the hazard sits inside the guard; in the
vulnerable twin the two statements swap places so the hazard runs unguarded.
Twins share every other line, so the label is decided by structure alone.
"""
from dataclasses import dataclass

import numpy as np

from .graphio import SampleRecord

_NAMES = ["len", "size", "count", "idx", "pos", "off", "total", "acc", "val", "tmp", "res",
          "step", "limit", "width", "height", "depth", "flags", "mode", "key", "cur", "next",
          "prev", "base", "span", "num", "sum", "ret", "err", "code", "level"]
_FUNCS = ["process", "handle", "parse", "decode", "update", "compute", "read_block",
          "write_block", "scan", "fill", "copy_data", "check_input", "load", "store", "pack"]
_CALLEES = ["log_event", "notify", "reset_state", "emit", "trace_value"]


@dataclass
class ToySpec:
    n: int = 500
    vulnerable_fraction: float = 0.5
    seed: int = 0


@dataclass
class ToySample:
    record: SampleRecord
    planted_line: int  # 1-based source line of the hazardous statement
    pair: int  # twins share a pair index


def _hazard(rng, names):
    """(guard condition, hazardous statement, hazard kind) drawn from the pattern family."""
    kind = rng.integers(4)
    a, b, c, d = names[:4]
    lim = int(rng.choice([64, 100, 255, 1000, 4096]))
    if kind == 0:
        return f"{a} < {lim} && {b} < {lim} && {c} < {lim}", f"short {d} = {a} + {b} + {c};", "overflow"
    if kind == 1:
        return f"{a} >= 0 && {a} < {b}", f"{c} = buf[{a}];", "index"
    if kind == 2:
        return f"ptr != 0", f"*ptr = {a};", "deref"
    return f"{a} <= {b}", f"memcpy(dst, src, {a});", "copy"


def _filler(rng, names):
    a, b, c = (names[i] for i in rng.choice(len(names), size=3, replace=False))
    k = int(rng.integers(1, 9))
    choice = rng.integers(7)
    if choice == 0:
        return [f"{a} = {b} + {k};"]
    if choice == 1:
        return [f"{a} = {b} * {c};"]
    if choice == 2:
        return [f"if ({a} > {k}) {{", f"    {b} = {b} - {a};", "}"]
    if choice == 3:
        return [f"while ({a} > {k}) {{", f"    {a} = {a} - 1;", "}"]
    if choice == 4:
        return [f"for (int i = 0; i < {k}; i++) {{", f"    {a} = {a} + i;", "}"]
    if choice == 5:
        return [f"{_CALLEES[int(rng.integers(len(_CALLEES)))]}({a});"]
    return [f"{a} = ({b} << {k % 4}) | {c};"]


def _function(rng, pair):
    names = [str(x) for x in rng.choice(_NAMES, size=8, replace=False)]
    fname = f"{_FUNCS[int(rng.integers(len(_FUNCS)))]}_{pair}"
    params = ", ".join(f"int {n}" for n in names[:4])
    sig = f"int {fname}(char *buf, char *dst, char *src, int *ptr, {params})"
    locals_ = [f"int {n} = {int(rng.integers(0, 5))};" for n in names[4:]]
    guard, hazard, _ = _hazard(rng, names)
    counter = names[7]
    benign = f"{counter} = {counter} + 1;"
    pre = [line for _ in range(int(rng.integers(1, 4))) for line in _filler(rng, names[4:])]
    post = [line for _ in range(int(rng.integers(1, 3))) for line in _filler(rng, names[4:])]
    ret = f"return {names[int(rng.integers(4, 8))]};"

    def render(vulnerable):
        inside, after = (benign, hazard) if vulnerable else (hazard, benign)
        lines = [sig + " {"]
        lines += ["    " + s for s in locals_ + pre]
        lines += [f"    if ({guard}) {{", f"        {inside}", "    }", f"    {after}"]
        planted = len(lines) if vulnerable else len(lines) - 2
        lines += ["    " + s for s in post + [ret]]
        lines.append("}")
        return "\n".join(lines) + "\n", planted

    return render


def generate_toy_corpus(spec):
    """Labelled toy functions; labels are exact by construction.

    Returns ToySample objects in a seeded shuffled order. Vulnerable and
    clean samples are generated as twins where counts allow.
    """
    if spec.n < 2:
        raise ValueError("toy corpus needs n >= 2")
    rng = np.random.default_rng(spec.seed)
    n_vul = int(round(spec.n * spec.vulnerable_fraction))
    n_clean = spec.n - n_vul
    samples = []
    pair = 0
    while n_vul or n_clean:
        render = _function(rng, pair)
        for vulnerable in (True, False):
            if vulnerable and n_vul:
                n_vul -= 1
            elif not vulnerable and n_clean:
                n_clean -= 1
            else:
                continue
            code, line = render(vulnerable)
            rec = SampleRecord(id=f"toy{pair:05d}{'v' if vulnerable else 'c'}",
                               label=int(vulnerable), code=code)
            samples.append(ToySample(rec, line, pair))
        pair += 1
    order = rng.permutation(len(samples))
    return [samples[i] for i in order]
