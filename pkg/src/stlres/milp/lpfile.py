"""CPLEX LP file export/import for the subset this package emits.

Sections: objective (Maximize/Minimize), Subject To, Bounds, Binaries,
Generals, End.  Terms are linear; relations are <=, >= and =.
"""

from __future__ import annotations

import math
import re

from .model import Constraint, LinExpr, Model, ModelError, Sense, VarInfo, VarKind

_LINE_WIDTH = 200


class LPParseError(ModelError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def sanitize_names(names) -> list[str]:
    """Map arbitrary names to unique LP-legal identifiers, preserving order."""
    out, seen = [], set()
    for name in names:
        s = re.sub(r"[^A-Za-z0-9_.]", "_", name) or "v"
        if not re.match(r"[A-Za-z_]", s) or s[0] in "eE":
            s = "v" + s
        base, k = s, 1
        while s in seen:
            s = f"{base}_{k}"
            k += 1
        seen.add(s)
        out.append(s)
    return out


def _num(x: float) -> str:
    if x == math.inf:
        return "+inf"
    if x == -math.inf:
        return "-inf"
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def _expr_tokens(terms, names, keep_zeros=False):
    toks = []
    for k in sorted(terms):
        v = terms[k]
        if v == 0 and not keep_zeros:
            continue
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        toks.append(f"{sign} {names[k]}" if mag == 1 else f"{sign} {_num(mag)} {names[k]}")
    if not toks:
        toks = ["0", names[0]] if names else ["0"]
    elif toks[0].startswith("+ "):
        toks[0] = toks[0][2:]
    return toks


def _wrap(prefix: str, tokens, suffix: str = "") -> list[str]:
    lines, cur = [], prefix
    for tok in tokens:
        if len(cur) + len(tok) + 1 > _LINE_WIDTH and cur.strip():
            lines.append(cur)
            cur = "   "
        cur += " " + tok
    if suffix:
        cur += " " + suffix
    lines.append(cur)
    return lines


def export_lp_file(model: Model) -> str:
    names = sanitize_names(v.name for v in model.variables)
    rnames = sanitize_names(c.name or f"c{i}" for i, c in enumerate(model.constraints))
    out = [f"\\ {model.name}", "Maximize" if model.sense is Sense.MAXIMIZE else "Minimize"]
    # Every column appears in the objective, in id order, so readers that
    # number columns by first appearance keep the model's ordering.
    full = {k: model.objective.terms.get(k, 0.0) for k in range(model.num_vars)}
    obj = _expr_tokens(full, names, keep_zeros=True)
    if model.objective.const:
        c = model.objective.const
        obj.append(f"{'-' if c < 0 else '+'} {_num(abs(c))}")
    out += _wrap(" obj:", obj)
    out.append("Subject To")
    for c, rn in zip(model.constraints, rnames):
        rel = {"<=": "<=", ">=": ">=", "==": "="}[c.sense]
        out += _wrap(f" {rn}:", _expr_tokens(c.terms, names), f"{rel} {_num(c.rhs)}")
    out.append("Bounds")
    binaries, generals = [], []
    for name, v in zip(names, model.variables):
        as_binary = v.kind is VarKind.BINARY and v.lb == 0.0 and v.ub == 1.0
        if as_binary:
            binaries.append(name)
            continue
        if v.kind is not VarKind.CONTINUOUS:
            generals.append(name)
        if v.lb == v.ub:
            out.append(f" {name} = {_num(v.lb)}")
        elif v.lb == -math.inf and v.ub == math.inf:
            out.append(f" {name} free")
        elif v.lb == 0.0 and v.ub == math.inf:
            continue
        else:
            out.append(f" {_num(v.lb)} <= {name} <= {_num(v.ub)}")
    if binaries:
        out.append("Binaries")
        out += _wrap("", binaries)
    if generals:
        out.append("Generals")
        out += _wrap("", generals)
    out.append("End")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# Import
# --------------------------------------------------------------------------

_SECTION = [
    (re.compile(r"^(maximize|maximise|maximum|max)$", re.I), "max"),
    (re.compile(r"^(minimize|minimise|minimum|min)$", re.I), "min"),
    (re.compile(r"^(subject\s+to|such\s+that|st|s\.t\.)$", re.I), "st"),
    (re.compile(r"^bounds?$", re.I), "bounds"),
    (re.compile(r"^(binary|binaries|bin)$", re.I), "bin"),
    (re.compile(r"^(generals?|gen|integers?)$", re.I), "gen"),
    (re.compile(r"^end$", re.I), "end"),
]

_TOK = re.compile(r"\s*(<=|>=|=<|=>|<|>|=|[+-]|:|[+-]?inf(?:inity)?\b|"
                  r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[A-Za-z_][A-Za-z0-9_.]*)", re.I)


def _tokens(text: str, line: int):
    pos, toks = 0, []
    while pos < len(text):
        if not text[pos:].strip():
            break
        m = _TOK.match(text, pos)
        if not m:
            raise LPParseError(f"unexpected text {text[pos:].strip()[:20]!r}", line)
        toks.append((m.group(1), line))
        pos = m.end()
    return toks


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _parse_linear(toks, i, line, name_index, allow_const=False):
    """Parse ``[+|-] [coef] name ...``; returns (terms, const, next index)."""
    terms, const = {}, 0.0
    first = True
    while i < len(toks) and toks[i][0] not in ("<=", ">=", "=<", "=>", "<", ">", "="):
        sign = 1.0
        tok = toks[i][0]
        if tok in ("+", "-"):
            sign = -1.0 if tok == "-" else 1.0
            i += 1
        elif not first:
            raise LPParseError(f"expected '+' or '-' before {tok!r}", toks[i][1])
        if i >= len(toks):
            raise LPParseError("dangling sign", line)
        coef = 1.0
        if _is_number(toks[i][0]):
            coef = float(toks[i][0])
            i += 1
            if i >= len(toks) or _is_number(toks[i][0]) or toks[i][0] in ("+", "-", "<=", ">=", "=", "<", ">", "=<", "=>"):
                if not allow_const:
                    raise LPParseError("constant term not allowed here", toks[i - 1][1])
                const += sign * coef
                first = False
                continue
        name = toks[i][0]
        if name not in name_index:
            name_index[name] = len(name_index)
        k = name_index[name]
        terms[k] = terms.get(k, 0.0) + sign * coef
        i += 1
        first = False
    return terms, const, i


def import_lp_file(text: str) -> Model:
    sections: list[tuple[str, list[tuple[str, int]]]] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = next((k for rx, k in _SECTION if rx.match(line)), None)
        if key is not None:
            if key == "end":
                current = None
                sections.append(("end", []))
                continue
            current = (key, [])
            sections.append(current)
            continue
        if current is None:
            raise LPParseError(f"text outside any section: {line[:30]!r}", lineno)
        current[1].append((line, lineno))
    if not sections or sections[0][0] not in ("max", "min"):
        raise LPParseError("file must start with Maximize or Minimize", 1)
    if sections[-1][0] != "end":
        raise LPParseError("missing End", len(text.splitlines()))

    name_index: dict[str, int] = {}
    sense = Sense.MAXIMIZE if sections[0][0] == "max" else Sense.MINIMIZE
    objective = LinExpr()
    rows = []
    bounds: dict[str, tuple[float, float]] = {}
    binaries: list[str] = []
    generals: list[str] = []

    for key, lines in sections:
        if key in ("max", "min"):
            toks = [t for ln, no in lines for t in _tokens(ln, no)]
            if len(toks) >= 2 and toks[1][0] == ":":
                toks = toks[2:]
            terms, const, i = _parse_linear(toks, 0, lines[0][1] if lines else 1, name_index, allow_const=True)
            if i != len(toks):
                raise LPParseError("relation in objective", toks[i][1])
            objective = LinExpr(terms, const)
        elif key == "st":
            toks = [t for ln, no in lines for t in _tokens(ln, no)]
            i = 0
            while i < len(toks):
                line = toks[i][1]
                name = ""
                if i + 1 < len(toks) and toks[i + 1][0] == ":":
                    name = toks[i][0]
                    i += 2
                terms, const, i = _parse_linear(toks, i, line, name_index)
                if i >= len(toks):
                    raise LPParseError("constraint without relation", line)
                rel = toks[i][0]
                i += 1
                sgn = 1.0
                if i < len(toks) and toks[i][0] in ("+", "-"):
                    sgn = -1.0 if toks[i][0] == "-" else 1.0
                    i += 1
                if i >= len(toks) or not _is_number(toks[i][0]):
                    raise LPParseError("expected a numeric right-hand side", line)
                rhs = sgn * float(toks[i][0])
                i += 1
                sense_ = {"<=": "<=", "=<": "<=", "<": "<=", ">=": ">=", "=>": ">=", ">": ">=", "=": "=="}[rel]
                rows.append(Constraint(terms, sense_, rhs, name))
        elif key == "bounds":
            for ln, no in lines:
                _parse_bound(ln, no, bounds, name_index)
        elif key == "bin":
            for ln, no in lines:
                for tok, _ in _tokens(ln, no):
                    binaries.append(tok)
                    name_index.setdefault(tok, len(name_index))
        elif key == "gen":
            for ln, no in lines:
                for tok, _ in _tokens(ln, no):
                    generals.append(tok)
                    name_index.setdefault(tok, len(name_index))

    order = sorted(name_index, key=name_index.get)
    kinds = {n: VarKind.CONTINUOUS for n in order}
    for n in generals:
        kinds[n] = VarKind.INTEGER
    for n in binaries:
        kinds[n] = VarKind.BINARY
    variables = []
    for n in order:
        lb, ub = bounds.get(n, (0.0, math.inf))
        if kinds[n] is VarKind.BINARY and n not in bounds:
            lb, ub = 0.0, 1.0
        variables.append(VarInfo(n, kinds[n], lb, ub))
    return Model("imported", variables, rows, objective, sense)


def _parse_bound(line: str, lineno: int, bounds, name_index):
    toks = [t for t, _ in _tokens(line, lineno)]

    def num(tok):
        t = tok.lower()
        if t in ("inf", "+inf", "infinity", "+infinity"):
            return math.inf
        if t in ("-inf", "-infinity"):
            return -math.inf
        return float(tok)

    def merge_signs(ts):
        out, i = [], 0
        while i < len(ts):
            if ts[i] in ("+", "-") and i + 1 < len(ts) and (_is_number(ts[i + 1]) or ts[i + 1].lower().lstrip("+-").startswith("inf")):
                out.append(("-" if ts[i] == "-" else "") + ts[i + 1])
                i += 2
            else:
                out.append(ts[i])
                i += 1
        return out

    toks = merge_signs(toks)
    try:
        if len(toks) == 2 and toks[1].lower() == "free":
            name = toks[0]
            bounds[name] = (-math.inf, math.inf)
        elif len(toks) == 5 and toks[1] in ("<=", "=<") and toks[3] in ("<=", "=<"):
            name = toks[2]
            bounds[name] = (num(toks[0]), num(toks[4]))
        elif len(toks) == 3 and toks[1] == "=":
            name = toks[0]
            v = num(toks[2])
            bounds[name] = (v, v)
        elif len(toks) == 3 and toks[1] in (">=", "=>"):
            name = toks[0]
            bounds[name] = (num(toks[2]), bounds.get(name, (0.0, math.inf))[1])
        elif len(toks) == 3 and toks[1] in ("<=", "=<"):
            if _is_number(toks[0]) or toks[0].lower().lstrip("+-").startswith("inf"):
                name = toks[2]
                bounds[name] = (num(toks[0]), bounds.get(name, (0.0, math.inf))[1])
            else:
                name = toks[0]
                bounds[name] = (bounds.get(name, (0.0, math.inf))[0], num(toks[2]))
        else:
            raise LPParseError(f"unrecognised bound {line!r}", lineno)
    except ValueError:
        raise LPParseError(f"bad number in bound {line!r}", lineno) from None
    name_index.setdefault(name, len(name_index))
