"""JSON documents for open MDPs and string diagrams, and run reports.

A document looks like::

    {
      "format_version": 1,
      "models": {
        "A": {"entrances_r": ["ir"], "exits_r": ["or"],
              "transitions": {"ir": {"go": {"or": "1"}}}},
        "R": {"generator": "room", "params": {"side": 7, "seed": 3}}
      },
      "terms": {"AA": "A ; A", "L": {"trace": {"term": "AA", "k": 1}}},
      "root": "L"
    }

Terms are either infix strings (``;`` for sequential composition, ``+`` for
sums, ``+`` binding tighter, ``trace(e, k)`` and parentheses) or nested JSON
objects ``{"seq": [...]}``, ``{"sum": [...]}``, ``{"trace": {"term": e, "k": k}}``
and ``{"chain" | "unigrid" | "bigrid": {"n": n, "leaf": name}}``.

Probabilities may be given as strings (``"0.27"``, ``"27/100"``) or JSON
numbers; both are read without going through binary floating point.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from . import benchgen
from .diagram import Diagram, Leaf, Seq, Sum, Trace, type_check
from .errors import ModelError
from .model import OpenMdp, check_arith, to_number

FORMAT_VERSION = 1
_END_KEYS = ("entrances_r", "entrances_l", "exits_r", "exits_l", "sinks")
_GRID_KINDS = ("chain", "unigrid", "bigrid")


@dataclass(frozen=True)
class ModelDef:
    """Either an explicit oMDP or a generator stanza."""

    name: str
    omdp: OpenMdp | None = None
    generator: str | None = None
    params: tuple[tuple[str, Any], ...] = ()

    def build(self, arith: str) -> OpenMdp:
        if self.omdp is not None:
            return self.omdp.to_arith(arith)
        return _run_generator(self.generator, dict(self.params), arith, self.name)


@dataclass
class DiagramDocument:
    models: dict[str, ModelDef]
    terms: dict[str, Any]
    root: Any
    arith: str = "rational"
    format_version: int = FORMAT_VERSION
    _built: dict[str, OpenMdp] = field(default_factory=dict, repr=False, compare=False)

    def model(self, name: str) -> OpenMdp:
        if name not in self._built:
            self._built[name] = self.models[name].build(self.arith)
        return self._built[name]

    def diagram(self, term: Any = None) -> Diagram:
        """Resolve ``term`` (default: the root) into a type-checked diagram."""
        expr = self.root if term is None else term
        d = self._resolve(expr, "root" if term is None else str(term), ())
        type_check(d)
        return d

    def _resolve(self, expr: Any, path: str, stack: tuple[str, ...]) -> Diagram:
        if isinstance(expr, str):
            if expr in self.terms:
                if expr in stack:
                    raise ModelError(f"cyclic term reference: {' -> '.join(stack + (expr,))}", path)
                return self._resolve(self.terms[expr], f"terms.{expr}", stack + (expr,))
            if expr in self.models:
                return Leaf(expr, self.model(expr))
            raise ModelError(f"unknown reference {expr!r}", path)
        kind, body = expr
        if kind in ("seq", "sum"):
            kids = tuple(self._resolve(e, f"{path}.{kind}[{i}]", stack) for i, e in enumerate(body))
            if len(kids) == 1:
                return kids[0]
            return Seq(kids) if kind == "seq" else Sum(kids)
        if kind == "trace":
            inner, k = body
            return Trace(self._resolve(inner, f"{path}.trace", stack), k)
        if kind in _GRID_KINDS:
            n, leaf = body
            if leaf not in self.models:
                raise ModelError(f"unknown leaf model {leaf!r}", f"{path}.{kind}.leaf")
            gen = {"chain": benchgen.gen_chain, "unigrid": benchgen.gen_unigrid, "bigrid": benchgen.gen_bigrid}[kind]
            return gen(n, self.model(leaf))
        raise ModelError(f"unknown term kind {kind!r}", path)


# ---------------------------------------------------------------------------
# parsing


def _run_generator(kind: str, params: dict, arith: str, name: str) -> OpenMdp:
    try:
        if kind == "room":
            return benchgen.gen_room(benchgen.RoomSpec(**_fractions(params)), arith, name)
        if kind == "dice":
            p = dict(params)
            if "dice" in p:
                p["dice"] = tuple({int(k): to_number(v, "rational") for k, v in d.items()} for d in p["dice"])
            for key in ("bands", "start_scores"):
                if key in p and p[key] is not None:
                    p[key] = tuple(tuple(b) if isinstance(b, list) else b for b in p[key])
            return benchgen.gen_dice(benchgen.DiceSpec(**p), arith, name)
    except TypeError as exc:
        raise ModelError(f"bad generator parameters: {exc}", f"models.{name}.params") from None
    raise ModelError(f"unknown generator {kind!r}", f"models.{name}.generator")


def _fractions(params: dict) -> dict:
    out = dict(params)
    for key in ("slip", "hole_density"):
        if out.get(key) is not None:
            out[key] = to_number(out[key], "rational")
    return out


def _prob(raw: Any, arith: str, path: str):
    if isinstance(raw, bool) or not isinstance(raw, (str, int, Fraction)):
        raise ModelError(f"probability must be a string or number, got {raw!r}", path)
    try:
        p = to_number(raw, "rational")
    except (ValueError, ZeroDivisionError):
        raise ModelError(f"malformed probability {raw!r}", path) from None
    if not 0 <= p <= 1:
        raise ModelError(f"probability {raw} outside [0, 1]", path)
    return p if arith == "rational" else float(p)


def _names(raw: Any, path: str) -> list[str]:
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise ModelError("expected a list of state names", path)
    return raw


def _parse_model(name: str, raw: Any, arith: str) -> ModelDef:
    path = f"models.{name}"
    if not isinstance(raw, dict):
        raise ModelError("model must be an object", path)
    if "generator" in raw:
        params = raw.get("params", {})
        if not isinstance(params, dict):
            raise ModelError("params must be an object", f"{path}.params")
        return ModelDef(name, generator=raw["generator"], params=tuple(sorted(params.items())))
    unknown = set(raw) - set(_END_KEYS) - {"transitions", "states"}
    if unknown:
        raise ModelError(f"unknown model keys {sorted(unknown)}", path)
    trans = raw.get("transitions", {})
    if not isinstance(trans, dict):
        raise ModelError("transitions must be an object", f"{path}.transitions")
    table: dict[str, dict[str, dict[str, Any]]] = {}
    for s, acts in trans.items():
        if not isinstance(acts, dict):
            raise ModelError("actions must be an object", f"{path}.transitions.{s}")
        table[s] = {}
        for a, dist in acts.items():
            where = f"{path}.transitions.{s}.{a}"
            if not isinstance(dist, dict) or not dist:
                raise ModelError("distribution must be a non-empty object", where)
            table[s][a] = {t: _prob(p, "rational", f"{where}.{t}") for t, p in dist.items()}
            total = sum(table[s][a].values())
            if total != 1:
                raise ModelError(f"distribution sums to {total}, not 1", where)
    ends = {k: _names(raw.get(k, []), f"{path}.{k}") for k in _END_KEYS}
    states = _names(raw["states"], f"{path}.states") if "states" in raw else None
    try:
        m = OpenMdp.build(table, states=states, arith="rational", name=name, **ends)
    except ModelError as exc:
        raise ModelError(str(exc), path) from None
    return ModelDef(name, omdp=m.to_arith(arith) if arith != "rational" else m)


_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][\w.\-]*)|(.))")


def parse_infix(text: str, path: str = "term") -> Any:
    """Parse ``A ; (B + C) ; trace(D, 1)`` into the nested term form."""
    toks: list[tuple[str, str]] = []
    for m in _TOKEN.finditer(text):
        num, ident, sym = m.groups()
        if num:
            toks.append(("num", num))
        elif ident:
            toks.append(("id", ident))
        elif sym and not sym.isspace():
            toks.append(("sym", sym))
    pos = 0

    def peek() -> tuple[str, str] | None:
        return toks[pos] if pos < len(toks) else None

    def take(kind: str, val: str | None = None) -> str:
        nonlocal pos
        t = peek()
        if t is None or t[0] != kind or (val is not None and t[1] != val):
            raise ModelError(f"expected {val or kind} at token {pos} in {text!r}", path)
        pos += 1
        return t[1]

    def seq_expr():
        parts = [sum_expr()]
        while peek() == ("sym", ";"):
            take("sym", ";")
            parts.append(sum_expr())
        return parts[0] if len(parts) == 1 else ("seq", parts)

    def sum_expr():
        parts = [atom()]
        while peek() == ("sym", "+"):
            take("sym", "+")
            parts.append(atom())
        return parts[0] if len(parts) == 1 else ("sum", parts)

    def atom():
        t = peek()
        if t == ("sym", "("):
            take("sym", "(")
            e = seq_expr()
            take("sym", ")")
            return e
        name = take("id")
        if name == "trace" and peek() == ("sym", "("):
            take("sym", "(")
            e = seq_expr()
            take("sym", ",")
            k = int(take("num"))
            take("sym", ")")
            return ("trace", (e, k))
        return name

    if not toks:
        raise ModelError("empty term", path)
    out = seq_expr()
    if pos != len(toks):
        raise ModelError(f"unexpected {toks[pos][1]!r} in {text!r}", path)
    return out


def _parse_term(raw: Any, path: str) -> Any:
    if isinstance(raw, str):
        return parse_infix(raw, path)
    if isinstance(raw, dict) and len(raw) == 1:
        (kind, body), = raw.items()
        if kind in ("seq", "sum"):
            if not isinstance(body, list) or not body:
                raise ModelError(f"{kind} needs a non-empty list", f"{path}.{kind}")
            return (kind, [_parse_term(e, f"{path}.{kind}[{i}]") for i, e in enumerate(body)])
        if kind == "trace":
            if not isinstance(body, dict) or "term" not in body:
                raise ModelError("trace needs {term, k}", f"{path}.trace")
            k = body.get("k", 1)
            if not isinstance(k, int) or k < 0:
                raise ModelError("trace k must be a nonnegative integer", f"{path}.trace.k")
            return ("trace", (_parse_term(body["term"], f"{path}.trace.term"), k))
        if kind in _GRID_KINDS:
            if not isinstance(body, dict) or not isinstance(body.get("n"), int) or not isinstance(body.get("leaf"), str):
                raise ModelError(f"{kind} needs {{n: int, leaf: name}}", f"{path}.{kind}")
            return (kind, (body["n"], body["leaf"]))
    raise ModelError(f"malformed term {raw!r}", path)


def parse(text: str, arith: str = "rational") -> DiagramDocument:
    """Parse and validate a document; errors carry a JSON path or line number."""
    check_arith(arith)
    try:
        raw = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise ModelError(f"syntax error: {exc.msg}", f"line {exc.lineno} col {exc.colno}") from None
    if not isinstance(raw, dict):
        raise ModelError("document must be a JSON object")
    ver = raw.get("format_version", FORMAT_VERSION)
    if ver != FORMAT_VERSION:
        raise ModelError(f"unsupported format_version {ver}", "format_version")
    models_raw = raw.get("models", {})
    terms_raw = raw.get("terms", {})
    if not isinstance(models_raw, dict) or not isinstance(terms_raw, dict):
        raise ModelError("models and terms must be objects")
    models = {n: _parse_model(n, m, arith) for n, m in models_raw.items()}
    clash = set(models) & set(terms_raw)
    if clash:
        raise ModelError(f"names used for both a model and a term: {sorted(clash)}", "terms")
    terms = {n: _parse_term(t, f"terms.{n}") for n, t in terms_raw.items()}
    if "root" in raw:
        root = _parse_term(raw["root"], "root")
    elif len(terms) == 1:
        root = next(iter(terms))
    else:
        raise ModelError("no root", "root")
    doc = DiagramDocument(models, terms, root, arith, ver)
    doc.diagram()
    return doc


def load(path: str, arith: str = "rational") -> DiagramDocument:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), arith)


# ---------------------------------------------------------------------------
# printing


def _num(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    return repr(x)


def _term_json(t: Any) -> Any:
    if isinstance(t, str):
        return t
    kind, body = t
    if kind in ("seq", "sum"):
        return {kind: [_term_json(e) for e in body]}
    if kind == "trace":
        return {"trace": {"term": _term_json(body[0]), "k": body[1]}}
    return {kind: {"n": body[0], "leaf": body[1]}}


def _model_json(md: ModelDef) -> dict:
    if md.omdp is None:
        return {"generator": md.generator, "params": {k: _plain(v) for k, v in md.params}}
    m = md.omdp
    names = m.mdp.state_names
    acts = m.mdp.action_names
    out: dict[str, Any] = {"states": list(names)}
    for key, ids in zip(_END_KEYS, (m.entrances_r, m.entrances_l, m.exits_r, m.exits_l, m.sinks)):
        out[key] = [names[s] for s in ids]
    trans = {}
    for s, row in enumerate(m.mdp.choices):
        if row:
            trans[names[s]] = {acts[c.action]: {names[t]: _num(p) for t, p in c.dist} for c in row}
    out["transitions"] = trans
    return out


def _plain(v: Any) -> Any:
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


def dump(doc: DiagramDocument) -> str:
    """Canonical text: explicit state lists, exact probabilities, object-form terms."""
    data = {
        "format_version": doc.format_version,
        "models": {n: _model_json(md) for n, md in doc.models.items()},
        "terms": {n: _term_json(t) for n, t in doc.terms.items()},
        "root": _term_json(doc.root),
    }
    return json.dumps(data, indent=2)


# ---------------------------------------------------------------------------
# reports


@dataclass
class RunReport:
    engine: str
    arith: str
    eta: Any
    t: float
    t_m: float
    E: Any
    p: int
    entrances: list[dict]
    extra: dict = field(default_factory=dict)


def _vec(v) -> list:
    return [json_number(x) for x in v]


def json_number(x):
    return str(x) if isinstance(x, Fraction) else float(x)


def report_from_approx(approx, engine: str, t: float, t_m: float, norm: str = "linf", **extra) -> RunReport:
    ents = []
    for i, name in enumerate(approx.entrances):
        ents.append({
            "entrance": name,
            "lower": [_vec(v) for v in approx.lower(i).vertices],
            "upper": [_vec(v) for v in approx.upper(i).pareto_vertices()],
        })
    return RunReport(engine, approx.arith, approx.eta, t, t_m, approx.gap(norm), approx.vertex_count(),
                     ents, dict(extra, exits=list(approx.exits), norm=norm))


def emit_report(r: RunReport) -> str:
    """Machine-readable JSON with a fixed field order."""
    data = {
        "engine": r.engine,
        "arith": r.arith,
        "eta": json_number(r.eta),
        "t": r.t,
        "t_m": r.t_m,
        "E": json_number(r.E),
        "p": r.p,
        "entrances": r.entrances,
    }
    data.update({k: _plain(v) for k, v in r.extra.items()})
    return json.dumps(data, indent=2)
