"""Command-line driver: ``sdpareto {check,mono,pareto,bench,compare}``.

Exit status: 0 success, 1 input or configuration error, 2 resource cap hit
(achieved bounds are still printed), 3 internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import benchgen, modelio
from .compositional import CurveCache, approx_multiobj_sd, check_single_exit
from .diagram import Diagram, Leaf, build_layout
from .errors import InvariantError, ModelError, ResourceCapError, SdpError
from .multiobj import SoundApproximation, approx_multiobj
from .solve import solve_reach

log = logging.getLogger("sdpareto")

DEFAULT_ETA = 1e-4
CHECK_TOL = 1e-6


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    term: str | None = None
    eta: Fraction | float = DEFAULT_ETA
    epsilon: Fraction | float = 1e-6
    engine: str = "comp"
    arith: str = "float"
    norm: str = "linf"
    cache: bool = True
    out: str | None = None
    plot: bool = False
    seed: int = 0
    jobs: int = 1
    entrance: int = 0
    exit: int = 0
    family: str | None = None
    size: int = 1
    leaf: str = "rms"
    variant: tuple[str, str] = ("safe", "calm")

    def validate(self) -> None:
        if self.eta < 0:
            raise ModelError("--eta must be nonnegative")
        if self.eta == 0 and self.arith != "rational":
            raise ModelError("--eta 0 needs --arith rational")
        if self.epsilon < 0 or (self.epsilon == 0 and self.arith != "rational"):
            raise ModelError("--epsilon must be positive under float arithmetic")
        if self.jobs < 1:
            raise ModelError("--jobs must be at least 1")


def _number(text: str, arith: str):
    try:
        v = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ModelError(f"not a number: {text!r}") from None
    return v if arith == "rational" else float(v)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--eta", default=None, help="approximation precision (default 1e-4)")
    common.add_argument("--epsilon", default="1e-6", help="target width for check")
    common.add_argument("--engine", choices=("comp", "mono"), default="comp")
    common.add_argument("--arith", choices=("float", "rational"), default="float")
    common.add_argument("--norm", choices=("l2", "linf"), default="linf", help="norm of the reported error")
    common.add_argument("--no-cache", action="store_true")
    common.add_argument("--out", help="write the report (or CSV for pareto) here")
    common.add_argument("--plot", action="store_true", help="pareto: also write an SVG of a 2-D curve")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--term", help="document term to analyse instead of the root")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sdpareto", description="Pareto curves of string diagrams of open MDPs.")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", parents=[common], help="bounds and a scheduler for one exit")
    c.add_argument("input")
    c.add_argument("--entrance", type=int, default=0)
    c.add_argument("--exit", type=int, default=0)
    for name, text in (("mono", "multi-objective analysis of the monolith"),
                       ("pareto", "Pareto curve of a single oMDP")):
        q = sub.add_parser(name, parents=[common], help=text)
        q.add_argument("input")
        q.add_argument("--entrance", type=int, default=0)
    for name, text in (("bench", "generate and analyse a benchmark instance"),
                       ("compare", "run both engines and cross-check them")):
        q = sub.add_parser(name, parents=[common], help=text)
        q.add_argument("input", nargs="?", help="document (compare only); omit to use --family")
        q.add_argument("--family", choices=("chain", "unigrid", "bigrid"))
        q.add_argument("--size", type=int, default=2)
        q.add_argument("--leaf", choices=("rms", "rmb", "dice"), default="rms")
        q.add_argument("--variant", default="safe,calm", help="room variant, e.g. unsafe,windy")
    return p


def _config(ns: argparse.Namespace) -> RunConfig:
    arith = ns.arith
    eta = _number(ns.eta, arith) if ns.eta is not None else (
        Fraction(1, 10_000) if arith == "rational" else DEFAULT_ETA)
    variant = tuple(getattr(ns, "variant", "safe,calm").split(","))
    if len(variant) != 2:
        raise ModelError("--variant needs two comma-separated words")
    cfg = RunConfig(
        command=ns.command, input=ns.input, term=ns.term, eta=eta, epsilon=_number(ns.epsilon, arith),
        engine=ns.engine, arith=arith, norm=ns.norm, cache=not ns.no_cache, out=ns.out, plot=ns.plot,
        seed=ns.seed, jobs=ns.jobs, entrance=getattr(ns, "entrance", 0), exit=getattr(ns, "exit", 0),
        family=getattr(ns, "family", None), size=getattr(ns, "size", 1), leaf=getattr(ns, "leaf", "rms"),
        variant=variant,
    )
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# commands


def _load(cfg: RunConfig) -> tuple[Diagram, float]:
    t0 = time.perf_counter()
    if cfg.input is None:
        if cfg.family is None:
            raise ModelError("give an input document or --family")
        inst = benchgen.bench_family(cfg.family, cfg.size, cfg.leaf, cfg.seed, cfg.arith, cfg.variant)
        d = inst.diagram
    else:
        doc = modelio.load(cfg.input, cfg.arith)
        d = doc.diagram(cfg.term)
    return d, time.perf_counter() - t0


def _run_mono(d: Diagram, cfg: RunConfig, t_load: float) -> tuple[SoundApproximation, modelio.RunReport]:
    t0 = time.perf_counter()
    m = build_layout(d, cfg.arith).omdp
    t_m = t_load + time.perf_counter() - t0
    a = approx_multiobj(m, cfg.eta, cfg.arith)
    t = t_load + time.perf_counter() - t0
    rep = modelio.report_from_approx(a, "mono", t, t_m, cfg.norm, states=m.mdp.num_states, queries=a.queries)
    return a, rep


def _run_comp(d: Diagram, cfg: RunConfig, t_load: float,
              cache: CurveCache | None = None) -> tuple[SoundApproximation, modelio.RunReport]:
    a = approx_multiobj_sd(d, cfg.eta, cfg.arith, cache, cfg.cache, cfg.jobs)
    c = a.meta["cache"]
    rep = modelio.report_from_approx(
        a, "comp", t_load + a.meta["time"], t_load, cfg.norm,
        leaf_runs=a.meta["leaf_runs"], cache_hits=dict(c.hits), cache_misses=dict(c.misses))
    return a, rep


def _emit(text: str, cfg: RunConfig) -> None:
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_check(cfg: RunConfig) -> int:
    d, t_load = _load(cfg)
    t0 = time.perf_counter()
    if cfg.engine == "mono":
        m = build_layout(d, cfg.arith).omdp
        if not 0 <= cfg.entrance < len(m.entrances) or not 0 <= cfg.exit < len(m.exits):
            raise ModelError("entrance or exit index outside the diagram arity")
        delta = None if cfg.arith == "rational" else float(cfg.epsilon)
        sol = solve_reach(m.mdp, [m.exits[cfg.exit]], delta)
        s0 = m.entrances[cfg.entrance]
        data = {"engine": "mono", "lower": sol.lower[s0], "upper": sol.upper[s0]}
    else:
        lo, hi, sched = check_single_exit(d, cfg.entrance, cfg.exit, cfg.epsilon, cfg.arith)
        replayed = sched.replay(cfg.arith)[cfg.exit]
        if abs(replayed - lo) > (0 if cfg.arith == "rational" else CHECK_TOL):
            raise InvariantError(f"replayed scheduler value {replayed} differs from lower bound {lo}")
        data = {"engine": "comp", "lower": lo, "upper": hi, "replayed": replayed}
    data.update({"entrance": cfg.entrance, "exit": cfg.exit, "epsilon": cfg.epsilon, "arith": cfg.arith,
                 "t": t_load + time.perf_counter() - t0, "t_m": t_load})
    _emit(json.dumps({k: modelio.json_number(v) if isinstance(v, (Fraction, float)) else v
                      for k, v in data.items()}, indent=2), cfg)
    return 0


def cmd_mono(cfg: RunConfig) -> int:
    d, t_load = _load(cfg)
    _, rep = _run_mono(d, cfg, t_load)
    _emit(modelio.emit_report(rep), cfg)
    return 0


def _single_model(cfg: RunConfig):
    d, t_load = _load(cfg)
    if isinstance(d, Leaf):
        return d.model, t_load
    return build_layout(d, cfg.arith).omdp, t_load


def _curve_csv(exits: Sequence[str], pts: Sequence[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(exits)
    for p in sorted(pts, reverse=True):
        w.writerow([_decimal(x) if isinstance(x, Fraction) else repr(float(x)) for x in p])
    return buf.getvalue()


def _decimal(x: Fraction) -> str:
    """Exact decimal if the fraction terminates, else ``p/q``."""
    d = x.denominator
    for f in (2, 5):
        while d % f == 0:
            d //= f
    if d != 1:
        return str(x)
    digits = 0
    while (x * 10 ** digits).denominator != 1:
        digits += 1
    n = x * 10 ** digits
    s = str(abs(n.numerator)).rjust(digits + 1, "0")
    out = s[: len(s) - digits] + ("." + s[len(s) - digits:] if digits else "")
    return ("-" if x < 0 else "") + out


def _plot(path: str, exits: Sequence[str], lower: Sequence[tuple], upper: Sequence[tuple]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 4))
    for pts, style, label in ((upper, "--", "upper"), (lower, "-o", "lower")):
        q = sorted((float(x), float(y)) for x, y in pts)
        if q:
            xs = [0.0] + [x for x, _ in q] + [q[-1][0]]
            ys = [q[0][1]] + [y for _, y in q] + [0.0]
            ax.plot(xs, ys, style, label=label)
    ax.set_xlabel(exits[0])
    ax.set_ylabel(exits[1])
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.legend()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_pareto(cfg: RunConfig) -> int:
    m, t_m = _single_model(cfg)
    t0 = time.perf_counter()
    a = approx_multiobj(m, cfg.eta, cfg.arith)
    t = t_m + time.perf_counter() - t0
    if not 0 <= cfg.entrance < len(a.entrances):
        raise ModelError(f"entrance {cfg.entrance} out of range")
    lower = a.lower(cfg.entrance).vertices
    text = _curve_csv(a.exits, lower)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    if cfg.plot:
        if a.dim != 2:
            raise ModelError("--plot needs exactly two exits")
        target = (cfg.out.rsplit(".", 1)[0] if cfg.out else "pareto") + ".svg"
        _plot(target, a.exits, lower, a.upper(cfg.entrance).pareto_vertices())
    sys.stdout.write(text)
    log.info("%d queries, gap %s, %.3fs", a.queries, a.gap("l2"), t)
    return 0


def _sandwich_check(mono: SoundApproximation, comp: SoundApproximation) -> list[str]:
    """Each engine's lower vertices must lie in the other's upper set."""
    tol = 0 if mono.arith == "rational" else CHECK_TOL
    problems = []
    for i in range(len(mono.entrances)):
        for p in mono.lower(i).vertices:
            if not comp.upper(i).contains(p, tol):
                problems.append(f"entrance {i}: mono point {p} outside comp upper set")
        for p in comp.lower(i).vertices:
            if not mono.upper(i).contains(p, tol):
                problems.append(f"entrance {i}: comp point {p} outside mono upper set")
    return problems


def cmd_bench(cfg: RunConfig) -> int:
    if cfg.family is None:
        raise ModelError("bench needs --family")
    cfg.input = None
    d, t_load = _load(cfg)
    _, rep = (_run_mono if cfg.engine == "mono" else _run_comp)(d, cfg, t_load)
    _emit(modelio.emit_report(rep), cfg)
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    d, t_load = _load(cfg)
    a_m, r_m = _run_mono(d, cfg, t_load)
    a_c, r_c = _run_comp(d, cfg, t_load)
    problems = _sandwich_check(a_m, a_c)
    rows = []
    for r in (r_m, r_c):
        rows.append({"engine": r.engine, "t": round(r.t, 4), "t_m": round(r.t_m, 4),
                     "E": modelio.json_number(r.E), "p": r.p})
    table = "\n".join(f"{x['engine']:<6} t={x['t']:<9} t_m={x['t_m']:<9} E={x['E']!s:<24} p={x['p']}" for x in rows)
    payload = {"rows": rows, "sandwich_ok": not problems,
               "mono": json.loads(modelio.emit_report(r_m)), "comp": json.loads(modelio.emit_report(r_c))}
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    print(table)
    if problems:
        raise InvariantError("; ".join(problems))
    return 0


COMMANDS = {"check": cmd_check, "mono": cmd_mono, "pareto": cmd_pareto, "bench": cmd_bench, "compare": cmd_compare}


def main(argv: Sequence[str] | None = None) -> int:
    ns = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(ns)
        return COMMANDS[cfg.command](cfg)
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        a = exc.achieved
        if isinstance(a, SoundApproximation):
            print(modelio.emit_report(modelio.report_from_approx(a, "partial", 0.0, 0.0, "linf")))
        elif a is not None:
            print(json.dumps({"achieved": [modelio.json_number(x) for x in a]}))
        return exc.exit_code
    except SdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
