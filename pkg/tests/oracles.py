"""Independent reference computations used by the tests.

Nothing here calls the package's solvers or geometry: schedulers are
enumerated by brute force, chains are solved by a separate Gaussian
elimination, and hull questions go to scipy's linprog.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from sdpareto.diagram import Leaf, Seq, Sum, Trace, type_check
from sdpareto.model import OpenMdp


# ---------------------------------------------------------------------------
# brute force over deterministic memoryless schedulers


def _solve(rows: dict[int, dict[int, Fraction]], targets: list[int], n: int) -> dict[int, list[Fraction]]:
    """Absorption probabilities into each target, by plain Gauss-Jordan on the transient part."""
    tset = set(targets)
    # states that can reach a target
    back: dict[int, set[int]] = {s: set() for s in range(n)}
    for s, row in rows.items():
        for t in row:
            back[t].add(s)
    live = set(targets)
    stack = list(targets)
    while stack:
        t = stack.pop()
        for s in back[t]:
            if s not in live:
                live.add(s)
                stack.append(s)
    trans = sorted(s for s in live if s not in tset)
    idx = {s: i for i, s in enumerate(trans)}
    k = len(trans)
    m = len(targets)
    a = [[Fraction(0)] * (k + m) for _ in range(k)]
    for s in trans:
        i = idx[s]
        a[i][i] += 1
        for t, p in rows.get(s, {}).items():
            if t in idx:
                a[i][idx[t]] -= p
            elif t in tset:
                a[i][k + targets.index(t)] += p
    for col in range(k):
        piv = next(r for r in range(col, k) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        pv = a[col][col]
        a[col] = [x / pv for x in a[col]]
        for r in range(k):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    out = {}
    for s in range(n):
        if s in idx:
            out[s] = a[idx[s]][k:]
        elif s in tset:
            out[s] = [Fraction(int(t == s)) for t in targets]
        else:
            out[s] = [Fraction(0)] * m
    return out


def dm_points(m: OpenMdp, entrance: int, limit: int = 1 << 14) -> set[tuple]:
    """Exit vectors of all deterministic memoryless schedulers from one entrance."""
    mdp = m.mdp.to_arith("rational") if hasattr(m.mdp, "to_arith") else m.mdp
    n = mdp.num_states
    src = m.entrances[entrance]
    # restrict to states reachable from the entrance
    seen = {src}
    stack = [src]
    while stack:
        s = stack.pop()
        for c in mdp.choices[s]:
            for t, _ in c.dist:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
    states = sorted(seen)
    options = [list(range(len(mdp.choices[s]))) or [None] for s in states]
    total = 1
    for o in options:
        total *= len(o)
    if total > limit:
        raise ValueError(f"{total} schedulers exceed the enumeration limit")
    exits = list(m.exits)
    pts = set()
    for pick in itertools.product(*options):
        rows = {}
        for s, k in zip(states, pick):
            if k is None or s in exits:
                continue
            rows[s] = {t: Fraction(p) for t, p in mdp.choices[s][k].dist}
        sol = _solve(rows, exits, n)
        pts.add(tuple(sol[src]))
    return pts


# ---------------------------------------------------------------------------
# hull membership via linprog


def in_down_hull(p, points, tol: float = 1e-9) -> bool:
    """Is ``p`` dominated by a convex combination of ``points``?"""
    v = np.array([[float(x) for x in q] for q in points])
    k = v.shape[1]
    n = v.shape[0]
    # find mu >= 0, sum mu = 1, V^T mu >= p - tol
    res = linprog(np.zeros(n), A_ub=-v.T, b_ub=-(np.array([float(x) for x in p]) - tol),
                  A_eq=np.ones((1, n)), b_eq=[1.0], bounds=[(0, None)] * n, method="highs")
    return res.status == 0 and k >= 0


def max_weighted(points, w) -> float:
    return max(sum(float(a) * float(b) for a, b in zip(w, q)) for q in points)


# ---------------------------------------------------------------------------
# random models and diagrams

DENOMS = (2, 3, 4, 5, 10)


def _dist(rng: random.Random, targets: list[str]) -> dict[str, Fraction]:
    k = rng.randint(1, min(3, len(targets)))
    picks = rng.sample(targets, k)
    den = rng.choice(DENOMS)
    cuts = sorted(rng.randint(0, den) for _ in range(k - 1))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [den])]
    out: dict[str, Fraction] = {}
    for t, q in zip(picks, parts):
        if q:
            out[t] = out.get(t, Fraction(0)) + Fraction(q, den)
    if not out:
        out[picks[0]] = Fraction(1)
    return out


def random_omdp(rng: random.Random, m_r: int, m_l: int, n_r: int, n_l: int, max_states: int = 6,
                max_actions: int = 2, name: str = "X", sink: bool | None = None) -> OpenMdp:
    """Random oMDP with arity (m_r, m_l) -> (n_r, n_l)."""
    ir = [f"ir{j}" for j in range(m_r)]
    il = [f"il{j}" for j in range(n_l)]
    orr = [f"or{j}" for j in range(n_r)]
    ol = [f"ol{j}" for j in range(m_l)]
    ends = len(ir) + len(il) + len(orr) + len(ol)
    use_sink = rng.random() < 0.3 if sink is None else sink
    room = max_states - ends - int(use_sink)
    inner = [f"s{j}" for j in range(rng.randint(0, max(0, room)))]
    sinks = ["dead"] if use_sink else []
    movers = ir + il + inner
    targets = movers + orr + ol + sinks
    trans = {}
    for s in movers:
        na = rng.randint(1, max_actions)
        trans[s] = {f"a{k}": _dist(rng, targets) for k in range(na)}
    return OpenMdp.build(trans, entrances_r=ir, entrances_l=il, exits_r=orr, exits_l=ol, sinks=sinks,
                         states=ir + il + orr + ol + sinks + inner, name=name)


class DiagramGen:
    """Random well-typed diagrams with a bounded number of leaves and ends."""

    def __init__(self, rng: random.Random, max_states: int = 6, max_actions: int = 2, max_exits: int = 2):
        self.rng = rng
        self.max_states = max_states
        self.max_actions = max_actions
        self.max_exits = max_exits
        self.count = 0

    def leaf(self, left: tuple[int, int] | None) -> Leaf:
        rng = self.rng
        for _ in range(100):
            m_r, m_l = left if left is not None else (rng.randint(0, 2), rng.randint(0, 1))
            n_r, n_l = rng.randint(0, 2), rng.randint(0, 1)
            if n_r + m_l > self.max_exits or m_r + n_l == 0 or m_r + n_l > 3:
                if left is not None and m_l > self.max_exits:
                    break
                continue
            if m_r + n_l + n_r + m_l > self.max_states - 1:
                continue
            self.count += 1
            nm = f"L{self.count}"
            return Leaf(nm, random_omdp(rng, m_r, m_l, n_r, n_l, self.max_states, self.max_actions, nm))
        raise _Retry

    def diagram(self, k: int, left: tuple[int, int] | None = None):
        rng = self.rng
        if k == 1:
            return self.leaf(left)
        op = rng.choice(("seq", "sum", "trace") if left is None else ("seq", "sum"))
        if op == "trace":
            inner = self.diagram(k)
            ar = type_check(inner)
            t = min(ar.m_r, ar.n_r)
            if t == 0:
                raise _Retry
            return Trace(inner, rng.randint(1, t))
        k1 = rng.randint(1, k - 1)
        if op == "seq":
            a = self.diagram(k1, left)
            ar = type_check(a)
            b = self.diagram(k - k1, (ar.n_r, ar.n_l))
            return Seq((a, b))
        if left is None:
            a = self.diagram(k1)
            b = self.diagram(k - k1)
        else:
            mr, ml = left
            r1 = rng.randint(0, mr)
            l1 = rng.randint(0, ml)
            a = self.diagram(k1, (r1, l1))
            b = self.diagram(k - k1, (mr - r1, ml - l1))
        return Sum((a, b))

    def sample(self, max_leaves: int = 3, max_total_exits: int = 3, max_choice_states: int = 10):
        from sdpareto.diagram import semantics

        while True:
            try:
                d = self.diagram(self.rng.randint(1, max_leaves))
            except _Retry:
                continue
            ar = type_check(d)
            n_in, n_out = ar.m_r + ar.n_l, ar.n_r + ar.m_l
            if n_in == 0 or n_out == 0 or n_out > max_total_exits:
                continue
            mono = semantics(d)
            if sum(len(r) > 1 for r in mono.mdp.choices) > max_choice_states:
                continue
            return d


class _Retry(Exception):
    pass
