"""Explicit-state MDPs, open MDPs, schedulers and induced Markov chains.

States and actions are dense integer ids with side tables for names.  Every
probability is either a :class:`fractions.Fraction` (rational engine) or a
``float`` (float engine); a model is converted wholesale with :meth:`Mdp.to_arith`.
Terminal states are never mutated: absorbing self-loops are added lazily when a
chain is induced or solved.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ModelError

Prob = Union[Fraction, float]

ARITHS = ("float", "rational")
FLOAT_DIST_TOL = 1e-12


def check_arith(arith: str) -> str:
    if arith not in ARITHS:
        raise ModelError(f"unknown arithmetic {arith!r}; expected one of {ARITHS}")
    return arith


def to_number(x: object, arith: str) -> Prob:
    """Convert ``x`` into the number type of ``arith``.

    Floats are converted to rationals through their shortest decimal repr, so
    ``0.27`` becomes exactly ``27/100``.
    """
    if arith == "rational":
        if isinstance(x, Fraction):
            return x
        if isinstance(x, float):
            return Fraction(repr(x))
        return Fraction(x)  # int, str, Decimal
    return float(x)


def arith_of(x: Prob) -> str:
    return "rational" if isinstance(x, (Fraction, int)) else "float"


class Choice(NamedTuple):
    action: int
    dist: tuple[tuple[int, Prob], ...]


class Arity(NamedTuple):
    """``(m_r, m_l) -> (n_r, n_l)``: |I_r|, |O_l| on the left; |O_r|, |I_l| on the right."""

    m_r: int
    m_l: int
    n_r: int
    n_l: int

    @property
    def left(self) -> tuple[int, int]:
        return (self.m_r, self.m_l)

    @property
    def right(self) -> tuple[int, int]:
        return (self.n_r, self.n_l)

    def __add__(self, other: "Arity") -> "Arity":  # type: ignore[override]
        return Arity(*(a + b for a, b in zip(self, other)))

    def __str__(self) -> str:
        return f"({self.m_r},{self.m_l})->({self.n_r},{self.n_l})"


@dataclass(frozen=True)
class Mdp:
    state_names: tuple[str, ...]
    action_names: tuple[str, ...]
    choices: tuple[tuple[Choice, ...], ...]

    def __post_init__(self):
        n = len(self.state_names)
        if len(self.choices) != n:
            raise ModelError("choices must list one entry per state")
        n_act = len(self.action_names)
        for s, row in enumerate(self.choices):
            seen = set()
            for a, dist in row:
                if not 0 <= a < n_act:
                    raise ModelError(f"unknown action id {a}", self.state_names[s])
                if a in seen:
                    raise ModelError(f"action {self.action_names[a]!r} enabled twice",
                                     self.state_names[s])
                seen.add(a)
                _check_dist(dist, n, f"{self.state_names[s]}.{self.action_names[a]}")

    @property
    def num_states(self) -> int:
        return len(self.state_names)

    @property
    def num_choices(self) -> int:
        return sum(len(r) for r in self.choices)

    def enabled(self, s: int) -> tuple[int, ...]:
        return tuple(c.action for c in self.choices[s])

    def is_terminal(self, s: int) -> bool:
        return not self.choices[s]

    @cached_property
    def terminals(self) -> frozenset[int]:
        return frozenset(s for s, r in enumerate(self.choices) if not r)

    def transition(self, s: int, a: int) -> dict[int, Prob]:
        for c in self.choices[s]:
            if c.action == a:
                return dict(c.dist)
        raise KeyError((s, a))

    @cached_property
    def arith(self) -> str:
        for row in self.choices:
            for _, dist in row:
                for _, p in dist:
                    return arith_of(p)
        return "rational"

    def to_arith(self, arith: str) -> "Mdp":
        check_arith(arith)
        if arith == self.arith:
            return self
        cache = self.__dict__.setdefault("_converted", {})
        if arith not in cache:
            choices = tuple(
                tuple(Choice(a, tuple((t, to_number(p, arith)) for t, p in dist)) for a, dist in row)
                for row in self.choices
            )
            cache[arith] = Mdp(self.state_names, self.action_names, choices)
        return cache[arith]

    def successors(self, s: int) -> set[int]:
        return {t for _, dist in self.choices[s] for t, p in dist if p > 0}

    @cached_property
    def predecessors(self) -> tuple[tuple[int, ...], ...]:
        pre: list[set[int]] = [set() for _ in range(self.num_states)]
        for s, row in enumerate(self.choices):
            for _, dist in row:
                for t, p in dist:
                    if p > 0:
                        pre[t].add(s)
        return tuple(tuple(sorted(x)) for x in pre)

    def reachable_from(self, sources: Iterable[int]) -> set[int]:
        seen = set(sources)
        queue = deque(seen)
        while queue:
            s = queue.popleft()
            for t in self.successors(s):
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
        return seen

    def can_reach(self, targets: Iterable[int]) -> set[int]:
        """States with a path (under some scheduler) into ``targets``."""
        seen = set(targets)
        queue = deque(seen)
        pre = self.predecessors
        while queue:
            t = queue.popleft()
            for s in pre[t]:
                if s not in seen:
                    seen.add(s)
                    queue.append(s)
        return seen

    @cached_property
    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.state_names, self.action_names)).encode())
        for row in self.choices:
            h.update(repr([(a, [(t, str(p)) for t, p in d]) for a, d in row]).encode())
        return h.hexdigest()


def _check_dist(dist: Sequence[tuple[int, Prob]], n: int, where: str) -> None:
    if not dist:
        raise ModelError("empty distribution", where)
    total: Prob = 0
    targets = set()
    for t, p in dist:
        if not 0 <= t < n:
            raise ModelError(f"unknown successor id {t}", where)
        if t in targets:
            raise ModelError("duplicate successor", where)
        targets.add(t)
        if p < 0 or p > 1:
            raise ModelError(f"probability {p} outside [0,1]", where)
        total += p
    if isinstance(total, float):
        if abs(total - 1.0) > FLOAT_DIST_TOL:
            raise ModelError(f"distribution sums to {total}", where)
    elif total != 1:
        raise ModelError(f"distribution sums to {total}", where)


@dataclass(frozen=True)
class OpenMdp:
    """An MDP with ordered entrance and exit lists on both sides.

    ``sinks`` are designated dead-end states: terminal but not exits (the ``*``
    state of a shortcut MDP, holes of a room).  They act as absorbing traps.
    """

    mdp: Mdp
    entrances_r: tuple[int, ...]
    entrances_l: tuple[int, ...]
    exits_r: tuple[int, ...]
    exits_l: tuple[int, ...]
    sinks: tuple[int, ...] = ()
    name: str = field(default="", compare=False)

    @property
    def entrances(self) -> tuple[int, ...]:
        return self.entrances_r + self.entrances_l

    @property
    def exits(self) -> tuple[int, ...]:
        return self.exits_r + self.exits_l

    @property
    def arity(self) -> Arity:
        return Arity(len(self.entrances_r), len(self.exits_l), len(self.exits_r), len(self.entrances_l))

    @property
    def arith(self) -> str:
        return self.mdp.arith

    @property
    def num_states(self) -> int:
        return self.mdp.num_states

    def to_arith(self, arith: str) -> "OpenMdp":
        m = self.mdp.to_arith(arith)
        if m is self.mdp:
            return self
        return OpenMdp(m, self.entrances_r, self.entrances_l, self.exits_r, self.exits_l,
                       self.sinks, self.name)

    @cached_property
    def content_hash(self) -> str:
        ends = (self.entrances_r, self.entrances_l, self.exits_r, self.exits_l, self.sinks)
        return hashlib.sha256((self.mdp.content_hash + repr(ends)).encode()).hexdigest()

    def state_id(self, name: str) -> int:
        return self.mdp.state_names.index(name)

    @classmethod
    def build(
        cls,
        transitions: Mapping[str, Mapping[str, Mapping[str, object]]],
        *,
        entrances_r: Sequence[str] = (),
        entrances_l: Sequence[str] = (),
        exits_r: Sequence[str] = (),
        exits_l: Sequence[str] = (),
        sinks: Sequence[str] = (),
        states: Sequence[str] | None = None,
        arith: str = "rational",
        name: str = "",
    ) -> "OpenMdp":
        """Build from ``{state: {action: {successor: prob}}}`` keyed by names.

        States are numbered in order of ``states`` if given, otherwise in order
        of first appearance (entrances, exits, sinks, then transition keys).
        """
        check_arith(arith)
        order: list[str] = list(states) if states is not None else []
        known = set(order)

        def add(n: str) -> None:
            if n not in known:
                known.add(n)
                order.append(n)

        if states is None:
            for group in (entrances_r, entrances_l, exits_r, exits_l, sinks):
                for n in group:
                    add(n)
            for s, acts in transitions.items():
                add(s)
                for dist in acts.values():
                    for t in dist:
                        add(t)
        index = {n: i for i, n in enumerate(order)}
        actions: list[str] = []
        act_index: dict[str, int] = {}
        rows: list[list[Choice]] = [[] for _ in order]
        for s, acts in transitions.items():
            if s not in index:
                raise ModelError(f"unknown state {s!r}")
            for a, dist in acts.items():
                if a not in act_index:
                    act_index[a] = len(actions)
                    actions.append(a)
                try:
                    d = tuple(sorted((index[t], to_number(p, arith)) for t, p in dist.items()))
                except KeyError as exc:
                    raise ModelError(f"unknown successor {exc.args[0]!r}", f"{s}.{a}") from None
                rows[index[s]].append(Choice(act_index[a], tuple(x for x in d if x[1] != 0)))
        mdp = Mdp(tuple(order), tuple(actions), tuple(tuple(r) for r in rows))

        def ids(group: Sequence[str]) -> tuple[int, ...]:
            try:
                return tuple(index[n] for n in group)
            except KeyError as exc:
                raise ModelError(f"unknown open end {exc.args[0]!r}") from None

        return cls(mdp, ids(entrances_r), ids(entrances_l), ids(exits_r), ids(exits_l), ids(sinks), name)


def validate_omdp(m: OpenMdp) -> list[str]:
    """Return the list of violated well-formedness conditions (empty means ok)."""
    problems: list[str] = []
    groups = {
        "I_r": m.entrances_r, "I_l": m.entrances_l,
        "O_r": m.exits_r, "O_l": m.exits_l, "sinks": m.sinks,
    }
    n = m.mdp.num_states
    for gname, g in groups.items():
        if len(set(g)) != len(g):
            problems.append(f"duplicate state in {gname}")
        if any(not 0 <= s < n for s in g):
            problems.append(f"{gname} references an unknown state")
    names = list(groups)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            common = set(groups[a]) & set(groups[b])
            if common:
                problems.append(
                    f"open ends overlap: {a} and {b} share "
                    + ", ".join(m.mdp.state_names[s] for s in sorted(common) if 0 <= s < n)
                )
    exits = set(m.exits)
    sinks = set(m.sinks)
    for s in range(n):
        term = m.mdp.is_terminal(s)
        if s in exits and not term:
            problems.append(f"exit not terminal: {m.mdp.state_names[s]}")
        elif s in sinks and not term:
            problems.append(f"sink not terminal: {m.mdp.state_names[s]}")
        elif term and s not in exits and s not in sinks:
            problems.append(f"terminal non-exit: {m.mdp.state_names[s]}")
    return problems


def require_valid(m: OpenMdp) -> None:
    problems = validate_omdp(m)
    if problems:
        raise ModelError("invalid open MDP: " + "; ".join(problems), m.name or None)


# ---------------------------------------------------------------------------
# schedulers and chains


@dataclass(frozen=True)
class Scheduler:
    """A memoryless scheduler: state -> action id, or state -> {action: prob}."""

    choice: Mapping[int, Union[int, Mapping[int, Prob]]]

    @property
    def deterministic(self) -> bool:
        return all(isinstance(c, int) for c in self.choice.values())

    def action_dist(self, s: int) -> dict[int, Prob]:
        c = self.choice[s]
        return {c: 1} if isinstance(c, int) else dict(c)

    def restrict(self, states: Iterable[int], offset: int = 0, action_offset: int = 0) -> "Scheduler":
        """Scheduler on a sub-block of states, re-based to local ids."""
        out: dict[int, object] = {}
        for s in states:
            if s in self.choice:
                c = self.choice[s]
                if isinstance(c, int):
                    out[s - offset] = c - action_offset
                else:
                    out[s - offset] = {a - action_offset: p for a, p in c.items()}
        return Scheduler(out)

    def __hash__(self):
        return hash(tuple(sorted((s, c if isinstance(c, int) else tuple(sorted(c.items())))
                                 for s, c in self.choice.items())))


@dataclass(frozen=True)
class EntranceScheduler:
    """Entrance-indexed composite: plays ``per_entrance[i]`` after entering at ``i``."""

    per_entrance: Mapping[int, Scheduler]

    def for_entrance(self, i: int) -> Scheduler:
        return self.per_entrance[i]


@dataclass(frozen=True)
class MarkovChain:
    state_names: tuple[str, ...]
    rows: tuple[tuple[tuple[int, Prob], ...], ...]

    @property
    def num_states(self) -> int:
        return len(self.rows)

    @cached_property
    def arith(self) -> str:
        for row in self.rows:
            for _, p in row:
                return arith_of(p)
        return "rational"


def induce_chain(m: Mdp | OpenMdp, sched: Scheduler | None = None) -> MarkovChain:
    """Resolve nondeterminism with a memoryless scheduler.

    Terminals become absorbing.  A state with a single enabled action does not
    need a scheduler entry.
    """
    mdp = m.mdp if isinstance(m, OpenMdp) else m
    rows = []
    for s, row in enumerate(mdp.choices):
        if not row:
            rows.append(((s, _one(mdp)),))
            continue
        if sched is not None and s in sched.choice:
            adist = sched.action_dist(s)
        elif len(row) == 1:
            adist = {row[0].action: 1}
        else:
            raise ModelError(f"scheduler undefined on non-terminal state {mdp.state_names[s]}")
        acc: dict[int, Prob] = {}
        for c in row:
            q = adist.get(c.action, 0)
            if q == 0:
                continue
            for t, p in c.dist:
                acc[t] = acc.get(t, 0) + q * p
        extra = set(adist) - set(c.action for c in row)
        if extra:
            raise ModelError(f"scheduler picks disabled action at {mdp.state_names[s]}")
        rows.append(tuple(sorted(acc.items())))
    return MarkovChain(mdp.state_names, tuple(rows))


def _one(mdp: Mdp) -> Prob:
    return Fraction(1) if mdp.arith == "rational" else 1.0


def absorption(chain: MarkovChain, targets: Sequence[int]) -> dict[int, list[Prob]]:
    """Probability, from every state, of reaching each target (first visit).

    Returns ``{state: [Pr(reach targets[0]), ...]}``; rows absent from the dict
    are all-zero.  Targets are treated as absorbing.  Exact Gaussian
    elimination under the rational engine, sparse LU under the float engine.
    """
    tindex = {t: j for j, t in enumerate(targets)}
    n = chain.num_states
    # states that reach some target with positive probability
    pre: list[list[int]] = [[] for _ in range(n)]
    for s, row in enumerate(chain.rows):
        if s in tindex:
            continue
        for t, p in row:
            if p > 0:
                pre[t].append(s)
    maybe = set(tindex)
    queue = deque(tindex)
    while queue:
        t = queue.popleft()
        for s in pre[t]:
            if s not in maybe:
                maybe.add(s)
                queue.append(s)
    free = sorted(maybe - set(tindex))
    result: dict[int, list[Prob]] = {}
    zero: Prob = Fraction(0) if chain.arith == "rational" else 0.0
    one: Prob = Fraction(1) if chain.arith == "rational" else 1.0
    for t, j in tindex.items():
        vec = [zero] * len(targets)
        vec[j] = one
        result[t] = vec
    if not free:
        return result
    if chain.arith == "rational":
        sol = _solve_exact(chain, free, tindex)
    else:
        sol = _solve_float(chain, free, tindex)
    result.update(sol)
    return result


def _solve_exact(chain: MarkovChain, free: list[int], tindex: dict[int, int]) -> dict[int, list[Prob]]:
    idx = {s: i for i, s in enumerate(free)}
    k = len(tindex)
    # row i: x_i - sum_j P_ij x_j = b_i ; stored as dict col->coef, rhs list
    rows: list[dict[int, Fraction]] = []
    rhs: list[list[Fraction]] = []
    for s in free:
        r: dict[int, Fraction] = {idx[s]: Fraction(1)}
        b = [Fraction(0)] * k
        for t, p in chain.rows[s]:
            if t in idx:
                r[idx[t]] = r.get(idx[t], Fraction(0)) - p
            elif t in tindex:
                b[tindex[t]] += p
        rows.append(r)
        rhs.append(b)
    n = len(free)
    # elimination without pivoting: I - Q is a nonsingular M-matrix here
    col_rows: list[set[int]] = [set() for _ in range(n)]
    for i, r in enumerate(rows):
        for j in r:
            col_rows[j].add(i)
    for piv in range(n):
        prow = rows[piv]
        d = prow[piv]
        for i in sorted(col_rows[piv]):
            if i <= piv:
                continue
            r = rows[i]
            f = r.get(piv)
            if not f:
                continue
            f = f / d
            for j, v in prow.items():
                nv = r.get(j, Fraction(0)) - f * v
                if nv:
                    r[j] = nv
                    col_rows[j].add(i)
                else:
                    r.pop(j, None)
            r.pop(piv, None)
            bi, bp = rhs[i], rhs[piv]
            for c in range(k):
                if bp[c]:
                    bi[c] -= f * bp[c]
    x: list[list[Fraction]] = [[Fraction(0)] * k for _ in range(n)]
    for i in range(n - 1, -1, -1):
        r = rows[i]
        acc = list(rhs[i])
        for j, v in r.items():
            if j > i:
                xj = x[j]
                for c in range(k):
                    if xj[c]:
                        acc[c] -= v * xj[c]
        d = r[i]
        x[i] = [a / d for a in acc]
    return {s: x[i] for s, i in idx.items()}


def _solve_float(chain: MarkovChain, free: list[int], tindex: dict[int, int]) -> dict[int, list[Prob]]:
    idx = {s: i for i, s in enumerate(free)}
    n, k = len(free), len(tindex)
    ri, ci, vals = [], [], []
    b = np.zeros((n, k))
    for s in free:
        i = idx[s]
        for t, p in chain.rows[s]:
            j = idx.get(t)
            if j is not None:
                ri.append(i)
                ci.append(j)
                vals.append(p)
            elif t in tindex:
                b[i, tindex[t]] += p
    q = sp.csr_matrix((vals, (ri, ci)), shape=(n, n))
    a = (sp.identity(n, format="csr") - q).tocsc()
    x = spla.spsolve(a, b)
    x = np.asarray(x).reshape(n, k)
    resid = np.abs(a @ x - b).max() if n else 0.0
    if resid > 1e-10:
        # refine once; the chains solved here are well conditioned in practice
        x = x + np.asarray(spla.spsolve(a, b - a @ x)).reshape(n, k)
    x = np.clip(x, 0.0, 1.0)
    return {s: [float(v) for v in x[i]] for s, i in idx.items()}


def reach_probs(chain: MarkovChain, source: int, targets: Iterable[int]) -> Prob:
    """``Pr(source |= <> targets)`` in ``chain``."""
    targets = sorted(set(targets))
    if source in targets:
        return Fraction(1) if chain.arith == "rational" else 1.0
    if not targets:
        return Fraction(0) if chain.arith == "rational" else 0.0
    # merge targets into a single absorbing column
    probs = absorption(chain, targets)
    row = probs.get(source)
    if row is None:
        return Fraction(0) if chain.arith == "rational" else 0.0
    return sum(row[1:], row[0])


def exit_reach(m: OpenMdp, sched: Scheduler | None, sources: Sequence[int] | None = None) -> dict[int, list[Prob]]:
    """Per-exit reach vectors (exit order ``O_r + O_l``) from each source state."""
    chain = induce_chain(m, sched)
    probs = absorption(chain, m.exits)
    zero: Prob = Fraction(0) if chain.arith == "rational" else 0.0
    srcs = m.entrances if sources is None else sources
    return {s: probs.get(s, [zero] * len(m.exits)) for s in srcs}
