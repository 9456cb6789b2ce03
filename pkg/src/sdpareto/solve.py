"""Maximal reachability: exact policy iteration and a certified float solver.

The rational engine runs policy iteration with strict improvement directly on
the MDP.  A policy that cannot be strictly improved is a fixed point of the
Bellman operator; since its value is achievable and the optimum is the least
fixed point, it is optimal.

The float engine first collapses maximal end components (MECs), runs policy
iteration on the end-component-free quotient with sparse LU evaluations, then
certifies an upper bound ``u`` by checking ``T u <= u`` (any pre-fixed point of
the Bellman operator dominates the optimum).  If certification fails it falls
back to value iteration from above on the quotient.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .errors import ModelError, ResourceCapError
from .model import Choice, MarkovChain, Mdp, Prob, Scheduler, absorption

CERT_TOL = 1e-15
IMPROVE_TOL = 1e-13
FALLBACK_MAX_SWEEPS = 1_000_000


@dataclass(frozen=True)
class ReachSolution:
    """Per-state lower/upper bounds on the maximal reach probability plus a witness."""

    lower: tuple[Prob, ...]
    upper: tuple[Prob, ...]
    scheduler: Scheduler


def prob0(mdp: Mdp, targets: Iterable[int]) -> set[int]:
    """States from which no scheduler reaches ``targets``."""
    good = mdp.can_reach(targets)
    return set(range(mdp.num_states)) - good


def mec_decomposition(mdp: Mdp, states: Iterable[int]) -> list[tuple[list[int], dict[int, list[int]]]]:
    """Maximal end components inside ``states``.

    Returns ``[(members, {state: internal action ids})]``.  Actions with any
    successor outside ``states`` never belong to an end component.
    """
    cand = set(states)
    acts: dict[int, list[int]] = {}
    for s in cand:
        ok = [c.action for c in mdp.choices[s] if all(t in cand for t, p in c.dist if p > 0)]
        if ok:
            acts[s] = ok
    while True:
        nodes = sorted(acts)
        if not nodes:
            return []
        idx = {s: i for i, s in enumerate(nodes)}
        rows, cols = [], []
        for s in nodes:
            for a in acts[s]:
                for t, p in mdp.transition(s, a).items():
                    if p > 0 and t in idx:
                        rows.append(idx[s])
                        cols.append(idx[t])
        g = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(nodes), len(nodes)))
        _, label = csgraph.connected_components(g, directed=True, connection="strong")
        changed = False
        new_acts: dict[int, list[int]] = {}
        for s in nodes:
            ls = label[idx[s]]
            keep = []
            for a in acts[s]:
                if all(p == 0 or (t in idx and label[idx[t]] == ls) for t, p in mdp.transition(s, a).items()):
                    keep.append(a)
            if len(keep) != len(acts[s]):
                changed = True
            if keep:
                new_acts[s] = keep
            else:
                changed = True
        acts = new_acts
        if not changed:
            groups: dict[int, list[int]] = {}
            for s in nodes:
                groups.setdefault(int(label[idx[s]]), []).append(s)
            return [(members, {s: acts[s] for s in members}) for members in groups.values()]


def solve_reach(mdp: Mdp, targets: Iterable[int], delta: Prob | None = None) -> ReachSolution:
    """Bounds on max reach probability of ``targets`` from every state.

    Under the rational engine the result is exact (lower == upper).  Under the
    float engine ``upper - lower <= delta``; ``delta`` must be positive.
    """
    one = Fraction(1) if mdp.arith == "rational" else 1.0
    return solve_values(mdp, {t: one for t in targets}, delta)


def solve_values(mdp: Mdp, values: Mapping[int, Prob], delta: Prob | None = None) -> ReachSolution:
    """Maximal expected value collected on first reaching one of ``values``' keys.

    Keys are treated as absorbing and pay their value; paths that never reach
    one pay 0.  With all values 1 this is maximal reachability; with
    ``values = {exit_j: w_j}`` it is the weighted query of the multi-objective
    loop, equivalent to redirecting exit ``j`` to a fresh goal with
    probability ``w_j`` (see :func:`weighted_mdp`).
    """
    if mdp.arith == "rational":
        return _solve_exact(mdp, {t: Fraction(v) for t, v in values.items()})
    if delta is None or delta <= 0:
        raise ModelError("the float engine needs a positive precision delta")
    return _solve_float(mdp, {t: float(v) for t, v in values.items()}, float(delta))


def weighted_mdp(mdp: Mdp, exits: Sequence[int], w: Sequence[Prob]) -> tuple[Mdp, int]:
    """Explicit weighted-query MDP: exit ``j`` moves to a fresh goal w.p. ``w_j``.

    The remainder goes to a fresh sink.  Returns the MDP and the goal id.
    """
    n = mdp.num_states
    top, bot = n, n + 1
    one = Fraction(1) if mdp.arith == "rational" else 1.0
    act = len(mdp.action_names)
    rows = list(mdp.choices) + [(), ()]
    for o, wj in zip(exits, w):
        dist = tuple((t, p) for t, p in ((top, wj), (bot, one - wj)) if p != 0)
        rows[o] = (Choice(act, dist),)
    m = Mdp(mdp.state_names + ("<goal>", "<sink>"), mdp.action_names + ("<weigh>",), tuple(rows))
    return m, top


def max_reach(mdp: Mdp, source: int, targets: Iterable[int], delta: Prob | None = None) -> tuple[Prob, Scheduler]:
    """Maximal probability of reaching ``targets`` from ``source`` and a DM witness.

    The returned value is the exact value of the witness (rational engine) or
    its float evaluation.
    """
    targets = set(targets)
    sol = solve_reach(mdp, targets, 1e-9 if delta is None and mdp.arith == "float" else delta)
    return sol.lower[source], sol.scheduler


# ---------------------------------------------------------------------------
# rational engine


def _default_policy(mdp: Mdp, good: set[int]) -> dict[int, int]:
    pol = {}
    for s, row in enumerate(mdp.choices):
        if not row:
            continue
        pick = row[0].action
        for c in row:
            if any(t in good and t != s for t, p in c.dist if p > 0):
                pick = c.action
                break
        pol[s] = pick
    return pol


def _evaluate_exact(mdp: Mdp, pol: dict[int, int], values: dict[int, Fraction]) -> list[Fraction]:
    rows = []
    for s, row in enumerate(mdp.choices):
        if s in values or not row:
            rows.append(((s, Fraction(1)),))
        else:
            rows.append(mdp.choices[s][_choice_index(mdp, s, pol[s])].dist)
    chain = MarkovChain(mdp.state_names, tuple(rows))
    tl = sorted(values)
    rv = [values[t] for t in tl]
    probs = absorption(chain, tl)
    zero = Fraction(0)
    out = [zero] * mdp.num_states
    for s, row in probs.items():
        out[s] = sum((r * p for r, p in zip(rv, row) if p), zero)
    return out


def _choice_index(mdp: Mdp, s: int, a: int) -> int:
    for k, c in enumerate(mdp.choices[s]):
        if c.action == a:
            return k
    raise ModelError(f"action {a} not enabled at {mdp.state_names[s]}")


def _solve_exact(mdp: Mdp, values: dict[int, Fraction]) -> ReachSolution:
    targets = set(values)
    good = mdp.can_reach(t for t, v in values.items() if v > 0)
    pol = _default_policy(mdp, good)
    maybe = [s for s in sorted(good - targets) if mdp.choices[s]]
    while True:
        v = _evaluate_exact(mdp, pol, values)
        changed = False
        for s in maybe:
            cur = pol[s]
            best_a, best_q = cur, v[s]
            for c in mdp.choices[s]:
                q = sum((p * v[t] for t, p in c.dist), Fraction(0))
                if q > best_q:
                    best_a, best_q = c.action, q
            if best_a != cur:
                pol[s] = best_a
                changed = True
        if not changed:
            break
    vals = tuple(v)
    return ReachSolution(vals, vals, Scheduler(pol))


# ---------------------------------------------------------------------------
# float engine


@dataclass
class _Quotient:
    members: list[list[int]]          # class id -> states
    internal: list[dict[int, list[int]]]
    ch_src: list[tuple[int, int]]     # choice -> (state, action)
    P: sp.csr_matrix                  # choice x class transition
    B: sp.csr_matrix                  # choice x target transition
    targets: tuple[int, ...]
    starts: np.ndarray                # first choice index of each class


def _quotient(mdp: Mdp, targets: frozenset[int]) -> _Quotient | None:
    """End-component-free quotient of the states that can reach ``targets``.

    Cached per target set on the MDP, so repeated weighted queries share it.
    """
    cache = mdp.__dict__.setdefault("_quotients", {})
    if targets in cache:
        return cache[targets]
    maybe = {s for s in mdp.can_reach(targets) - targets if mdp.choices[s]}
    if not maybe:
        cache[targets] = None
        return None
    mecs = mec_decomposition(mdp, maybe)
    cls_of: dict[int, int] = {}
    members: list[list[int]] = []
    internal: list[dict[int, list[int]]] = []
    for mem, acts in mecs:
        k = len(members)
        members.append(sorted(mem))
        internal.append(acts)
        for s in mem:
            cls_of[s] = k
    for s in sorted(maybe):
        if s not in cls_of:
            cls_of[s] = len(members)
            members.append([s])
            internal.append({})
    tlist = tuple(sorted(targets))
    tidx = {t: j for j, t in enumerate(tlist)}
    ch_src, rows, cols, vals, brows, bcols, bvals = [], [], [], [], [], [], []
    starts = []
    for k, mem in enumerate(members):
        starts.append(len(ch_src))
        inner = internal[k]
        for s in mem:
            skip = set(inner.get(s, ()))
            for c in mdp.choices[s]:
                if c.action in skip:
                    continue
                j = len(ch_src)
                ch_src.append((s, c.action))
                acc: dict[int, float] = {}
                for t, p in c.dist:
                    if t in tidx:
                        brows.append(j)
                        bcols.append(tidx[t])
                        bvals.append(p)
                    else:
                        kt = cls_of.get(t)
                        if kt is not None:
                            acc[kt] = acc.get(kt, 0.0) + p
                for kt, p in acc.items():
                    rows.append(j)
                    cols.append(kt)
                    vals.append(p)
        if len(ch_src) == starts[-1]:
            raise AssertionError("maybe class without leaving choice")
    nch = len(ch_src)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(nch, len(members)))
    B = sp.csr_matrix((bvals, (brows, bcols)), shape=(nch, len(tlist)))
    q = _Quotient(members, internal, ch_src, P, B, tlist, np.array(starts, dtype=np.int64))
    cache[targets] = q
    return q


def _solve_float(mdp: Mdp, values: dict[int, float], delta: float) -> ReachSolution:
    n = mdp.num_states
    lower = np.zeros(n)
    upper = np.zeros(n)
    for t, r in values.items():
        lower[t] = upper[t] = r
    pol: dict[int, int] = {}
    q = _quotient(mdp, frozenset(values))
    if q is not None:
        b = q.B @ np.array([values[t] for t in q.targets])
        choice, v, u = _quotient_iteration(q, b, delta)
        for k, mem in enumerate(q.members):
            s_star, a_star = q.ch_src[choice[k]]
            pol.update(_route_mec(mdp, mem, q.internal[k], s_star, a_star))
            lower[mem] = v[k]
            upper[mem] = u[k]
    for s, row in enumerate(mdp.choices):
        if row and s not in pol:
            pol[s] = row[0].action
    return ReachSolution(tuple(lower.tolist()), tuple(upper.tolist()), Scheduler(pol))


def _evaluate_quotient(q: _Quotient, b: np.ndarray, choice: np.ndarray) -> np.ndarray:
    m = len(q.members)
    a = sp.identity(m, format="csc") - q.P[choice].tocsc()
    v = spla.spsolve(a, b[choice])
    return np.clip(np.atleast_1d(v), 0.0, 1.0)


def _bellman(q: _Quotient, b: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    qv = q.P @ v + b
    return qv, np.maximum.reduceat(qv, q.starts)


def _quotient_iteration(q: _Quotient, b: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # start with the choice of largest one-step payoff
    choice = _argmax_per_class(q, b, q.starts.copy(), None)
    v = _evaluate_quotient(q, b, choice)
    for _ in range(100_000):
        qv, best = _bellman(q, b, v)
        improve = best > qv[choice] + IMPROVE_TOL
        if not improve.any():
            break
        choice = _argmax_per_class(q, qv, choice, improve)
        v = _evaluate_quotient(q, b, choice)
    else:  # pragma: no cover - strict improvement terminates
        raise ResourceCapError("policy iteration did not converge")
    u = np.minimum(1.0, v + delta / 2)
    _, tu = _bellman(q, b, u)
    if np.all(tu <= u + CERT_TOL):
        return choice, v, u
    return choice, v, _value_iteration_above(q, b, v, delta)


def _argmax_per_class(q: _Quotient, qv: np.ndarray, choice: np.ndarray, mask) -> np.ndarray:
    ends = np.append(q.starts[1:], len(qv))
    out = choice.copy()
    for k in (range(len(q.starts)) if mask is None else np.nonzero(mask)[0]):
        out[k] = q.starts[k] + int(np.argmax(qv[q.starts[k]:ends[k]]))
    return out


def _value_iteration_above(q: _Quotient, b: np.ndarray, v: np.ndarray, delta: float) -> np.ndarray:
    # the quotient has no end components, so iterating from 1 converges to the optimum
    u = np.ones(len(q.members))
    for _ in range(FALLBACK_MAX_SWEEPS):
        _, tu = _bellman(q, b, u)
        u = np.minimum(u, tu)
        if np.max(u - v) <= delta:
            return u
    raise ResourceCapError("value iteration from above did not reach the requested precision",
                           achieved=float(np.max(u - v)))


def _route_mec(mdp: Mdp, members: Sequence[int], internal: dict[int, list[int]], s_star: int, a_star: int) -> dict[int, int]:
    """Inside an end component, walk almost surely to ``s_star`` and leave with ``a_star``."""
    pol = {s_star: a_star}
    if len(members) == 1:
        return pol
    pred: dict[int, list[tuple[int, int]]] = {}
    for s, acts in internal.items():
        for a in acts:
            for t, p in mdp.transition(s, a).items():
                if p > 0:
                    pred.setdefault(t, []).append((s, a))
    queue = deque([s_star])
    while queue:
        t = queue.popleft()
        for s, a in pred.get(t, ()):
            if s not in pol:
                pol[s] = a
                queue.append(s)
    if len(pol) != len(members):
        raise AssertionError("end component is not strongly connected")
    return pol
