"""Sandwich approximation of per-entrance Pareto curves of one open MDP.

For every entrance a lower set ``L`` (achieved points, each tagged with the
memoryless scheduler that achieves it) and an upper set ``U`` (simplex cut by
weighted-optimality halfspaces) are refined by weighted reachability queries
until their L2 gap is at most ``eta``.

One query answers every entrance at once: the optimal weighted scheduler is
optimal from all states simultaneously, so its exit vector from each entrance
is a new lower point and its value bound a new upper halfspace.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .errors import ModelError, ResourceCapError
from .geometry import LowerSet, UpperSet, gap, unit
from .model import OpenMdp, Prob, Scheduler, check_arith, exit_reach, require_valid
from .shortcut import Signature
from .solve import solve_values

DEFAULT_ITER_CAP = 10_000


def iteration_cap() -> int:
    raw = os.environ.get("SDP_ITER_CAP")
    if raw is None:
        return DEFAULT_ITER_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise ModelError(f"SDP_ITER_CAP must be an integer, got {raw!r}") from None
    if cap <= 0:
        raise ModelError("SDP_ITER_CAP must be positive")
    return cap


@dataclass
class EntranceApprox:
    lower: LowerSet
    upper: UpperSet

    def gap(self, norm: str = "l2"):
        return gap(self.lower, self.upper, norm)


@dataclass
class SoundApproximation:
    """Per-entrance ``(L, U)`` pairs of one open MDP (entrance order ``I_r + I_l``)."""

    signature: Signature
    per_entrance: list[EntranceApprox]
    eta: Prob
    arith: str
    queries: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def entrances(self) -> tuple[str, ...]:
        return self.signature.entrances

    @property
    def exits(self) -> tuple[str, ...]:
        return self.signature.exits

    @property
    def dim(self) -> int:
        return len(self.exits)

    def lower(self, i: int) -> LowerSet:
        return self.per_entrance[i].lower

    def upper(self, i: int) -> UpperSet:
        return self.per_entrance[i].upper

    def gap(self, norm: str = "l2"):
        """Largest gap over all entrances (0 when there are none)."""
        if not self.per_entrance:
            return Fraction(0) if self.arith == "rational" else 0.0
        return max(e.gap(norm) for e in self.per_entrance)

    @classmethod
    def from_points(cls, signature: Signature, lower: Sequence[Sequence], upper: Sequence[Sequence],
                    eta: Prob = 0, lower_tags: Sequence[Sequence] | None = None) -> "SoundApproximation":
        """Hand-made approximation: per entrance, lower and upper generating points."""
        n = len(signature.exits)
        per = []
        for i, (lo, up) in enumerate(zip(lower, upper)):
            tags = None if lower_tags is None else lower_tags[i]
            per.append(EntranceApprox(LowerSet(n, lo, tags), UpperSet.from_points(n, up)))
        exact = all(e.lower.exact and e.upper.exact for e in per)
        return cls(signature, per, eta, "rational" if exact else "float")

    def vertex_count(self) -> int:
        """Lower vertices summed over entrances (the reported ``p``)."""
        return sum(len(e.lower) for e in self.per_entrance)


def entrance_support(m: OpenMdp, entrance: int) -> tuple[int, ...]:
    """Exit positions reachable (in the graph) from an entrance."""
    reach = m.mdp.reachable_from([entrance])
    return tuple(j for j, o in enumerate(m.exits) if o in reach)


def achieved_point(m: OpenMdp, entrance: int, sched: Scheduler) -> tuple:
    """Exit-reach vector (exit order ``O_r + O_l``) of ``sched`` from ``entrance``."""
    return tuple(exit_reach(m, sched, [entrance])[entrance])


def weighted_reach_bounds(m: OpenMdp, entrance: int, w: Sequence[Prob], delta: Prob) -> tuple[Prob, Prob, Scheduler]:
    """``(l_w, u_w, sched)`` with ``l_w <= max w.Reach <= u_w`` and ``u_w - l_w <= delta``.

    ``l_w`` is recomputed from the witness's exact exit vector.
    """
    if len(w) != len(m.exits):
        raise ModelError("weight vector length differs from the number of exits")
    if m.arith == "float" and not delta > 0:
        raise ModelError("delta = 0 requires the rational engine")
    sol = solve_values(m.mdp, dict(zip(m.exits, w)), delta)
    p = achieved_point(m, entrance, sol.scheduler)
    lw = sum((wj * pj for wj, pj in zip(w, p)), 0 * w[0])
    return lw, max(sol.upper[entrance], lw), sol.scheduler


def select_weight(lower: LowerSet, upper: UpperSet, eta: Prob) -> tuple[tuple, Prob] | None:
    """Facet normal of ``lower`` with the largest slack against ``upper``.

    Returns ``(w, slack)`` or None once every slack is at most ``eta``.  The
    maximal slack equals the L-infinity gap.
    """
    best = None
    for f in lower.facets():
        s = upper.support_value(f.w) - f.c
        if best is None or s > best[1]:
            best = (f.w, s)
    if best is None or best[1] <= eta:
        return None
    return best


def approx_multiobj(
    m: OpenMdp,
    eta: Prob,
    arith: str | None = None,
    iter_cap: int | None = None,
    on_query: Callable[[int, int, tuple], None] | None = None,
) -> SoundApproximation:
    """Sound approximation of every entrance's achievable set with L2 gap <= ``eta``."""
    if arith is not None:
        m = m.to_arith(check_arith(arith))
    arith = m.arith
    require_valid(m)
    exact = arith == "rational"
    if eta < 0:
        raise ModelError("eta must be nonnegative")
    if eta == 0 and not exact:
        raise ModelError("eta = 0 requires the rational engine")
    eta = Fraction(eta) if exact and not isinstance(eta, float) else (Fraction(repr(eta)) if exact else float(eta))
    delta = eta / 4
    cap = iter_cap or iteration_cap()
    n = len(m.exits)
    approx = SoundApproximation(
        signature=Signature.of(m), per_entrance=[], eta=eta, arith=arith,
    )
    supports = [entrance_support(m, e) for e in m.entrances]
    for supp in supports:
        approx.per_entrance.append(EntranceApprox(LowerSet(n, support=supp, exact=exact),
                                                  UpperSet.simplex(n, supp, exact)))
    if not m.entrances:
        return approx

    zero = Fraction(0) if exact else 0.0

    def query(w: tuple, origin: int) -> None:
        sol = solve_values(m.mdp, dict(zip(m.exits, w)), delta if not exact else None)
        points = exit_reach(m, sol.scheduler)
        approx.queries += 1
        if on_query is not None:
            on_query(approx.queries, origin, w)
        for idx, e in enumerate(m.entrances):
            ea = approx.per_entrance[idx]
            p = tuple(points[e])
            ea.lower.add(p, sol.scheduler)
            supp = supports[idx]
            s = sum((w[j] for j in supp), zero)
            if s == 0:
                continue
            wr = tuple(w[j] / s if j in supp else zero for j in range(n))
            lw = sum((wj * pj for wj, pj in zip(w, p)), zero)
            u = max(sol.upper[e], lw) / s
            if u < 1:
                ea.upper.cut(wr, u)

    if n == 0:
        query((), 0)
        return approx
    for j in range(n):
        query(unit(n, j, exact), -1)

    done = [False] * len(m.entrances)
    while True:
        target = None
        for idx, ea in enumerate(approx.per_entrance):
            if done[idx]:
                continue
            sel = select_weight(ea.lower, ea.upper, 0 if exact else zero)
            if sel is None:
                done[idx] = True
                continue
            w, slack = sel
            if slack <= eta and ea.gap("l2") <= eta:
                done[idx] = True
                continue
            if target is None or slack > target[2]:
                target = (idx, w, slack)
        if target is None:
            break
        if approx.queries >= cap:
            raise ResourceCapError(
                f"iteration cap {cap} reached with gap {float(approx.gap('linf')):.3g}", achieved=approx)
        idx, w, _ = target
        query(w, idx)
    approx.meta["supports"] = supports
    return approx
