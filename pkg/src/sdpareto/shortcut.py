"""Shortcut open MDPs: one action per point, straight from entrances to exits.

The shortcut of a point family ``B`` has states ``I + O + {*}``.  At entrance
``i`` there is one action per point ``p`` of ``B_i`` moving to exit ``o`` with
probability ``p(o)`` and to ``*`` with the remaining mass.  Exits and ``*``
are terminal; ``*`` is recorded as a sink.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import ModelError
from .model import Arity, Choice, EntranceScheduler, Mdp, OpenMdp, Scheduler

STAR = "*"
FLOAT_SDIST_TOL = 1e-9


@dataclass(frozen=True)
class Signature:
    """Names of the open ends of an open MDP, in order."""

    entrances_r: tuple[str, ...]
    entrances_l: tuple[str, ...]
    exits_r: tuple[str, ...]
    exits_l: tuple[str, ...]

    @property
    def entrances(self) -> tuple[str, ...]:
        return self.entrances_r + self.entrances_l

    @property
    def exits(self) -> tuple[str, ...]:
        return self.exits_r + self.exits_l

    @property
    def arity(self) -> Arity:
        return Arity(len(self.entrances_r), len(self.exits_l), len(self.exits_r), len(self.entrances_l))

    @classmethod
    def of(cls, m: OpenMdp) -> "Signature":
        names = m.mdp.state_names
        return cls(*(tuple(names[s] for s in g) for g in (m.entrances_r, m.entrances_l, m.exits_r, m.exits_l)))

    @classmethod
    def generic(cls, arity: Arity) -> "Signature":
        return cls(tuple(f"ir{j + 1}" for j in range(arity.m_r)), tuple(f"il{j + 1}" for j in range(arity.n_l)),
                   tuple(f"or{j + 1}" for j in range(arity.n_r)), tuple(f"ol{j + 1}" for j in range(arity.m_l)))


@dataclass(frozen=True)
class ShortcutMdp:
    omdp: OpenMdp
    # (entrance index, action id) -> (point, tag of the source lower vertex or None)
    provenance: dict[tuple[int, int], tuple[tuple, object]]

    def point(self, entrance: int, action: int) -> tuple:
        return self.provenance[(entrance, action)][0]

    def tag(self, entrance: int, action: int) -> object:
        return self.provenance[(entrance, action)][1]


def _check_point(p: Sequence, n: int, where: str) -> tuple:
    if len(p) != n:
        raise ModelError(f"point has {len(p)} coordinates, expected {n}", where)
    exact = not any(isinstance(x, float) for x in p)
    tol = 0 if exact else FLOAT_SDIST_TOL
    if any(x < -tol for x in p) or sum(p) > 1 + tol:
        raise ModelError(f"point {tuple(p)} is not a subdistribution", where)
    if exact:
        return tuple(Fraction(x) for x in p)
    q = tuple(min(1.0, max(0.0, float(x))) for x in p)
    s = sum(q)
    return tuple(x / s for x in q) if s > 1 else q


def shortcut_from_points(sig: Signature, family: Sequence[Sequence[Sequence]],
                         tags: Sequence[Sequence[object]] | None = None, name: str = "") -> ShortcutMdp:
    """Shortcut oMDP for ``family[i]`` = points available at entrance ``i``."""
    ents, exs = sig.entrances, sig.exits
    if len(family) != len(ents):
        raise ModelError(f"family has {len(family)} entries for {len(ents)} entrances")
    n = len(exs)
    states = ents + exs + (STAR,)
    star = len(states) - 1
    exit_ids = range(len(ents), len(ents) + n)
    npts = max((len(f) for f in family), default=0)
    actions = tuple(f"p{k}" for k in range(npts))
    rows: list[tuple[Choice, ...]] = []
    prov: dict[tuple[int, int], tuple[tuple, object]] = {}
    exact = True
    for i, pts in enumerate(family):
        if not pts:
            raise ModelError("every entrance needs at least one point", ents[i])
        row = []
        for k, p in enumerate(pts):
            q = _check_point(p, n, ents[i])
            exact = exact and not any(isinstance(x, float) for x in q)
            one = Fraction(1) if not any(isinstance(x, float) for x in q) else 1.0
            rest = one - sum(q, 0 * one)
            if isinstance(rest, float) and rest < 1e-15:
                rest = 0.0
            dist = [(o, x) for o, x in zip(exit_ids, q) if x != 0]
            if rest != 0:
                dist.append((star, rest))
            if isinstance(rest, float) and dist:
                # make the float row sum to exactly 1 on its largest entry
                s = sum(x for _, x in dist)
                j = max(range(len(dist)), key=lambda t: dist[t][1])
                dist[j] = (dist[j][0], dist[j][1] + (1.0 - s))
            row.append(Choice(k, tuple(dist)))
            prov[(i, k)] = (q, None if tags is None else tags[i][k])
        rows.append(tuple(row))
    rows.extend(() for _ in range(n + 1))
    if not exact:
        rows = [tuple(Choice(c.action, tuple((t, float(x)) for t, x in c.dist)) for c in r) for r in rows]
    mdp = Mdp(states, actions, tuple(rows))
    k_r, k_l = len(sig.entrances_r), len(sig.entrances_l)
    e0 = len(ents)
    omdp = OpenMdp(
        mdp,
        tuple(range(k_r)), tuple(range(k_r, k_r + k_l)),
        tuple(range(e0, e0 + len(sig.exits_r))), tuple(range(e0 + len(sig.exits_r), e0 + n)),
        (star,), name,
    )
    return ShortcutMdp(omdp, prov)


def shortcut_from_lower(sig: Signature, lowers: Sequence, name: str = "") -> ShortcutMdp:
    """Shortcut over the vertices of per-entrance lower sets, keeping their tags."""
    return shortcut_from_points(sig, [lo.vertices for lo in lowers], [lo.tags for lo in lowers], name)


def shortcut_from_upper(sig: Signature, uppers: Sequence, name: str = "") -> ShortcutMdp:
    """Shortcut over the generating vertices of per-entrance upper sets."""
    return shortcut_from_points(sig, [u.pareto_vertices() for u in uppers], None, name)


def recover_scheduler(shortcut: ShortcutMdp, shortcut_sched: Scheduler) -> EntranceScheduler:
    """Entrance-indexed scheduler of the source oMDP from a DM scheduler on its shortcut.

    At entrance ``i`` it plays the annotated scheduler of the point chosen there.
    """
    m = shortcut.omdp
    per: dict[int, Scheduler] = {}
    for i, s in enumerate(m.entrances):
        row = m.mdp.choices[s]
        if s in shortcut_sched.choice:
            a = shortcut_sched.choice[s]
            if not isinstance(a, int):
                raise ModelError("shortcut scheduler must be deterministic")
        elif len(row) == 1:
            a = row[0].action
        else:
            raise ModelError(f"shortcut scheduler undefined at entrance {m.mdp.state_names[s]}")
        tag = shortcut.tag(i, a)
        if not isinstance(tag, Scheduler):
            raise ModelError("missing scheduler annotation: shortcut not built from an annotated lower set")
        per[i] = tag
    return EntranceScheduler(per)
