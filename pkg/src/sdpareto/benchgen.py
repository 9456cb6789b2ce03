"""Seeded generators for benchmark leaves (rooms, dice) and diagrams (grids, chains).

Rooms are square grid worlds with slippery movement and holes; their doors
sit at the four edge-centre cells.  A rightward room has arity (2,0)->(2,0)
with entrances ``W, S`` and exits ``E, N``; a bidirectional room adds the
reverse doors and has arity (2,2)->(2,2).

Diagrams are built from anti-diagonal layers of rooms joined by wiring oMDPs
that route every door either to the neighbouring room or to a dead sink.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .diagram import Diagram, Leaf, Seq, Sum, Trace, type_check
from .errors import ModelError
from .model import OpenMdp

SLIP = {"calm": Fraction(1, 10), "windy": Fraction(3, 10)}
HOLES = {"safe": Fraction(2, 100), "unsafe": Fraction(8, 100)}
MOVES = {"N": (0, 1), "E": (1, 0), "S": (0, -1), "W": (-1, 0)}
LATERAL = {"N": ("W", "E"), "S": ("E", "W"), "E": ("N", "S"), "W": ("S", "N")}

DEFAULT_DICE = (
    {-1: Fraction(3, 10), 1: Fraction(7, 10)},
    {-2: Fraction(45, 100), 2: Fraction(55, 100)},
    {-3: Fraction(55, 100), 1: Fraction(15, 100), 3: Fraction(3, 10)},
)


@dataclass(frozen=True)
class RoomSpec:
    side: int = 7
    safety: str = "safe"
    wind: str = "calm"
    slip: Fraction | None = None
    hole_density: Fraction | None = None
    seed: int = 0
    bidirectional: bool = True

    def slip_prob(self) -> Fraction:
        if self.slip is not None:
            return Fraction(self.slip)
        if self.wind not in SLIP:
            raise ModelError(f"wind must be one of {sorted(SLIP)}, got {self.wind!r}")
        return SLIP[self.wind]

    def density(self) -> Fraction:
        if self.hole_density is not None:
            return Fraction(self.hole_density)
        if self.safety not in HOLES:
            raise ModelError(f"safety must be one of {sorted(HOLES)}, got {self.safety!r}")
        return HOLES[self.safety]


def gen_room(spec: RoomSpec, arith: str = "rational", name: str | None = None) -> OpenMdp:
    n = spec.side
    if n < 3 or n % 2 == 0:
        raise ModelError(f"room side must be odd and at least 3, got {n}")
    slip = spec.slip_prob()
    if not 0 <= slip <= 1:
        raise ModelError("slip probability outside [0, 1]")
    c = n // 2
    doors = {"W": (0, c), "E": (n - 1, c), "S": (c, 0), "N": (c, n - 1)}
    out_sides = ("E", "N", "W", "S") if spec.bidirectional else ("E", "N")
    in_sides = ("W", "S", "E", "N") if spec.bidirectional else ("W", "S")

    cells = [(x, y) for y in range(n) for x in range(n)]
    free = [p for p in cells if p not in doors.values()]
    rng = random.Random(spec.seed)
    n_holes = round(spec.density() * len(cells))
    holes = set(rng.sample(free, min(n_holes, len(free))))

    def cname(p: tuple[int, int]) -> str:
        return f"c{p[0]}_{p[1]}"

    def target(p: tuple[int, int], d: str) -> str:
        dx, dy = MOVES[d]
        q = (p[0] + dx, p[1] + dy)
        if not (0 <= q[0] < n and 0 <= q[1] < n):
            if p == doors[d] and d in out_sides:
                return f"out_{d}"
            return cname(p)
        return "hole" if q in holes else cname(q)

    trans: dict[str, dict[str, dict[str, Fraction]]] = {}
    for side in in_sides:
        trans[f"in_{side}"] = {"enter": {cname(doors[side]): Fraction(1)}}
    for p in cells:
        if p in holes:
            continue
        acts = {}
        for d in MOVES:
            dist: dict[str, Fraction] = {}
            for t, q in ((d, 1 - slip), (LATERAL[d][0], slip / 2), (LATERAL[d][1], slip / 2)):
                if q:
                    s = target(p, t)
                    dist[s] = dist.get(s, Fraction(0)) + q
            acts[d] = dist
        trans[cname(p)] = acts
    has_hole = bool(holes)
    states = [f"in_{s}" for s in in_sides] + [f"out_{s}" for s in out_sides] + (["hole"] if has_hole else [])
    states += [cname(p) for p in cells if p not in holes]
    tag = "bi" if spec.bidirectional else "uni"
    return OpenMdp.build(
        trans,
        entrances_r=["in_W", "in_S"], entrances_l=["in_E", "in_N"] if spec.bidirectional else [],
        exits_r=["out_E", "out_N"], exits_l=["out_W", "out_S"] if spec.bidirectional else [],
        sinks=["hole"] if has_hole else [], states=states, arith=arith,
        name=name or f"room{n}_{spec.safety}_{spec.wind}_{tag}_s{spec.seed}",
    )


@dataclass(frozen=True)
class DiceSpec:
    rounds: int = 100
    dice: tuple = DEFAULT_DICE
    exits: int = 2
    bands: tuple[tuple[int, int], ...] | None = None
    start_scores: tuple[int, ...] = (0,)
    max_score: int = 100

    def score_bands(self) -> tuple[tuple[int, int], ...]:
        if self.bands is not None:
            return tuple(tuple(b) for b in self.bands)
        k, top = self.exits, self.max_score
        if k < 1:
            raise ModelError("dice game needs at least one exit")
        lows = [j * top // k for j in range(k)]
        return tuple((lo, (lows[j + 1] - 1 if j + 1 < k else top)) for j, lo in enumerate(lows))


def _check_bands(bands: Sequence[tuple[int, int]], top: int) -> None:
    expect = 0
    for lo, hi in bands:
        if lo != expect or hi < lo:
            raise ModelError(f"score bands must partition [0, {top}] in order, got {list(bands)}")
        expect = hi + 1
    if expect != top + 1:
        raise ModelError(f"score bands must partition [0, {top}] in order, got {list(bands)}")


def gen_dice(spec: DiceSpec, arith: str = "rational", name: str | None = None) -> OpenMdp:
    """Dice game: ``rounds`` throws of a chosen die, exit by the final score's band."""
    top = spec.max_score
    bands = spec.score_bands()
    _check_bands(bands, top)
    if spec.rounds < 0:
        raise ModelError("rounds must be nonnegative")
    dice = [{int(k): Fraction(v) for k, v in d.items()} for d in spec.dice]
    if not dice:
        raise ModelError("at least one die is required")
    for d in dice:
        if sum(d.values()) != 1 or any(v < 0 for v in d.values()):
            raise ModelError(f"die {d} is not a distribution")
    band_of = {}
    for j, (lo, hi) in enumerate(bands):
        for s in range(lo, hi + 1):
            band_of[s] = f"x{j}"

    def sname(r: int, s: int) -> str:
        return band_of[s] if r == spec.rounds else f"r{r}_{s}"

    trans: dict[str, dict[str, dict[str, Fraction]]] = {}
    ents = []
    frontier = []
    for i, s0 in enumerate(spec.start_scores):
        if not 0 <= s0 <= top:
            raise ModelError(f"start score {s0} outside [0, {top}]")
        e = f"start{i}"
        ents.append(e)
        trans[e] = {"begin": {sname(0, s0): Fraction(1)}}
        frontier.append((0, s0))
    seen = set(frontier)
    while frontier:
        r, s = frontier.pop()
        if r == spec.rounds:
            continue
        acts = {}
        for k, d in enumerate(dice):
            dist: dict[str, Fraction] = {}
            for delta, p in d.items():
                t = min(top, max(0, s + delta))
                nm = sname(r + 1, t)
                dist[nm] = dist.get(nm, Fraction(0)) + p
                if (r + 1, t) not in seen:
                    seen.add((r + 1, t))
                    frontier.append((r + 1, t))
            acts[f"d{k}"] = dist
        trans[sname(r, s)] = acts
    exits = [f"x{j}" for j in range(len(bands))]
    inner = sorted(((r, s) for r, s in seen if r < spec.rounds))
    states = ents + exits + [sname(r, s) for r, s in inner]
    return OpenMdp.build(trans, entrances_r=ents, exits_r=exits, states=states, arith=arith,
                         name=name or f"dice{spec.rounds}_{len(bands)}x")


# ---------------------------------------------------------------------------
# wiring and diagrams


def wiring(right: Sequence[int | None], n_out_r: int, left: Sequence[int | None] = (), n_out_l: int = 0,
           arith: str = "rational", name: str = "wire") -> OpenMdp:
    """Deterministic router: ``right[i]`` is the right exit fed by right entrance ``i``.

    ``None`` routes to a dead sink.  ``left`` does the same for the leftward
    ends.  Unfed exits are simply unreachable.
    """
    trans: dict[str, dict[str, dict[str, int]]] = {}
    ir = [f"ir{i}" for i in range(len(right))]
    il = [f"il{i}" for i in range(len(left))]
    orr = [f"or{j}" for j in range(n_out_r)]
    ol = [f"ol{j}" for j in range(n_out_l)]
    dead = False
    for srcs, outs, targets in ((ir, orr, right), (il, ol, left)):
        for s, t in zip(srcs, targets):
            if t is None:
                dead = True
                trans[s] = {"go": {"dead": 1}}
            else:
                if not 0 <= t < len(outs):
                    raise ModelError(f"wiring target {t} out of range")
                trans[s] = {"go": {outs[t]: 1}}
    sinks = ["dead"] if dead else []
    return OpenMdp.build(trans, entrances_r=ir, entrances_l=il, exits_r=orr, exits_l=ol, sinks=sinks,
                         states=ir + il + orr + ol + sinks, arith=arith, name=name)


def _layer(d: int, n: int) -> list[tuple[int, int]]:
    return [(x, d - x) for x in range(max(0, d - n + 1), min(d, n - 1) + 1)]


def _grid(n: int, leaf: OpenMdp, bidirectional: bool) -> Diagram:
    if n < 1:
        raise ModelError("grid size must be at least 1")
    ar = leaf.arity
    want = (2, 2, 2, 2) if bidirectional else (2, 0, 2, 0)
    if tuple(ar) != want:
        raise ModelError(f"grid leaf must have arity ({want[0]},{want[1]})->({want[2]},{want[3]}), got {ar}")
    arith = leaf.arith
    room = Leaf(leaf.name or "room", leaf)
    layers = [_layer(d, n) for d in range(2 * n - 1)]
    parts: list[Diagram] = []
    # entry: the single start feeds the west door of room (0,0)
    parts.append(Leaf("start", wiring([0], 2, [None, None] if bidirectional else [], 0, arith, "start")))
    for d, cells in enumerate(layers):
        parts.append(room if len(cells) == 1 else Sum(tuple(room for _ in cells)))
        if d + 1 == len(layers):
            break
        nxt = layers[d + 1]
        pos = {p: i for i, p in enumerate(nxt)}
        right: list[int | None] = []
        for (x, y) in cells:
            right.append(2 * pos[(x + 1, y)] if (x + 1, y) in pos else None)      # E -> W
            right.append(2 * pos[(x, y + 1)] + 1 if (x, y + 1) in pos else None)  # N -> S
        left: list[int | None] = []
        if bidirectional:
            back = {p: i for i, p in enumerate(cells)}
            for (x, y) in nxt:
                left.append(2 * back[(x - 1, y)] if (x - 1, y) in back else None)      # W -> E
                left.append(2 * back[(x, y - 1)] + 1 if (x, y - 1) in back else None)  # S -> N
        parts.append(Leaf(f"w{d}", wiring(right, 2 * len(nxt), left, 2 * len(cells) if bidirectional else 0,
                                          arith, f"w{d}")))
    goal = wiring([0, 0], 1, [], 2 if bidirectional else 0, arith, "goal")
    parts.append(Leaf("goal", goal))
    out = Seq(tuple(parts))
    type_check(out)
    return out


def gen_unigrid(n: int, leaf: OpenMdp) -> Diagram:
    """``n x n`` grid of rightward rooms; goal behind room ``(n, n)``."""
    return _grid(n, leaf, False)


def gen_bigrid(n: int, leaf: OpenMdp) -> Diagram:
    """``n x n`` grid of bidirectional rooms; goal behind room ``(n, n)``."""
    return _grid(n, leaf, True)


def gen_chain(n: int, leaf: OpenMdp) -> Diagram:
    """``n`` copies of a (k,0)->(k,0) leaf in sequence; the last lane loops back."""
    if n < 1:
        raise ModelError("chain length must be at least 1")
    ar = leaf.arity
    if ar.m_l or ar.n_l or ar.m_r != ar.n_r or ar.m_r < 2:
        raise ModelError(f"chain leaf must have arity (k,0)->(k,0) with k >= 2, got {ar}")
    node = Leaf(leaf.name or "cell", leaf)
    body: Diagram = node if n == 1 else Seq(tuple(node for _ in range(n)))
    out = Trace(body, 1)
    type_check(out)
    return out


@dataclass(frozen=True)
class BenchInstance:
    name: str
    diagram: Diagram
    leaves: tuple[OpenMdp, ...] = field(default_factory=tuple)


def bench_family(family: str, n: int, leaf: str = "rms", seed: int = 0, arith: str = "float",
                 variant: tuple[str, str] = ("safe", "calm")) -> BenchInstance:
    """Named instance: family in {unigrid, bigrid, chain}, leaf in {rms, rmb, dice}."""
    family, leaf = family.lower(), leaf.lower()
    bidir = family == "bigrid"
    if leaf in ("rms", "rmb"):
        side = 7 if leaf == "rms" else 101
        m = gen_room(RoomSpec(side, variant[0], variant[1], seed=seed, bidirectional=bidir), arith)
    elif leaf == "dice":
        if bidir:
            raise ModelError("dice leaves are rightward; use unigrid or chain")
        m = gen_dice(DiceSpec(exits=2, start_scores=(0, 50)), arith)
    else:
        raise ModelError(f"unknown leaf kind {leaf!r}")
    gens = {"unigrid": gen_unigrid, "bigrid": gen_bigrid, "chain": gen_chain}
    if family not in gens:
        raise ModelError(f"unknown family {family!r}")
    return BenchInstance(f"{family}{n}_{leaf}", gens[family](n, m), (m,))
