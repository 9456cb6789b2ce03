"""String diagrams over open MDPs and their monolithic semantics.

A diagram is a tree of :class:`Leaf`, :class:`Seq`, :class:`Sum` and
:class:`Trace` nodes.  Seq and Sum are n-ary.  The monolith is built in one
pass: leaf blocks are laid out in left-to-right order and every connected exit
gains a single fresh ``bridge`` action with a Dirac transition to the entrance
it is wired to.

Trace convention: ``Trace(child, k)`` feeds the last ``k`` rightward exits of
the child back into its last ``k`` rightward entrances, in order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Union

from .errors import ArityError, ModelError
from .model import Arity, Choice, Mdp, OpenMdp, Scheduler

BRIDGE = "bridge"


@dataclass(frozen=True)
class Leaf:
    name: str
    model: OpenMdp = field(compare=False)

    @property
    def key(self) -> str:
        return "leaf:" + self.model.content_hash


@dataclass(frozen=True)
class Seq:
    children: tuple["Diagram", ...]


@dataclass(frozen=True)
class Sum:
    children: tuple["Diagram", ...]


@dataclass(frozen=True)
class Trace:
    child: "Diagram"
    k: int


Diagram = Union[Leaf, Seq, Sum, Trace]
Path = tuple[int, ...]


def seq(*children: Diagram) -> Seq:
    return Seq(tuple(children))


def dsum(*children: Diagram) -> Sum:
    return Sum(tuple(children))


def _fmt_path(path: Path) -> str:
    return "root" + "".join(f"/{i}" for i in path)


def type_check(d: Diagram, path: Path = ()) -> Arity:
    """Arity of ``d``; raises :class:`ArityError` naming the offending node."""
    if isinstance(d, Leaf):
        return d.model.arity
    if isinstance(d, Sum):
        total = Arity(0, 0, 0, 0)
        for i, c in enumerate(d.children):
            total = total + type_check(c, path + (i,))
        return total
    if isinstance(d, Seq):
        if not d.children:
            raise ModelError("empty sequential composition", _fmt_path(path))
        arities = [type_check(c, path + (i,)) for i, c in enumerate(d.children)]
        for i in range(len(arities) - 1):
            if arities[i].right != arities[i + 1].left:
                raise ArityError(
                    f"arity mismatch between child {i} {arities[i]} and child {i + 1} {arities[i + 1]}",
                    _fmt_path(path),
                )
        first, last = arities[0], arities[-1]
        return Arity(first.m_r, first.m_l, last.n_r, last.n_l)
    if isinstance(d, Trace):
        a = type_check(d.child, path + (0,))
        if d.k < 0 or d.k > min(a.n_r, a.m_r):
            raise ArityError(f"trace loop count {d.k} exceeds child arity {a}", _fmt_path(path))
        return Arity(a.m_r - d.k, a.m_l, a.n_r - d.k, a.n_l)
    raise TypeError(f"not a diagram: {d!r}")


def leaves(d: Diagram, path: Path = ()) -> Iterator[tuple[Path, Leaf]]:
    if isinstance(d, Leaf):
        yield path, d
    elif isinstance(d, (Seq, Sum)):
        for i, c in enumerate(d.children):
            yield from leaves(c, path + (i,))
    else:
        yield from leaves(d.child, path + (0,))


def subdiagram(d: Diagram, path: Path) -> Diagram:
    for i in path:
        d = d.child if isinstance(d, Trace) else d.children[i]
    return d


# ---------------------------------------------------------------------------
# monolithic semantics


@dataclass(frozen=True)
class Ends:
    entrances_r: tuple[int, ...]
    entrances_l: tuple[int, ...]
    exits_r: tuple[int, ...]
    exits_l: tuple[int, ...]

    @property
    def entrances(self) -> tuple[int, ...]:
        return self.entrances_r + self.entrances_l

    @property
    def exits(self) -> tuple[int, ...]:
        return self.exits_r + self.exits_l


@dataclass(frozen=True)
class LeafBlock:
    path: Path
    leaf: Leaf
    offset: int
    action_map: tuple[int, ...]  # local action id -> global action id


@dataclass(frozen=True)
class Layout:
    """Where every leaf and every sub-diagram lives inside the monolith."""

    omdp: OpenMdp
    blocks: tuple[LeafBlock, ...]
    ends: dict[Path, Ends]
    bridges: dict[int, int]  # connected exit -> entrance it feeds
    bridge_action: int
    bridge_at: dict[int, Path] = field(default_factory=dict)  # connected exit -> node that wired it

    def block_of(self, state: int) -> LeafBlock:
        lo, hi = 0, len(self.blocks) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.blocks[mid].offset <= state:
                lo = mid
            else:
                hi = mid - 1
        return self.blocks[lo]


def build_layout(d: Diagram, arith: str | None = None) -> Layout:
    """Monolithic semantics of ``d`` together with its layout."""
    type_check(d)
    blocks: list[LeafBlock] = []
    ends: dict[Path, Ends] = {}
    bridges: dict[int, int] = {}
    bridge_at: dict[int, Path] = {}
    names: list[str] = []
    action_names: list[str] = []
    action_index: dict[str, int] = {}
    rows: list[tuple[Choice, ...]] = []
    sinks: list[int] = []
    leaf_models: list[OpenMdp] = []

    def gid(a: str) -> int:
        if a not in action_index:
            action_index[a] = len(action_names)
            action_names.append(a)
        return action_index[a]

    def wire(src: int, dst: int, path: Path) -> None:
        if src in bridges:
            raise AssertionError("exit wired twice")
        bridges[src] = dst
        bridge_at[src] = path

    def go(node: Diagram, path: Path) -> Ends:
        if isinstance(node, Leaf):
            m = node.model if arith is None else node.model.to_arith(arith)
            leaf_models.append(m)
            off = len(names)
            amap = tuple(gid(a) for a in m.mdp.action_names)
            blocks.append(LeafBlock(path, node, off, amap))
            tag = f"{node.name}[{len(blocks) - 1}]."
            names.extend(tag + s for s in m.mdp.state_names)
            for row in m.mdp.choices:
                rows.append(tuple(Choice(amap[a], tuple((t + off, p) for t, p in dist)) for a, dist in row))
            sinks.extend(s + off for s in m.sinks)
            e = Ends(*(tuple(s + off for s in g) for g in (m.entrances_r, m.entrances_l, m.exits_r, m.exits_l)))
        elif isinstance(node, Sum):
            parts = [go(c, path + (i,)) for i, c in enumerate(node.children)]
            e = Ends(*(sum((getattr(p, f) for p in parts), ()) for f in
                       ("entrances_r", "entrances_l", "exits_r", "exits_l")))
        elif isinstance(node, Seq):
            parts = [go(c, path + (i,)) for i, c in enumerate(node.children)]
            for a, b in zip(parts, parts[1:]):
                for x, y in zip(a.exits_r, b.entrances_r):
                    wire(x, y, path)
                for x, y in zip(b.exits_l, a.entrances_l):
                    wire(x, y, path)
            e = Ends(parts[0].entrances_r, parts[-1].entrances_l, parts[-1].exits_r, parts[0].exits_l)
        else:
            c = go(node.child, path + (0,))
            k = node.k
            nr, mr = len(c.exits_r), len(c.entrances_r)
            for j in range(k):
                wire(c.exits_r[nr - k + j], c.entrances_r[mr - k + j], path)
            e = Ends(c.entrances_r[: mr - k], c.entrances_l, c.exits_r[: nr - k], c.exits_l)
        ends[path] = e
        return e

    top = go(d, ())
    one = _one_like(leaf_models)
    bridge = gid(BRIDGE)
    rows_l = list(rows)
    for src, dst in bridges.items():
        rows_l[src] = (Choice(bridge, ((dst, one),)),)
    mdp = Mdp(tuple(names), tuple(action_names), tuple(rows_l))
    name = _diagram_name(d)
    omdp = OpenMdp(mdp, top.entrances_r, top.entrances_l, top.exits_r, top.exits_l, tuple(sinks), name)
    return Layout(omdp, tuple(blocks), ends, bridges, bridge, bridge_at)


def _one_like(models: list[OpenMdp]):
    for m in models:
        if m.mdp.num_choices:
            return Fraction(1) if m.arith == "rational" else 1.0
    return Fraction(1)


def _diagram_name(d: Diagram) -> str:
    if isinstance(d, Leaf):
        return d.name
    if isinstance(d, Seq):
        return "(" + " ; ".join(_diagram_name(c) for c in d.children) + ")"
    if isinstance(d, Sum):
        return "(" + " + ".join(_diagram_name(c) for c in d.children) + ")"
    return f"trace[{d.k}]({_diagram_name(d.child)})"


def semantics(d: Diagram, arith: str | None = None) -> OpenMdp:
    """The monolithic open MDP denoted by ``d``."""
    return build_layout(d, arith).omdp


def _leaf(m: OpenMdp, default: str) -> Leaf:
    return Leaf(m.name or default, m)


def seq_compose(a: OpenMdp, b: OpenMdp) -> OpenMdp:
    return semantics(Seq((_leaf(a, "A"), _leaf(b, "B"))))


def sum_compose(a: OpenMdp, b: OpenMdp) -> OpenMdp:
    return semantics(Sum((_leaf(a, "A"), _leaf(b, "B"))))


def trace(m: OpenMdp, k: int) -> OpenMdp:
    return semantics(Trace(_leaf(m, "A"), k))


def split_scheduler(layout: Layout, sched: Scheduler) -> dict[Path, Scheduler]:
    """Restrict a memoryless scheduler of the monolith to every leaf.

    Bridging actions are forced and dropped.  Result keys are leaf paths and
    schedulers use each leaf's local state and action ids.
    """
    out: dict[Path, Scheduler] = {}
    for blk in layout.blocks:
        inv = {g: l for l, g in enumerate(blk.action_map)}
        local: dict[int, object] = {}
        n = blk.leaf.model.num_states
        for s in range(blk.offset, blk.offset + n):
            if s in layout.bridges or s not in sched.choice:
                continue
            c = sched.choice[s]
            if isinstance(c, int):
                local[s - blk.offset] = inv[c]
            else:
                local[s - blk.offset] = {inv[a]: p for a, p in c.items()}
        out[blk.path] = Scheduler(local)
    return out


def join_schedulers(layout: Layout, parts: dict[Path, Scheduler]) -> Scheduler:
    """Inverse of :func:`split_scheduler`; bridges take their forced action."""
    choice: dict[int, object] = {}
    for blk in layout.blocks:
        sch = parts.get(blk.path)
        if sch is None:
            continue
        for s, c in sch.choice.items():
            if isinstance(c, int):
                choice[s + blk.offset] = blk.action_map[c]
            else:
                choice[s + blk.offset] = {blk.action_map[a]: p for a, p in c.items()}
    for src in layout.bridges:
        choice[src] = layout.bridge_action
    return Scheduler(choice)


def normalize(d: Diagram) -> Diagram:
    """Rebalance n-ary Seq/Sum into binary trees split at a power of two.

    Identical runs of children then produce identical subtrees, which keeps
    structural cache keys shared (a chain of ``N`` equal leaves needs
    ``O(log N)`` distinct analyses).  Semantics is unchanged: the monolith of
    the normalized diagram equals the original one state for state.
    """
    if isinstance(d, Leaf):
        return d
    if isinstance(d, Trace):
        return Trace(normalize(d.child), d.k)
    kids = [normalize(c) for c in d.children]
    # flatten nested nodes of the same kind first
    flat: list[Diagram] = []
    for c in kids:
        if type(c) is type(d):
            flat.extend(_flatten(c, type(d)))
        else:
            flat.append(c)
    if not flat:
        return type(d)(())
    return _balance(flat, type(d))


def _flatten(d: Diagram, kind) -> list[Diagram]:
    out: list[Diagram] = []
    for c in d.children:
        if type(c) is kind:
            out.extend(_flatten(c, kind))
        else:
            out.append(c)
    return out


def _balance(items: list[Diagram], kind) -> Diagram:
    if len(items) == 1:
        return items[0]
    if len(items) == 2:
        return kind((items[0], items[1]))
    # split at the largest power of two below n so equal runs align
    p = 1
    while p * 2 < len(items):
        p *= 2
    return kind((_balance(items[:p], kind), _balance(items[p:], kind)))


def structural_key(d: Diagram) -> str:
    if isinstance(d, Leaf):
        return d.key
    if isinstance(d, Trace):
        return f"trace{d.k}({structural_key(d.child)})"
    tag = "seq" if isinstance(d, Seq) else "sum"
    return tag + "(" + ",".join(structural_key(c) for c in d.children) + ")"
