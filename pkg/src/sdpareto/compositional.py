"""Recursive sound approximation of a string diagram, with caching.

Leaves are analysed directly.  At an inner node the children's lower sets and
upper sets are turned into shortcut oMDPs, composed with the node's operator,
and each composition is analysed again.  The analysis of the lower composition
supplies the node's lower sets, the one of the upper composition its upper
sets.

Lower vertices are tagged with :class:`Plan` objects.  A plan says, for the
entrance it belongs to, which point every child should realise whenever the
play enters that child; leaf plans carry the leaf's memoryless scheduler.
:class:`HierarchicalScheduler` replays a plan tree on the monolith.

Diagrams are normalized into balanced binary trees first (see
:func:`~sdpareto.diagram.normalize`) so that repeated sub-diagrams share cache
entries.
"""

from __future__ import annotations

import hashlib
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .diagram import (Diagram, Layout, Leaf, Path, Seq, Sum, Trace, build_layout, leaves, normalize, subdiagram,
                      type_check)
from .errors import ModelError, ResourceCapError
from .geometry import LowerSet
from .model import MarkovChain, Prob, Scheduler, absorption, check_arith
from .multiobj import EntranceApprox, SoundApproximation, approx_multiobj
from .shortcut import ShortcutMdp, Signature, shortcut_from_lower, shortcut_from_upper


@dataclass(eq=False)
class Plan:
    """How to realise one lower vertex from one entrance of a (sub-)diagram."""

    point: tuple
    leaf_sched: Scheduler | None = None
    sched: Scheduler | None = None          # on the composed lower shortcut
    layout: Layout | None = None            # of the composed lower shortcut
    children: tuple[ShortcutMdp, ...] = ()  # child lower shortcuts (with provenance)

    @property
    def is_leaf(self) -> bool:
        return self.leaf_sched is not None

    def child_plan(self, child: int, entrance: int) -> "Plan":
        lay = self.layout
        state = lay.ends[(child,)].entrances[entrance]
        a = self.sched.choice.get(state)
        row = lay.omdp.mdp.choices[state]
        if a is None:
            a = row[0].action
        blk = lay.blocks[child]
        local = blk.action_map.index(a)
        tag = self.children[child].tag(entrance, local)
        if not isinstance(tag, Plan):
            raise ModelError("child lower vertex carries no plan")
        return tag


@dataclass
class NodeResult:
    approx: SoundApproximation
    stage: tuple[SoundApproximation, SoundApproximation] | None = None
    _lower_sc: ShortcutMdp | None = None
    _upper_sc: ShortcutMdp | None = None

    def lower_shortcut(self) -> ShortcutMdp:
        if self._lower_sc is None:
            a = self.approx
            self._lower_sc = shortcut_from_lower(a.signature, [e.lower for e in a.per_entrance])
        return self._lower_sc

    def upper_shortcut(self) -> ShortcutMdp:
        if self._upper_sc is None:
            a = self.approx
            self._upper_sc = shortcut_from_upper(a.signature, [e.upper for e in a.per_entrance])
        return self._upper_sc


class CurveCache:
    """Structural-hash keyed store of node results with hit/miss counters."""

    def __init__(self):
        self._store: dict[str, NodeResult] = {}
        self._lock = threading.Lock()
        self.hits = {"leaf": 0, "node": 0}
        self.misses = {"leaf": 0, "node": 0}

    def get(self, key: str, kind: str) -> NodeResult | None:
        with self._lock:
            r = self._store.get(key)
            if r is None:
                self.misses[kind] += 1
            else:
                self.hits[kind] += 1
            return r

    def put(self, key: str, value: NodeResult) -> None:
        with self._lock:
            self._store[key] = value

    def __len__(self) -> int:
        return len(self._store)


def _wrap_leaf(a: SoundApproximation) -> SoundApproximation:
    per = []
    for e in a.per_entrance:
        tags = [Plan(p, leaf_sched=t) for p, t in zip(e.lower.vertices, e.lower.tags)]
        lo = LowerSet(a.dim, e.lower.vertices, tags, support=e.lower.support, exact=e.lower.exact, prune=False)
        per.append(EntranceApprox(lo, e.upper))
    return SoundApproximation(a.signature, per, a.eta, a.arith, a.queries, dict(a.meta))


def _compose_diagram(kind: str, leaves: list[Leaf], k: int | None) -> Diagram:
    if kind == "seq":
        return Seq(tuple(leaves))
    if kind == "sum":
        return Sum(tuple(leaves))
    if kind == "trace":
        return Trace(leaves[0], k)
    raise ModelError(f"unknown composition kind {kind!r}")


def compose_step(kind: str, children: Sequence[SoundApproximation], eta: Prob, arith: str,
                 k: int | None = None, child_results: Sequence[NodeResult] | None = None,
                 iter_cap: int | None = None) -> NodeResult:
    """One inner-node step: compose children's shortcuts and re-analyse both sides.

    ``stage`` of the result holds the analyses of the lower and the upper
    composition, whose own gaps are the stage terms of the rightward bound.
    """
    if child_results is None:
        child_results = [NodeResult(c) for c in children]
    lows = [r.lower_shortcut() for r in child_results]
    ups = [r.upper_shortcut() for r in child_results]
    lay_l = build_layout(_compose_diagram(kind, [Leaf(f"c{i}", s.omdp) for i, s in enumerate(lows)], k), arith)
    lay_u = build_layout(_compose_diagram(kind, [Leaf(f"c{i}", s.omdp) for i, s in enumerate(ups)], k), arith)
    a_l = approx_multiobj(lay_l.omdp, eta, arith, iter_cap)
    a_u = approx_multiobj(lay_u.omdp, eta, arith, iter_cap)
    per = []
    for el, eu in zip(a_l.per_entrance, a_u.per_entrance):
        tags = [Plan(p, sched=t, layout=lay_l, children=tuple(lows)) for p, t in zip(el.lower.vertices, el.lower.tags)]
        lo = LowerSet(a_l.dim, el.lower.vertices, tags, support=el.lower.support, exact=el.lower.exact, prune=False)
        per.append(EntranceApprox(lo, eu.upper))
    sig = _composed_signature(kind, [c.approx.signature for c in child_results], k)
    out = SoundApproximation(sig, per, a_l.eta, a_l.arith, a_l.queries + a_u.queries)
    return NodeResult(out, (a_l, a_u))


def _composed_signature(kind: str, sigs: list[Signature], k: int | None) -> Signature:
    if kind == "sum":
        return Signature(*(sum((getattr(s, f) for s in sigs), ()) for f in
                           ("entrances_r", "entrances_l", "exits_r", "exits_l")))
    if kind == "seq":
        first, last = sigs[0], sigs[-1]
        return Signature(first.entrances_r, last.entrances_l, last.exits_r, first.exits_l)
    s = sigs[0]
    return Signature(s.entrances_r[: len(s.entrances_r) - k], s.entrances_l,
                     s.exits_r[: len(s.exits_r) - k], s.exits_l)


class Analyzer:
    """Runs the recursive analysis of one diagram (optionally sharing a cache)."""

    def __init__(self, eta: Prob, arith: str = "float", cache: CurveCache | None = None,
                 use_cache: bool = True, jobs: int = 1, iter_cap: int | None = None):
        check_arith(arith)
        if eta == 0 and arith != "rational":
            raise ModelError("eta = 0 requires the rational engine")
        self.eta = eta
        self.arith = arith
        self.cache = cache if cache is not None else CurveCache()
        self.use_cache = use_cache
        self.jobs = max(1, jobs)
        self.iter_cap = iter_cap
        self.leaf_runs = 0
        self._keys: dict[int, str] = {}
        self._pool = ThreadPoolExecutor(self.jobs) if self.jobs > 1 else None
        self._count_lock = threading.Lock()

    def key(self, d: Diagram) -> str:
        k = self._keys.get(id(d))
        if k is not None:
            return k
        if isinstance(d, Leaf):
            raw = "leaf:" + d.model.content_hash
        elif isinstance(d, Trace):
            raw = f"trace{d.k}:" + self.key(d.child)
        else:
            tag = "seq" if isinstance(d, Seq) else "sum"
            raw = tag + ":" + ",".join(self.key(c) for c in d.children)
        k = hashlib.sha256(raw.encode()).hexdigest()
        self._keys[id(d)] = k
        return k

    def analyze(self, d: Diagram, path: Path = ()) -> NodeResult:
        kind = "leaf" if isinstance(d, Leaf) else "node"
        ck = f"{self.key(d)}|{self.eta!r}|{self.arith}"
        if self.use_cache:
            hit = self.cache.get(ck, kind)
            if hit is not None:
                return hit
        else:
            with self._count_lock:
                self.cache.misses[kind] += 1
        try:
            res = self._compute(d, path)
        except ResourceCapError as exc:
            raise ResourceCapError(f"at {'root' + ''.join(f'/{i}' for i in path)}: {exc}", exc.achieved) from None
        if self.use_cache:
            self.cache.put(ck, res)
        return res

    def _compute(self, d: Diagram, path: Path) -> NodeResult:
        if isinstance(d, Leaf):
            with self._count_lock:
                self.leaf_runs += 1
            a = approx_multiobj(d.model, self.eta, self.arith, self.iter_cap)
            return NodeResult(_wrap_leaf(a))
        if isinstance(d, Trace):
            kids = [self.analyze(d.child, path + (0,))]
            return compose_step("trace", [r.approx for r in kids], self.eta, self.arith, d.k, kids, self.iter_cap)
        kids = [self.analyze(c, path + (i,)) for i, c in enumerate(d.children)]
        kind = "seq" if isinstance(d, Seq) else "sum"
        if not kids:
            return NodeResult(_wrap_leaf(approx_multiobj(build_layout(d, self.arith).omdp, self.eta, self.arith)))
        if len(kids) == 1:
            return kids[0]
        return compose_step(kind, [r.approx for r in kids], self.eta, self.arith, None, kids, self.iter_cap)

    def warm_leaves(self, d: Diagram) -> None:
        """Analyse the distinct leaves of ``d`` on the worker pool, filling the cache.

        The recursion itself stays sequential; inner nodes then hit the cache
        for their leaves.  Without caching there is nothing to share, so this
        is a no-op.
        """
        if self._pool is None or not self.use_cache:
            return
        todo: dict[str, tuple[Leaf, Path]] = {}
        for path, leaf in leaves(d):
            todo.setdefault(self.key(leaf), (leaf, path))
        futs = [self._pool.submit(self.analyze, leaf, path) for leaf, path in todo.values()]
        for f in futs:
            f.result()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()


def approx_multiobj_sd(d: Diagram, eta: Prob, arith: str = "float", cache: CurveCache | None = None,
                       use_cache: bool = True, jobs: int = 1, iter_cap: int | None = None) -> SoundApproximation:
    """Sound approximation of ``semantics(d)`` computed compositionally."""
    type_check(d)
    nd = normalize(d)
    an = Analyzer(eta, arith, cache, use_cache, jobs, iter_cap)
    try:
        t0 = time.perf_counter()
        an.warm_leaves(nd)
        res = an.analyze(nd)
    finally:
        an.close()
    out = res.approx
    out.meta.update({
        "normalized": nd, "result": res, "cache": an.cache, "leaf_runs": an.leaf_runs,
        "time": time.perf_counter() - t0,
    })
    return out


# ---------------------------------------------------------------------------
# schedulers


@dataclass
class HierarchicalScheduler:
    """A plan tree rooted at one entrance, playable on the monolith of ``diagram``."""

    diagram: Diagram          # normalized diagram the plans refer to
    entrance: int
    plan: Plan
    arith: str | None = None  # engine the plans were computed under
    _layout: Layout | None = field(default=None, repr=False)

    def layout(self, arith: str | None = None) -> Layout:
        arith = arith or self.arith
        if self._layout is None or (arith is not None and self._layout.omdp.arith != arith):
            self._layout = build_layout(self.diagram, arith)
        return self._layout

    def replay(self, arith: str | None = None) -> tuple:
        """Exit-reach vector of the scheduler on the monolith from its entrance."""
        return replay(self.layout(arith), self.diagram, self.plan, self.entrance)


def _descend(d: Diagram, lay: Layout, ctx: tuple, y: int, leaf_paths: dict[int, Path]) -> tuple:
    """Extend a plan context down to the leaf that owns entrance state ``y``."""
    path, plan = ctx[-1]
    node = subdiagram(d, path)
    while not isinstance(node, Leaf):
        lp = leaf_paths[y]
        c = lp[len(path)]
        cpath = path + (c,)
        j = lay.ends[cpath].entrances.index(y)
        plan = plan.child_plan(c, j)
        path = cpath
        ctx = ctx + ((path, plan),)
        node = subdiagram(d, path)
    return ctx


def replay(lay: Layout, d: Diagram, root: Plan, entrance: int) -> tuple:
    """Play a plan tree on the monolith and return its exact exit-reach vector."""
    m = lay.omdp
    mdp = m.mdp
    exits = {x: j for j, x in enumerate(m.exits)}
    sinks = set(m.sinks)
    leaf_paths: dict[int, Path] = {}
    for blk in lay.blocks:
        for s in range(blk.offset, blk.offset + blk.leaf.model.num_states):
            leaf_paths[s] = blk.path
    bridge_at = lay.bridge_at
    one = Fraction(1) if m.arith == "rational" else 1.0

    start_state = m.entrances[entrance]
    ctx0 = _descend(d, lay, (((), root),), start_state, leaf_paths)
    index: dict[tuple, int] = {}
    rows: list[tuple] = []
    names: list[str] = []

    def intern(s: int, ctx) -> int:
        key = (s, None) if s in exits or s in sinks else (s, ctx)
        i = index.get(key)
        if i is None:
            i = index[key] = len(rows)
            rows.append(None)
            names.append(f"{mdp.state_names[s]}@{len(ctx or ())}")
            queue.append(key)
        return i

    queue: deque = deque()
    first = intern(start_state, ctx0)
    while queue:
        s, ctx = queue.popleft()
        i = index[(s, ctx)]
        if ctx is None or not mdp.choices[s]:
            rows[i] = ((i, one),)
            continue
        if s in lay.bridges:
            y = lay.bridges[s]
            node = bridge_at[s]
            k = len(ctx)
            while ctx[k - 1][0] != node:
                k -= 1
            nctx = _descend(d, lay, ctx[:k], y, leaf_paths)
            rows[i] = ((intern(y, nctx), one),)
            continue
        _, plan = ctx[-1]
        blk = lay.block_of(s)
        local = s - blk.offset
        choice = plan.leaf_sched.choice.get(local)
        if choice is None:
            if len(mdp.choices[s]) != 1:
                raise ModelError(f"plan undefined at {mdp.state_names[s]}")
            adist = {mdp.choices[s][0].action: one}
        elif isinstance(choice, int):
            adist = {blk.action_map[choice]: one}
        else:
            adist = {blk.action_map[a]: p for a, p in choice.items()}
        acc: dict[int, Prob] = {}
        for c in mdp.choices[s]:
            q = adist.get(c.action)
            if not q:
                continue
            for t, p in c.dist:
                j = intern(t, ctx)
                acc[j] = acc.get(j, 0) + q * p
        rows[i] = tuple(sorted(acc.items()))
    chain = MarkovChain(tuple(names), tuple(rows))
    targets = [index[(x, None)] for x in m.exits if (x, None) in index]
    probs = absorption(chain, targets)
    zero = 0 * one
    row = probs.get(first, [zero] * len(targets))
    out = [zero] * len(m.exits)
    pos = [exits[x] for x in m.exits if (x, None) in index]
    for j, v in zip(pos, row):
        out[j] = v
    return tuple(out)


def check_single_exit(d: Diagram, entrance: int, exit_: int, eps: Prob, arith: str = "float",
                      cache: CurveCache | None = None, max_rounds: int = 8, jobs: int = 1
                      ) -> tuple[Prob, Prob, HierarchicalScheduler]:
    """Bounds on the maximal probability of one exit from one entrance, within ``eps``.

    Tightens ``eta`` by a factor of 10 per round, starting at ``eps``.  Under
    the rational engine a last round with ``eta = 0`` is exact.
    """
    arity = type_check(d)
    n_in = arity.m_r + arity.n_l
    n_out = arity.n_r + arity.m_l
    if not 0 <= entrance < n_in or not 0 <= exit_ < n_out:
        raise ModelError(f"entrance {entrance} / exit {exit_} outside arity {arity}")
    if arith == "rational":
        eta: Prob = Fraction(eps) if not isinstance(eps, float) else Fraction(repr(eps))
    else:
        eta = float(eps)
    if eps <= 0 and arith != "rational":
        raise ModelError("eps must be positive under the float engine")
    cache = cache if cache is not None else CurveCache()
    lo = hi = None
    for round_ in range(max_rounds + 1):
        a = approx_multiobj_sd(d, eta, arith, cache, jobs=jobs)
        ea = a.per_entrance[entrance]
        best = max(range(len(ea.lower)), key=lambda i: ea.lower.vertices[i][exit_])
        lo = ea.lower.vertices[best][exit_]
        plan = ea.lower.tags[best]
        e_vec = tuple((1 if j == exit_ else 0) * (Fraction(1) if arith == "rational" else 1.0)
                      for j in range(a.dim))
        hi = ea.upper.support_value(e_vec)
        if hi - lo <= eps:
            sched = HierarchicalScheduler(a.meta["normalized"], entrance, plan, arith)
            return lo, hi, sched
        if arith == "rational" and round_ == max_rounds - 1:
            eta = Fraction(0)
        else:
            eta = eta / 10
    raise ResourceCapError(f"could not reach precision {eps}: bounds [{lo}, {hi}]", achieved=(lo, hi))


# ---------------------------------------------------------------------------
# error calculus


def measure_error(approx: SoundApproximation, norm: str = "linf") -> Prob:
    """Largest gap over the entrances of ``approx``."""
    return approx.gap(norm)


def compose_error_bounds(kind: str, component_gaps: Sequence[Prob], n_exits_a: int | None = None,
                         stage_gaps: Sequence[Prob] = (0, 0), arities: Sequence | None = None) -> Prob:
    """A priori L-infinity error bound of a sum or a rightward sequential composition.

    ``sum``: the largest component error.  ``rightward-seq``: with component
    errors ``(g_A, g_B)`` and stage errors ``(s_1, s_2)`` of the analyses of
    the composed lower and upper shortcuts, ``|O^A| g_A + g_B + s_1 + s_2``.
    """
    if kind == "sum":
        return max(component_gaps)
    if kind == "rightward-seq":
        if arities is not None and any(a.m_l or a.n_l for a in arities):
            raise ModelError("rightward bound needs rightward operands (no leftward ends)")
        if n_exits_a is None or len(component_gaps) != 2:
            raise ModelError("rightward bound needs two component errors and |O^A|")
        g_a, g_b = component_gaps
        return n_exits_a * g_a + g_b + sum(stage_gaps)
    raise ModelError(f"unknown composition kind {kind!r}")


def stage_gaps(res: NodeResult, norm: str = "linf") -> tuple[Prob, Prob]:
    """Gaps of the lower-composition and upper-composition analyses of a node."""
    if res.stage is None:
        raise ModelError("leaf results have no stage analyses")
    a_l, a_u = res.stage
    return a_l.gap(norm), a_u.gap(norm)
