"""Downward-closed convex sets in the subdistribution simplex.

A :class:`LowerSet` is given by generating points and stands for their
downward convex closure.  An :class:`UpperSet` is given by halfspaces
``w . p <= u`` intersected with the simplex ``{p >= 0, sum p <= 1}``.

Both work exactly on :class:`~fractions.Fraction` coordinates and with small
tolerances on floats.  Vertex and facet enumeration use an incremental
double-description method with the combinatorial adjacency test.  Facets of a
lower set are read off the vertices of the epigraph of its support function
over the weight simplex.

Every set carries a ``support``: the coordinates allowed to be nonzero.  All
computations happen in those coordinates; the rest are pinned to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .errors import InvariantError, ModelError, ResourceCapError

Number = Fraction | float
Point = tuple
DIM_CAP = 6
FLOAT_TOL = 1e-12
PRUNE_TOL = 1e-9


def _is_exact(xs: Iterable) -> bool:
    for x in xs:
        return not isinstance(x, float)
    return True


def _dot(a: Sequence, b: Sequence):
    s = 0
    for x, y in zip(a, b):
        s += x * y
    return s


def _check_dim(k: int) -> None:
    if k > DIM_CAP:
        raise ResourceCapError(f"dimension {k} exceeds the vertex-enumeration cap {DIM_CAP}")


class _Polytope:
    """Bounded polytope in R^d maintained by its vertices and their tight constraints."""

    def __init__(self, d: int, verts: list[tuple], tight: list[int], n_cons: int, tol: float):
        self.d = d
        self.verts = verts
        self.tight = tight
        self.n_cons = n_cons
        self.tol = tol

    def cut(self, a: Sequence, beta) -> None:
        """Intersect with ``a . x <= beta``."""
        cid = self.n_cons
        self.n_cons += 1
        bit = 1 << cid
        tol = self.tol
        vals = [_dot(a, v) - beta for v in self.verts]
        out = [i for i, s in enumerate(vals) if s > tol]
        if not out:
            for i, s in enumerate(vals):
                if s >= -tol:
                    self.tight[i] |= bit
            return
        inside = [i for i, s in enumerate(vals) if s < -tol]
        new_v: list[tuple] = []
        new_t: list[int] = []
        need = self.d - 1
        tights = self.tight
        for i in inside:
            ti = tights[i]
            for j in out:
                common = ti & tights[j]
                if common.bit_count() < need:
                    continue
                adjacent = True
                for m, tm in enumerate(tights):
                    if m != i and m != j and (tm & common) == common:
                        adjacent = False
                        break
                if not adjacent:
                    continue
                u, v = self.verts[i], self.verts[j]
                t = vals[i] / (vals[i] - vals[j])
                x = tuple(ui + t * (vi - ui) for ui, vi in zip(u, v))
                new_v.append(x)
                new_t.append(common | bit)
        keep_v, keep_t = [], []
        for i, s in enumerate(vals):
            if s > tol:
                continue
            keep_v.append(self.verts[i])
            keep_t.append(tights[i] | bit if s >= -tol else tights[i])
        # merge duplicates produced in degenerate configurations
        seen: dict[tuple, int] = {}
        verts: list[tuple] = []
        tight: list[int] = []
        for x, tx in zip(keep_v + new_v, keep_t + new_t):
            key = x if tol == 0 else tuple(round(c, 11) for c in x)
            if key in seen:
                tight[seen[key]] |= tx
                continue
            seen[key] = len(verts)
            verts.append(x)
            tight.append(tx)
        self.verts, self.tight = verts, tight
        if not self.verts:
            raise InvariantError("polytope became empty")


def _simplex_polytope(k: int, exact: bool) -> _Polytope:
    """``{x in R^k : x >= 0, sum x <= 1}``; constraint j is ``x_j >= 0``, k is the sum."""
    zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
    verts = [tuple([zero] * k)]
    tight = [(1 << k) - 1]
    for j in range(k):
        verts.append(tuple(one if i == j else zero for i in range(k)))
        tight.append(((1 << k) - 1) & ~(1 << j) | (1 << k))
    return _Polytope(k, verts, tight, k + 1, 0.0 if exact else FLOAT_TOL)


def _epigraph_polytope(k: int, exact: bool) -> _Polytope:
    """Variables ``(w_1..w_{k-1}, c)`` with ``w in simplex`` and ``-1 <= c <= 2``.

    Constraints: ``w_j >= 0`` (j < k-1), ``w_k >= 0`` (id k-1), ``c <= 2`` (id
    k), ``c >= -1`` (id k+1).
    """
    zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
    lo, hi = -one, 2 * one
    verts, tight = [], []
    for j in range(k):
        w = tuple(one if i == j else zero for i in range(k - 1))
        # simplex vertex e_j leaves exactly w_j >= 0 slack
        simplex_tight = ((1 << k) - 1) & ~(1 << j)
        verts.append(w + (hi,))
        tight.append(simplex_tight | (1 << k))
        verts.append(w + (lo,))
        tight.append(simplex_tight | (1 << (k + 1)))
    return _Polytope(k, verts, tight, k + 2, 0.0 if exact else FLOAT_TOL)


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True)
class Facet:
    w: tuple
    c: Number


class LowerSet:
    """Downward convex closure of finitely many points of the simplex."""

    def __init__(self, dim: int, points: Iterable[Point] = (), tags: Iterable[object] | None = None,
                 support: Sequence[int] | None = None, exact: bool | None = None, prune: bool = True):
        self.dim = dim
        self.support = tuple(range(dim)) if support is None else tuple(sorted(support))
        pts = [tuple(p) for p in points]
        tg = list(tags) if tags is not None else [None] * len(pts)
        if len(tg) != len(pts):
            raise ValueError("tags must parallel points")
        if exact is None:
            exact = all(_is_exact(p) for p in pts) if pts else True
        self.exact = exact
        self._tol = 0 if exact else PRUNE_TOL
        self._points: list[Point] = []
        self._tags: list[object] = []
        self._poly: _Polytope | None = None
        self._facets: list[Facet] | None = None
        for p, t in zip(pts, tg):
            self._append(p, t)
        if prune:
            self._prune()

    # -- construction -----------------------------------------------------
    def _reduce(self, p: Point) -> tuple:
        return tuple(p[j] for j in self.support)

    def _embed(self, r: Sequence) -> tuple:
        zero = Fraction(0) if self.exact else 0.0
        out = [zero] * self.dim
        for j, x in zip(self.support, r):
            out[j] = x
        return tuple(out)

    def _append(self, p: Point, tag: object) -> None:
        if len(p) != self.dim:
            raise ModelError(f"point {p} has dimension {len(p)}, expected {self.dim}")
        self._points.append(tuple(p))
        self._tags.append(tag)
        k = len(self.support)
        if k == 0:
            return
        _check_dim(k)
        if self._poly is None:
            self._poly = _epigraph_polytope(k, self.exact)
        r = self._reduce(p)
        last = r[-1]
        # w.p <= c  ->  sum_{j<k} y_j (p_j - p_k) - c <= -p_k
        a = tuple(rj - last for rj in r[:-1]) + (-1,)
        self._poly.cut(a, -last)
        self._facets = None

    def add(self, p: Point, tag: object = None) -> bool:
        """Add a point; returns False (and changes nothing) if already contained."""
        if self._points and self.contains(p):
            return False
        self._append(p, tag)
        self._prune()
        return True

    def _prune(self) -> None:
        if len(self._points) <= 1 or not self.support:
            if not self.support and len(self._points) > 1:
                self._points, self._tags = self._points[:1], self._tags[:1]
            return
        facets = self.facets()
        k = len(self.support)
        keep = []
        for i, p in enumerate(self._points):
            r = self._reduce(p)
            normals = [self._reduce(f.w) for f in facets if _dot(self._reduce(f.w), r) >= f.c - self._tol]
            if _rank(normals, self.exact) == k:
                keep.append(i)
        # drop duplicates of the same vertex, keeping the first occurrence
        uniq: list[int] = []
        for i in keep:
            p = self._points[i]
            if not any(_close(p, self._points[j], self._tol) for j in uniq):
                uniq.append(i)
        if len(uniq) != len(self._points):
            self._points = [self._points[i] for i in uniq]
            self._tags = [self._tags[i] for i in uniq]

    # -- queries ----------------------------------------------------------
    @property
    def vertices(self) -> list[Point]:
        return list(self._points)

    @property
    def tags(self) -> list[object]:
        return list(self._tags)

    def __len__(self) -> int:
        return len(self._points)

    def facets(self) -> list[Facet]:
        """Weight vectors and offsets ``(w, max_v w.v)`` of the non-redundant facets."""
        if self._facets is not None:
            return self._facets
        k = len(self.support)
        if not self._points:
            raise ModelError("an empty lower set has no facets")
        if k == 0:
            self._facets = []
            return self._facets
        one = Fraction(1) if self.exact else 1.0
        two = 2 * one
        out = []
        for y in self._poly.verts:
            c = y[-1]
            if c >= two - (0 if self.exact else FLOAT_TOL):
                continue
            w = tuple(y[:-1]) + (one - sum(y[:-1], 0 * one),)
            if not self.exact:
                w = tuple(max(0.0, x) for x in w)
                s = sum(w)
                w = tuple(x / s for x in w)
            out.append(Facet(self._embed(w), c))
        out.sort(key=lambda f: tuple(-x for x in f.w))
        self._facets = out
        return out

    def support_value(self, w: Sequence) -> Number:
        _check_len(w, self.dim)
        if not self._points:
            raise ModelError("empty lower set")
        return max(_dot(w, p) for p in self._points)

    def contains(self, p: Point, tol: float | None = None) -> bool:
        _check_len(p, self.dim)
        tol = self._tol if tol is None else tol
        if not self._points:
            return False
        if any(p[j] > tol for j in range(self.dim) if j not in self.support):
            return False
        if not self.support:
            return True
        return all(_dot(f.w, p) <= f.c + tol for f in self.facets())

    def dist_linf(self, x: Point) -> Number:
        """L-infinity distance from ``x`` to the set (extended downward)."""
        if not self.support:
            return max((abs(v) for v in x), default=0)
        zero = Fraction(0) if self.exact else 0.0
        best = max((_dot(f.w, x) - f.c for f in self.facets()), default=zero)
        outside = max((x[j] for j in range(self.dim) if j not in self.support), default=zero)
        return max(zero, best, outside)

    def dist_l2(self, x: Point) -> float:
        """Euclidean distance from ``x`` to the set (extended downward)."""
        if not self.support:
            return float(sum(v * v for v in x)) ** 0.5
        off = sum((float(x[j]) ** 2 for j in range(self.dim) if j not in self.support), 0.0)
        facets = [(self._reduce(f.w), f.c) for f in self.facets()]
        start = self._reduce(self._points[0])
        d2 = _project_sq(self._reduce(x), facets, start, self.exact)
        return (float(d2) + off) ** 0.5

    def __repr__(self) -> str:
        return f"LowerSet(dim={self.dim}, vertices={self._points!r})"


class UpperSet:
    """Simplex intersected with halfspaces ``w . p <= u`` (w nonnegative)."""

    def __init__(self, dim: int, halfspaces: Iterable[tuple[Sequence, Number]] = (),
                 support: Sequence[int] | None = None, exact: bool = True):
        self.dim = dim
        self.support = tuple(range(dim)) if support is None else tuple(sorted(support))
        self.exact = exact
        self._tol = 0 if exact else FLOAT_TOL
        self.halfspaces: list[tuple[tuple, Number]] = []
        self._poly: _Polytope | None = None
        for w, u in halfspaces:
            self.cut(w, u)

    @classmethod
    def simplex(cls, dim: int, support: Sequence[int] | None = None, exact: bool = True) -> "UpperSet":
        return cls(dim, (), support, exact)

    @classmethod
    def from_points(cls, dim: int, points: Iterable[Point], support: Sequence[int] | None = None) -> "UpperSet":
        """Smallest upper set equal to the downward convex closure of ``points``."""
        pts = [tuple(p) for p in points]
        exact = all(_is_exact(p) for p in pts)
        lo = LowerSet(dim, pts, support=support, exact=exact)
        return cls(dim, [(f.w, f.c) for f in lo.facets()], support, exact)

    def _reduce(self, p: Point) -> tuple:
        return tuple(p[j] for j in self.support)

    def _embed(self, r: Sequence) -> tuple:
        zero = Fraction(0) if self.exact else 0.0
        out = [zero] * self.dim
        for j, x in zip(self.support, r):
            out[j] = x
        return tuple(out)

    def cut(self, w: Sequence, u: Number) -> None:
        _check_len(w, self.dim)
        w = tuple(w)
        self.halfspaces.append((w, u))
        if self._poly is not None:
            self._poly.cut(self._reduce(w), u)

    def _polytope(self) -> _Polytope:
        if self._poly is None:
            k = len(self.support)
            _check_dim(k)
            self._poly = _simplex_polytope(k, self.exact)
            for w, u in self.halfspaces:
                self._poly.cut(self._reduce(w), u)
        return self._poly

    def vertices(self) -> list[Point]:
        if not self.support:
            return [self._embed(())]
        return [self._embed(v) for v in self._polytope().verts]

    def pareto_vertices(self) -> list[Point]:
        """Vertices that generate the set as a downward convex closure."""
        return LowerSet(self.dim, self.vertices(), support=self.support, exact=self.exact).vertices

    def support_value(self, w: Sequence) -> Number:
        _check_len(w, self.dim)
        return max(_dot(w, v) for v in self.vertices())

    def contains(self, p: Point, tol: float | None = None) -> bool:
        _check_len(p, self.dim)
        tol = self._tol if tol is None else tol
        if any(x < -tol for x in p):
            return False
        if any(p[j] > tol for j in range(self.dim) if j not in self.support):
            return False
        if sum(p) > 1 + tol:
            return False
        return all(_dot(w, p) <= u + tol for w, u in self.halfspaces)

    def __repr__(self) -> str:
        return f"UpperSet(dim={self.dim}, halfspaces={len(self.halfspaces)})"


def _check_len(v: Sequence, n: int) -> None:
    if len(v) != n:
        raise ModelError(f"dimension mismatch: got {len(v)}, expected {n}")


def _close(p: Point, q: Point, tol) -> bool:
    return all(abs(a - b) <= tol for a, b in zip(p, q))


def _rank(rows: list[tuple], exact: bool) -> int:
    if not rows:
        return 0
    m = [list(r) for r in rows]
    tol = 0 if exact else 1e-9
    rank, ncol = 0, len(m[0])
    for col in range(ncol):
        piv = max(range(rank, len(m)), key=lambda i: abs(m[i][col]), default=None)
        if piv is None or abs(m[piv][col]) <= tol:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        pr = m[rank]
        for i in range(rank + 1, len(m)):
            f = m[i][col] / pr[col]
            if f:
                m[i] = [a - f * b for a, b in zip(m[i], pr)]
        rank += 1
        if rank == len(m):
            break
    return rank


def _solve_gram(rows: list[tuple], rhs: list, exact: bool) -> list:
    """Solve ``(R R^T) z = rhs`` for linearly independent rows ``R``."""
    n = len(rows)
    g = [[_dot(rows[i], rows[j]) for j in range(n)] + [rhs[i]] for i in range(n)]
    for c in range(n):
        piv = max(range(c, n), key=lambda i: abs(g[i][c]))
        g[c], g[piv] = g[piv], g[c]
        for i in range(n):
            if i != c and g[i][c]:
                f = g[i][c] / g[c][c]
                g[i] = [a - f * b for a, b in zip(g[i], g[c])]
    return [g[i][n] / g[i][i] for i in range(n)]


def _project_sq(x: tuple, facets: list[tuple[tuple, Number]], start: tuple, exact: bool):
    """Squared distance from ``x`` to ``{y : w.y <= c for all facets}``.

    Exact inputs use a primal active-set method; floats use the least-distance
    reduction to nonnegative least squares, which is immune to the cycling
    that nearly parallel facets cause.
    """
    tol = 0 if exact else 1e-13
    if all(_dot(w, x) <= c + tol for w, c in facets):
        return 0
    if not exact:
        return _project_sq_ldp(x, facets)
    return _project_sq_active(x, facets, start, exact)


def _project_sq_ldp(x: tuple, facets: list[tuple[tuple, Number]]) -> float:
    a = np.array([[float(v) for v in w] for w, _ in facets])
    c = np.array([float(cc) for _, cc in facets])
    xv = np.array([float(v) for v in x])
    # min |u| s.t. (-a) u >= a x - c
    e = np.vstack([-a.T, (a @ xv - c)[None, :]])
    f = np.zeros(len(xv) + 1)
    f[-1] = 1.0
    # bvls rather than nnls: the latter returns non-KKT points in some scipy releases
    lam = lsq_linear(e, f, bounds=(0, np.inf), method="bvls", tol=1e-15).x
    r = e @ lam - f
    if abs(r[-1]) < 1e-300:
        raise InvariantError("projection target set is empty")
    u = -r[:-1] / r[-1]
    return float(u @ u)


def _project_sq_active(x: tuple, facets: list[tuple[tuple, Number]], start: tuple, exact: bool):
    tol = 0 if exact else 1e-13
    y = list(start)
    work: list[int] = [i for i, (w, c) in enumerate(facets) if _dot(w, y) >= c - tol]
    # keep a linearly independent working set
    basis: list[int] = []
    for i in work:
        if _rank([facets[j][0] for j in basis + [i]], exact) > len(basis):
            basis.append(i)
    work = basis
    for _ in range(10_000):
        g = [yi - xi for yi, xi in zip(y, x)]  # gradient of 1/2 |y - x|^2
        rows = [facets[i][0] for i in work]
        if rows:
            z = _solve_gram(rows, [_dot(r, g) for r in rows], exact)
            proj = [sum(z[t] * rows[t][j] for t in range(len(rows))) for j in range(len(g))]
            p = [-(gj - pj) for gj, pj in zip(g, proj)]
        else:
            z, p = [], [-gj for gj in g]
        if all(abs(pj) <= tol for pj in p):
            # multipliers: g + R^T nu = 0  ->  nu = -z
            nu = [-zt for zt in z]
            worst = min(range(len(nu)), key=lambda t: nu[t], default=None)
            if worst is None or nu[worst] >= -tol:
                return sum((yi - xi) ** 2 for yi, xi in zip(y, x))
            work.pop(worst)
            continue
        alpha = 1
        block = None
        for i, (w, c) in enumerate(facets):
            if i in work:
                continue
            wp = _dot(w, p)
            if wp > tol:
                step = (c - _dot(w, y)) / wp
                if step < alpha:
                    alpha, block = step, i
        if not exact:
            alpha = max(alpha, 0.0)
        y = [yi + alpha * pj for yi, pj in zip(y, p)]
        if block is not None:
            work.append(block)
    raise InvariantError("projection did not converge")


# ---------------------------------------------------------------------------
# metrics


def gap(lower: LowerSet, upper: UpperSet, norm: str = "l2", check: bool = True) -> Number:
    """``sup_{p in U} inf_{q in L} |p - q|``, attained at a vertex of ``U``."""
    if lower.dim != upper.dim:
        raise ModelError("dimension mismatch between lower and upper set")
    if check:
        tol = 0 if lower.exact and upper.exact else PRUNE_TOL
        for v in lower.vertices:
            if not upper.contains(v, tol):
                raise InvariantError(f"lower vertex {v} lies outside the upper set")
    verts = upper.vertices()
    if norm == "linf":
        return max(lower.dist_linf(v) for v in verts)
    if norm == "l2":
        return max(lower.dist_l2(v) for v in verts)
    raise ModelError(f"unknown norm {norm!r}")


def points_csv(points: Iterable[Point]) -> str:
    """``x,y`` rows for 2-D vertex lists."""
    rows = ["x,y"]
    for p in points:
        if len(p) != 2:
            raise ModelError("CSV output is only defined for two exits")
        rows.append(f"{float(p[0])!r},{float(p[1])!r}")
    return "\n".join(rows) + "\n"


def unit(dim: int, j: int, exact: bool = True) -> tuple:
    zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
    return tuple(one if i == j else zero for i in range(dim))
