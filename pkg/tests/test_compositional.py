import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from oracles import DiagramGen, dm_points, random_omdp
from worked import collapse_pair, explosion_pair, rightward_pair
from sdpareto import compositional, zoo
from sdpareto.compositional import (CurveCache, HierarchicalScheduler, approx_multiobj_sd, check_single_exit, compose_error_bounds,
                                    compose_step, measure_error, stage_gaps)
from sdpareto.diagram import Leaf, Seq, dsum, semantics, seq
from sdpareto.errors import ModelError, ResourceCapError
from sdpareto.geometry import LowerSet
from sdpareto.model import Arity
from sdpareto.multiobj import SoundApproximation, approx_multiobj
from sdpareto.shortcut import Signature, shortcut_from_points

A = Leaf("A", zoo.loop_left())
B = Leaf("B", zoo.loop_right())


def test_leaf_gives_the_single_model_curve():
    a = approx_multiobj_sd(Leaf("C", zoo.three_point()), F(1, 10**6), "rational")
    assert set(a.lower(0).vertices) == {(F(3, 10), F(1, 10)), (F(27, 100), F(3, 10)), (F(1, 5), F(2, 5))}
    assert a.meta["leaf_runs"] == 1


def test_explosion_through_a_loop():
    r = compose_step("seq", list(explosion_pair()), 0, "rational")
    assert r.approx.lower(0).vertices == [(F(1, 10),)]
    assert r.approx.upper(0).pareto_vertices() == [(F(9, 10),)]
    assert measure_error(r.approx) == F(4, 5)


def test_rightward_error_and_bound():
    sa, sb = rightward_pair()
    r = compose_step("seq", [sa, sb], 0, "rational")
    assert r.approx.lower(0).vertices == [(F(33, 100),)]
    assert r.approx.upper(0).pareto_vertices() == [(F(99, 200),)]
    err = measure_error(r.approx)
    assert err == F(33, 200)
    assert stage_gaps(r) == (0, 0)
    bound = compose_error_bounds("rightward-seq", [measure_error(sa), measure_error(sb)], 2, stage_gaps(r),
                                 [sa.signature.arity, sb.signature.arity])
    assert bound == F(1, 4) >= err


def test_lossy_lower_set_collapses():
    sa, sb = collapse_pair()
    assert measure_error(sa) == 1
    r = compose_step("seq", [sa, sb], 0, "rational")
    assert r.approx.lower(0).vertices == [(F(1),)]
    assert measure_error(r.approx) == 0 < measure_error(sa)


def test_error_bound_cases():
    assert compose_error_bounds("sum", [F(1, 10), F(1, 20)]) == F(1, 10)
    assert compose_error_bounds("rightward-seq", [0, 0], 2) == 0
    with pytest.raises(ModelError):
        compose_error_bounds("rightward-seq", [0, 0], 1, arities=[Arity(1, 1, 1, 0), Arity(1, 0, 1, 0)])
    with pytest.raises(ModelError):
        compose_error_bounds("rightward-seq", [0, 0])
    with pytest.raises(ModelError):
        compose_error_bounds("trace", [0])


def test_sum_curves_equal_the_childrens():
    a = approx_multiobj_sd(dsum(A, B), 0, "rational")
    la, lb = approx_multiobj(A.model, 0), approx_multiobj(B.model, 0)
    # exits are ordered A.or, B.or, A.ol, B.ol and entrances A.ir, B.ir, A.il
    assert set(a.lower(0).vertices) == {(x, 0, y, 0) for x, y in la.lower(0).vertices}
    assert set(a.lower(1).vertices) == {(0, x, 0, y) for x, y in lb.lower(0).vertices}
    assert set(a.lower(2).vertices) == {(x, 0, y, 0) for x, y in la.lower(1).vertices}
    assert measure_error(a) == 0


def test_identity_check_is_one():
    lo, hi, sched = check_single_exit(Leaf("id", zoo.identity()), 0, 0, F(1, 10**6), "rational")
    assert lo == hi == 1
    assert sched.replay("rational") == (1,)


def test_single_exit_check_on_the_loop():
    lo, hi, sched = check_single_exit(seq(A, B), 0, 0, 1e-6)
    assert lo <= 35 / 79 + 1e-9 and 35 / 79 - 1e-9 <= hi and hi - lo <= 1e-6
    assert sched.replay()[0] == pytest.approx(lo, abs=1e-9)
    lo, hi, sched = check_single_exit(seq(A, B), 0, 0, F(1, 10**6), "rational")
    assert lo == hi == F(35, 79)
    assert sched.replay("rational")[0] == F(35, 79)


def test_check_rejects_bad_indices():
    with pytest.raises(ModelError):
        check_single_exit(seq(A, B), 1, 0, 1e-3)
    with pytest.raises(ModelError):
        check_single_exit(seq(A, B), 0, 0, 0.0)


def test_check_reports_partial_bounds_when_rounds_run_out(monkeypatch):
    loose = SoundApproximation.from_points(Signature.of(zoo.identity()), [[(0.25,)]], [[(0.75,)]])
    monkeypatch.setattr(compositional, "approx_multiobj_sd", lambda *a, **k: loose)
    with pytest.raises(ResourceCapError) as info:
        check_single_exit(Leaf("id", zoo.identity()), 0, 0, 1e-3, max_rounds=2)
    assert info.value.achieved == (0.25, 0.75)


def test_chain_analyses_its_leaf_once():
    d = Seq(tuple([Leaf("i", zoo.identity())] * 64))
    a = approx_multiobj_sd(d, 1e-4)
    cache = a.meta["cache"]
    assert a.meta["leaf_runs"] == 1
    assert cache.misses["leaf"] == 1
    # 64 = 2^6: one miss per level, the second child of each level hits
    assert cache.misses["node"] == 6 and cache.hits["node"] == 5
    assert a.lower(0).vertices == [(1.0,)]


def test_cache_hit_matches_recomputation():
    d = seq(A, B, Leaf("C", zoo.three_point()), Leaf("M", zoo.merge()))
    cache = CurveCache()
    first = approx_multiobj_sd(d, 1e-4, cache=cache)
    again = approx_multiobj_sd(d, 1e-4, cache=cache)
    fresh = approx_multiobj_sd(d, 1e-4, use_cache=False)
    assert again.meta["leaf_runs"] == 0
    for x in (again, fresh):
        for e in range(len(first.per_entrance)):
            assert x.lower(e).vertices == first.lower(e).vertices
            assert x.upper(e).pareto_vertices() == first.upper(e).pareto_vertices()


def test_cache_keys_separate_eta_and_engine():
    cache = CurveCache()
    approx_multiobj_sd(A, 1e-4, cache=cache)
    approx_multiobj_sd(A, 1e-3, cache=cache)
    approx_multiobj_sd(A, F(1, 1000), "rational", cache=cache)
    assert len(cache) == 3


def test_parallel_leaves_give_the_same_curves():
    d = dsum(seq(A, B), Leaf("C", zoo.three_point("float")))
    serial = approx_multiobj_sd(d, 1e-4)
    par = approx_multiobj_sd(d, 1e-4, jobs=3)
    for e in range(len(serial.per_entrance)):
        assert par.lower(e).vertices == serial.lower(e).vertices


def test_cap_error_names_the_node(monkeypatch):
    with pytest.raises(ResourceCapError, match="root/1"):
        approx_multiobj_sd(dsum(A, Leaf("C", zoo.three_point())), 0, "rational", iter_cap=2)


def test_float_engine_refuses_eta_zero():
    with pytest.raises(ModelError):
        approx_multiobj_sd(A, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_shortcut_composition_equals_composition(seed):
    # with exact curves the shortcuts of the parts compose to the curve of the whole
    rng = random.Random(seed)
    a = random_omdp(rng, 1, rng.randint(0, 1), 2, rng.randint(0, 1), name="A")
    b = random_omdp(rng, 2, a.arity.n_l, 1, 0, name="B")
    whole = approx_multiobj(semantics(seq(Leaf("A", a), Leaf("B", b))), 0)
    pa, pb = approx_multiobj(a, 0), approx_multiobj(b, 0)
    sa = shortcut_from_points(Signature.of(a), [e.lower.vertices for e in pa.per_entrance])
    sb = shortcut_from_points(Signature.of(b), [e.lower.vertices for e in pb.per_entrance])
    composed = semantics(seq(Leaf("a", sa.omdp), Leaf("b", sb.omdp)))
    for e in range(len(composed.entrances)):
        ref = LowerSet(whole.dim, list(dm_points(composed, e)))
        assert set(ref.vertices) == set(whole.lower(e).vertices)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_replayed_plans_reach_their_vertices(seed):
    d = DiagramGen(random.Random(seed)).sample()
    a = approx_multiobj_sd(d, 0, "rational")
    res = a.meta["result"]
    for e in range(len(a.per_entrance)):
        for p, plan in zip(a.lower(e).vertices, a.lower(e).tags):
            assert HierarchicalScheduler(a.meta["normalized"], e, plan).replay("rational") == p
    assert res.approx is a
