import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from oracles import dm_points, in_down_hull, random_omdp
from sdpareto import zoo
from sdpareto.diagram import Leaf, dsum, semantics
from sdpareto.errors import ModelError, ResourceCapError
from sdpareto.geometry import LowerSet
from sdpareto.model import exit_reach
from sdpareto.multiobj import approx_multiobj, iteration_cap, select_weight, weighted_reach_bounds

THREE = {(F(3, 10), F(1, 10)), (F(27, 100), F(3, 10)), (F(1, 5), F(2, 5))}


def test_three_point_curve_exact():
    a = approx_multiobj(zoo.three_point(), F(1, 10**6))
    assert set(a.lower(0).vertices) == THREE
    assert a.gap("l2") <= F(1, 10**6)


def test_three_point_curve_float():
    a = approx_multiobj(zoo.three_point("float"), 1e-6)
    got = sorted(a.lower(0).vertices)
    assert len(got) == 3
    for g, e in zip(got, sorted(THREE)):
        assert g == pytest.approx(tuple(map(float, e)), abs=1e-9)
    assert a.gap("l2") <= 1e-6


def test_lower_vertices_are_realised_by_their_schedulers():
    m = zoo.three_point()
    a = approx_multiobj(m, 0)
    for p, sched in zip(a.lower(0).vertices, a.lower(0).tags):
        assert tuple(exit_reach(m, sched)[0]) == p


def test_eta_zero_needs_rationals():
    with pytest.raises(ModelError):
        approx_multiobj(zoo.three_point("float"), 0)


def test_iteration_cap_reports_partial_result(monkeypatch):
    monkeypatch.setenv("SDP_ITER_CAP", "2")
    assert iteration_cap() == 2
    with pytest.raises(ResourceCapError) as info:
        approx_multiobj(zoo.three_point(), F(1, 10**6))
    assert info.value.achieved.queries == 2
    monkeypatch.setenv("SDP_ITER_CAP", "zero")
    with pytest.raises(ModelError):
        iteration_cap()


def test_error_shrinks_with_one_more_query():
    m = zoo.three_point()
    gaps = []
    for cap in (2, 3):
        with pytest.raises(ResourceCapError) as info:
            approx_multiobj(m, 0, iter_cap=cap)
        gaps.append(info.value.achieved.gap("linf"))
    # frozen from the run: after the unit queries the sandwich is loose
    assert gaps[0] > 0
    assert gaps[1] < gaps[0]


def test_weight_selection_prefers_largest_slack():
    a = approx_multiobj(zoo.three_point(), 0)
    assert select_weight(a.lower(0), a.upper(0), 0) is None


def test_weighted_bounds_bracket():
    m = zoo.three_point("float")
    lw, uw, _ = weighted_reach_bounds(m, 0, (0.5, 0.5), 1e-8)
    # best of (0.2,0.4), (0.3,0.1), (0.27,0.3) under equal weights is 0.3
    assert lw <= 0.3 + 1e-12 and 0.3 - 1e-12 <= uw
    assert uw - lw <= 1e-8


def test_bidirectional_room_curves():
    a = approx_multiobj(zoo.loop_left(), 0)
    assert set(a.lower(0).vertices) == {(F(1, 2), F(1, 2)), (F(0), F(1))}
    assert set(a.lower(1).vertices) == {(F(7, 10), F(3, 10))}


def test_unreachable_exits_stay_zero():
    m = semantics(dsum(Leaf("F", zoo.fork()), Leaf("I", zoo.identity())))
    a = approx_multiobj(m, 0)
    assert a.meta["supports"] == [(0, 1), (2,)]
    assert set(a.lower(1).vertices) == {(0, 0, 1)}
    assert a.upper(1).support_value((F(1, 2), F(1, 2), F(0))) == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_exact_curve_equals_scheduler_enumeration(seed):
    rng = random.Random(seed)
    m = random_omdp(rng, rng.randint(1, 2), 0, 2, rng.randint(0, 1), max_states=7)
    a = approx_multiobj(m, 0)
    for e in range(len(m.entrances)):
        ref = LowerSet(len(m.exits), list(dm_points(m, e)))
        assert set(a.lower(e).vertices) == set(ref.vertices)
        assert set(a.upper(e).pareto_vertices()) == set(ref.vertices)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_float_sandwich_contains_every_scheduler(seed):
    rng = random.Random(seed)
    m = random_omdp(rng, 1, 0, 2, 0, max_states=7)
    a = approx_multiobj(m.to_arith("float"), 1e-4)
    pts = dm_points(m, 0)
    assert a.gap("l2") <= 1e-4
    for p in pts:
        assert a.upper(0).contains(tuple(map(float, p)), 1e-9)
    for v in a.lower(0).vertices:
        assert in_down_hull(v, pts, 1e-9)
