"""Randomised checks of the structural guarantees (seeded through hypothesis)."""

import random

from hypothesis import given, settings, strategies as st

from oracles import random_omdp
from worked import add_dominated_actions, loose_approx
from sdpareto.compositional import compose_error_bounds, compose_step, measure_error, stage_gaps
from sdpareto.multiobj import approx_multiobj


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_dominated_actions_keep_the_curve(seed):
    rng = random.Random(seed)
    m = random_omdp(rng, rng.randint(1, 2), 0, 2, rng.randint(0, 1), max_states=7)
    m2 = add_dominated_actions(rng, m, 50)
    a, b = approx_multiobj(m, 0), approx_multiobj(m2, 0)
    for e in range(len(m.entrances)):
        assert set(a.lower(e).vertices) == set(b.lower(e).vertices)


def rightward_instance(rng):
    k = rng.randint(1, 2)
    a = random_omdp(rng, 1, 0, k, 0, max_states=6, name="A")
    b = random_omdp(rng, k, 0, rng.randint(1, 2), 0, max_states=6, name="B")
    return a, b


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_rightward_bound_holds(seed):
    rng = random.Random(seed)
    a, b = rightward_instance(rng)
    sa, sb = loose_approx(a, rng), loose_approx(b, rng)
    r = compose_step("seq", [sa, sb], 0, "rational")
    bound = compose_error_bounds("rightward-seq", [measure_error(sa), measure_error(sb)], len(a.exits_r),
                                 stage_gaps(r), [a.arity, b.arity])
    assert measure_error(r.approx) <= bound


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_sum_bound_holds(seed):
    rng = random.Random(seed)
    a = random_omdp(rng, rng.randint(1, 2), 0, 2, 0, max_states=6, name="A")
    b = random_omdp(rng, 1, rng.randint(0, 1), rng.randint(1, 2), 0, max_states=6, name="B")
    sa, sb = loose_approx(a, rng), loose_approx(b, rng)
    r = compose_step("sum", [sa, sb], 0, "rational")
    assert measure_error(r.approx) <= compose_error_bounds("sum", [measure_error(sa), measure_error(sb)])
