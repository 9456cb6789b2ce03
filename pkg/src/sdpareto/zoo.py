"""Small hand-made open MDPs used by the tests, the CLI demos and the docs."""

from __future__ import annotations

from .model import OpenMdp


def loop_left(arith: str = "rational") -> OpenMdp:
    """Bidirectional room, arity (1,1)->(1,1).

    Entering from the left, ``s1`` either gambles (half to the right exit, half
    back toward the left exit via ``s2``) or gives up.  Entering from the
    right, ``il`` leaks 0.7 to the right exit.
    """
    return OpenMdp.build(
        {
            "ir": {"go": {"s1": 1}},
            "s1": {"a": {"or": "0.5", "s2": "0.5"}, "b": {"s2": 1}},
            "s2": {"go": {"ol": 1}},
            "il": {"go": {"s2": "0.3", "or": "0.7"}},
        },
        entrances_r=["ir"], entrances_l=["il"], exits_r=["or"], exits_l=["ol"],
        states=["ir", "il", "s1", "s2", "or", "ol"], arith=arith, name="A",
    )


def loop_right(arith: str = "rational") -> OpenMdp:
    """Arity (1,1)->(1,0): 0.7 straight through, 0.3 bounced back to the left."""
    return OpenMdp.build(
        {
            "ir": {"go": {"t1": "0.3", "or": "0.7"}},
            "t1": {"go": {"ol": 1}},
        },
        entrances_r=["ir"], exits_r=["or"], exits_l=["ol"],
        states=["ir", "t1", "or", "ol"], arith=arith, name="B",
    )


def three_point(arith: str = "rational") -> OpenMdp:
    """Arity (1,0)->(2,0) with three deterministic memoryless schedulers.

    Their exit vectors are (0.2,0.4), (0.3,0.1) and (0.27,0.3); all three are
    Pareto-optimal.
    """
    return OpenMdp.build(
        {
            "en": {"a": {"s1": 1}, "b": {"o1": "0.27", "o2": "0.3", "sink": "0.43"}},
            "s1": {"a": {"o1": "0.2", "o2": "0.4", "sink": "0.4"},
                   "b": {"o1": "0.3", "o2": "0.1", "sink": "0.6"}},
        },
        entrances_r=["en"], exits_r=["o1", "o2"], sinks=["sink"],
        states=["en", "s1", "o1", "o2", "sink"], arith=arith, name="C",
    )


def bounce_left(arith: str = "rational") -> OpenMdp:
    """Arity (1,0)->(1,1): both entrances lead straight to the right exit."""
    return OpenMdp.build(
        {"ir": {"go": {"or": 1}}, "il": {"go": {"or": 1}}},
        entrances_r=["ir"], entrances_l=["il"], exits_r=["or"],
        states=["ir", "il", "or"], arith=arith, name="P",
    )


def bounce_right(arith: str = "rational") -> OpenMdp:
    """Arity (1,1)->(1,0): mostly bounced back left, rarely through or lost."""
    return OpenMdp.build(
        {"ir": {"go": {"or": "0.009", "ol": "0.99", "t1": "0.001"}}},
        entrances_r=["ir"], exits_r=["or"], exits_l=["ol"], sinks=["t1"],
        states=["ir", "or", "ol", "t1"], arith=arith, name="Q",
    )


def fork(arith: str = "rational") -> OpenMdp:
    """Arity (1,0)->(2,0): pick the upper (a) or lower (b) exit."""
    return OpenMdp.build(
        {"ir": {"a": {"o1": 1}, "b": {"o2": 1}}},
        entrances_r=["ir"], exits_r=["o1", "o2"],
        states=["ir", "o1", "o2"], arith=arith, name="F",
    )


def merge(arith: str = "rational") -> OpenMdp:
    """Arity (2,0)->(1,0): both entrances go to the single exit."""
    return OpenMdp.build(
        {"i1": {"go": {"o": 1}}, "i2": {"go": {"o": 1}}},
        entrances_r=["i1", "i2"], exits_r=["o"],
        states=["i1", "i2", "o"], arith=arith, name="M",
    )


def identity(arith: str = "rational", name: str = "id") -> OpenMdp:
    """One rightward entrance wired with probability one to one exit."""
    return OpenMdp.build({"i": {"go": {"o": 1}}}, entrances_r=["i"], exits_r=["o"],
                         states=["i", "o"], arith=arith, name=name)


def empty(arith: str = "rational") -> OpenMdp:
    return OpenMdp.build({}, states=[], arith=arith, name="empty")
