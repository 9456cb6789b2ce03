"""Small hand-specified approximations reused by several test modules."""

from fractions import Fraction as F

from sdpareto import zoo
from sdpareto.model import Arity
from sdpareto.multiobj import SoundApproximation
from sdpareto.shortcut import Signature


def explosion_pair():
    """Bounce room P followed by the leaky room Q, each given by exact-ish point sets.

    Q's lower set keeps only 0.001 to the right exit where its upper allows
    0.009; looping through P then blows the gap up to 0.8.
    """
    p, q = zoo.bounce_left(), zoo.bounce_right()
    sa = SoundApproximation.from_points(Signature.of(p), [[(1,)], [(1,)]], [[(1,)], [(1,)]])
    sb = SoundApproximation.from_points(Signature.of(q), [[(F(1, 1000), F(99, 100))]],
                                        [[(F(9, 1000), F(99, 100))]])
    return sa, sb


def rightward_pair():
    """Rightward A with two exits feeding B with two entrances; gaps 0.1 and 0.05."""
    sa = SoundApproximation.from_points(Signature.generic(Arity(1, 0, 2, 0)), [[(F(3, 10), F(1, 5))]],
                                        [[(F(2, 5), F(3, 10))]])
    sb = SoundApproximation.from_points(Signature.generic(Arity(2, 0, 1, 0)), [[(F(7, 10),)], [(F(3, 5),)]],
                                        [[(F(3, 4),)], [(F(13, 20),)]])
    return sa, sb


def collapse_pair():
    """Fork with the lossy lower set {(1,0)} and its full upper set, then merge."""
    f, m = zoo.fork(), zoo.merge()
    sa = SoundApproximation.from_points(Signature.of(f), [[(1, 0)]], [[(1, 0), (0, 1)]])
    sb = SoundApproximation.from_points(Signature.of(m), [[(1,)], [(1,)]], [[(1,)], [(1,)]])
    return sa, sb


def transitions_of(m):
    """Name-keyed transition table of an oMDP, the inverse of ``OpenMdp.build``."""
    names, acts = m.mdp.state_names, m.mdp.action_names
    return {names[s]: {acts[c.action]: {names[t]: p for t, p in c.dist} for c in row}
            for s, row in enumerate(m.mdp.choices) if row}


def add_dominated_actions(rng, m, count):
    """Copy of ``m`` with ``count`` extra actions, each below a mix of existing ones.

    A new action mixes the state's current actions, scales the result down
    entrywise and sends the lost mass to a fresh sink.
    """
    from sdpareto.model import OpenMdp

    names = m.mdp.state_names
    trans = transitions_of(m)
    movers = sorted(trans)
    for k in range(count):
        s = rng.choice(movers)
        rows = list(trans[s].values())
        w = [F(rng.randint(0, 4)) for _ in rows]
        if not any(w):
            w[0] = F(1)
        tot = sum(w)
        mix = {}
        for wi, row in zip(w, rows):
            for t, p in row.items():
                mix[t] = mix.get(t, F(0)) + wi / tot * p
        dist = {t: p * F(rng.randint(0, 4), 4) for t, p in mix.items()}
        dist = {t: p for t, p in dist.items() if p}
        lost = 1 - sum(dist.values())
        if lost:
            dist["dump"] = dist.get("dump", F(0)) + lost
        trans[s][f"dom{k}"] = dist
    pick = lambda ids: [names[i] for i in ids]
    return OpenMdp.build(trans, entrances_r=pick(m.entrances_r), entrances_l=pick(m.entrances_l),
                         exits_r=pick(m.exits_r), exits_l=pick(m.exits_l), sinks=pick(m.sinks) + ["dump"],
                         states=list(names) + ["dump"], name=m.name)


def loose_approx(m, rng):
    """A sound but coarse approximation of ``m``.

    Lower sets keep a random subset of the true vertices; upper sets are
    generated by the true vertices lifted by up to 1/10 per coordinate.
    """
    from sdpareto.multiobj import approx_multiobj
    from sdpareto.shortcut import Signature

    exact = approx_multiobj(m, 0, "rational")
    lowers, uppers = [], []
    for e in range(len(m.entrances)):
        verts = list(exact.lower(e).vertices)
        lowers.append(rng.sample(verts, rng.randint(1, len(verts))))
        lifted = []
        for v in verts:
            room = 1 - sum(v)
            w = []
            for x in v:
                d = min(room, F(rng.randint(0, 2), 20))
                room -= d
                w.append(x + d)
            lifted.append(tuple(w))
        uppers.append(lifted)
    return SoundApproximation.from_points(Signature.of(m), lowers, uppers)
