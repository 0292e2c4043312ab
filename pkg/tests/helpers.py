"""Random states with history-consistent auxiliary state."""
import numpy as np

from nba import LoadState, allocate
from nba import processes as P


def random_loads(rng, n, high):
    return rng.integers(0, high + 1, size=n)


def state_with_history(spec, rng, n, high=20, steps=None):
    """A random start state followed by a few allocations recorded in the aux state."""
    state = LoadState.from_loads(random_loads(rng, n, high))
    aux = spec.make_aux(state)
    if steps is None:
        steps = int(rng.integers(0, 3 * n + 1))
    for _ in range(steps):
        if hasattr(aux, "sync"):
            aux.sync(state)
        b = int(rng.integers(n))
        allocate(state, b)
        if hasattr(aux, "record"):
            aux.record(b, state)
    return state, aux


def shipped_specs():
    """One instance of every shipped process, built-in strategies included."""
    def by_parity(t, pair, x):
        return pair[0] if (t + pair[0]) % 2 else pair[1]

    return [
        P.OneChoice(),
        P.TwoChoice(),
        P.TwoChoice("lower_index"),
        P.OnePlusBeta(0.4),
        P.GBounded(2),
        P.GMyopicComp(3),
        P.NoisyComp.constant(0.75),
        P.NoisyComp((0.0, 0.3, 0.6), 0.9),
        P.SigmaNoisyLoad(1.5),
        P.SigmaNoisyLoad(1.5, "gaussian_estimates"),
        P.GAdvComp(2, "greedy_max"),
        P.GAdvComp(2, "coin_flip"),
        P.GAdvComp(2, "always_lighter"),
        P.GAdvComp(3, P.scripted(by_parity)),
        P.BBatch(5),
        P.TauDelay(4, "oldest"),
        P.TauDelay(4, "freshest"),
        P.TauDelay(4, "random_in_window"),
        P.TauDelay(4, "batch_boundary"),
    ]
