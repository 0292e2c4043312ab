"""Compiled kernels replay the reference implementation draw for draw."""
import numpy as np
import pytest

from nba import kernels as K
from nba import processes as P
from nba.rng import RngStream

KERNEL_SPECS = [
    P.OneChoice(),
    P.TwoChoice(),
    P.OnePlusBeta(0.3),
    P.GBounded(0),
    P.GBounded(3),
    P.GMyopicComp(2),
    P.NoisyComp((0.2, 0.6, 0.8), 0.95),
    P.SigmaNoisyLoad(2.0),
    P.SigmaNoisyLoad(2.0, "gaussian_estimates"),
    P.GAdvComp(2, "greedy_max"),
    P.GAdvComp(2, "coin_flip"),
    P.GAdvComp(2, "always_lighter"),
    P.BBatch(1),
    P.BBatch(7),
    P.TauDelay(1),
    P.TauDelay(6, "oldest"),
    P.TauDelay(6, "freshest"),
    P.TauDelay(6, "random_in_window"),
    P.TauDelay(6, "batch_boundary"),
]


@pytest.mark.parametrize("spec", KERNEL_SPECS, ids=lambda s: f"{s.process}-{s.label()}")
def test_kernel_matches_python(spec):
    n, m = 13, 400
    for seed in range(3):
        py_rng = RngStream(seed, 5)
        ref = P.simulate(spec, n, m, py_rng)
        ks = K.KernelState(K.kernel_plan(spec), n, RngStream(seed, 5).state)
        ks.advance(m // 3)
        ks.advance(m - m // 3)
        assert ks.x.tolist() == ref.x.tolist()
        assert ks.t == ref.t and ks.max_load == ref.max_load
        assert ks.s.tolist() == py_rng.state.tolist()


def test_sample_max_loads_is_sequential_runs():
    spec = P.GBounded(1)
    maxima = K.sample_max_loads(spec, 5, 30, 20, RngStream(2, 0).state)
    rng = RngStream(2, 0)
    assert maxima.tolist() == [P.simulate(spec, 5, 30, rng).max_load for _ in range(20)]


def test_callbacks_have_no_kernel_plan():
    assert K.kernel_plan(P.GAdvComp(1, P.scripted(lambda t, pair, x: pair[0]))) is None
    assert K.kernel_plan(P.GAdvComp(1, "greedy_max", strict=True)) is None
    assert K.kernel_plan(P.GBounded(1)) is not None
