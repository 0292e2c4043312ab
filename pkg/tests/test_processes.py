import json
import math

import mpmath
import numpy as np
import pytest

from nba import ConfigError, ContractViolation, LoadState, ParameterError, allocate
from nba import oracle as O
from nba import processes as P
from nba.rng import RngStream

from helpers import shipped_specs, state_with_history


class FixedRng:
    """Stand-in rng that replays scripted uniforms."""

    def __init__(self, *values):
        self.values = list(values)

    def uniform(self):
        return self.values.pop(0)

    def index(self, n):
        return int(self.uniform() * n)


def decide_freq(spec, loads, pair, trials=4000, seed=0):
    state = LoadState.from_loads(loads)
    aux = spec.make_aux(state)
    rng = RngStream(seed, 0)
    hits = sum(spec.decide(state, *pair, aux, rng, state.t + 1) == pair[0] for _ in range(trials))
    return hits / trials


# examples ----------------------------------------------------------------------


def test_two_choice_picks_lighter():
    s = LoadState.from_loads([5, 2])
    assert P.TwoChoice().decide(s, 0, 1, None, RngStream(0, 0), 8) == 1


def test_two_choice_tie_rules():
    s = LoadState.from_loads([3, 3])
    assert P.TwoChoice("lower_index").decide(s, 1, 0, None, RngStream(0, 0), 7) == 0
    assert decide_freq(P.TwoChoice(), [3, 3], (0, 1)) == pytest.approx(0.5, abs=0.04)


def test_g_bounded_picks_heavier_inside_window():
    s = LoadState.from_loads([5, 4])
    assert P.GBounded(3).decide(s, 0, 1, None, RngStream(0, 0), 10) == 0


def test_g_bounded_picks_lighter_outside_window():
    s = LoadState.from_loads([9, 4])
    assert P.GBounded(3).decide(s, 0, 1, None, RngStream(0, 0), 14) == 1


def test_g_myopic_is_a_coin_inside_window():
    assert decide_freq(P.GMyopicComp(3), [5, 4], (0, 1)) == pytest.approx(0.5, abs=0.04)
    q = O.allocation_vector(P.GMyopicComp(3), LoadState.from_loads([5, 4])).by_bin()
    assert q.tolist() == [0.5, 0.5]


def test_one_plus_beta_probability():
    p = P.OnePlusBeta(0.4).pair_probabilities(LoadState.from_loads([1, 0]))
    assert p[1, 0] == pytest.approx(0.7)
    assert p[0, 1] == pytest.approx(0.3)


def test_rho_sigma_examples():
    assert P.rho_sigma(0, 2) == 0.5
    oracle = 1 - mpmath.exp(-1) / 2
    assert P.rho_sigma(1, 1) == pytest.approx(float(oracle), abs=1e-15)
    assert P.rho_sigma(1, 1) == pytest.approx(0.8160603, abs=5e-8)
    assert P.rho_sigma(100, 1) > 1 - 1e-12


@pytest.mark.parametrize("delta,sigma", [(0, 0), (1, -1), (-1, 1)])
def test_rho_sigma_rejects(delta, sigma):
    with pytest.raises(ParameterError):
        P.rho_sigma(delta, sigma)


def test_decide_noisy_comparison_extremes():
    rng = RngStream(0, 0)
    always = P.NoisyComp.constant(1.0)
    assert all(P.decide_noisy_comparison(4, 2, always, rng) == 1 for _ in range(50))
    assert all(P.decide_noisy_comparison(2, 4, lambda d: 1.0, rng) == 0 for _ in range(50))
    assert all(P.decide_noisy_comparison(2, 4, lambda d: 0.0, rng) == 1 for _ in range(50))
    ties = [P.decide_noisy_comparison(3, 3, always, rng) for _ in range(4000)]
    assert np.mean(ties) == pytest.approx(0.5, abs=0.04)


def test_step_function_rho_reproduces_g_bounded():
    rng = np.random.default_rng(1)
    spec = P.NoisyComp.step_function(3, 0.0)
    for _ in range(100):
        s = LoadState.from_loads(rng.integers(0, 12, size=int(rng.integers(1, 10))))
        assert np.allclose(O.allocation_vector(spec, s).q, O.allocation_vector(P.GBounded(3), s).q, atol=1e-15)


def test_batch_snapshot_decide_uses_stale_loads():
    assert P.batch_snapshot_decide([3, 1], (0, 1), RngStream(0, 0)) == 1


def test_first_batch_is_one_choice():
    s = LoadState(6)
    spec = P.BBatch(100)
    aux = spec.make_aux(s)
    rng = np.random.default_rng(2)
    for _ in range(40):
        aux.sync(s)
        assert np.allclose(O.allocation_vector(spec, s, aux).q, 1 / 6)
        b = int(rng.integers(6))
        allocate(s, b)
        aux.record(b, s)


def test_stale_estimate_counts_window():
    s = LoadState.from_loads([7, 0])
    w = P.DelayWindow(2, 10)
    for _ in range(3):
        w.sync(s)
        allocate(s, 0)
        w.record(0, s)
    assert s.x[0] == 10
    assert P.stale_estimate(w, 0, 10) == 7


def test_tau_one_oldest_is_two_choice():
    rng = np.random.default_rng(3)
    for _ in range(50):
        s, aux = state_with_history(P.TauDelay(1, "oldest"), rng, int(rng.integers(1, 9)))
        q = O.allocation_vector(P.TauDelay(1), s, aux).q
        assert np.abs(q - O.allocation_vector(P.TwoChoice(), s).q).max() <= 1e-15


def test_freshest_is_two_choice_for_any_tau():
    rng = np.random.default_rng(4)
    for tau in (2, 5, 50):
        spec = P.TauDelay(tau, "freshest")
        for _ in range(30):
            s, aux = state_with_history(spec, rng, int(rng.integers(1, 9)))
            q = O.allocation_vector(spec, s, aux).q
            assert np.abs(q - O.allocation_vector(P.TwoChoice(), s).q).max() <= 1e-15


def test_window_holds_last_tau_minus_one_allocations():
    # At decision time t+1 the estimate may lag by at most tau - 1 balls.
    tau = 4
    s = LoadState(1)
    w = P.DelayWindow(1, tau)
    for _ in range(10):
        w.sync(s)
        allocate(s, 0)
        w.record(0, s)
    w.sync(s)
    assert w.count(0) == tau - 1


def test_batch_boundary_staleness_equals_b_batch():
    rng = np.random.default_rng(5)
    for b in (2, 3, 5):
        bb, td = P.BBatch(b), P.TauDelay(b, "batch_boundary")
        s1 = LoadState(int(rng.integers(2, 6)))
        s2 = s1.copy()
        a1, a2 = bb.make_aux(s1), td.make_aux(s2)
        for _ in range(25):
            q1 = O.allocation_vector(bb, s1, a1).q
            q2 = O.allocation_vector(td, s2, a2).q
            assert np.abs(q1 - q2).max() <= 1e-15
            for s, a in ((s1, a1), (s2, a2)):
                a.sync(s)
            k = int(rng.integers(s1.n))
            for s, a in ((s1, a1), (s2, a2)):
                allocate(s, k)
                a.record(k, s)


# adversaries -------------------------------------------------------------------


def test_built_in_adversaries_match_named_processes():
    rng = np.random.default_rng(6)
    for _ in range(100):
        s = LoadState.from_loads(rng.integers(0, 10, size=int(rng.integers(1, 9))))
        for adv, ref in (("greedy_max", P.GBounded(2)), ("coin_flip", P.GMyopicComp(2))):
            q = O.allocation_vector(P.GAdvComp(2, adv), s).q
            assert np.abs(q - O.allocation_vector(ref, s).q).max() <= 1e-15


def test_greedy_adversary_replays_g_bounded_draws():
    for seed in range(5):
        a = P.simulate(P.GAdvComp(3, "greedy_max"), 20, 500, RngStream(seed, 0))
        b = P.simulate(P.GBounded(3), 20, 500, RngStream(seed, 0))
        assert a.x.tolist() == b.x.tolist()


def test_adversary_outside_pair_is_rejected():
    spec = P.GAdvComp(5, P.scripted(lambda t, pair, x: 99))
    with pytest.raises(ContractViolation, match="outside the sampled pair"):
        P.simulate(spec, 4, 10, RngStream(0, 0))


def test_adversary_sees_read_only_loads():
    def meddle(t, pair, x):
        x[0] = 100
        return pair[0]

    with pytest.raises(ValueError):
        P.simulate(P.GAdvComp(5, P.scripted(meddle)), 4, 10, RngStream(0, 0))


def test_strict_mode_logs_out_of_window_choices():
    spec = P.GAdvComp(0, P.scripted(lambda t, pair, x: pair[0] if x[pair[0]] >= x[pair[1]] else pair[1]),
                      strict=True)
    s = LoadState.from_loads([5, 0])
    log = spec.make_aux(s)
    assert spec.decide(s, 0, 1, log, RngStream(0, 0), 6) == 1
    assert log.violations == [(6, 0, 1, 0)]


def test_unknown_adversary_and_staleness():
    with pytest.raises(ConfigError):
        P.GAdvComp(1, "nonsense")
    with pytest.raises(ConfigError):
        P.TauDelay(2, "nonsense")


# gaussian estimates ------------------------------------------------------------


def test_gaussian_mode_probability():
    sigma, a, b = 2.0, 10, 13
    spec = P.SigmaNoisyLoad(sigma, "gaussian_estimates")
    s = LoadState.from_loads([a, b])
    rng = RngStream(11, 0)
    trials = 10**5
    wins = sum(spec.decide(s, 0, 1, None, rng, 24) == 0 for _ in range(trials))
    p = 0.5 * (1 + math.erf((b - a) / (2 * sigma)))
    se = math.sqrt(p * (1 - p) / trials)
    assert abs(wins / trials - p) <= 3 * se
    assert spec.pair_probabilities(s)[0, 1] == pytest.approx(p, abs=1e-15)


# errors and validation ---------------------------------------------------------


@pytest.mark.parametrize("build", [
    lambda: P.GBounded(-1),
    lambda: P.GBounded(1.5),
    lambda: P.OnePlusBeta(1.5),
    lambda: P.SigmaNoisyLoad(0.0),
    lambda: P.SigmaNoisyLoad(1.0, "nonsense"),
    lambda: P.BBatch(0),
    lambda: P.TauDelay(0),
    lambda: P.NoisyComp((0.9, 0.8), 1.0),
    lambda: P.NoisyComp((0.5,), 1.2),
    lambda: P.TwoChoice("nonsense"),
])
def test_invalid_parameters(build):
    with pytest.raises((ParameterError, ConfigError)):
        build()


def test_stale_processes_need_aux():
    with pytest.raises(ContractViolation):
        P.step(P.BBatch(2), LoadState(3), None, RngStream(0, 0))
    with pytest.raises(ContractViolation):
        P.step(P.TauDelay(2), LoadState(3), None, RngStream(0, 0))


def test_aux_size_mismatch():
    spec = P.TauDelay(3)
    aux = spec.make_aux(LoadState(4))
    with pytest.raises(ContractViolation):
        P.step(spec, LoadState(5), aux, RngStream(0, 0))


def test_noisy_comp_from_function_and_tail():
    spec = P.NoisyComp.from_function(lambda d: min(1.0, 0.5 + 0.1 * d), 4)
    assert [spec.rho(d) for d in range(7)] == pytest.approx([0.5, 0.6, 0.7, 0.8, 0.9, 0.9, 0.9])


# JSON --------------------------------------------------------------------------


@pytest.mark.parametrize("spec", [s for s in shipped_specs() if s.to_dict().get("adversary") != "scripted"],
                         ids=lambda s: s.process)
def test_json_round_trip(spec):
    d = json.loads(json.dumps(spec.to_dict()))
    assert P.spec_from_dict(d) == spec


def test_rho_shorthand():
    assert P.spec_from_dict({"process": "noisy_comp", "rho": 0.75}) == P.NoisyComp.constant(0.75)


@pytest.mark.parametrize("bad", [{}, {"process": "nope"}, {"process": "g_bounded", "h": 2}, [1]])
def test_spec_from_dict_errors(bad):
    with pytest.raises(ConfigError):
        P.spec_from_dict(bad)


# decisions stay inside the pair ------------------------------------------------


@pytest.mark.parametrize("spec", shipped_specs(), ids=lambda s: s.label() or s.process)
def test_step_returns_a_sampled_bin_and_matches_oracle(spec):
    rng = np.random.default_rng(9)
    state, aux = state_with_history(spec, rng, 6, high=8)
    q = O.allocation_vector(spec, state, aux).by_bin()
    assert q.sum() == pytest.approx(1.0, abs=1e-12)
    assert (q >= -1e-15).all()
    stream = RngStream(0, 0)
    counts = np.zeros(6)
    trials = 20_000
    for _ in range(trials):
        a = aux.clone() if hasattr(aux, "clone") else aux
        counts[P.step(spec, state, a, stream)] += 1
    se = np.sqrt(q * (1 - q) / trials) + 1e-9
    assert np.all(np.abs(counts / trials - q) <= 5 * se)
