import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from nba import LoadState, ResourceError, allocate, normalized
from nba import oracle as O
from nba import potentials as pot
from nba import processes as P

SKETCH_LOADS = [21, 19, 13, 12, 12, 11, 8, 6]
# Comparisons the sketch adversary reverses, as 1-based rank pairs (heavier, lighter).
SKETCH_REVERSED = {(1, 2), (3, 4), (3, 5), (3, 6), (5, 6)}


def sketch_adversary(t, pair, x):
    # Bins are already in rank order, so rank = bin + 1.
    a, b = pair
    if x[a] == x[b]:
        return max(a, b)
    heavy, light = (a, b) if x[a] > x[b] else (b, a)
    return heavy if (heavy + 1, light + 1) in SKETCH_REVERSED else light


def test_two_choice_vector_examples():
    q = O.two_choice_vector(8).q
    assert q.tolist() == [k / 64 for k in (1, 3, 5, 7, 9, 11, 13, 15)]
    assert q[0] == 0.015625
    assert O.two_choice_vector(1).q.tolist() == [1.0]
    for n in (2, 17, 64):
        assert O.two_choice_vector(n).q.sum() == pytest.approx(1.0, abs=1e-15)


def test_sketch_instance_allocation_vector():
    state = LoadState.from_loads(SKETCH_LOADS)
    spec = P.GAdvComp(3, P.scripted(sketch_adversary))
    q = O.allocation_vector(spec, state).q
    p = O.two_choice_vector(8).q
    assert q[0] == p[0] + 2 / 64
    assert q[1] == p[1] - 2 / 64
    assert q[2] == p[2] + 6 / 64
    assert q[5] == p[5] - 4 / 64
    assert q.sum() == pytest.approx(1.0, abs=1e-15)


def test_sketch_instance_manipulable_pairs():
    pairs = O.manipulable_pairs(LoadState.from_loads(SKETCH_LOADS), 3)
    assert pairs.one_based() == {(1, 2), (3, 4), (3, 5), (3, 6), (4, 6), (5, 6), (6, 7), (7, 8)}
    assert (0, 1) in pairs and len(pairs) == 8


def test_manipulable_pairs_empty_cases():
    assert len(O.manipulable_pairs(LoadState.from_loads([4, 4, 4]), 5)) == 0
    assert len(O.manipulable_pairs(LoadState.from_loads(SKETCH_LOADS), 0)) == 0


def test_one_choice_is_uniform():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 20))
        q = O.allocation_vector(P.OneChoice(), LoadState.from_loads(rng.integers(0, 9, size=n))).q
        assert np.allclose(q, 1 / n, atol=1e-15)


def test_two_choice_distinct_loads_matches_closed_form():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(1, 30))
        x = rng.permutation(n) * 3 + 1
        q = O.allocation_vector(P.TwoChoice(), LoadState.from_loads(x)).q
        assert np.abs(q - O.two_choice_vector(n).q).max() <= 1e-15


def test_by_bin_undoes_rank_order():
    state = LoadState.from_loads([0, 5, 2])
    v = O.allocation_vector(P.TwoChoice(), state)
    assert v.by_bin().tolist() == pytest.approx([5 / 9, 1 / 9, 3 / 9])


def test_oracle_size_guard():
    with pytest.raises(ResourceError):
        O.allocation_vector(P.TwoChoice(), LoadState(300))
    O.allocation_vector(P.TwoChoice(), LoadState(300), max_n=300)


# expected changes --------------------------------------------------------------


def test_quadratic_all_equal_state():
    rng = np.random.default_rng(2)
    for n in (1, 2, 7, 40):
        view = normalized(LoadState.from_loads([3] * n))
        w = rng.integers(1, 100, size=n)
        q = [Fraction(int(v), int(w.sum())) for v in w]
        assert O.expected_change_exact(pot.Quadratic(), q, view) == 1 - Fraction(1, n)


def test_quadratic_two_choice_bound():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(1, 65))
        view = normalized(LoadState.from_loads(rng.integers(0, 2001, size=n)))
        change = O.expected_change_exact(pot.Quadratic(), O.two_choice_vector(n), view)
        delta = sum(abs(y) for y in O._exact_y(view))
        assert change <= -delta / n + 1


def _brute_change(p, q, view):
    mpmath.mp.dps = 50
    y = [mpmath.mpf(int(v)) - mpmath.mpf(view.t) / view.n for v in view.loads]

    def value(ys):
        return sum(mpmath.mpf(t) for t in _terms(p, ys))

    base = value(y)
    total = mpmath.mpf(0)
    for i, qi in enumerate(q):
        ys = [v - mpmath.mpf(1) / view.n for v in y]
        ys[i] += 1
        total += mpmath.mpf(float(qi)) * (value(ys) - base)
    return total


def _terms(p, ys):
    for v in ys:
        if isinstance(p, pot.Gamma):
            yield mpmath.exp(p.gamma * v) + mpmath.exp(-p.gamma * v)
        elif isinstance(p, pot.Lambda):
            yield mpmath.exp(p.alpha * max(v - p.offset, 0)) + mpmath.exp(p.alpha * max(-v - p.offset, 0))
        elif isinstance(p, pot.SuperExp):
            yield mpmath.exp(p.phi * max(v - p.z, 0))
        elif isinstance(p, pot.AbsoluteValue):
            yield abs(v)
        else:
            yield v * v


@pytest.mark.parametrize("p", [pot.Gamma(0.2), pot.Lambda(1 / 18, 4.0), pot.V(0.01, 1.0),
                               pot.SuperExp(6.0, 2), pot.AbsoluteValue(), pot.Quadratic()],
                         ids=lambda p: p.name)
def test_expected_change_matches_high_precision(p):
    rng = np.random.default_rng(4)
    for _ in range(40):
        n = int(rng.integers(6, 20))
        view = normalized(LoadState.from_loads(rng.integers(0, 40, size=n)))
        w = rng.random(n)
        q = w / w.sum()
        got = O.expected_change(p, q, view)
        want = _brute_change(p, q, view)
        scale = max(1.0, float(sum(mpmath.mpf(t) for t in _terms(p, [mpmath.mpf(v) for v in view.y]))))
        assert abs(got - float(want)) <= 1e-12 * scale


def test_expected_change_rejects_mismatched_sizes():
    with pytest.raises(ValueError):
        O.expected_change(pot.Gamma(0.1), np.ones(3) / 3, normalized(LoadState(4)))


def test_exact_change_covers_only_polynomial_potentials():
    with pytest.raises(TypeError):
        O.expected_change_exact(pot.Gamma(0.1), [1.0], normalized(LoadState(1)))


# events and bounds -------------------------------------------------------------


def test_k_event_vacuous():
    view = normalized(LoadState.from_loads([1, 1, 1, 1]))
    assert O.k_event_holds(np.full(4, 0.25), view, 4.0, 5)


def test_k_event_fails_with_large_heavy_mass():
    n = 8
    view = normalized(LoadState.from_loads([10] + [0] * (n - 1)))
    z = math.floor(view.y[0])
    q = np.full(n, (1 - 2 / n) / (n - 1))
    q[0] = 2 / n
    assert not O.k_event_holds(q, view, 4.0, z)


def test_k_event_two_choice_hand_count():
    # One heavy bin among 64: it wins only the pair (heavy, heavy), mass 1/4096.
    n = 64
    state = LoadState.from_loads([10] + [0] * (n - 1))
    view = normalized(state)
    q = O.allocation_vector(P.TwoChoice(), state)
    assert q.q[0] == 1 / 4096
    assert O.k_event_holds(q, view, 4.0, 10)
    # A second heavy bin collects 3/4096 > exp(-4)/64.
    two = LoadState.from_loads([10, 10] + [0] * (n - 2))
    assert not O.k_event_holds(O.allocation_vector(P.TwoChoice(), two), normalized(two), 4.0, 10)


def test_gamma_bound_examples():
    flat = normalized(LoadState.from_loads([2, 2, 2]))
    chk = O.check_gamma_bound(np.full(3, 1 / 3), flat, 0.1)
    assert chk.holds
    small = normalized(LoadState.from_loads([2, 0]))
    assert small.y.tolist() == [1.0, -1.0]
    chk = O.check_gamma_bound(np.full(2, 0.5), small, 0.1)
    assert chk.holds and chk.margin >= 0


# enumeration -------------------------------------------------------------------


def test_enumerate_one_choice_single_ball():
    assert O.enumerate_exact(P.OneChoice(), 2, 1).pmf == {Fraction(1, 2): 1.0}


def test_enumerate_two_choice_two_balls():
    # First ball anywhere; the second joins it only when both samples hit that bin.
    out = O.enumerate_exact(P.TwoChoice(), 2, 2, potentials=[pot.Quadratic()])
    assert out.pmf == {Fraction(0): 0.75, Fraction(1): 0.25}
    assert out.expected_potentials["quadratic"] == pytest.approx([0.0, 0.5, 0.5])
    assert out.mean() == 0.25


def test_myopic_gap_dominates_two_choice():
    myopic = O.enumerate_exact(P.GMyopicComp(1), 3, 3).pmf
    two = O.enumerate_exact(P.TwoChoice(), 3, 3).pmf
    assert O.stochastically_dominates(myopic, two)
    assert not O.stochastically_dominates(two, myopic)


def test_enumeration_with_stale_processes():
    # b larger than m: the whole run is one batch, hence One-Choice.
    a = O.enumerate_exact(P.BBatch(10), 3, 4).pmf
    b = O.enumerate_exact(P.OneChoice(), 3, 4).pmf
    assert O.total_variation(a, b) <= 1e-12
    c = O.enumerate_exact(P.TauDelay(1), 3, 4).pmf
    d = O.enumerate_exact(P.TwoChoice(), 3, 4).pmf
    assert O.total_variation(c, d) <= 1e-12


def test_enumeration_guard():
    with pytest.raises(ResourceError, match="Monte Carlo"):
        O.enumerate_exact(P.TwoChoice(), 10, 8)


def test_majorization_and_distance_helpers():
    assert O.majorizes([3, 0], [2, 1])
    assert not O.majorizes([2, 1], [3, 0])
    assert not O.majorizes([3, 0], [1, 1])
    assert O.total_variation({0: 1.0}, {1: 1.0}) == 1.0


def test_verify_entry_point():
    r = O.verify_drop_inequalities("d", 50, seed=1)
    assert r.trials == 50 and r.violations == 0
