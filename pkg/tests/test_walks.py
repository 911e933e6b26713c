"""Increment laws, lattice quantization, and passage-time DPs."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlsfbc.channel import Dmc, make_bsc
from vlsfbc.walks import (
    IncrementLaw,
    LatticeWalk,
    cached_stopping_law,
    crossing_order_prob,
    expected_max_stopping,
    increment_law,
    quantize,
    running_max_crossing,
    stopping_time_cdf,
)

UNIF = np.array([0.5, 0.5])
BSC = make_bsc(0.11)

# ln(0.89/0.5) and ln(0.11/0.5)
A_HI = 0.5766133643039938
A_LO = -1.5141277326297755


@pytest.fixture(scope="module")
def ach_law():
    return increment_law(UNIF, BSC, "achievability")


@pytest.fixture(scope="module")
def ind_law():
    return increment_law(UNIF, BSC, "independent_codeword")


def test_bsc_achievability_atoms(ach_law):
    np.testing.assert_allclose(ach_law.atoms, [A_LO, A_HI], rtol=1e-14)
    np.testing.assert_allclose(ach_law.probs, [0.11, 0.89], rtol=1e-14)
    assert abs(ach_law.drift - 0.34663184364127914) < 1e-13


def test_bsc_independent_codeword_atoms(ind_law):
    np.testing.assert_allclose(ind_law.atoms, [A_LO, A_HI], rtol=1e-14)
    np.testing.assert_allclose(ind_law.probs, [0.5, 0.5], rtol=1e-14)
    # E[exp(increment)] = sum_y q(y) = 1: the exponential supermartingale
    assert abs(ind_law.mgf_at_one - 1.0) < 1e-12
    # the conditional law given the true output symbol does not depend on it
    assert ind_law.independence_gap <= 1e-15


def test_bsc_uniform_q_law_matches_achievability(ach_law):
    # the BSC output distribution at the uniform input IS uniform, so the
    # mismatched-to-uniform converse walk coincides with the true one
    law = increment_law(UNIF, BSC, "converse_uniform_Q")
    np.testing.assert_allclose(law.atoms, ach_law.atoms, rtol=1e-14)
    np.testing.assert_allclose(law.probs, ach_law.probs, rtol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_identity_channel_is_single_atom(n):
    law = increment_law(np.full(n, 1.0 / n), Dmc(rows=np.eye(n)), "achievability")
    np.testing.assert_allclose(law.atoms, [math.log(n)], rtol=1e-14)
    np.testing.assert_allclose(law.probs, [1.0])


def test_increment_law_validation():
    with pytest.raises(ValueError):
        IncrementLaw(atoms=np.array([0.1]), probs=np.array([0.5]), provenance="achievability")
    with pytest.raises(ValueError):
        IncrementLaw(atoms=np.array([0.1, 0.2]), probs=np.array([1.2, -0.2]),
                     provenance="achievability")
    with pytest.raises(ValueError):
        increment_law(UNIF, BSC, "nonsense")


def test_atom_merging():
    law = IncrementLaw(atoms=np.array([0.3, 0.3, -0.1]),
                       probs=np.array([0.2, 0.3, 0.5]), provenance="achievability")
    np.testing.assert_allclose(law.atoms, [-0.1, 0.3])
    np.testing.assert_allclose(law.probs, [0.5, 0.5])


# ---------------------------------------------------------------------------
# quantization
# ---------------------------------------------------------------------------


def test_quantize_exact_when_h_divides():
    law = IncrementLaw(atoms=np.array([-0.7, 0.3]), probs=np.array([0.4, 0.6]),
                       provenance="achievability")
    w = quantize(law, 0.1, "floor")
    np.testing.assert_array_equal(w.int_atoms, [-7, 3])
    np.testing.assert_allclose(w.int_atoms * w.step_h, law.atoms, atol=1e-12)


def test_quantize_floor_and_ceil_directions():
    law = IncrementLaw(atoms=np.array([-0.7, 0.3]), probs=np.array([0.4, 0.6]),
                       provenance="achievability")
    lo = quantize(law, 0.5, "floor")
    np.testing.assert_array_equal(lo.int_atoms, [-2, 0])
    hi = quantize(law, 0.5, "ceil")
    np.testing.assert_array_equal(hi.int_atoms, [-1, 1])
    with pytest.raises(ValueError):
        quantize(law, 0.5, "exact")
    with pytest.raises(ValueError):
        quantize(law, -0.1, "floor")


def test_quantize_bsc_floor_bias(ach_law):
    w = quantize(ach_law, 1e-4, "floor")
    back = w.int_atoms * w.step_h
    assert np.all(back <= ach_law.atoms + 1e-12)
    assert np.all(ach_law.atoms - back < 1e-4)


def test_lattice_walk_validation():
    with pytest.raises(ValueError):
        LatticeWalk(step_h=0.0, int_atoms=np.array([1]), probs=np.array([1.0]),
                    rounding="floor")
    with pytest.raises(ValueError):
        LatticeWalk(step_h=0.1, int_atoms=np.array([1]), probs=np.array([1.0]),
                    rounding="nearest")


# ---------------------------------------------------------------------------
# passage times
# ---------------------------------------------------------------------------


def test_stop_at_zero_threshold(ach_law):
    law = stopping_time_cdf(ach_law, 0.0)
    assert law.horizon_T == 0
    assert law.cdf[0] == 1.0
    assert law.tail_mass_bound == 0.0


def test_bsc_first_step_crossing(ach_law):
    law = stopping_time_cdf(ach_law, 0.5)
    assert law.cdf[0] == 0.0
    assert abs(law.cdf[1] - 0.89) < 1e-14


def test_single_atom_crossing_time():
    c = 0.25
    law = IncrementLaw(atoms=np.array([c]), probs=np.array([1.0]),
                       provenance="achievability")
    sl = stopping_time_cdf(law, 3.5 * c)
    assert sl.cdf[3] == 0.0 and sl.cdf[4] == 1.0


def test_threshold_monotonicity(ach_law):
    f4 = stopping_time_cdf(ach_law, 4.0)
    f6 = stopping_time_cdf(ach_law, 6.0)
    T = min(f4.horizon_T, f6.horizon_T)
    assert np.all(f4.cdf[: T + 1] >= f6.cdf[: T + 1] - 1e-15)


def test_floor_quantized_walk_is_stochastically_slower(ach_law):
    gamma = 8.0
    exact = stopping_time_cdf(ach_law, gamma)
    coarse = quantize(ach_law, 0.05, "floor")
    slower = stopping_time_cdf(coarse, gamma, bias="lower")
    T = min(exact.horizon_T, slower.horizon_T)
    assert np.all(slower.cdf[: T + 1] <= exact.cdf[: T + 1] + 1e-12)


def test_wald_bracket(ach_law):
    """E[S_tau] = drift * E[tau] lands in [gamma, gamma + max increment)."""
    gamma = 20.0
    sl = stopping_time_cdf(ach_law, gamma)
    val, err = expected_max_stopping([sl])
    lo = gamma / ach_law.drift
    hi = (gamma + ach_law.max_atom) / ach_law.drift
    assert lo - err - 1e-9 <= val <= hi + err + 1e-9


def test_nonpositive_drift_needs_certificate_or_horizon():
    law = IncrementLaw(atoms=np.array([-1.0, 0.5]), probs=np.array([0.5, 0.5]),
                       provenance="achievability")
    assert law.drift < 0 and law.mgf_at_one > 1
    with pytest.raises(ValueError):
        stopping_time_cdf(law, 3.0)
    sl = stopping_time_cdf(law, 3.0, horizon=50)
    assert sl.horizon_T == 50
    assert sl.cdf[-1] + sl.tail_mass_bound >= 1 - 1e-12


def test_defective_passage_certificate(ind_law):
    # drift < 0 but mgf(1) = 1: P[tau < inf] <= exp(-gamma) certifies the tail
    assert ind_law.drift < 0
    sl = stopping_time_cdf(ind_law, 5.0, bias="upper")
    assert sl.future_crossing_bound < math.exp(-5.0)
    assert sl.cdf[-1] <= math.exp(-5.0)


# ---------------------------------------------------------------------------
# running maximum
# ---------------------------------------------------------------------------


def test_running_max_zero_at_time_zero(ach_law):
    v = running_max_crossing(ach_law, 0.5, 10)
    assert v[0] == 0.0
    assert abs(v[1] - 0.89) < 1e-14
    assert np.all(np.diff(v) >= -1e-15)


def test_running_max_nonpositive_threshold(ach_law):
    np.testing.assert_array_equal(running_max_crossing(ach_law, 0.0, 5), np.ones(6))
    np.testing.assert_array_equal(running_max_crossing(ach_law, -2.0, 5), np.ones(6))


def test_running_max_single_atom():
    law = IncrementLaw(atoms=np.array([0.5]), probs=np.array([1.0]),
                       provenance="achievability")
    v = running_max_crossing(law, 1.9, 6)
    np.testing.assert_array_equal(v, [0, 0, 0, 0, 1, 1, 1])


def test_running_max_matches_stop_cdf(ach_law):
    # crossing the running max by t is the same event as stopping by t
    gamma = 3.0
    sl = stopping_time_cdf(ach_law, gamma)
    v = running_max_crossing(ach_law, gamma, sl.horizon_T)
    np.testing.assert_allclose(v, sl.cdf, rtol=0, atol=1e-14)


# ---------------------------------------------------------------------------
# expected maximum and crossing order
# ---------------------------------------------------------------------------


def test_expected_max_deterministic_users():
    c = math.log(2.0)
    law = IncrementLaw(atoms=np.array([c]), probs=np.array([1.0]),
                       provenance="achievability")
    sl = stopping_time_cdf(law, 3.5 * c)
    val, err = expected_max_stopping([sl, sl, sl])
    assert abs(val - 4.0) < 1e-12 and err == 0.0


def test_expected_max_single_user_is_survival_sum(ach_law):
    sl = stopping_time_cdf(ach_law, 5.0)
    val, err = expected_max_stopping([sl])
    direct = float(np.sum(1.0 - sl.cdf[:-1])) + float(1.0 - sl.cdf[-1])
    assert val == direct
    assert err < 1e-9


def test_expected_max_of_pair_against_monte_carlo(ach_law):
    """E[max(tau_1, tau_2)] for two iid BSC(0.11) walks at gamma = 136
    (mean length around 400 channel uses), against a direct path simulation.

    The walk only moves by +a_hi or +a_lo, so each path reduces to the
    running count of down-steps; 10^6 simulated paths give about 5*10^5
    independent pairs.
    """
    gamma = 136.0
    sl = stopping_time_cdf(ach_law, gamma)
    dp_val, dp_err = expected_max_stopping([sl, sl])

    rng = np.random.default_rng(20260818)
    T = 700
    t_arr = np.arange(1, T + 1)
    taus = []
    for _ in range(20):
        downs = rng.random((50000, T)) < 0.11
        D = np.cumsum(downs, axis=1, dtype=np.int32)
        S = A_HI * t_arr[None, :] - (A_HI - A_LO) * D
        crossed = S >= gamma
        tau = np.argmax(crossed, axis=1) + 1
        assert crossed.any(axis=1).all()  # T = 700 is ~8 sigma past the mean
        taus.append(tau)
    taus = np.concatenate(taus)
    m = np.maximum(taus[::2], taus[1::2]).astype(np.float64)
    se = m.std(ddof=1) / math.sqrt(len(m))
    assert abs(m.mean() - dp_val) <= 3.0 * se + dp_err


def test_crossing_order_degenerate_cases(ach_law, ind_law):
    tau = stopping_time_cdf(ach_law, 3.0)
    taubar0 = stopping_time_cdf(ind_law, 0.0, bias="upper")
    assert crossing_order_prob(tau, taubar0) == 1.0

    tau0 = stopping_time_cdf(ach_law, 0.0)
    taubar = stopping_time_cdf(ind_law, 0.3, bias="upper")
    assert crossing_order_prob(tau0, taubar) == 0.0


def test_crossing_order_below_union_bound(ach_law, ind_law):
    gamma = 20.0
    tau = stopping_time_cdf(ach_law, gamma)
    taubar = stopping_time_cdf(ind_law, gamma, bias="upper")
    p = crossing_order_prob(tau, taubar)
    assert 0.0 < p <= math.exp(-gamma)


def test_crossing_order_requires_output_invariance(ach_law):
    tau = stopping_time_cdf(ach_law, 3.0)
    with pytest.raises(ValueError):
        crossing_order_prob(tau, tau)  # achievability law carries no gap


def test_cached_stopping_law_round_trip(ach_law, dp_cache):
    a = cached_stopping_law(ach_law, 12.0, cache_dir=dp_cache)
    b = cached_stopping_law(ach_law, 12.0, cache_dir=dp_cache)
    np.testing.assert_array_equal(a.cdf, b.cdf)
    assert a.tail_mass_bound == b.tail_mass_bound
    assert a.gamma == b.gamma


@settings(max_examples=30, deadline=None)
@given(
    a_hi=st.floats(0.2, 2.0),
    a_lo=st.floats(-2.0, -0.05),
    p_hi=st.floats(0.55, 0.95),
    gamma=st.floats(0.5, 25.0),
)
def test_two_atom_walk_properties(a_hi, a_lo, p_hi, gamma):
    law = IncrementLaw(atoms=np.array([a_lo, a_hi]),
                       probs=np.array([1 - p_hi, p_hi]),
                       provenance="achievability")
    if law.drift <= 0.01:
        return
    sl = stopping_time_cdf(law, gamma)
    assert np.all(np.diff(sl.cdf) >= -1e-15)
    assert sl.cdf[-1] + sl.tail_mass_bound >= 1 - 1e-12
    val, err = expected_max_stopping([sl])
    lo = gamma / law.drift
    hi = (gamma + law.max_atom) / law.drift
    assert lo - err - 1e-9 <= val <= hi + err + 1e-9
