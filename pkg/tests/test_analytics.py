import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_rwre import analytics
from sparse_rwre.analytics import (
    E_RHO_GE_1,
    E_XI2_INF,
    expected_first_block_passage,
    expected_Y1,
    hill_estimate,
    perpetuity_batch,
    perpetuity_sample,
    speed,
    speed_formula,
    tail_constant_estimate,
)
from sparse_rwre.env import Constant, DiscretePareto, EnvSpec, LambdaTable
from sparse_rwre.errors import InsufficientTail, NonpositiveSample, NotTransient, TooFewSamples
from sparse_rwre.rng import split

from conftest import lognormal_spec, simple_spec


def pareto(alpha, size, rng):
    """Exact Pareto samples with survival x^-alpha on [1, inf)."""
    return rng.random(size) ** (-1.0 / alpha)


# ---------------------------------------------------------------- speed


def test_speed_nearest_neighbour():
    rep = speed(simple_spec(1, 2 / 3))
    assert rep.v == pytest.approx(1 / 3, rel=1e-14)
    assert rep.v * rep.inv_v == pytest.approx(1.0)
    assert rep.degenerate_reason is None


def test_speed_two_site_blocks():
    assert speed(simple_spec(2, 2 / 3)).v == pytest.approx(1 / 6, rel=1e-14)


def test_speed_zero_when_mean_rho_reaches_one():
    # rho in {2, 1/4} with equal weight: E rho = 9/8 but E log rho < 0
    spec = EnvSpec(simple_spec().xi, LambdaTable((1 / 3, 4 / 5), (0.5, 0.5)))
    rep = speed(spec)
    assert rep.e_rho == pytest.approx(9 / 8)
    assert (rep.v, rep.inv_v, rep.degenerate_reason) == (0.0, math.inf, E_RHO_GE_1)
    assert math.isinf(expected_Y1(spec)) and math.isinf(expected_first_block_passage(spec))


def test_speed_zero_when_block_length_has_no_second_moment():
    spec = EnvSpec(DiscretePareto(1.5), Constant(2 / 3))
    rep = speed(spec)
    assert rep.v == 0.0 and rep.degenerate_reason == E_XI2_INF
    assert math.isinf(expected_Y1(spec))


def test_speed_requires_transience():
    with pytest.raises(NotTransient):
        speed(simple_spec(1, 0.4))
    with pytest.raises(NotTransient):
        expected_Y1(simple_spec(1, 0.5))


@settings(max_examples=200)
@given(p=st.integers(1, 999), q=st.integers(1, 999))
def test_unit_blocks_reduce_to_nearest_neighbour_speed(p, q):
    # xi = 1: (1 - E rho) / (1 + E rho), checked as exact rational algebra
    e_rho = Fraction(min(p, q), max(p, q) + 1)
    assert speed_formula(1, 1, e_rho, e_rho) == (1 - e_rho) / (1 + e_rho)


@settings(max_examples=100)
@given(m=st.integers(1, 20), lam=st.floats(0.51, 0.99))
def test_speed_positive_and_below_one(m, lam):
    rep = speed(simple_spec(m, lam))
    assert 0 < rep.v < 1
    rho = (1 - lam) / lam
    assert rep.v == pytest.approx((1 - rho) / (m * (1 + rho)), rel=1e-12)


# ---------------------------------------------------------------- block expectations


@pytest.mark.parametrize("m,y1,passage", [(1, 1.0, 3.0), (2, 5.0, 12.0)])
def test_block_expectations(m, y1, passage):
    spec = simple_spec(m, 2 / 3)
    assert expected_Y1(spec) == pytest.approx(y1, rel=1e-14)
    assert expected_first_block_passage(spec) == pytest.approx(passage, rel=1e-14)
    assert m + 2 * expected_Y1(spec) == pytest.approx(expected_first_block_passage(spec), rel=1e-14)


def test_passage_identity_holds_for_mixed_spec(mixed_spec):
    lhs = mixed_spec.xi_moment(1) + 2 * expected_Y1(mixed_spec)
    assert lhs == pytest.approx(expected_first_block_passage(mixed_spec), rel=1e-10)


# ---------------------------------------------------------------- perpetuity


@pytest.mark.parametrize("m,value", [(1, 2.0), (2, 4.0)])
def test_perpetuity_geometric_series(m, value):
    eps = 1e-12
    batch = perpetuity_batch(simple_spec(m, 2 / 3), split(0, "perp", m), 10, eps)
    assert np.allclose(batch.values, value, rtol=0, atol=eps * value)
    assert batch.bound_is_almost_sure
    assert perpetuity_sample(simple_spec(m, 2 / 3), split(0, "perp", 0)) == pytest.approx(value, abs=eps * value)


def test_perpetuity_truncation_bound_arithmetic(mixed_spec):
    # bounded rho (at most 2/3) and xi (at most 3)
    spec = EnvSpec(mixed_spec.xi, LambdaTable((0.6, 0.8, 0.9), (0.2, 0.5, 0.3)))
    eps = 1e-10
    batch = perpetuity_batch(spec, split(1, "bound", 0), 2000, eps)
    rho_sup, xi_sup = 0.4 / 0.6, 3
    # neglected tail <= prod * xi_sup / (1 - rho_sup), and the stopping rule forces that below eps * sum
    assert batch.bound_is_almost_sure
    assert np.all(batch.remainder <= eps * batch.values)
    # the number of terms cannot exceed the count needed for the worst-case decay
    worst = math.ceil(math.log(eps * 1 * (1 - rho_sup) / xi_sup) / math.log(rho_sup)) + 1
    assert batch.terms.max() <= worst


def test_perpetuity_heavy_tail_index():
    spec = lognormal_spec(-0.5, 1.0)  # alpha = 1
    values = perpetuity_sample(spec, split(2, "perp", 0), size=1_000_000)
    assert hill_estimate(values).index_hat == pytest.approx(1.0, abs=0.15)


def test_perpetuity_needs_negative_drift():
    with pytest.raises(analytics.InvalidParam):
        perpetuity_sample(simple_spec(1, 0.4), split(0, "p", 0))


# ---------------------------------------------------------------- Hill


def test_hill_on_exact_pareto():
    x = pareto(1.5, 1_000_000, split(3, "hill", 0))
    est = hill_estimate(x, rng=split(3, "boot", 0))
    assert est.k_used == math.floor(1_000_000**0.6)
    assert est.index_hat == pytest.approx(1.5, abs=0.1)
    assert est.ci[0] < est.index_hat < est.ci[1]


def test_hill_constant_samples_give_infinite_index():
    with pytest.warns(UserWarning):
        est = hill_estimate(np.full(1000, 3.0))
    assert math.isinf(est.index_hat)


def test_hill_input_errors():
    with pytest.raises(NonpositiveSample):
        hill_estimate(np.array([1.0, 2.0, 0.0] * 100))
    with pytest.raises(TooFewSamples):
        hill_estimate(np.arange(1, 50.0), k=5)
    with pytest.raises(TooFewSamples):
        hill_estimate(np.arange(1, 50.0), k=60)


def test_hill_index_on_exponential_drifts_with_k():
    x = split(4, "exp", 0).exponential(size=100_000)
    indices = [hill_estimate(x, k=k, n_boot=10).index_hat for k in (100, 1000, 10_000)]
    print("exponential Hill indices by k:", indices)
    assert all(i > 0 for i in indices)


def test_hill_bootstrap_coverage():
    hits = 0
    for trial in range(100):
        x = pareto(1.5, 20_000, split(5, "cov", trial))
        lo, hi = hill_estimate(x, rng=split(5, "cov-boot", trial)).ci
        hits += lo <= 1.5 <= hi
    assert hits >= 80


# ---------------------------------------------------------------- tail constant


def test_tail_constant_on_exact_pareto():
    x = pareto(1.5, 1_000_000, split(6, "tc", 0))
    est = tail_constant_estimate(x, 1.5)
    assert float(est) == pytest.approx(1.0, abs=0.1)
    assert est.flag == "FLAT"


def test_tail_constant_flags_wrong_index():
    x = pareto(1.5, 1_000_000, split(6, "tc", 1))
    assert tail_constant_estimate(x, 2.0).flag == "NON_FLAT"
    assert tail_constant_estimate(x, 1.0).flag == "NON_FLAT"


def test_tail_constant_needs_enough_exceedances():
    with pytest.raises(InsufficientTail):
        tail_constant_estimate(pareto(1.5, 5000, split(6, "tc", 2)), 1.5)
    with pytest.raises(analytics.InvalidParam):
        tail_constant_estimate(np.ones(10), -1.0)
