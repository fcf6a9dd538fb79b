import math

import numpy as np
import pytest

from sparse_rwre.env import RegimeReport
from sparse_rwre.errors import InvalidParam, MissingEstimate, UnsupportedCase
from sparse_rwre.harness.stats import empirical_transform, two_sample_ks
from sparse_rwre.rng import split
from sparse_rwre.stablelaws import (
    StableSpec,
    build_norming_plan,
    mittag_leffler_function,
    mittag_leffler_sample,
    positive_stable_kanter,
    stable_sample,
    stable_transform,
)


def regime(label, alpha, beta=None):
    return RegimeReport(label, alpha, beta, "const", True)


# ---------------------------------------------------------------- transforms


def test_transform_examples():
    assert stable_transform(StableSpec(0.5), 0.0) == 1.0
    assert stable_transform(StableSpec(1.0), 1.0) == pytest.approx(math.exp(-math.pi / 2))
    expected = np.exp(math.gamma(0.5) / 0.5 * (math.cos(0.75 * math.pi) - 1j * math.sin(0.75 * math.pi)))
    assert stable_transform(StableSpec(1.5), 1.0) == pytest.approx(expected, rel=1e-14)
    assert stable_transform(StableSpec(2.0), 1.0) == pytest.approx(math.exp(-0.5))


def test_transform_is_hermitian_and_bounded():
    u = np.linspace(-5, 5, 41)
    for alpha in (1.0, 1.3, 1.8, 2.0):
        cf = stable_transform(StableSpec(alpha), u)
        assert np.allclose(cf, np.conj(cf[::-1]))
        assert np.all(np.abs(cf) <= 1 + 1e-15)


def test_spec_validation():
    for bad in (0.0, -1.0, 2.5):
        with pytest.raises(InvalidParam):
            StableSpec(bad)
    with pytest.raises(InvalidParam):
        stable_transform(StableSpec(0.5), -1.0)


# ---------------------------------------------------------------- samplers


def test_half_stable_laplace_transform_at_one():
    x = stable_sample(StableSpec(0.5), split(1, "stable", 0), 1_000_000)
    assert np.all(x > 0)
    assert np.mean(np.exp(-x)) == pytest.approx(math.exp(-math.sqrt(math.pi)), abs=0.003)


def test_mean_zero_for_alpha_above_one():
    x = stable_sample(StableSpec(1.5), split(1, "stable", 1), 1_000_000)
    # infinite variance: compare against a robust spread of the sample mean
    batch_means = x.reshape(1000, 1000).mean(axis=1)
    se = batch_means.std(ddof=1) / math.sqrt(batch_means.size)
    assert abs(x.mean()) <= 4 * se


def test_alpha_two_is_standard_normal():
    x = stable_sample(StableSpec(2.0), split(1, "stable", 2), 1_000_000)
    assert x.var() == pytest.approx(1.0, abs=0.01)


def test_scalar_draw():
    assert isinstance(stable_sample(StableSpec(1.2), split(0, "s", 0)), float)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
def test_sampler_matches_transform(alpha):
    spec = StableSpec(alpha)
    x = stable_sample(spec, split(2, "agree", int(alpha * 10)), 1_000_000)
    if alpha < 1:
        grid = np.linspace(0.1, 3.0, 8)
        values = [row["value"] for row in empirical_transform(x, grid, "LT")]
        assert np.max(np.abs(np.array(values) - stable_transform(spec, grid))) <= 0.01
    else:
        grid = np.array([-2.0, -1.0, -0.5, -0.2, 0.2, 0.5, 1.0, 2.0])
        values = [row["value"] for row in empirical_transform(x, grid, "CF")]
        assert np.max(np.abs(np.array(values) - stable_transform(spec, grid))) <= 0.02


# ---------------------------------------------------------------- Mittag-Leffler


def test_mittag_leffler_positive_and_trivial_transform():
    x = mittag_leffler_sample(0.5, split(3, "ml", 0), 100_000)
    assert np.all(x > 0)
    assert np.mean(np.exp(0.0 * x)) == 1.0
    assert mittag_leffler_sample(0.5, split(3, "ml", 1)) > 0


def test_mittag_leffler_moment_generating_function():
    x = mittag_leffler_sample(0.5, split(3, "ml", 2), 1_000_000)
    series = sum(0.5**n / math.gamma(1 + n / 2) for n in range(80))
    assert mittag_leffler_function(0.5, 0.5) == pytest.approx(series, rel=1e-14)
    assert np.mean(np.exp(0.5 * math.gamma(0.5) * x)) == pytest.approx(series, rel=0.01)


def test_mittag_leffler_function_closed_forms():
    assert mittag_leffler_function(1.0, 1.3) == pytest.approx(math.exp(1.3), rel=1e-14)
    # E_{1/2}(-z) = exp(z^2) erfc(z)
    assert mittag_leffler_function(0.5, -0.7) == pytest.approx(math.exp(0.49) * math.erfc(0.7), rel=1e-12)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_mittag_leffler_matches_power_of_stable(alpha):
    s = stable_sample(StableSpec(alpha), split(4, "ml-s", 0), 100_000)
    ml = mittag_leffler_sample(alpha, split(4, "ml-k", 0), 100_000)
    assert two_sample_ks(s**-alpha, ml).pvalue > 0.01


def test_kanter_has_unit_laplace_exponent():
    x = positive_stable_kanter(0.6, split(5, "k", 0), 1_000_000)
    assert np.mean(np.exp(-x)) == pytest.approx(math.exp(-1.0), abs=0.003)


def test_mittag_leffler_rejects_bad_index():
    with pytest.raises(InvalidParam):
        mittag_leffler_sample(1.0, split(0, "x", 0))


# ---------------------------------------------------------------- norming


def test_norming_plan_alpha_between_one_and_two():
    plan = build_norming_plan(regime("A1", 1.5), {"C_hat": 2.0, "mu": 3.0, "e_xi": 1.0, "e_barw": 4.0})
    assert plan.family == "A"
    assert plan.A_alpha == pytest.approx(11 / 3)
    t = np.array([10.0, 1e3, 1e5])
    assert plan.t_center(t) == pytest.approx(11 / 3 * t)
    assert plan.t_scale(t) == pytest.approx((2 * t / 3) ** (2 / 3))
    assert plan.B_alpha == pytest.approx(2 * (2 / 3) ** (2 / 3))


def test_norming_plan_alpha_below_one_has_no_centering():
    plan = build_norming_plan(regime("A1", 0.6), {"C_hat": 1.0, "mu": 2.0, "e_xi": 1.5})
    t = np.geomspace(10, 1e6, 5)
    assert np.all(plan.a_fn(t) == 0) and np.all(plan.t_center(t) == 0)
    assert plan.A_alpha is None


def test_b_family_quantile_table():
    w = split(6, "tab", 0).random(1_000_000) ** (-1 / 0.7)
    plan = build_norming_plan(regime("B1", 0.7), {"mu": 2.0, "e_xi": 1.0, "tail_samples": w})
    tail = plan.tail
    ratio = tail.grid_t * tail.survival(plan.b_fn(tail.grid_t))
    assert np.all((ratio >= 0.9) & (ratio <= 1.1))
    assert np.all(np.diff(tail.grid_c) >= 0)
    back = tail.c_inverse(tail.c(np.array([50.0, 5000.0])))
    assert back == pytest.approx([50.0, 5000.0], rel=0.02)


@pytest.mark.parametrize("alpha", [0.5, 1.2, 1.8])
def test_b_fn_is_regularly_varying(alpha):
    plan = build_norming_plan(regime("A1", alpha), {"C_hat": 1.7, "mu": 2.0, "e_xi": 1.0, "e_barw": 3.0})
    t = np.geomspace(10, 1e8, 15)
    slopes = np.diff(np.log(plan.b_fn(t))) / np.diff(np.log(t))
    assert slopes == pytest.approx(1 / alpha, rel=0.05)


def test_empirical_b_fn_is_regularly_varying():
    w = split(6, "tab", 1).random(1_000_000) ** (-1 / 1.4)
    plan = build_norming_plan(regime("B1", 1.4), {"mu": 2.0, "e_xi": 1.0, "e_barw": 3.5, "tail_samples": w})
    # keep at least 1000 exceedances behind every table point
    t = np.geomspace(10, 1e3, 6)
    slopes = np.diff(np.log(plan.b_fn(t))) / np.diff(np.log(t))
    assert slopes == pytest.approx(1 / 1.4, rel=0.05)


def test_alpha_near_two_snaps_to_gaussian_norming():
    plan = build_norming_plan(regime("A1", 2.0 - 1e-12), {"C_hat": 1.0, "mu": 2.0, "e_xi": 1.0, "e_barw": 3.0})
    assert plan.alpha == 2.0
    assert plan.b_fn(100.0) == pytest.approx(math.sqrt(100 * math.log(100)))


def test_norming_plan_errors():
    with pytest.raises(UnsupportedCase):
        build_norming_plan(regime("D", 2.0), {"mu": 1.0, "e_xi": 1.0})
    with pytest.raises(MissingEstimate):
        build_norming_plan(regime("A1", 1.5), {"mu": 1.0, "e_xi": 1.0, "e_barw": 2.0})
    with pytest.raises(MissingEstimate):
        build_norming_plan(regime("A1", 1.5), {"C_hat": 1.0, "mu": 1.0, "e_xi": 1.0})
    with pytest.raises(MissingEstimate):
        build_norming_plan(regime("B1", 0.5), {"mu": 1.0, "e_xi": 1.0})
    with pytest.raises(MissingEstimate):
        build_norming_plan(regime("A1", 1.0), {"C_hat": 1.0, "mu": 1.0, "e_xi": 1.0})


def test_describe_is_plain_data():
    plan = build_norming_plan(regime("A2", 1.5), {"C_hat": 2.0, "mu": 3.0, "e_xi": 1.0, "e_barw": 4.0})
    doc = plan.describe()
    assert doc["a_fn"] == {"kind": "linear", "coef": 4.0}
    assert doc["b_fn"]["exponent"] == pytest.approx(2 / 3)


def test_truncated_second_moment_scale_with_atoms_at_zero():
    # half the mass at zero, half Pareto(2): E[W^2; W <= r] = log r for r >= 1
    rng = split(7, "r2", 0)
    w = np.where(rng.random(1_000_000) < 0.5, 0.0, rng.random(1_000_000) ** -0.5)
    plan = build_norming_plan(regime("B1", 2.0), {"mu": 1.0, "e_xi": 1.0, "e_barw": 2.0, "tail_samples": w})
    t = np.array([100.0, 1e4])
    r = plan.tail.r2(t)
    assert np.all(r > 1)
    # fixed point of r^2 = t log r
    assert r**2 == pytest.approx(t * np.log(r), rel=0.03)
