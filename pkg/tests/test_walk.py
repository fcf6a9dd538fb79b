import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_rwre.env import Beta, EnvSpec, Geometric1, UniformInt, sample_env
from sparse_rwre.errors import InvalidParam
from sparse_rwre.harness.stats import mann_kendall
from sparse_rwre.rng import seed_sequence, split
from sparse_rwre.walk import (
    annealed_left_steps,
    first_passage_times,
    replica_streams,
    simulate_first_passage,
    simulate_position,
)

from conftest import simple_spec


def test_almost_deterministic_drift_hits_in_n_steps():
    env = sample_env(simple_spec(1, 1 - 1e-12), 0)
    rec = simulate_first_passage(env, 1000, split(1, "walk", 0))
    assert rec.T_n == 1000 and rec.left_total() == 0 and not rec.truncated


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**40), n=st.integers(1, 3000))
def test_step_identity_on_random_records(seed, n):
    spec = EnvSpec(Geometric1(0.5), Beta(3, 2))
    env = sample_env(spec, seed_sequence(seed, "env"))
    rec = simulate_first_passage(env, n, split(seed, "walk", 0))
    assert not rec.truncated
    assert rec.T_n - n == 2 * rec.left_total()
    assert (rec.T_n - n) % 2 == 0
    assert sum(rec.left_counts.values()) == rec.left_total()
    assert all(site <= n for site in rec.left_counts)


def test_step_identity_many_trials(mixed_spec):
    for i in range(10_000):
        env_seed, rng = replica_streams(seed_sequence(99, "identity", i))
        env = sample_env(mixed_spec, env_seed, chunk=8)
        rec = simulate_first_passage(env, 20, rng)
        assert rec.T_n == 20 + 2 * rec.left_total()


def test_truncation_is_in_band():
    env = sample_env(simple_spec(1, 0.55), 0)
    rec = simulate_first_passage(env, 5000, split(0, "walk", 0), budget=5000)
    assert rec.truncated and rec.T_n == 5000


def test_budget_below_target_is_invalid():
    env = sample_env(simple_spec(), 0)
    with pytest.raises(InvalidParam):
        simulate_first_passage(env, 10, split(0, "walk", 0), budget=5)
    with pytest.raises(InvalidParam):
        simulate_first_passage(env, 0, split(0, "walk", 0))


def test_first_passage_mean_matches_inverse_speed(ladder_spec):
    n = 100_000
    vals = []
    for i in range(200):
        env_seed, rng = replica_streams(seed_sequence(3, "fp", i))
        vals.append(simulate_first_passage(sample_env(ladder_spec, env_seed), n, rng).T_n / n)
    assert np.mean(vals) == pytest.approx(3.0, abs=0.05)


def test_hitting_times_are_monotone_along_one_trajectory(mixed_spec):
    env = sample_env(mixed_spec, 4)
    times = first_passage_times(env, [10, 50, 50, 200, 1000], split(4, "walk", 0))
    assert np.all(np.diff(times) >= 0)
    assert times[2] == times[1]


def test_hitting_times_agree_with_single_target_runs(mixed_spec):
    env = sample_env(mixed_spec, 4)
    times = first_passage_times(env, [10, 1000], split(4, "walk", 0))
    rec = simulate_first_passage(sample_env(mixed_spec, 4), 1000, split(4, "walk", 0))
    assert times[-1] == rec.T_n


def test_position_zero_steps():
    sample = simulate_position(sample_env(simple_spec(), 0), 0, split(0, "w", 0))
    assert sample.X_k == 0


def test_position_speed(ladder_spec):
    k = 100_000
    xs = []
    for i in range(200):
        env_seed, rng = replica_streams(seed_sequence(5, "pos", i))
        xs.append(simulate_position(sample_env(ladder_spec, env_seed), k, rng).X_k / k)
    assert np.mean(xs) == pytest.approx(1 / 3, abs=0.02)


def test_reflected_environment_drifts_left():
    spec = simple_spec(1, 1 / 3)
    xs = []
    for i in range(50):
        env_seed, rng = replica_streams(seed_sequence(6, "refl", i))
        xs.append(simulate_position(sample_env(spec, env_seed), 20_000, rng).X_k)
    assert np.mean(xs) < 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**40), k=st.integers(1, 5000))
def test_trajectory_has_unit_steps(seed, k):
    env = sample_env(EnvSpec(UniformInt(4), Beta(2, 2)), seed)
    sample = simulate_position(env, k, split(seed, "trace", 0), keep_trajectory=True)
    path = sample.trajectory
    assert path[0] == 0 and path[-1] == sample.X_k and len(path) == k + 1
    assert np.all(np.abs(np.diff(path)) == 1)
    assert sample.min_site == path.min()


def test_trace_and_counting_runs_agree(mixed_spec):
    a = simulate_position(sample_env(mixed_spec, 8), 50_000, split(8, "w", 0), keep_trajectory=True)
    b = simulate_position(sample_env(mixed_spec, 8), 50_000, split(8, "w", 0))
    assert a.X_k == b.X_k


def test_replicas_are_deterministic(mixed_spec):
    def run():
        env_seed, rng = replica_streams(seed_sequence(1, "det", 3))
        rec = simulate_first_passage(sample_env(mixed_spec, env_seed), 5000, rng)
        return rec.T_n, rec.left_counts
    assert run() == run()


def test_annealed_left_steps_trivial_environment():
    spec = simple_spec(1, 1 - 1e-12)
    assert all(annealed_left_steps(spec, 5, seed_sequence(0, "a", i)) == 0 for i in range(100))


def test_annealed_left_steps_bookkeeping(mixed_spec):
    for i in range(200):
        seed = seed_sequence(2, "book", i)
        value = annealed_left_steps(mixed_spec, 5, seed)
        env_seed, rng = replica_streams(seed)
        env = sample_env(mixed_spec, env_seed)
        target = env.S(5)
        rec = simulate_first_passage(env, target, rng)
        assert value == (rec.T_n - target) // 2 - rec.negative_left_steps()


def test_negative_side_time_has_no_trend(mixed_spec):
    means = []
    for n in (100, 300, 1000, 3000, 10_000):
        vals = []
        for i in range(300):
            env_seed, rng = replica_streams(seed_sequence(7, f"neg/{n}", i))
            vals.append(simulate_first_passage(sample_env(mixed_spec, env_seed), n, rng).negative_left_steps())
        means.append(np.mean(vals))
    _, _, p = mann_kendall(means)
    assert p > 0.05
