"""Quenched nearest-neighbour walk in a sparse environment.

The walk is simulated exactly on a dense window of the environment; when it
leaves the window the window is widened and the compiled loop resumes with the
same random stream, so results do not depend on window sizes.  Each step
consumes exactly one uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .env import EnvRealization, EnvSpec, sample_env
from .errors import BudgetExceeded, InvalidParam
from .rng import as_seed_sequence, generator

DEFAULT_BUDGET = 10**9
_MIN_PAD = 256


@dataclass
class FirstPassageRecord:
    target_n: int
    T_n: int
    counts: np.ndarray  # left steps from each site, dense, starting at `offset`
    offset: int
    min_site_visited: int
    truncated: bool

    @property
    def left_counts(self) -> dict:
        """Sparse map site -> number of left steps taken from that site."""
        nz = np.flatnonzero(self.counts)
        return {int(i + self.offset): int(self.counts[i]) for i in nz}

    def left_total(self) -> int:
        return int(self.counts.sum())

    def nonnegative_left_steps(self) -> int:
        start = max(0, -self.offset)
        return int(self.counts[start:].sum())

    def negative_left_steps(self) -> int:
        return int(self.counts[: max(0, -self.offset)].sum())


@dataclass
class WalkSample:
    k_steps: int
    X_k: int
    min_site: int
    trajectory: np.ndarray | None = None


class _Window:
    """Dense omega window plus left-step counters, grown geometrically."""

    def __init__(self, env: EnvRealization, lo: int, hi: int):
        self.env = env
        self.lo, self.hi = lo, hi
        self.omega = env.omega_window(lo, hi)
        self.left = np.zeros(hi - lo + 1, dtype=np.int64)

    def widen(self, pos):
        lo, hi = self.lo, self.hi
        span = hi - lo + 1
        if pos < lo:
            lo = min(pos, lo - span)
        if pos > hi:
            hi = max(pos, hi + span)
        omega = self.env.omega_window(lo, hi)
        left = np.zeros(hi - lo + 1, dtype=np.int64)
        left[self.lo - lo : self.lo - lo + len(self.left)] = self.left
        self.lo, self.hi, self.omega, self.left = lo, hi, omega, left


def simulate_first_passage(env: EnvRealization, n: int, rng, budget: int = DEFAULT_BUDGET) -> FirstPassageRecord:
    """Run the walk from 0 until it first hits n (or the step budget runs out)."""
    if n < 1:
        raise InvalidParam(f"target site must be >= 1, got {n}")
    if budget < n:
        raise InvalidParam(f"step budget {budget} is smaller than the target {n}")
    rng = generator(rng)
    win = _Window(env, -min(_MIN_PAD, 2 * n), n)
    pos, steps, min_site = 0, 0, 0
    while True:
        pos, steps, status = K.walk_run(rng, win.omega, win.lo, pos, n, True, steps, budget, win.left)
        if status in (0, 3):
            break
        win.widen(pos)
    nz = np.flatnonzero(win.left)
    if nz.size:
        min_site = min(0, int(nz[0]) + win.lo - 1)
    return FirstPassageRecord(n, int(steps), win.left, win.lo, min_site, status == 3)


def first_passage_times(env: EnvRealization, targets, rng, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Hitting times of increasing targets along a single trajectory."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0 or np.any(np.diff(targets) < 0) or targets[0] < 1:
        raise InvalidParam("targets must be a nondecreasing sequence of sites >= 1")
    rng = generator(rng)
    win = _Window(env, -_MIN_PAD, int(targets[-1]))
    pos, steps = 0, 0
    out = np.full(targets.size, -1, dtype=np.int64)
    for j, n in enumerate(targets):
        while True:
            pos, steps, status = K.walk_run(rng, win.omega, win.lo, pos, int(n), True, steps, budget, win.left)
            if status in (0, 3):
                break
            win.widen(pos)
        if status == 3:
            break
        out[j] = steps
    return out


def simulate_position(env: EnvRealization, k: int, rng, keep_trajectory: bool = False) -> WalkSample:
    """Position after exactly k steps."""
    if k < 0:
        raise InvalidParam(f"k must be >= 0, got {k}")
    rng = generator(rng)
    reach = int(min(k, 4 * _MIN_PAD + int(k**0.5) * 4))
    win = _Window(env, -reach, reach)
    pos, steps = 0, 0
    path = np.zeros(k + 1, dtype=np.int64) if keep_trajectory else None
    min_site = 0
    while steps < k:
        if keep_trajectory:
            pos, steps, status = K.walk_trace(rng, win.omega, win.lo, pos, steps, k, path)
        else:
            pos, steps, status = K.walk_run(rng, win.omega, win.lo, pos, 0, False, steps, k, win.left)
        if status == 3:
            break
        win.widen(pos)
    if keep_trajectory:
        min_site = int(path.min())
    else:
        nz = np.flatnonzero(win.left)
        if nz.size:
            min_site = min(0, int(nz[0]) + win.lo - 1)
    return WalkSample(k, int(pos), min_site, path)


def replica_streams(seed):
    """(environment seed, walk generator) for one replica."""
    ss = as_seed_sequence(seed)
    env_ss = np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, 0))
    walk_ss = np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, 1))
    return env_ss, generator(walk_ss)


def annealed_left_steps(spec: EnvSpec, n_blocks: int, seed, budget: int = DEFAULT_BUDGET) -> int:
    """Left steps from nonnegative sites before the walk first reaches S_{n_blocks}.

    A fresh environment is drawn from ``seed``.
    """
    if n_blocks < 1:
        raise InvalidParam(f"n_blocks must be >= 1, got {n_blocks}")
    env_ss, walk_rng = replica_streams(seed)
    env = sample_env(spec, env_ss, chunk=max(8, 2 * n_blocks))
    target = env.S(n_blocks)
    rec = simulate_first_passage(env, target, walk_rng, budget)
    if rec.truncated:
        raise BudgetExceeded(f"walk to S_{n_blocks} = {target} exceeded {budget} steps", steps=rec.T_n)
    return rec.nonnegative_left_steps()
