"""Branching process with one immigrant per generation in a sparse environment.

Generation ``j`` reproduces with Geom(omega_j) offspring on {0, 1, ...}; an
immigrant joins every generation.  Inside block ``i`` the generations
``S_{i-1}+1 .. S_i - 1`` are critical (omega = 1/2) and generation ``S_i`` is
produced with parameter ``lambda_i``.  Block statistics split the progeny of
a block into the part born from the block's own immigrants (``w0``), the part
descending from the population carried in (``wdown``) and the marked
generation itself (``z_out``).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels as K
from .env import EnvRealization, EnvSpec
from .errors import BudgetExceeded, InvalidParam
from .rng import as_seed_sequence, generator

DEFAULT_BLOCK_BUDGET = 10**5
DEFAULT_CHUNK = 4096


def _child(ss, *key):
    return np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, *key))


def _check_omega(omega):
    if not 0 < omega < 1:
        raise InvalidParam(f"omega must lie in (0, 1), got {omega!r}")


@dataclass(frozen=True)
class BlockStats:
    z_in: int
    z_out: int
    w_block: int
    w0: int
    wdown: int


@dataclass(frozen=True)
class RegenSample:
    tau1: int
    bar_w: int
    sum_w0: int
    sum_wdown: int
    sum_z: int
    s_tau: int

    def to_json(self):
        return json.dumps(asdict(self))


def bpi_generation(z: int, omega: float, rng) -> int:
    """Size of the next generation: offspring of z particles plus one immigrant."""
    if z < 0:
        raise InvalidParam(f"population must be >= 0, got {z}")
    _check_omega(omega)
    return int(K.negbin(generator(rng), int(z) + 1, float(omega)))


def bpi_generation_many(z: int, omega: float, rng, size: int, per_particle: bool = False) -> np.ndarray:
    """Vector of iid next-generation draws.

    ``per_particle=True`` sums one geometric per particle instead of using the
    aggregated negative binomial sampler; both have the same law.
    """
    _check_omega(omega)
    out = np.empty(int(size), dtype=np.int64)
    if per_particle:
        K.geometric_loop_many(generator(rng), int(z), float(omega), out)
    else:
        K.negbin_many(generator(rng), int(z) + 1, float(omega), out)
    return out


def simulate_block(z_in: int, xi: int, lam: float, rng) -> BlockStats:
    if xi < 1:
        raise InvalidParam(f"block length must be >= 1, got {xi}")
    if z_in < 0:
        raise InvalidParam(f"z_in must be >= 0, got {z_in}")
    _check_omega(lam)
    w0, wd, z = K.block(generator(rng), int(z_in), int(xi), float(lam))
    return BlockStats(int(z_in), int(z), int(w0 + wd + z), int(w0), int(wd))


def simulate_block_many(z_in: int, xi: int, lam: float, rng, size: int):
    """Arrays (w0, wdown, z_out) from ``size`` independent copies of one block."""
    if xi < 1 or z_in < 0:
        raise InvalidParam(f"need xi >= 1 and z_in >= 0, got xi = {xi}, z_in = {z_in}")
    _check_omega(lam)
    w0 = np.empty(size, dtype=np.int64)
    wd = np.empty(size, dtype=np.int64)
    z = np.empty(size, dtype=np.int64)
    K.block_many(generator(rng), int(z_in), int(xi), float(lam), w0, wd, z)
    return w0, wd, z


# ---------------------------------------------------------------- regeneration


def simulate_regeneration(spec: EnvSpec, rng, block_budget: int = DEFAULT_BLOCK_BUDGET) -> RegenSample:
    """One regeneration cycle started from an empty population."""
    rng = generator(rng)
    z = tau = barw = s0 = sd = sz = s = 0
    while True:
        xi, lam = spec.sample_blocks(rng, 1)
        w0, wd, z = K.block(rng, z, int(xi[0]), float(lam[0]))
        tau += 1
        s0 += w0
        sd += wd
        sz += z
        barw += w0 + wd + z
        s += int(xi[0])
        if z == 0:
            return RegenSample(tau, int(barw), int(s0), int(sd), int(sz), s)
        if tau >= block_budget:
            raise BudgetExceeded(f"no extinction within {block_budget} blocks")


@dataclass
class RegenBatch:
    tau1: np.ndarray
    bar_w: np.ndarray
    sum_w0: np.ndarray
    sum_wdown: np.ndarray
    sum_z: np.ndarray
    s_tau: np.ndarray

    FIELDS = ("tau1", "bar_w", "sum_w0", "sum_wdown", "sum_z", "s_tau")

    def __len__(self):
        return len(self.tau1)

    def __getitem__(self, i):
        return RegenSample(*(int(getattr(self, f)[i]) for f in self.FIELDS))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def write_jsonl(self, path):
        cols = [getattr(self, f) for f in self.FIELDS]
        with open(path, "w") as fh:
            for row in zip(*cols):
                fh.write(json.dumps(dict(zip(self.FIELDS, map(int, row)))) + "\n")

    @classmethod
    def read_jsonl(cls, path):
        rows = [json.loads(line) for line in open(path) if line.strip()]
        return cls(*(np.array([r[f] for r in rows], dtype=np.int64) for f in cls.FIELDS))

    @classmethod
    def concat(cls, parts):
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in cls.FIELDS))


def _regen_chunk(spec: EnvSpec, ss, n_cycles: int, block_budget: int) -> RegenBatch:
    env_rng = generator(_child(ss, 0))
    bp_rng = generator(_child(ss, 1))
    out = [np.zeros(n_cycles, dtype=np.int64) for _ in RegenBatch.FIELDS]
    state = np.zeros(7, dtype=np.int64)
    xi, lam = spec.sample_blocks(env_rng, 2 * n_cycles + 64)
    ptr = cycle = 0
    while True:
        cycle, ptr, status = K.regen_run(bp_rng, xi, lam, ptr, state, cycle, n_cycles, block_budget, *out)
        if status == 0:
            return RegenBatch(*out)
        if status == 2:
            raise BudgetExceeded(f"no extinction within {block_budget} blocks", cycle=cycle)
        more_xi, more_lam = spec.sample_blocks(env_rng, len(xi))
        xi = np.concatenate([xi[ptr:], more_xi])
        lam = np.concatenate([lam[ptr:], more_lam])
        ptr = 0


def simulate_regenerations(spec: EnvSpec, n_cycles: int, seed, chunk: int = DEFAULT_CHUNK,
                           workers: int = 1, block_budget: int = DEFAULT_BLOCK_BUDGET) -> RegenBatch:
    """Independent regeneration cycles.

    Cycles are produced in chunks of ``chunk``, chunk ``c`` drawing from its own
    substream of ``seed``; the output is the same for any number of workers.
    """
    if n_cycles < 0:
        raise InvalidParam(f"n_cycles must be >= 0, got {n_cycles}")
    ss = as_seed_sequence(seed)
    sizes = [min(chunk, n_cycles - start) for start in range(0, n_cycles, chunk)]
    jobs = [(_child(ss, c), size) for c, size in enumerate(sizes)]
    run = lambda job: _regen_chunk(spec, job[0], job[1], block_budget)
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    if not parts:
        return RegenBatch(*(np.zeros(0, dtype=np.int64) for _ in RegenBatch.FIELDS))
    return RegenBatch.concat(parts)


# ---------------------------------------------------------------- annealed progeny


def sample_annealed_progeny(spec: EnvSpec, n_blocks: int, seed) -> int:
    """Total progeny W_{S_n} over generations 1..S_{n_blocks} in a fresh environment."""
    return int(annealed_progeny_batch(spec, n_blocks, 1, seed)[0])


def annealed_progeny_batch(spec: EnvSpec, n_blocks: int, size: int, seed) -> np.ndarray:
    if n_blocks < 1:
        raise InvalidParam(f"n_blocks must be >= 1, got {n_blocks}")
    ss = as_seed_sequence(seed)
    xi, lam = spec.sample_blocks(generator(_child(ss, 0)), size * n_blocks)
    out = np.empty(size, dtype=np.int64)
    K.progeny_batch(generator(_child(ss, 1)), xi.reshape(size, n_blocks), lam.reshape(size, n_blocks), out)
    return out


@dataclass
class BlockPath:
    """Blocks of one branching trajectory, run past n_blocks to the next extinction."""

    xi: np.ndarray
    lam: np.ndarray
    z_out: np.ndarray
    w_block: np.ndarray
    w0: np.ndarray
    wdown: np.ndarray
    n_blocks: int

    def extinction_blocks(self):
        return np.flatnonzero(self.z_out == 0) + 1

    def progeny_through(self, n):
        return int(self.w_block[:n].sum())

    def sandwich(self):
        """(sum over completed cycles, W_{S_n}, sum including the straddling cycle)."""
        n = self.n_blocks
        ext = self.extinction_blocks()
        done = ext[ext <= n]
        lower = int(self.w_block[: done[-1]].sum()) if done.size else 0
        nxt = ext[ext > n]
        upper = int(self.w_block[: nxt[0]].sum()) if nxt.size else None
        return lower, self.progeny_through(n), upper


def simulate_block_path(spec: EnvSpec, n_blocks: int, seed, block_budget: int = DEFAULT_BLOCK_BUDGET) -> BlockPath:
    ss = as_seed_sequence(seed)
    env_rng = generator(_child(ss, 0))
    bp_rng = generator(_child(ss, 1))
    xi, lam = spec.sample_blocks(env_rng, n_blocks)
    z_out, w_block, w0, wd = (np.empty(n_blocks, dtype=np.int64) for _ in range(4))
    K.chain_blocks(bp_rng, xi, lam, z_out, w_block, w0, wd)
    ext = [list(a) for a in (xi, lam, z_out, w_block, w0, wd)]
    z = int(z_out[-1])
    extra = 0
    # run on to the first extinction strictly after block n
    while z != 0 or extra == 0:
        bx, bl = spec.sample_blocks(env_rng, 1)
        a0, ad, z = K.block(bp_rng, z, int(bx[0]), float(bl[0]))
        for lst, val in zip(ext, (bx[0], bl[0], z, a0 + ad + z, a0, ad)):
            lst.append(val)
        extra += 1
        if extra >= block_budget:
            raise BudgetExceeded(f"no extinction within {block_budget} blocks after block {n_blocks}")
    xi, lam, z_out, w_block, w0, wd = (np.asarray(a) for a in ext)
    return BlockPath(xi.astype(np.int64), lam.astype(float), z_out.astype(np.int64),
                     w_block.astype(np.int64), w0.astype(np.int64), wd.astype(np.int64), n_blocks)


# ---------------------------------------------------------------- quenched


def quenched_mean_recursion(env: EnvRealization, k: int) -> float:
    """R_k = rho_k xi_k + rho_k R_{k-1}, R_0 = 0: the quenched mean of Z at S_k."""
    if k < 0:
        raise InvalidParam(f"k must be >= 0, got {k}")
    r = 0.0
    if k == 0:
        return r
    xi, _, rho = env.blocks(1, k)
    for x, p in zip(xi, rho):
        r = p * x + p * r
    return float(r)


def quenched_population(env: EnvRealization, k: int, rng, size: int) -> np.ndarray:
    """Draws of Z at generation S_k on the frozen environment env."""
    xi, lam, _ = env.blocks(1, k)
    out = np.empty(size, dtype=np.int64)
    K.quenched_z_batch(generator(rng), np.ascontiguousarray(xi), np.ascontiguousarray(lam), out)
    return out
