"""Compiled inner loops.

Every kernel takes a ``numpy.random.Generator`` and releases the GIL so that
independent replicas can run on worker threads.
"""

import math

import numpy as np
from numba import njit

SMALL_NB = 16  # below this many trials, sum geometrics directly
GAMMA_POISSON_CAP = 1e15


@njit(nogil=True, cache=True)
def geom0(rng, p):
    """Geometric on {0, 1, ...} with success probability p."""
    if p >= 1.0:
        return 0
    u = rng.random()
    return int(math.floor(math.log1p(-u) / math.log1p(-p)))


@njit(nogil=True, cache=True)
def negbin(rng, m, p):
    """Sum of m iid Geom(p) on {0, 1, ...}: failures before the m-th success."""
    if m <= 0 or p >= 1.0:
        return 0
    if m <= SMALL_NB:
        lq = math.log1p(-p)
        s = 0
        for _ in range(m):
            s += int(math.floor(math.log1p(-rng.random()) / lq))
        return s
    lam = rng.standard_gamma(float(m)) * (1.0 - p) / p
    if lam > GAMMA_POISSON_CAP:
        # Poisson(lam) is indistinguishable from its normal approximation here
        return int(lam + math.sqrt(lam) * rng.standard_normal() + 0.5)
    return rng.poisson(lam)


@njit(nogil=True, cache=True)
def negbin_many(rng, m, p, out):
    for i in range(out.shape[0]):
        out[i] = negbin(rng, m, p)


@njit(nogil=True, cache=True)
def geometric_loop_many(rng, z, p, out):
    """Reference sampler: one geometric draw per particle, immigrant included."""
    for i in range(out.shape[0]):
        s = 0
        for _ in range(z + 1):
            s += geom0(rng, p)
        out[i] = s


# ---------------------------------------------------------------- walk


@njit(nogil=True, cache=True)
def walk_run(rng, omega, offset, pos, target, has_target, steps, max_steps, left):
    """Advance the walk on the window [offset, offset + len(omega)).

    Returns (pos, steps, status) with status 0 = target hit, 1 = left the
    window below, 2 = left the window above, 3 = step budget reached.
    No random number is consumed when the walk is outside the window.
    """
    n = omega.shape[0]
    while steps < max_steps:
        if has_target and pos == target:
            return pos, steps, 0
        i = pos - offset
        if i < 0:
            return pos, steps, 1
        if i >= n:
            return pos, steps, 2
        steps += 1
        if rng.random() < omega[i]:
            pos += 1
        else:
            left[i] += 1
            pos -= 1
    if has_target and pos == target:
        return pos, steps, 0
    return pos, steps, 3


@njit(nogil=True, cache=True)
def walk_trace(rng, omega, offset, pos, steps, max_steps, path):
    """As walk_run without a target, recording every visited position in path."""
    n = omega.shape[0]
    while steps < max_steps:
        i = pos - offset
        if i < 0:
            return pos, steps, 1
        if i >= n:
            return pos, steps, 2
        steps += 1
        if rng.random() < omega[i]:
            pos += 1
        else:
            pos -= 1
        path[steps] = pos
    return pos, steps, 3


# ---------------------------------------------------------------- branching


@njit(nogil=True, cache=True)
def block(rng, z_in, xi, lam):
    """One block: returns (w0, wdown, z_out).

    ``a`` tracks progeny of immigrants arriving inside the block, ``b`` the
    descendants of the z_in particles carried in.
    """
    a = 0
    b = z_in
    w0 = 0
    wd = 0
    for _ in range(xi - 1):
        a = negbin(rng, a + 1, 0.5)
        b = negbin(rng, b, 0.5)
        w0 += a
        wd += b
    z_out = negbin(rng, a + b + 1, lam)
    return w0, wd, z_out


@njit(nogil=True, cache=True)
def block_many(rng, z_in, xi, lam, w0, wd, z_out):
    for i in range(w0.shape[0]):
        w0[i], wd[i], z_out[i] = block(rng, z_in, xi, lam)


@njit(nogil=True, cache=True)
def chain_blocks(rng, xi, lam, z_out, w_block, w0, wd):
    """Run blocks in order from an empty population, storing per-block stats."""
    z = 0
    for i in range(xi.shape[0]):
        a0, ad, z = block(rng, z, xi[i], lam[i])
        w0[i] = a0
        wd[i] = ad
        z_out[i] = z
        w_block[i] = a0 + ad + z


@njit(nogil=True, cache=True)
def progeny_batch(rng, xi, lam, out):
    """W_{S_n} for each row of the (replicas, n_blocks) block arrays."""
    for r in range(xi.shape[0]):
        z = 0
        total = 0
        for i in range(xi.shape[1]):
            a0, ad, z = block(rng, z, xi[r, i], lam[r, i])
            total += a0 + ad + z
        out[r] = total


@njit(nogil=True, cache=True)
def quenched_z_batch(rng, xi, lam, out):
    """Final marked-generation population for repeated runs on one environment."""
    for r in range(out.shape[0]):
        z = 0
        for i in range(xi.shape[0]):
            _, _, z = block(rng, z, xi[i], lam[i])
        out[r] = z


# state layout for the resumable regeneration kernel
ST_Z, ST_TAU, ST_BARW, ST_W0, ST_WD, ST_SZ, ST_S = range(7)


@njit(nogil=True, cache=True)
def regen_run(rng, xi_pool, lam_pool, ptr, state, cycle, n_cycles, block_budget,
              tau, barw, sw0, swd, sz, stau):
    """Simulate regeneration cycles until n_cycles are done or the pool runs dry.

    ``state`` carries a partially completed cycle across calls so that pool
    refills do not disturb the random stream.  Returns (cycle, ptr, status)
    with status 0 = done, 1 = pool exhausted, 2 = block budget exceeded.
    """
    npool = xi_pool.shape[0]
    while cycle < n_cycles:
        if ptr >= npool:
            return cycle, ptr, 1
        xi = xi_pool[ptr]
        lam = lam_pool[ptr]
        ptr += 1
        a0, ad, z = block(rng, state[ST_Z], xi, lam)
        state[ST_Z] = z
        state[ST_TAU] += 1
        state[ST_W0] += a0
        state[ST_WD] += ad
        state[ST_SZ] += z
        state[ST_BARW] += a0 + ad + z
        state[ST_S] += xi
        if z == 0:
            tau[cycle] = state[ST_TAU]
            barw[cycle] = state[ST_BARW]
            sw0[cycle] = state[ST_W0]
            swd[cycle] = state[ST_WD]
            sz[cycle] = state[ST_SZ]
            stau[cycle] = state[ST_S]
            for k in range(7):
                state[k] = 0
            cycle += 1
        elif state[ST_TAU] >= block_budget:
            return cycle, ptr, 2
    return cycle, ptr, 0


# ---------------------------------------------------------------- critical GW


@njit(nogil=True, cache=True)
def crit_w_batch(rng, n, out_w, out_z):
    """W^crit_n (sum of generations 1..n) and Z^crit_n, one immigrant per generation."""
    for r in range(out_w.shape[0]):
        z = 0
        w = 0
        for _ in range(n):
            z = negbin(rng, z + 1, 0.5)
            w += z
        out_w[r] = w
        out_z[r] = z


@njit(nogil=True, cache=True)
def crit_y_batch(rng, n, out_y, out_z):
    """Y^crit(1, n) and Z^crit(1, n): progeny of a single immigrant over n generations."""
    for r in range(out_y.shape[0]):
        z = geom0(rng, 0.5)
        y = z
        for _ in range(n - 1):
            z = negbin(rng, z, 0.5)
            y += z
        out_y[r] = y
        out_z[r] = z


@njit(nogil=True, cache=True)
def crit_w_random_n(rng, ns, out):
    for r in range(ns.shape[0]):
        z = 0
        w = 0
        for _ in range(ns[r]):
            z = negbin(rng, z + 1, 0.5)
            w += z
        out[r] = w
