"""Closed-form block quantities, perpetuity sampling and tail estimators."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .env import EnvSpec, alpha_root, transience_check
from .errors import (
    InfiniteMeanXi,
    InsufficientTail,
    InvalidParam,
    NonpositiveSample,
    NotTransient,
    TooFewSamples,
    TruncationCap,
)
from .rng import generator

E_RHO_GE_1 = "E_RHO_GE_1"
E_RHOXI_INF = "E_RHOXI_INF"
E_XI2_INF = "E_XI2_INF"

PERPETUITY_CAP = 10**5
FLAT_SLOPE_TOL = 0.25


# ---------------------------------------------------------------- speed


@dataclass(frozen=True)
class SpeedReport:
    v: float
    inv_v: float
    e_xi: float
    e_xi2: float
    e_rho: float
    e_rhoxi: float
    degenerate_reason: str | None = None

    def to_dict(self):
        return dict(self.__dict__)


def speed_formula(e_xi, e_xi2, e_rho, e_rhoxi):
    """(1 - E rho) E xi / ((1 - E rho) E xi^2 + 2 E xi E rho xi); exact on Fractions."""
    num = (1 - e_rho) * e_xi
    return num / ((1 - e_rho) * e_xi2 + 2 * e_xi * e_rhoxi)


def _require_transient(spec):
    transient, e_log_rho, _ = transience_check(spec)
    if not transient:
        raise NotTransient(f"E log rho = {e_log_rho!r}")
    e_xi = spec.xi_moment(1)
    if math.isinf(e_xi):
        raise InfiniteMeanXi("E xi is infinite")
    return e_xi


def speed(spec: EnvSpec) -> SpeedReport:
    e_xi = _require_transient(spec)
    e_xi2 = spec.xi_moment(2)
    e_rho = spec.rho_moment(1)
    e_rhoxi = spec.cross_moment(1, 1)
    reason = None
    if not e_rho < 1:
        reason = E_RHO_GE_1
    elif math.isinf(e_rhoxi):
        reason = E_RHOXI_INF
    elif math.isinf(e_xi2):
        reason = E_XI2_INF
    if reason:
        return SpeedReport(0.0, math.inf, e_xi, e_xi2, e_rho, e_rhoxi, reason)
    v = speed_formula(e_xi, e_xi2, e_rho, e_rhoxi)
    return SpeedReport(v, 1.0 / v, e_xi, e_xi2, e_rho, e_rhoxi)


def expected_Y1(spec: EnvSpec) -> float:
    """Expected total progeny of the immigrants of one block."""
    e_xi = _require_transient(spec)
    e_xi2 = spec.xi_moment(2)
    e_rho = spec.rho_moment(1)
    e_rhoxi = spec.cross_moment(1, 1)
    if not e_rho < 1 or math.isinf(e_rhoxi) or math.isinf(e_xi2):
        return math.inf
    return 0.5 * (e_xi2 - e_xi) + e_xi * e_rhoxi / (1.0 - e_rho)


def expected_first_block_passage(spec: EnvSpec) -> float:
    """E T_{S_1} = E xi / v."""
    rep = speed(spec)
    return rep.e_xi / rep.v if rep.v > 0 else math.inf


# ---------------------------------------------------------------- perpetuity


@dataclass
class PerpetuityBatch:
    values: np.ndarray
    remainder: np.ndarray  # bound (bounded families) or typical size of the neglected tail
    terms: np.ndarray
    bound_is_almost_sure: bool


def _remainder_scale(spec: EnvSpec):
    """(scale, almost_sure): the neglected tail is at most scale * rho_1...rho_j."""
    rho_sup = spec.lam.rho_sup
    xi_sup = spec.xi.upper
    if rho_sup < 1:
        if math.isfinite(xi_sup):
            return xi_sup / (1.0 - rho_sup), True
        return spec.xi_moment(1) / (1.0 - rho_sup), False
    # the kappa-th moment of the tail is at most E xi^kappa / (1 - E rho^kappa) for kappa <= 1
    try:
        alpha = alpha_root(spec)
    except Exception:
        alpha = None
    kappa = 1.0 if alpha is None else min(1.0, alpha / 2.0)
    for _ in range(60):
        m_xi, m_rho = spec.xi_moment(kappa), spec.rho_moment(kappa)
        if math.isfinite(m_xi) and m_rho < 1:
            return (m_xi / (1.0 - m_rho)) ** (1.0 / kappa), False
        kappa /= 2.0
    raise InvalidParam("could not find a moment order controlling the perpetuity tail")


def perpetuity_batch(spec: EnvSpec, rng, size: int, eps: float = 1e-12, cap: int = PERPETUITY_CAP) -> PerpetuityBatch:
    """Truncated sums xi_1 + rho_1 xi_2 + rho_1 rho_2 xi_3 + ... for ``size`` iid environments.

    Summation stops once (product of rhos so far) * scale <= eps * partial sum,
    where ``scale`` bounds the neglected tail almost surely when rho and xi are
    bounded, and estimates its typical size otherwise.
    """
    if not spec.e_log_rho() < 0:
        raise InvalidParam("perpetuity diverges unless E log rho < 0")
    rng = generator(rng)
    scale, sure = _remainder_scale(spec)
    total = np.zeros(size)
    prod = np.ones(size)
    terms = np.zeros(size, dtype=np.int64)
    remainder = np.zeros(size)
    idx = np.arange(size)
    for _ in range(cap):
        if idx.size == 0:
            break
        xi, lam = spec.sample_blocks(rng, idx.size)
        p = prod[idx]
        s = total[idx] + p * xi
        p = p * ((1.0 - lam) / lam)
        total[idx] = s
        prod[idx] = p
        terms[idx] += 1
        rem = p * scale
        done = rem <= eps * s
        remainder[idx[done]] = rem[done]
        idx = idx[~done]
    if idx.size:
        raise TruncationCap(f"{idx.size} perpetuity samples did not settle within {cap} terms")
    return PerpetuityBatch(total, remainder, terms, sure)


def perpetuity_sample(spec: EnvSpec, rng, eps: float = 1e-12, size: int | None = None):
    batch = perpetuity_batch(spec, rng, 1 if size is None else size, eps)
    return float(batch.values[0]) if size is None else batch.values


# ---------------------------------------------------------------- tails


@dataclass(frozen=True)
class TailEstimate:
    index_hat: float
    k_used: int
    ci_width: float
    ci: tuple
    prefactor_hat: float | None = None

    def to_dict(self):
        return {
            "index_hat": self.index_hat,
            "k_used": self.k_used,
            "ci_width": self.ci_width,
            "ci": list(self.ci),
            "prefactor_hat": self.prefactor_hat,
        }


def _hill_from_top(top_desc, k):
    """Hill index from the k+1 largest values in decreasing order."""
    logs = np.log(top_desc[:k]) - math.log(top_desc[k])
    mean = float(np.mean(logs))
    return math.inf if mean == 0 else 1.0 / mean


def hill_estimate(samples, k: int | None = None, n_boot: int = 200, rng=None, level: float = 0.95) -> TailEstimate:
    """Hill estimator of the tail index with a percentile bootstrap interval.

    Resamples only matter through their k+1 largest values, all of which come
    from the original top m order statistics whenever at least k+1 of the
    resampled indices land there; this is used to bootstrap without sorting
    full resamples.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if np.any(~(x > 0)):
        raise NonpositiveSample("Hill estimation needs strictly positive samples")
    if k is None:
        k = int(math.floor(n**0.6))
    if k < 10:
        raise TooFewSamples(f"k = {k} order statistics is below the minimum of 10")
    if k >= n:
        raise TooFewSamples(f"k = {k} must be smaller than the sample size {n}")
    m = min(n, max(4 * k, k + 200))
    top = np.sort(np.partition(x, n - m)[n - m :])[::-1]
    index = _hill_from_top(top, k)
    if math.isinf(index):
        warnings.warn("zero log-spacings among the top order statistics; index reported as +inf", stacklevel=2)
        return TailEstimate(math.inf, k, math.nan, (math.inf, math.inf))
    rng = generator(0 if rng is None else rng)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        hits = rng.binomial(n, m / n) if m < n else n
        if hits <= k:
            res = np.sort(x[rng.integers(0, n, n)])[::-1]
        else:
            res = np.sort(top[rng.integers(0, m, hits)])[::-1]
        boots[b] = _hill_from_top(res, k)
    lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2])
    return TailEstimate(index, k, float(hi - lo), (float(lo), float(hi)))


@dataclass(frozen=True)
class TailConstantEstimate:
    c_hat: float
    slope: float
    flat: bool
    exceedances: int
    window: tuple

    @property
    def flag(self):
        return "FLAT" if self.flat else "NON_FLAT"

    def __float__(self):
        return self.c_hat

    def to_dict(self):
        return {
            "c_hat": self.c_hat,
            "slope": self.slope,
            "flag": self.flag,
            "exceedances": self.exceedances,
            "window": list(self.window),
        }


def tail_plateau(samples, alpha: float, window=(0.99, 0.9999), slowly_varying=None, n_grid: int = 40) -> TailConstantEstimate:
    """Average of x^alpha P_n{X > x} / L(x) on a log grid spanning a quantile window.

    The log-log slope of the same curve is reported; a slope beyond
    ``FLAT_SLOPE_TOL`` marks the plateau as NON_FLAT (alpha probably wrong).
    """
    if not alpha > 0:
        raise InvalidParam(f"alpha must be positive, got {alpha!r}")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    lo, hi = np.quantile(x, window)
    exceed = int(np.sum(x > lo))
    if exceed < 100 or not hi > lo or lo <= 0:
        raise InsufficientTail(f"{exceed} exceedances above the lower window edge; need at least 100 and a nondegenerate window")
    grid = np.geomspace(lo, hi, n_grid)
    surv = 1.0 - np.searchsorted(x, grid, side="right") / n
    norm = slowly_varying(grid) if slowly_varying is not None else 1.0
    c = grid**alpha * surv / norm
    good = c > 0
    slope = float(np.polyfit(np.log(grid[good]), np.log(c[good]), 1)[0])
    return TailConstantEstimate(float(np.mean(c)), slope, abs(slope) <= FLAT_SLOPE_TOL, exceed, (float(lo), float(hi)))


def tail_constant_estimate(samples, alpha: float, window=(0.99, 0.9999)) -> TailConstantEstimate:
    """C with P{X > x} ~ C x^-alpha, read off the empirical tail plateau."""
    return tail_plateau(samples, alpha, window)
