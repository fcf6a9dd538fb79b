"""Critical Galton-Watson process with Geom(1/2) offspring and unit immigration.

``W^crit_n`` is the total population over generations 1..n started from zero
with one immigrant per generation; ``Y^crit(1, n)`` is the progeny of a single
immigrant over n generations.  ``n^-2 W^crit_n`` converges in law to a
variable with Laplace transform ``1/cosh(sqrt(s))``, here called theta.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import special

from . import _kernels as K
from .errors import InsufficientTail, InvalidParam, PreconditionViolated
from .rng import generator

DIVERGED = math.inf


@dataclass(frozen=True)
class CritMoments:
    n: int
    mean_z: Fraction
    var_z: Fraction
    mean_y: Fraction
    var_y: Fraction
    mean_w: Fraction


def crit_moments(n: int) -> CritMoments:
    if n < 1:
        raise InvalidParam(f"n must be >= 1, got {n}")
    return CritMoments(
        n=n,
        mean_z=Fraction(1),
        var_z=Fraction(2 * n),
        mean_y=Fraction(n),
        var_y=Fraction(n * (n + 1) * (2 * n + 1), 3),
        mean_w=Fraction(n * (n + 1), 2),
    )


def simulate_w_crit(n: int, rng, size: int | None = None):
    """W^crit_n; an int when size is None, else an array of iid copies."""
    w, _ = simulate_w_and_z(n, rng, 1 if size is None else size)
    return int(w[0]) if size is None else w


def simulate_w_and_z(n: int, rng, size: int):
    """Arrays (W^crit_n, Z^crit_n) with one immigrant per generation."""
    if n < 0:
        raise InvalidParam(f"n must be >= 0, got {n}")
    w = np.empty(size, dtype=np.int64)
    z = np.empty(size, dtype=np.int64)
    K.crit_w_batch(generator(rng), int(n), w, z)
    return w, z


def simulate_y_crit(n: int, rng, size: int):
    """Arrays (Y^crit(1, n), Z^crit(1, n)) for the lineage of one immigrant."""
    if n < 1:
        raise InvalidParam(f"n must be >= 1, got {n}")
    y = np.empty(size, dtype=np.int64)
    z = np.empty(size, dtype=np.int64)
    K.crit_y_batch(generator(rng), int(n), y, z)
    return y, z


def lt_recursion(x: float, j: int) -> float:
    """a_j(x) = E exp(x Y^crit(1, j)) via a_j = 1/(2 - e^x a_{j-1}), a_0 = 1.

    Returns ``inf`` once a denominator is nonpositive.  Negative x is allowed
    and gives the Laplace transform.
    """
    if j < 0:
        raise InvalidParam(f"j must be >= 0, got {j}")
    excess = _lt_excess(x, j)
    return DIVERGED if excess is None else 1.0 + excess


def _lt_excess(x: float, j: int) -> float | None:
    """e^x a_j(x) - 1 tracked through a_j - 1 so tiny x keeps full precision; None on divergence."""
    growth = math.expm1(x)
    excess = 0.0  # a_0 - 1
    for _ in range(j):
        # e^x a - 1 = expm1(x) + e^x (a - 1); then a' - 1 = (e^x a - 1) / (1 - (e^x a - 1))
        shifted = growth + (1.0 + growth) * excess
        if shifted >= 1.0:
            return None
        excess = shifted / (1.0 - shifted)
    return excess


def w_crit_mgf(x: float, n: int) -> float:
    """E exp(x W^crit_n), exact: W^crit_n is a sum of n independent Y^crit(1, j)."""
    total = 1.0
    for j in range(1, n + 1):
        a = lt_recursion(x, j)
        if math.isinf(a):
            return DIVERGED
        total *= a
    return total


def smallest_valid_K(gamma: float) -> float:
    """Just above the smaller root of gamma K^2 - K + 1 = 0 (so K - gamma K^2 > 1)."""
    if not 0 < gamma < 0.25:
        raise InvalidParam(f"gamma must lie in (0, 1/4), got {gamma!r}")
    root = (1.0 - math.sqrt(1.0 - 4.0 * gamma)) / (2.0 * gamma)
    return root * (1.0 + 1e-9)


def b_bound_check(x: float, j: int, gamma: float, x0: float = 1e-3, K: float | None = None) -> bool:
    """Whether e^x a_j(x) <= 1 + K x (j + 1) with the smallest admissible K.

    The bound is guaranteed only for x below an unspecified threshold; beyond
    ``x0`` a warning is issued and a False result does not refute it.
    """
    if not 0 < gamma < 0.25:
        raise PreconditionViolated(f"gamma must lie in (0, 1/4), got {gamma!r}")
    if x < 0 or j < 0:
        raise PreconditionViolated("x and j must be nonnegative")
    if j * (j + 1) * x > gamma:
        raise PreconditionViolated(f"j(j+1)x = {j * (j + 1) * x!r} exceeds gamma = {gamma!r}")
    if x >= x0:
        warnings.warn(f"x = {x} is not below x0 = {x0}; the bound is not guaranteed there", stacklevel=2)
    if K is None:
        K = smallest_valid_K(gamma)
    excess = _lt_excess(x, j)
    if excess is None:
        return False
    growth = math.expm1(x)
    return growth + (1.0 + growth) * excess <= K * x * (j + 1)


@lru_cache(maxsize=None)
def euler_numbers(n: int) -> tuple:
    """Even-index Euler numbers E_0, E_2, ..., E_{2n} (exact integers)."""
    out = [1]
    for m in range(1, n + 1):
        out.append(-sum(math.comb(2 * m, 2 * k) * out[k] for k in range(m)))
    return tuple(out)


def theta_moment(k: int) -> Fraction:
    """E theta^k = (-1)^k k! E_{2k} / (2k)! as an exact rational."""
    if k < 1 or int(k) != k:
        raise InvalidParam(f"k must be a positive integer, got {k!r}")
    e2k = euler_numbers(k)[k]
    return Fraction((-1) ** k * math.factorial(k) * e2k, math.factorial(2 * k))


def theta_moment_real(s: float) -> float:
    """E theta^s for real s > 0.

    theta has the law of half the exit time of Brownian motion from (-1, 1),
    whose survival function is an alternating exponential series; integrating
    term by term gives Gamma(s+1) (4/pi) (2/pi)^(2s) beta(1 + 2s) with the
    Dirichlet beta function.
    """
    if not s > 0:
        raise InvalidParam(f"s must be positive, got {s!r}")
    z = 1.0 + 2.0 * s
    dirichlet_beta = 4.0**-z * (special.zeta(z, 0.25) - special.zeta(z, 0.75))
    return math.gamma(s + 1.0) * (4.0 / math.pi) * (2.0 / math.pi) ** (2.0 * s) * dirichlet_beta


def theta_lt(s: float) -> float:
    if s < 0:
        raise InvalidParam(f"s must be >= 0, got {s!r}")
    decay = math.exp(-math.sqrt(s))
    return 2.0 * decay / (1.0 + decay * decay)


@dataclass
class VarsigmaTailReport:
    index_hat: float
    index_ci: tuple
    prefactor_hat: float
    prefactor_expected: float | None
    exceedances: int
    samples: int


def tail_of_w_varsigma(varsigma_law, alpha: float, samples: int, rng, window=(0.99, 0.9999)) -> VarsigmaTailReport:
    """Tail of W^crit at an independent random time with tail index 2 alpha.

    The prefactor is the average of x^alpha P{W > x} / ell(sqrt x) over the
    empirical quantile window, to be compared with E theta^alpha times the
    tail constant of the random time.
    """
    from .analytics import hill_estimate, tail_plateau

    beta = getattr(varsigma_law, "tail_index", None)
    if beta is None:
        raise InsufficientTail("the random time has no regularly varying tail, so neither does W")
    if abs(beta - 2 * alpha) > 1e-9:
        raise InvalidParam(f"random-time tail index {beta} is not 2 * alpha = {2 * alpha}")
    rng = generator(rng)
    u = rng.random(samples)
    ns = np.asarray(varsigma_law.quantile(u), dtype=np.int64)
    w = np.empty(samples, dtype=np.int64)
    K.crit_w_random_n(rng, ns, w)
    ell = getattr(varsigma_law, "_ell", None)
    norm = (lambda x: ell(np.sqrt(np.maximum(x, 1.0)))) if ell is not None else None
    plateau = tail_plateau(w.astype(float), alpha, window, slowly_varying=norm)
    hill = hill_estimate(w[w > 0].astype(float), rng=rng)
    c_sigma = getattr(varsigma_law, "tail_constant", None)
    expected = float(c_sigma * theta_moment_real(alpha)) if c_sigma is not None else None
    return VarsigmaTailReport(hill.index_hat, hill.ci, plateau.c_hat, expected, plateau.exceedances, samples)
