"""Stable laws in the package's parametrization and limit-theorem normings.

``S_alpha`` denotes:

* alpha in (0, 1): positive, ``E exp(-u S) = exp(-Gamma(1 - alpha) u^alpha)``;
* alpha = 1: ``log E exp(iuS) = -(pi/2)|u| - iu log|u|``;
* alpha in (1, 2): ``log E exp(iuS) = |u|^alpha Gamma(2-alpha)/(alpha-1) (cos(pi alpha/2) - i sin(pi alpha/2) sign u)``;
* alpha = 2: standard normal.

All three non-Gaussian cases are totally skewed to the right.  In the
Samorodnitsky-Taqqu S(sigma, beta, mu) notation they have beta = 1, mu = 0 and

* alpha < 1: sigma^alpha = Gamma(1 - alpha) cos(pi alpha / 2),
* alpha = 1: sigma = pi / 2,
* 1 < alpha < 2: sigma^alpha = Gamma(2 - alpha) / (alpha - 1) |cos(pi alpha / 2)|,

and are sampled with the Chambers-Mallows-Stuck method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import InvalidParam, MissingEstimate, UnsupportedCase
from .rng import generator

HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class StableSpec:
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise InvalidParam(f"alpha must lie in (0, 2], got {self.alpha!r}")

    @property
    def kind(self):
        a = self.alpha
        if a == 2:
            return "normal"
        if a == 1:
            return "cauchy-like"
        return "positive" if a < 1 else "spectrally-positive"

    @property
    def st_scale(self):
        """sigma of the equivalent S(sigma, 1, 0) law (alpha < 2)."""
        a = self.alpha
        if a == 1:
            return HALF_PI
        if a < 1:
            return (math.gamma(1 - a) * math.cos(HALF_PI * a)) ** (1 / a)
        if a < 2:
            return (math.gamma(2 - a) / (a - 1) * abs(math.cos(HALF_PI * a))) ** (1 / a)
        return math.sqrt(0.5)


def _cms_standard(alpha, v, w, beta=1.0):
    """CMS draws of S(1, beta, 0) from V ~ U(-pi/2, pi/2), W ~ Exp(1)."""
    if alpha == 1:
        a = HALF_PI + beta * v
        return (a * np.tan(v) - beta * np.log(HALF_PI * w * np.cos(v) / a)) / HALF_PI
    t = beta * math.tan(HALF_PI * alpha)
    b = math.atan(t) / alpha
    s = (1 + t * t) ** (1 / (2 * alpha))
    return (
        s
        * np.sin(alpha * (v + b))
        / np.cos(v) ** (1 / alpha)
        * (np.cos(v - alpha * (v + b)) / w) ** ((1 - alpha) / alpha)
    )


def stable_sample(spec: StableSpec, rng, size: int | None = None):
    rng = generator(rng)
    n = 1 if size is None else size
    a = spec.alpha
    if a == 2:
        out = rng.standard_normal(n)
    else:
        v = rng.uniform(-HALF_PI, HALF_PI, n)
        w = rng.standard_exponential(n)
        sigma = spec.st_scale
        out = sigma * _cms_standard(a, v, w)
        if a == 1:
            out = out + sigma * math.log(sigma) / HALF_PI
    return float(out[0]) if size is None else out


def stable_transform(spec: StableSpec, u):
    """Laplace transform (alpha < 1) or characteristic function (alpha >= 1) at u."""
    a = spec.alpha
    u = np.asarray(u, dtype=float)
    if a < 1:
        if np.any(u < 0):
            raise InvalidParam("the Laplace transform is evaluated at u >= 0")
        return np.exp(-math.gamma(1 - a) * u**a)
    if a == 2:
        return np.exp(-0.5 * u * u).astype(complex)
    au = np.abs(u)
    if a == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            log_term = np.where(au > 0, u * np.log(np.where(au > 0, au, 1.0)), 0.0)
        return np.exp(-HALF_PI * au - 1j * log_term)
    coef = math.gamma(2 - a) / (a - 1)
    return np.exp(au**a * coef * (math.cos(HALF_PI * a) - 1j * math.sin(HALF_PI * a) * np.sign(u)))


def positive_stable_kanter(alpha: float, rng, size: int):
    """Kanter's representation of the positive stable law with LT exp(-u^alpha)."""
    rng = generator(rng)
    u = rng.uniform(0, math.pi, size)
    e = rng.standard_exponential(size)
    return (np.sin(alpha * u) / np.sin(u) ** (1 / alpha)) * (np.sin((1 - alpha) * u) / e) ** ((1 - alpha) / alpha)


def mittag_leffler_sample(alpha: float, rng, size: int | None = None):
    """Draws of S_alpha^(-alpha), computed through Kanter's representation."""
    if not 0 < alpha < 1:
        raise InvalidParam(f"alpha must lie in (0, 1), got {alpha!r}")
    rng = generator(rng)
    n = 1 if size is None else size
    u = rng.uniform(0, math.pi, n)
    e = rng.standard_exponential(n)
    # S0^-alpha with S0 from Kanter, then S_alpha = Gamma(1-alpha)^(1/alpha) S0
    s0_pow = np.sin(u) * e ** (1 - alpha) / (np.sin(alpha * u) ** alpha * np.sin((1 - alpha) * u) ** (1 - alpha))
    out = s0_pow / math.gamma(1 - alpha)
    return float(out[0]) if size is None else out


def mittag_leffler_function(alpha: float, z: float, tol: float = 1e-16) -> float:
    """E_alpha(z) = sum z^n / Gamma(1 + n alpha) (power series, moderate |z|)."""
    total, n = 0.0, 0
    while True:
        term = math.exp(n * math.log(abs(z)) - special.gammaln(1 + n * alpha)) if z != 0 else (1.0 if n == 0 else 0.0)
        if z < 0 and n % 2:
            term = -term
        total += term
        if n > 5 and abs(term) < tol * max(1.0, abs(total)):
            return total
        n += 1
        if n > 10_000:
            raise InvalidParam("Mittag-Leffler series did not converge; |z| is too large")


# ---------------------------------------------------------------- norming


class EmpiricalTail:
    """Empirical tail of a nonnegative sample: P{W > x}, m(t), c_alpha(t), r_2(t)."""

    def __init__(self, samples, alpha: float, min_exceed: int = 10):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        if x.size < 1000:
            raise MissingEstimate(f"tail table needs at least 1000 samples, got {x.size}")
        self.x = x
        self.n = x.size
        self.alpha = alpha
        self._cum = np.concatenate([[0.0], np.cumsum(x)])
        self._cum2 = np.concatenate([[0.0], np.cumsum(x * x)])
        self.t_max = self.n / min_exceed
        self.grid_t = np.geomspace(2.0, self.t_max, 200)
        self.grid_c = np.maximum.accumulate(np.array([self._quantile_c(t) for t in self.grid_t]))

    def survival(self, v):
        v = np.asarray(v, dtype=float)
        return 1.0 - np.searchsorted(self.x, v, side="right") / self.n

    def m(self, t):
        """Integral of P{W > x} over [0, t] = E min(W, t)."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.x, t, side="right")
        return (self._cum[k] + t * (self.n - k)) / self.n

    def _quantile_c(self, t):
        # sample value with round(n / t) points strictly above it
        k = self.n - 1 - int(round(self.n / t))
        return self.x[min(max(k, 0), self.n - 1)]

    def c(self, t):
        """c_alpha(t): t P{W > c} = 1, interpolated on a log grid, power-law beyond it."""
        t = np.asarray(t, dtype=float)
        lt = np.log(np.clip(t, self.grid_t[0], self.grid_t[-1]))
        base = np.exp(np.interp(lt, np.log(self.grid_t), np.log(self.grid_c)))
        over = np.maximum(t / self.grid_t[-1], 1.0)
        return base * over ** (1.0 / self.alpha)

    def c_inverse(self, y):
        """Inverse of c_alpha by monotone interpolation."""
        y = np.asarray(y, dtype=float)
        return np.exp(np.interp(np.log(y), np.log(self.grid_c), np.log(self.grid_t)))

    def r2(self, t):
        """r_2(t): the largest r with t E[W^2; W <= r] = r^2.

        r -> sqrt(t E[W^2; W <= r]) is nondecreasing, so iterating it from
        sqrt(t E W^2) decreases monotonically to the largest fixed point.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        second = self._cum2 / self.n
        for i, ti in enumerate(t):
            r = math.sqrt(ti * second[-1])
            for _ in range(100_000):
                nxt = math.sqrt(ti * second[np.searchsorted(self.x, r, side="right")])
                if nxt >= r * (1 - 1e-12):
                    break
                r = nxt
            out[i] = r
        return out


@dataclass
class NormingPlan:
    family: str  # "A" or "B"
    case_label: str
    alpha: float
    mu: float
    e_xi: float
    e_barw: float | None
    C_hat: float | None
    tail: EmpiricalTail | None = field(default=None, repr=False)

    @property
    def r(self):
        return 1.0 / (self.mu * self.e_xi)

    @property
    def A_alpha(self):
        """Centering rate of T_n for alpha > 1 (equals the inverse speed)."""
        if self.alpha <= 1:
            return None
        return 1.0 + 2.0 * self.r * self.e_barw

    @property
    def B_alpha(self):
        if self.family != "A" or self.alpha == 1:
            return None
        return 2.0 * (self.C_hat * self.r) ** (1.0 / self.alpha)

    @property
    def C1(self):
        if self.family == "A" and self.alpha == 1:
            return self.mu * self.e_xi / self.C_hat
        return None

    # functions of the regeneration tail
    def _c(self, t):
        if self.family == "A":
            return (self.C_hat * np.asarray(t, dtype=float)) ** (1.0 / self.alpha)
        return self.tail.c(t)

    def _m(self, t):
        if self.tail is None:
            raise MissingEstimate("alpha = 1 centering needs an empirical tail table")
        return self.tail.m(t)

    def b_fn(self, t):
        """Norming of the cycle sums (before the 1 / (mu E xi) time change)."""
        t = np.asarray(t, dtype=float)
        if self.alpha == 2:
            if self.family == "A":
                return np.sqrt(self.C_hat * t * np.log(t))
            return self.tail.r2(t)
        return self._c(t)

    def a_fn(self, t):
        t = np.asarray(t, dtype=float)
        if self.alpha < 1:
            return np.zeros_like(t)
        if self.alpha == 1:
            return t * self._m(self._c(t))
        return self.e_barw * t

    # T_n
    def t_center(self, n):
        n = np.asarray(n, dtype=float)
        if self.alpha < 1:
            return np.zeros_like(n)
        if self.alpha == 1:
            return n + 2.0 * self.a_fn(self.r * n)
        return self.A_alpha * n

    def t_scale(self, n):
        n = np.asarray(n, dtype=float)
        if self.alpha == 2 and self.family == "A":
            return self.b_fn(self.r * n)
        if self.alpha == 2:
            return math.sqrt(self.r) * self.tail.r2(n)
        if self.alpha == 1:
            return self.r * self._c(n)
        if self.family == "A":
            return self.b_fn(self.r * n)
        return self.r ** (1.0 / self.alpha) * self._c(n)

    def t_reference(self, rng, size):
        if self.alpha == 2:
            return 2.0 * generator(rng).standard_normal(size)
        return 2.0 * stable_sample(StableSpec(self.alpha), rng, size)

    # X_k
    def x_center(self, k):
        k = np.asarray(k, dtype=float)
        if self.alpha < 1:
            return np.zeros_like(k)
        if self.alpha == 1:
            b = self.r
            inner = self._c(b * k / (1.0 + 2.0 * b * self._m(b * k)))
            return k / (1.0 + 2.0 * b * self._m(inner))
        return k / self.A_alpha

    def x_scale(self, k):
        k = np.asarray(k, dtype=float)
        a = self.alpha
        if a < 1:
            if self.family == "A":
                return (2.0 ** -a) * self.mu * self.e_xi * k**a / self.C_hat
            return (2.0 ** -a) * self.mu * self.e_xi / self.tail.survival(k)
        if a == 1:
            mk = self._m(k)
            return self._c(k / mk) / (1.0 + 2.0 * self.r * mk)
        A = self.A_alpha
        if a == 2:
            if self.family == "A":
                return A**-1.5 * 2.0 * math.sqrt(self.C_hat * self.r) * np.sqrt(k * np.log(k))
            return 2.0 * math.sqrt(self.r) * A**-1.5 * self.tail.r2(k)
        return 2.0 * self.r ** (1.0 / a) * A ** -(1.0 + 1.0 / a) * self._c(k)

    def x_reference(self, rng, size):
        if self.alpha < 1:
            return mittag_leffler_sample(self.alpha, rng, size)
        if self.alpha == 2:
            return generator(rng).standard_normal(size)
        return -stable_sample(StableSpec(self.alpha), rng, size)

    def describe(self):
        """JSON-friendly summary of the constants and function shapes."""
        if self.family == "A":
            if self.alpha == 2:
                b = {"kind": "sqrt_t_log_t", "coef": self.C_hat}
            else:
                b = {"kind": "power", "coef": self.C_hat ** (1.0 / self.alpha), "exponent": 1.0 / self.alpha}
        else:
            ts = self.tail.grid_t
            b = {"kind": "table", "t": ts.tolist(), "value": np.asarray(self.b_fn(ts)).tolist()}
        if self.alpha < 1:
            a = {"kind": "zero"}
        elif self.alpha == 1:
            a = {"kind": "t_times_truncated_mean"}
        else:
            a = {"kind": "linear", "coef": self.e_barw}
        return {
            "family": self.family,
            "case_label": self.case_label,
            "alpha": self.alpha,
            "mu": self.mu,
            "e_xi": self.e_xi,
            "e_barw": self.e_barw,
            "C_hat": self.C_hat,
            "A_alpha": self.A_alpha,
            "B_alpha": self.B_alpha,
            "C1": self.C1,
            "a_fn": a,
            "b_fn": b,
        }


ALPHA_SNAP = 1e-6
A_CASES = ("A1", "A2", "A3")
B_CASES = ("B1", "B2")


def build_norming_plan(report, estimates: dict) -> NormingPlan:
    """Norming and centering for T_n and X_k from a regime report and estimates.

    ``estimates`` holds ``mu`` (E tau_1), ``e_xi``, ``e_barw`` (needed when
    alpha > 1), ``C_hat`` (A-family) and/or ``tail_samples`` (B-family, and the
    alpha = 1 centering).  ``alpha`` may be given to override the report.
    """
    label = report.case_label
    if label in A_CASES:
        family = "A"
    elif label in B_CASES:
        family = "B"
    else:
        raise UnsupportedCase(f"no norming plan for regime {label}")
    alpha = estimates.get("alpha", report.limit_alpha)
    if alpha is not None:
        # numerically found roots land a few ulps off the boundary cases
        for edge in (1.0, 2.0):
            if abs(alpha - edge) < ALPHA_SNAP:
                alpha = edge
    if alpha is None or not 0 < alpha <= 2:
        raise MissingEstimate(f"limit index unavailable (alpha = {alpha!r})")
    for key in ("mu", "e_xi"):
        if estimates.get(key) is None:
            raise MissingEstimate(f"estimate {key!r} is required")
    if alpha > 1 and estimates.get("e_barw") is None:
        raise MissingEstimate("estimate 'e_barw' is required when alpha > 1")
    C_hat = estimates.get("C_hat")
    samples = estimates.get("tail_samples")
    if family == "A" and C_hat is None:
        raise MissingEstimate("A-family plans need C_hat")
    if (family == "B" or alpha == 1) and samples is None:
        raise MissingEstimate("an empirical tail table (tail_samples) is required")
    tail = EmpiricalTail(samples, alpha) if samples is not None else None
    return NormingPlan(family, label, float(alpha), float(estimates["mu"]), float(estimates["e_xi"]),
                       None if estimates.get("e_barw") is None else float(estimates["e_barw"]),
                       None if C_hat is None else float(C_hat), tail)
