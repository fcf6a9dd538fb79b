"""Sparse random environments.

An environment is driven by iid blocks ``(xi_k, lambda_k)``: ``xi_k >= 1`` is
the gap between consecutive marked sites and ``lambda_k`` is the probability
of a right step from the marked site ``S_{k-1}``.  Every other site is fair.
``rho = (1 - lambda) / lambda`` is the local drift parameter.

Distributions come from a fixed menu so that the moments entering the
speed formula and the regime classification are available analytically.
All block sampling goes through inverse-CDF maps applied to uniforms, two per
block, which makes realizations independent of how they are chunked.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy import integrate, special

from .errors import (
    InfiniteMeanXi,
    InvalidParam,
    NoRootRegion,
    NotTransient,
    NumericFailure,
)
from .rng import as_seed_sequence, generator

PROB_TOL = 1e-12
ALPHA_WINDOW = (1e-4, 64.0)
ALPHA_BISECT_ITERS = 200

_TWO53 = float(2**53)
_INT_CAP = 2**62


def _open_unit(u):
    """Map uniforms on [0, 1) into the open interval (0, 1) without ties."""
    u = np.asarray(u, dtype=float)
    return (np.floor(u * _TWO53) + 0.5) / _TWO53


def _check_table(values, probs, what):
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
        raise InvalidParam(f"{what}: values and probs must be equal-length nonempty lists")
    if np.any(probs < 0):
        raise InvalidParam(f"{what}: negative probability")
    if abs(probs.sum() - 1.0) > PROB_TOL:
        raise InvalidParam(f"{what}: probabilities sum to {probs.sum()!r}, not 1")
    return values, probs


def _power_law_series(log_term, t0=1, direct=200_000):
    """Sum exp(log_term(t)) over integers t >= t0 for a power-law decaying term.

    The first ``direct`` terms are summed exactly; the remainder is replaced by
    a midpoint integral computed after the substitution t = x0 e^y, which turns
    the power-law tail into an exponentially decaying integrand.
    """
    t = np.arange(t0, t0 + direct, dtype=float)
    head = float(np.sum(np.exp(log_term(t))))
    x0 = t0 + direct - 0.5
    y_max = 700.0 - math.log(x0)  # keeps t finite in double precision
    g = lambda y: math.exp(float(log_term(np.array([x0 * math.exp(y)]))[0]) + math.log(x0) + y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        tail, _ = integrate.quad(g, 0.0, y_max, limit=500, epsabs=0.0, epsrel=1e-12)
    if not np.isfinite(tail):
        raise NumericFailure("series remainder did not converge")
    return head + tail


# --------------------------------------------------------------------------
# xi families


@dataclass(frozen=True)
class Deterministic:
    m: int
    family: ClassVar[str] = "Deterministic"

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise InvalidParam(f"Deterministic xi needs an integer m >= 1, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))

    def quantile(self, u):
        return np.full(np.shape(u), self.m, dtype=np.int64)

    def moment(self, s):
        return float(self.m) ** s

    def log_moment(self):
        return math.log(self.m)

    def survival(self, t):
        return np.where(np.asarray(t) < self.m, 1.0, 0.0)

    @property
    def tail_index(self):
        return None

    @property
    def upper(self):
        return float(self.m)

    @property
    def support(self):
        return np.array([self.m]), np.array([1.0])

    def to_dict(self):
        return {"family": self.family, "m": self.m}


@dataclass(frozen=True)
class UniformInt:
    """Uniform law on {1, ..., K}."""

    K: int
    family: ClassVar[str] = "UniformInt"

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise InvalidParam(f"UniformInt needs an integer K >= 1, got {self.K!r}")
        object.__setattr__(self, "K", int(self.K))

    def quantile(self, u):
        return np.minimum(np.floor(np.asarray(u) * self.K).astype(np.int64) + 1, self.K)

    def moment(self, s):
        k = np.arange(1, self.K + 1, dtype=float)
        return float(np.mean(k**s))

    def log_moment(self):
        return float(np.mean(np.log(np.arange(1, self.K + 1))))

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip((self.K - np.floor(t)) / self.K, 0.0, 1.0)

    @property
    def tail_index(self):
        return None

    @property
    def upper(self):
        return float(self.K)

    @property
    def support(self):
        return np.arange(1, self.K + 1), np.full(self.K, 1.0 / self.K)

    def to_dict(self):
        return {"family": self.family, "K": self.K}


@dataclass(frozen=True)
class Geometric1:
    """Geometric law on {1, 2, ...}: P{xi = k} = p (1 - p)^(k - 1)."""

    p: float
    family: ClassVar[str] = "Geometric1"

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise InvalidParam(f"Geometric1 needs p in (0, 1], got {self.p!r}")

    def quantile(self, u):
        if self.p == 1:
            return np.ones(np.shape(u), dtype=np.int64)
        v = 1.0 - _open_unit(u)
        k = 1 + np.floor(np.log(v) / math.log1p(-self.p))
        return np.minimum(k, _INT_CAP).astype(np.int64)

    def _sum(self, g):
        if self.p == 1:
            return float(g(np.array([1.0]))[0])
        q = 1.0 - self.p
        total, start, chunk = 0.0, 1, 4096
        while True:
            k = np.arange(start, start + chunk, dtype=float)
            terms = self.p * q ** (k - 1) * g(k)
            total += float(terms.sum())
            if terms[-1] <= 1e-18 * max(total, 1e-300) and terms[-1] <= terms[-2]:
                return total
            start += chunk
            if start > 10**8:
                raise NumericFailure("geometric moment series did not converge")

    def moment(self, s):
        return self._sum(lambda k: k**s)

    def log_moment(self):
        return self._sum(np.log)

    def survival(self, t):
        t = np.maximum(np.floor(np.asarray(t, dtype=float)), 0.0)
        return (1.0 - self.p) ** t

    @property
    def tail_index(self):
        return None

    @property
    def upper(self):
        return math.inf if self.p < 1 else 1.0

    support = None

    def to_dict(self):
        return {"family": self.family, "p": self.p}


ELL_KINDS = ("const", "log_down", "log_up")


@dataclass(frozen=True)
class DiscretePareto:
    """Integer law on {1, 2, ...} with a regularly varying tail.

    ``P{xi > t} = min(1, c * t**(-beta) * L(t))`` for integers ``t >= 1``, with
    ``L = 1`` (``ell="const"``), ``L(t) = 1/(1 + log t)`` (``"log_down"``,
    slowly varying factor tending to zero) or ``L(t) = 1 + log t``
    (``"log_up"``, tending to infinity).  For ``log_up`` the survival function
    is taken as the nonincreasing envelope of that expression.
    """

    beta: float
    c: float = 0.5
    ell: str = "const"
    family: ClassVar[str] = "DiscretePareto"

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidParam(f"DiscretePareto needs beta > 0, got {self.beta!r}")
        if not 0 < self.c <= 1:
            raise InvalidParam(f"DiscretePareto needs c in (0, 1], got {self.c!r}")
        if self.ell not in ELL_KINDS:
            raise InvalidParam(f"DiscretePareto ell must be one of {ELL_KINDS}, got {self.ell!r}")

    def _ell(self, t):
        if self.ell == "const":
            return np.ones_like(t)
        if self.ell == "log_down":
            return 1.0 / (1.0 + np.log(t))
        # nonincreasing envelope of t^-beta (1 + log t): flat below its maximizer
        t_star = math.exp(max(1.0 / self.beta - 1.0, 0.0))
        tt = np.maximum(t, t_star)
        return (1.0 + np.log(tt)) * (tt / t) ** (-self.beta)

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        tt = np.maximum(np.floor(t), 1.0)
        s = np.minimum(1.0, self.c * tt ** (-self.beta) * self._ell(tt))
        return np.where(t < 1, 1.0, s)

    def quantile(self, u):
        """Smallest integer t >= 1 with survival(t) < U, U uniform on (0, 1]."""
        v = 1.0 - _open_unit(u)
        if self.ell == "const":
            t = np.floor(np.minimum((self.c / v) ** (1.0 / self.beta), float(_INT_CAP))) + 1.0
            return np.maximum(t, 1.0).astype(np.int64)
        lo = np.zeros(v.shape)  # survival(lo) >= v
        hi = np.full(v.shape, float(_INT_CAP))
        for _ in range(64):
            mid = np.floor((lo + hi) / 2.0)
            below = self.survival(mid) < v
            hi = np.where(below, mid, hi)
            lo = np.where(below, lo, mid)
            if np.all(hi - lo <= 1):
                break
        return hi.astype(np.int64)

    def moment(self, s):
        if s == 0:
            return 1.0
        if s >= self.beta:
            return math.inf
        # xi^s = 1 + sum_{t < xi} ((t+1)^s - t^s)
        term = lambda t: s * np.log(t) + np.log(np.expm1(s * np.log1p(1.0 / t))) + self.log_survival(t)
        return 1.0 + _power_law_series(term)

    def log_moment(self):
        return _power_law_series(lambda t: np.log(np.log1p(1.0 / t)) + self.log_survival(t))

    def log_survival(self, t):
        """log of the survival formula, evaluated without rounding t down.

        Agrees with log P{xi > t} at integers; the smooth interpolation is what
        the series remainder integral needs.
        """
        tt = np.maximum(np.asarray(t, dtype=float), 1.0)
        return np.minimum(0.0, math.log(self.c) - self.beta * np.log(tt) + np.log(self._ell(tt)))

    @property
    def tail_index(self):
        return self.beta

    @property
    def tail_constant(self):
        """c with P{xi > t} ~ c t^-beta L(t)."""
        return self.c

    @property
    def ell_limit(self):
        return {"const": "POSITIVE", "log_down": "ZERO", "log_up": "INFINITE"}[self.ell]

    @property
    def upper(self):
        return math.inf

    support = None

    def to_dict(self):
        return {"family": self.family, "beta": self.beta, "c": self.c, "ell": self.ell}


@dataclass(frozen=True)
class XiTable:
    values: tuple
    probs: tuple
    family: ClassVar[str] = "FiniteTable"

    def __post_init__(self):
        values, probs = _check_table(self.values, self.probs, "xi FiniteTable")
        if np.any(values < 1) or np.any(values != np.round(values)):
            raise InvalidParam("xi FiniteTable values must be integers >= 1")
        object.__setattr__(self, "values", tuple(int(v) for v in values))
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))
        order = np.argsort(values, kind="stable")
        object.__setattr__(self, "_sorted", (values[order].astype(np.int64), np.cumsum(probs[order])))

    def quantile(self, u):
        vals, cum = self._sorted
        idx = np.searchsorted(cum, np.asarray(u), side="right")
        return vals[np.minimum(idx, len(vals) - 1)]

    def moment(self, s):
        return float(np.dot(self.probs, np.asarray(self.values, dtype=float) ** s))

    def log_moment(self):
        return float(np.dot(self.probs, np.log(self.values)))

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs)
        return np.sum(np.where(v[None, :] > t.reshape(-1, 1), p[None, :], 0.0), axis=1).reshape(t.shape)

    @property
    def tail_index(self):
        return None

    @property
    def upper(self):
        return float(max(self.values))

    @property
    def support(self):
        return np.asarray(self.values), np.asarray(self.probs)

    def to_dict(self):
        return {"family": self.family, "values": list(self.values), "probs": list(self.probs)}


# --------------------------------------------------------------------------
# lambda families


@dataclass(frozen=True)
class Constant:
    lam: float
    family: ClassVar[str] = "Constant"

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise InvalidParam(f"lambda must lie in (0, 1), got {self.lam!r}")

    @property
    def rho(self):
        return (1.0 - self.lam) / self.lam

    def quantile(self, u):
        return np.full(np.shape(u), float(self.lam))

    def rho_moment(self, s):
        return self.rho**s

    def e_log_rho(self):
        return math.log(self.rho)

    @property
    def rho_sup(self):
        return self.rho

    @property
    def support(self):
        return np.array([self.lam]), np.array([1.0])

    def to_dict(self):
        return {"family": self.family, "lam": self.lam}


@dataclass(frozen=True)
class Beta:
    a: float
    b: float
    family: ClassVar[str] = "Beta"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise InvalidParam(f"Beta needs a, b > 0, got ({self.a!r}, {self.b!r})")

    def quantile(self, u):
        lam = special.betaincinv(self.a, self.b, _open_unit(u))
        return np.clip(lam, np.finfo(float).tiny, 1.0 - 2.0**-53)

    def rho_moment(self, s):
        # E[(1-lam)^s lam^-s] = B(a - s, b + s) / B(a, b), finite iff s < a
        if s >= self.a:
            return math.inf
        return math.exp(special.betaln(self.a - s, self.b + s) - special.betaln(self.a, self.b))

    def e_log_rho(self):
        return float(special.digamma(self.b) - special.digamma(self.a))

    @property
    def rho_sup(self):
        return math.inf

    support = None

    def to_dict(self):
        return {"family": self.family, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class LogitOfLogNormalRho:
    """log rho ~ Normal(m, s2); lambda = 1 / (1 + rho)."""

    m: float
    s2: float
    family: ClassVar[str] = "LogitOfLogNormalRho"

    def __post_init__(self):
        if not self.s2 >= 0:
            raise InvalidParam(f"LogitOfLogNormalRho needs s2 >= 0, got {self.s2!r}")

    def quantile(self, u):
        log_rho = self.m - math.sqrt(self.s2) * special.ndtri(_open_unit(u))
        lam = special.expit(-log_rho)
        return np.clip(lam, np.finfo(float).tiny, 1.0 - 2.0**-53)

    def rho_moment(self, s):
        return math.exp(s * self.m + 0.5 * s * s * self.s2)

    def e_log_rho(self):
        return float(self.m)

    @property
    def rho_sup(self):
        return math.exp(self.m) if self.s2 == 0 else math.inf

    support = None

    def to_dict(self):
        return {"family": self.family, "m": self.m, "s2": self.s2}


@dataclass(frozen=True)
class LambdaTable:
    values: tuple
    probs: tuple
    family: ClassVar[str] = "FiniteTable"

    def __post_init__(self):
        values, probs = _check_table(self.values, self.probs, "lambda FiniteTable")
        if np.any(values <= 0) or np.any(values >= 1):
            raise InvalidParam("lambda FiniteTable values must lie in (0, 1)")
        object.__setattr__(self, "values", tuple(float(v) for v in values))
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))
        order = np.argsort(values, kind="stable")
        object.__setattr__(self, "_sorted", (values[order], np.cumsum(probs[order])))

    @property
    def rhos(self):
        v = np.asarray(self.values)
        return (1.0 - v) / v

    def quantile(self, u):
        vals, cum = self._sorted
        idx = np.searchsorted(cum, np.asarray(u), side="right")
        return vals[np.minimum(idx, len(vals) - 1)]

    def rho_moment(self, s):
        return float(np.dot(self.probs, self.rhos**s))

    def e_log_rho(self):
        return float(np.dot(self.probs, np.log(self.rhos)))

    @property
    def rho_sup(self):
        return float(self.rhos.max())

    @property
    def support(self):
        return np.asarray(self.values), np.asarray(self.probs)

    def to_dict(self):
        return {"family": self.family, "values": list(self.values), "probs": list(self.probs)}


# --------------------------------------------------------------------------
# couplings


@dataclass(frozen=True)
class Independent:
    kind: ClassVar[str] = "Independent"

    def to_dict(self):
        return {"type": self.kind}


@dataclass(frozen=True)
class Comonotone:
    """Both coordinates are driven by one common uniform (large xi with large lambda)."""

    kind: ClassVar[str] = "Comonotone"

    def to_dict(self):
        return {"type": self.kind}


@dataclass(frozen=True)
class JointFiniteTable:
    """Joint pmf; rows follow the xi table's values, columns the lambda table's."""

    matrix: tuple
    kind: ClassVar[str] = "JointFiniteTable"

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2 or np.any(mat < 0):
            raise InvalidParam("JointFiniteTable matrix must be a nonnegative 2-d array")
        if abs(mat.sum() - 1.0) > PROB_TOL:
            raise InvalidParam(f"JointFiniteTable matrix sums to {mat.sum()!r}, not 1")
        object.__setattr__(self, "matrix", tuple(tuple(float(x) for x in row) for row in mat))

    def to_dict(self):
        return {"type": self.kind, "matrix": [list(r) for r in self.matrix]}


XI_FAMILIES = {
    "Deterministic": lambda d: Deterministic(d["m"]),
    "UniformInt": lambda d: UniformInt(d["K"]),
    "Geometric1": lambda d: Geometric1(d["p"]),
    "DiscretePareto": lambda d: DiscretePareto(d["beta"], d.get("c", 0.5), d.get("ell", "const")),
    "FiniteTable": lambda d: XiTable(tuple(d["values"]), tuple(d["probs"])),
}
LAMBDA_FAMILIES = {
    "Constant": lambda d: Constant(d["lam"]),
    "Beta": lambda d: Beta(d["a"], d["b"]),
    "LogitOfLogNormalRho": lambda d: LogitOfLogNormalRho(d["m"], d["s2"]),
    "FiniteTable": lambda d: LambdaTable(tuple(d["values"]), tuple(d["probs"])),
}
COUPLINGS = {
    "Independent": lambda d: Independent(),
    "Comonotone": lambda d: Comonotone(),
    "JointFiniteTable": lambda d: JointFiniteTable(tuple(map(tuple, d["matrix"]))),
}


# --------------------------------------------------------------------------
# EnvSpec


@dataclass(frozen=True)
class EnvSpec:
    """Joint law of one block ``(xi, lambda)``. Immutable and thread-safe."""

    xi: object
    lam: object
    coupling: object = field(default_factory=Independent)

    def __post_init__(self):
        if isinstance(self.coupling, JointFiniteTable):
            if not (isinstance(self.xi, XiTable) and isinstance(self.lam, LambdaTable)):
                raise InvalidParam("JointFiniteTable coupling needs FiniteTable marginals")
            mat = np.asarray(self.coupling.matrix)
            if mat.shape != (len(self.xi.values), len(self.lam.values)):
                raise InvalidParam(f"joint matrix shape {mat.shape} does not match the marginal tables")
            if np.max(np.abs(mat.sum(axis=1) - self.xi.probs)) > PROB_TOL:
                raise InvalidParam("joint matrix row sums differ from the xi marginal")
            if np.max(np.abs(mat.sum(axis=0) - self.lam.probs)) > PROB_TOL:
                raise InvalidParam("joint matrix column sums differ from the lambda marginal")

    # -- sampling

    def blocks_from_uniforms(self, u):
        """Map an ``(n, 2)`` array of uniforms to block draws ``(xi, lam)``."""
        u = np.asarray(u, dtype=float).reshape(-1, 2)
        if isinstance(self.coupling, JointFiniteTable):
            mat = np.asarray(self.coupling.matrix)
            cum = np.cumsum(mat.ravel())
            idx = np.minimum(np.searchsorted(cum, u[:, 0], side="right"), mat.size - 1)
            row, col = np.divmod(idx, mat.shape[1])
            return (np.asarray(self.xi.values, dtype=np.int64)[row], np.asarray(self.lam.values)[col])
        u_lam = u[:, 0] if isinstance(self.coupling, Comonotone) else u[:, 1]
        return self.xi.quantile(u[:, 0]), self.lam.quantile(u_lam)

    def sample_blocks(self, rng, size):
        return self.blocks_from_uniforms(rng.random((int(size), 2)))

    # -- moments

    def rho_moment(self, s):
        if s < 0:
            raise InvalidParam(f"rho moment order must be >= 0, got {s!r}")
        return self.lam.rho_moment(s)

    def xi_moment(self, s):
        return self.xi.moment(s)

    def e_log_rho(self):
        return self.lam.e_log_rho()

    def e_log_xi(self):
        return self.xi.log_moment()

    def cross_moment(self, a, b):
        """E[xi^a rho^b] under the declared coupling."""
        if isinstance(self.coupling, Independent):
            mx, mr = self.xi.moment(a), self.lam.rho_moment(b)
            return math.inf if math.isinf(mx) or math.isinf(mr) else mx * mr
        if isinstance(self.coupling, JointFiniteTable):
            mat = np.asarray(self.coupling.matrix)
            xv = np.asarray(self.xi.values, dtype=float) ** a
            rv = np.asarray(self.lam.rhos) ** b
            return float(xv @ mat @ rv)
        return self._comonotone_cross_moment(a, b)

    def _comonotone_cross_moment(self, a, b):
        if isinstance(self.xi, Deterministic) or isinstance(self.lam, Constant):
            mx, mr = self.xi.moment(a), self.lam.rho_moment(b)
            return math.inf if math.isinf(mx) or math.isinf(mr) else mx * mr
        if math.isinf(self.lam.rho_moment(b)):
            return math.inf  # xi >= 1 so the product dominates rho^b
        xs, lams = self.xi.support, self.lam.support
        if xs is not None and lams is not None:
            # exact: merge the two CDF breakpoint sets
            xv, xp = xs
            lv, lp = lams
            ox, ol = np.argsort(xv, kind="stable"), np.argsort(lv, kind="stable")
            cx, cl = np.cumsum(np.asarray(xp)[ox]), np.cumsum(np.asarray(lp)[ol])
            edges = np.unique(np.concatenate([[0.0], cx, cl, [1.0]]))
            edges = edges[(edges >= 0) & (edges <= 1)]
            mids = 0.5 * (edges[1:] + edges[:-1])
            w = np.diff(edges)
            xq = self.xi.quantile(mids).astype(float)
            rq = (1.0 - self.lam.quantile(mids)) / self.lam.quantile(mids)
            return float(np.sum(w * xq**a * rq**b))
        if math.isinf(self.xi.moment(a)):
            # conservative: a divergent xi moment is reported as divergent
            return math.inf
        def integrand(u):
            lam = float(self.lam.quantile(np.array([u]))[0])
            return float(self.xi.quantile(np.array([u]))[0]) ** a * ((1.0 - lam) / lam) ** b
        pieces = [(0.0, 2.0**-40)] + [(2.0 ** -(k + 1), 2.0**-k) for k in range(39, 0, -1)]
        pieces += [(1 - 2.0**-k, 1 - 2.0 ** -(k + 1)) for k in range(1, 40)] + [(1 - 2.0**-40, 1.0)]
        total = 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            for lo, hi in pieces:
                val, _ = integrate.quad(integrand, lo, hi, limit=200)
                total += val
        if not np.isfinite(total):
            raise NumericFailure("comonotone cross moment integration failed")
        return total

    # -- serialization

    def to_dict(self):
        return {"xi": self.xi.to_dict(), "lambda": self.lam.to_dict(), "coupling": self.coupling.to_dict()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, config):
        return build_env_spec(config)

    @classmethod
    def from_json(cls, text):
        return build_env_spec(json.loads(text))


def build_env_spec(config) -> EnvSpec:
    """Validate a parsed config record ``{xi, lambda, coupling}`` into an EnvSpec."""
    if isinstance(config, EnvSpec):
        return config
    try:
        xi_cfg, lam_cfg = config["xi"], config["lambda"]
        coupling_cfg = config.get("coupling", {"type": "Independent"})
        xi_maker = XI_FAMILIES[xi_cfg["family"]]
        lam_maker = LAMBDA_FAMILIES[lam_cfg["family"]]
        coupling_maker = COUPLINGS[coupling_cfg["type"]]
    except (KeyError, TypeError) as exc:
        raise InvalidParam(f"malformed environment config: missing or unknown {exc}") from None
    try:
        return EnvSpec(xi_maker(xi_cfg), lam_maker(lam_cfg), coupling_maker(coupling_cfg))
    except KeyError as exc:
        raise InvalidParam(f"missing parameter {exc} in environment config") from None


# --------------------------------------------------------------------------
# realizations


class EnvRealization:
    """Lazily grown two-sided sample of the environment.

    Block ``k >= 1`` is drawn from a positive-side substream, blocks ``k <= 0``
    from a dedicated negative-side substream, both on first access.  Values are
    memoized, so repeated queries agree.  Not thread-safe; one simulation owns
    one realization.
    """

    def __init__(self, spec: EnvSpec, seed, chunk: int = 64):
        self.spec = spec
        ss = as_seed_sequence(seed)
        self._pos_rng = generator(np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, 0)))
        self._neg_rng = generator(np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, 1)))
        self._chunk = chunk
        # index j holds block k = j + 1 (positive side) or k = -j (negative side)
        self._pos_xi = np.empty(0, dtype=np.int64)
        self._pos_lam = np.empty(0)
        self._neg_xi = np.empty(0, dtype=np.int64)
        self._neg_lam = np.empty(0)
        self._pos_S = np.zeros(1, dtype=np.int64)  # S_0, S_1, ...
        self._neg_S = np.zeros(1, dtype=np.int64)  # S_0, S_-1, ...

    def _grow(self, side, count):
        rng = self._pos_rng if side > 0 else self._neg_rng
        have = len(self._pos_xi) if side > 0 else len(self._neg_xi)
        xi, lam = self.spec.sample_blocks(rng, max(count, self._chunk, have))
        if side > 0:
            self._pos_xi = np.concatenate([self._pos_xi, xi])
            self._pos_lam = np.concatenate([self._pos_lam, lam])
            self._pos_S = np.concatenate([self._pos_S, self._pos_S[-1] + np.cumsum(xi)])
        else:
            self._neg_xi = np.concatenate([self._neg_xi, xi])
            self._neg_lam = np.concatenate([self._neg_lam, lam])
            self._neg_S = np.concatenate([self._neg_S, self._neg_S[-1] - np.cumsum(xi)])

    def ensure_blocks(self, k):
        """Materialize block k (any sign)."""
        if k >= 1 and k > len(self._pos_xi):
            self._grow(+1, k - len(self._pos_xi))
        elif k <= 0 and -k + 1 > len(self._neg_xi):
            self._grow(-1, -k + 1 - len(self._neg_xi))

    def ensure_sites(self, lo, hi):
        """Materialize every block whose marked site lies in, or brackets, [lo, hi]."""
        while self._pos_S[-1] <= hi:
            self._grow(+1, self._chunk)
        while self._neg_S[-1] >= lo:
            self._grow(-1, self._chunk)

    def entry(self, k):
        """(xi_k, lambda_k, rho_k)."""
        self.ensure_blocks(k)
        if k >= 1:
            xi, lam = self._pos_xi[k - 1], self._pos_lam[k - 1]
        else:
            xi, lam = self._neg_xi[-k], self._neg_lam[-k]
        return int(xi), float(lam), (1.0 - float(lam)) / float(lam)

    def S(self, k):
        if k >= 0:
            self.ensure_blocks(k)
            return int(self._pos_S[k])
        self.ensure_blocks(k + 1)
        return int(self._neg_S[-k])

    def marked_index(self, n):
        """k with S_k = n, or None when n is not a marked site."""
        self.ensure_sites(n, n)
        if n >= 0:
            k = int(np.searchsorted(self._pos_S, n))
            return k if self._pos_S[k] == n else None
        j = int(np.searchsorted(-self._neg_S, -n))
        return -j if self._neg_S[j] == n else None

    def omega_at(self, n):
        k = self.marked_index(int(n))
        if k is None:
            return 0.5
        return self.entry(k + 1)[1]

    def omega_window(self, lo, hi):
        """Dense array of omega over sites lo..hi (inclusive)."""
        self.ensure_sites(lo, hi)
        omega = np.full(hi - lo + 1, 0.5)
        # marked site S_k carries lambda_{k+1}
        pos = self._pos_S[:-1]
        sel = (pos >= lo) & (pos <= hi)
        omega[pos[sel] - lo] = self._pos_lam[: len(pos)][sel]
        neg = self._neg_S[1:]
        sel = (neg >= lo) & (neg <= hi)
        omega[neg[sel] - lo] = self._neg_lam[: len(neg)][sel]
        return omega

    def blocks(self, k_from, k_to):
        """Arrays (xi, lam, rho) for blocks k_from..k_to, both >= 1."""
        self.ensure_blocks(k_to)
        xi = self._pos_xi[k_from - 1 : k_to]
        lam = self._pos_lam[k_from - 1 : k_to]
        return xi, lam, (1.0 - lam) / lam


def sample_env(spec: EnvSpec, seed, chunk: int = 64) -> EnvRealization:
    return EnvRealization(spec, seed, chunk)


def omega_at(env: EnvRealization, n: int) -> float:
    return env.omega_at(n)


# --------------------------------------------------------------------------
# analysis


def rho_moment(spec: EnvSpec, s: float) -> float:
    return spec.rho_moment(s)


def alpha_root(spec: EnvSpec):
    """Positive root of E rho^alpha = 1, or None when E rho^s < 1 on the whole window."""
    if not spec.e_log_rho() < 0:
        raise NoRootRegion(f"E log rho = {spec.e_log_rho()!r} is not negative")

    def f(s):
        m = spec.rho_moment(s)
        return math.inf if math.isinf(m) else math.log(m)

    lo_w, hi_w = ALPHA_WINDOW
    grid = np.geomspace(lo_w, hi_w, 400)
    prev = None
    for s in grid:
        if f(s) >= 0:
            break
        prev = s
    else:
        return None
    if prev is None:
        raise NumericFailure("E rho^s >= 1 already at the bottom of the search window")
    lo, hi = prev, float(s)
    for _ in range(ALPHA_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    # pick whichever endpoint lands closer to 1
    return min((lo, hi), key=lambda x: abs(spec.rho_moment(x) - 1.0))


def transience_check(spec: EnvSpec):
    """(transient, E log rho, E log xi) for the right-transience criterion."""
    e_log_rho = spec.e_log_rho()
    e_log_xi = spec.e_log_xi()
    return (e_log_rho < 0 and e_log_xi < math.inf), e_log_rho, e_log_xi


@dataclass
class RegimeReport:
    case_label: str
    alpha: float | None
    beta: float | None
    ell_limit: str
    transient: bool
    notes: list = field(default_factory=list)
    rho_interval: tuple | None = None  # an interval on which E rho^x < 1, when (rho2) is used

    def to_dict(self):
        return {
            "case_label": self.case_label,
            "alpha": self.alpha,
            "beta": self.beta,
            "ell_limit": self.ell_limit,
            "transient": self.transient,
            "notes": list(self.notes),
            "rho_interval": list(self.rho_interval) if self.rho_interval else None,
        }

    @property
    def limit_alpha(self):
        """Index of the stable limit for T_n in this regime."""
        if self.case_label == "B2":
            return self.beta / 2.0
        if self.case_label == "D":
            return 2.0
        return self.alpha


def classify_regime(spec: EnvSpec) -> RegimeReport:
    """Place a spec in the limit-theorem taxonomy (cases A1, A2, A3, B1, B2, D)."""
    transient, e_log_rho, _ = transience_check(spec)
    if not transient:
        raise NotTransient(f"E log rho = {e_log_rho!r}; the walk is not transient to the right")
    if math.isinf(spec.xi_moment(1)):
        raise InfiniteMeanXi("E xi is infinite (strong sparsity is not covered)")

    notes = []
    if isinstance(spec.lam, (Constant, LambdaTable)):
        notes.append("log rho is lattice-valued; nonarithmeticity is not verified")
    else:
        notes.append("nonarithmeticity of log rho holds for this continuous family (not checked numerically)")

    alpha = alpha_root(spec)
    beta = spec.xi.tail_index
    ell_limit = spec.xi.ell_limit if beta is not None else "NOT_APPLICABLE"
    if beta is not None:
        notes.append("slow variation is the built-in DiscretePareto shape; no other shapes are representable")

    def xi_moment_finite(s):
        return math.isfinite(spec.xi_moment(s))

    def rho_xi_finite(s):
        return math.isfinite(spec.cross_moment(s, s))

    def report(label, interval=None):
        return RegimeReport(label, alpha, beta, ell_limit, True, notes, interval)

    def rho2_branch(upper):
        # E rho^x < 1 on (0, upper)
        interval = (0.0, upper)
        if beta is not None and beta < 4 and beta / 2 < upper:
            if beta > 1 and rho_xi_finite(min(beta / 2 + 1e-3, (beta / 2 + upper) / 2)):
                return report("B2", interval)
            return report("UNSUPPORTED", interval)
        if upper > 2 and xi_moment_finite(4):
            return report("D", interval)
        return report("UNSUPPORTED", interval)

    if alpha is None:
        return rho2_branch(ALPHA_WINDOW[1])
    if alpha > 2:
        return rho2_branch(alpha)

    # (rho1) with alpha in (0, 2]
    if math.isinf(spec.rho_moment(alpha + 1e-6)):
        notes.append("E rho^alpha log+ rho may be infinite")
    if beta is None or beta > max(2 * alpha, 1.0):
        if xi_moment_finite(max(2 * alpha, 1.0)) and rho_xi_finite(alpha):
            return report("A1")
        return report("UNSUPPORTED")
    if beta < 2 * alpha:
        return rho2_branch(alpha)
    if beta == 2 * alpha:
        if ell_limit == "ZERO" and 0.5 < alpha <= 2 and rho_xi_finite(alpha):
            return report("A2")
        if ell_limit == "POSITIVE" and 0.5 < alpha < 2:
            return report("A3")
        if ell_limit == "INFINITE" and 0.5 < alpha <= 2 and rho_xi_finite(alpha):
            return report("B1")
    return report("UNSUPPORTED")
