"""Statistical helpers: KS, QQ, empirical transforms, trend and independence tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from ..errors import InvalidParam, TooFewSamples
from ..rng import generator

MIN_KS_SAMPLES = 25


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float

    def to_dict(self):
        return {"statistic": self.statistic, "pvalue": self.pvalue}


def two_sample_ks(a, b) -> KSResult:
    """Two-sample Kolmogorov-Smirnov distance with the asymptotic p-value.

    The p-value is the Kolmogorov survival function at sqrt(n_eff) * D,
    n_eff = |a| |b| / (|a| + |b|).
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size < MIN_KS_SAMPLES or b.size < MIN_KS_SAMPLES:
        raise TooFewSamples(f"KS needs at least {MIN_KS_SAMPLES} samples per side, got {a.size} and {b.size}")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    n_eff = a.size * b.size / (a.size + b.size)
    p = float(special.kolmogorov(math.sqrt(n_eff) * d)) if d > 0 else 1.0
    return KSResult(d, min(max(p, 0.0), 1.0))


def qq_table(sample, reference, probs=None):
    """Rows (p, sample quantile, reference quantile)."""
    if probs is None:
        probs = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99]
    qs = np.quantile(np.asarray(sample, dtype=float), probs)
    qr = np.quantile(np.asarray(reference, dtype=float), probs)
    return [{"p": float(p), "sample": float(x), "reference": float(y)} for p, x, y in zip(probs, qs, qr)]


def empirical_transform(samples, grid, kind: str = "LT"):
    """Sample means of exp(-s X) (LT) or exp(i u X) (CF), with standard errors."""
    x = np.asarray(samples, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise InvalidParam("transform grid is empty")
    if kind not in ("LT", "CF"):
        raise InvalidParam(f"kind must be LT or CF, got {kind!r}")
    rows = []
    n = x.size
    for s in grid:
        if kind == "LT":
            vals = np.exp(-s * x)
            mean = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            rows.append({"point": float(s), "value": mean, "se": se})
        else:
            c, si = np.cos(s * x), np.sin(s * x)
            se = math.sqrt((c.var(ddof=1) + si.var(ddof=1)) / n) if n > 1 else 0.0
            rows.append({"point": float(s), "value": complex(c.mean(), si.mean()), "se": se})
    return rows


def bootstrap_se(x, rng, n_boot: int = 200, stat=np.mean) -> float:
    x = np.asarray(x, dtype=float)
    rng = generator(rng)
    reps = np.array([stat(x[rng.integers(0, x.size, x.size)]) for _ in range(n_boot)])
    return float(reps.std(ddof=1))


def mann_kendall(x):
    """Mann-Kendall trend test: (S, z, two-sided p)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    s = 0.0
    for i in range(n - 1):
        s += np.sign(x[i + 1 :] - x[i]).sum()
    var = n * (n - 1) * (2 * n + 5) / 18.0
    if s > 0:
        z = (s - 1) / math.sqrt(var)
    elif s < 0:
        z = (s + 1) / math.sqrt(var)
    else:
        z = 0.0
    return float(s), float(z), float(2 * stats.norm.sf(abs(z)))


def permutation_independence(x, y, rng, n_perm: int = 999) -> float:
    """Permutation p-value for |Spearman correlation| between paired samples."""
    rx = stats.rankdata(x)
    ry = stats.rankdata(y)
    rx = (rx - rx.mean()) / rx.std()
    ry = (ry - ry.mean()) / ry.std()
    obs = abs(float(np.mean(rx * ry)))
    rng = generator(rng)
    hits = sum(abs(float(np.mean(rx * rng.permutation(ry)))) >= obs for _ in range(n_perm))
    return (hits + 1) / (n_perm + 1)


def geometric_tail_fit(values):
    """Least-squares fit of log P{V > n} against n over the observed range: (slope, R^2)."""
    v = np.asarray(values)
    ns = np.arange(1, int(v.max()))
    surv = np.array([np.mean(v > n) for n in ns])
    keep = surv > 0
    ns, surv = ns[keep], surv[keep]
    if ns.size < 3:
        raise TooFewSamples("too few distinct values to fit a tail slope")
    res = stats.linregress(ns, np.log(surv))
    return float(res.slope), float(res.rvalue**2)
