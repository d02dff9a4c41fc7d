"""Two-sample statistics and trace analytics.

Sample-based laws come in two kinds: sorted scalar samples and finite label
counts.  The two-sample machinery on top of them is deliberately small:

* Kolmogorov-Smirnov with the exact sup-distance over pooled order
  statistics and the asymptotic Kolmogorov p-value under the standard
  effective-n scaling (small-sample exact tables are out of scope);
* squared maximum mean discrepancy with an RBF kernel, as the biased
  V-statistic (self-pairs included) so that identical multisets give exactly
  zero, with a permutation p-value (an unbiased U-statistic variant is
  available but not the default);
* exact tests for finite laws (Fisher for binary marginals, chi-square over
  label patterns).

Trace analytics (threshold-crossing rates, steady-state window means) live
here too since the experiment analyses share them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class TwoSampleResult:
    statistic: float
    p_value: float
    method: str

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise StatsError(f"p-value {self.p_value} outside [0,1]")


class EmpiricalLaw:
    """Sample-based distribution: sorted scalars or label counts."""

    def __init__(self, kind: str, samples: np.ndarray | None = None,
                 counts: dict | None = None):
        self.kind = kind
        if kind == "scalar":
            self.samples = np.sort(np.asarray(samples, dtype=float))
            self.n = self.samples.size
        elif kind == "label":
            self.counts = dict(counts)
            self.n = int(sum(self.counts.values()))
        else:
            raise StatsError(f"unknown law kind {kind!r}")
        if self.n < 1:
            raise StatsError("empirical law needs at least one sample")

    @staticmethod
    def from_scalars(samples) -> "EmpiricalLaw":
        return EmpiricalLaw("scalar", samples=np.asarray(samples, dtype=float))

    @staticmethod
    def from_labels(labels) -> "EmpiricalLaw":
        counts: dict = {}
        for x in labels:
            counts[x] = counts.get(x, 0) + 1
        return EmpiricalLaw("label", counts=counts)

    def freq(self, label) -> float:
        return self.counts.get(label, 0) / self.n

    def __repr__(self):
        return f"EmpiricalLaw({self.kind}, n={self.n})"


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


def kolmogorov_sf(x: float) -> float:
    """Survival function of the Kolmogorov distribution, Q(x) = 2 sum_k
    (-1)^(k-1) exp(-2 k^2 x^2)."""
    if x <= 0.0:
        return 1.0
    total = 0.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * x * x)
        total += -term if k % 2 == 0 else term
        if term < 1e-18:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_statistic(x: np.ndarray, y: np.ndarray) -> float:
    """Exact sup |F_x - F_y| over the pooled order statistics."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    pooled = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, pooled, side="right") / x.size
    cdf_y = np.searchsorted(y, pooled, side="right") / y.size
    return float(np.max(np.abs(cdf_x - cdf_y)))


def ks_test(x: EmpiricalLaw, y: EmpiricalLaw) -> TwoSampleResult:
    """Two-sample KS with asymptotic p-value at effective n = nm/(n+m)."""
    if x.kind != "scalar" or y.kind != "scalar":
        raise StatsError("KS test needs scalar laws on both sides")
    if x.n < 5 or y.n < 5:
        raise StatsError("KS test needs at least 5 samples per side")
    d = ks_statistic(x.samples, y.samples)
    en = math.sqrt(x.n * y.n / (x.n + y.n))
    return TwoSampleResult(d, kolmogorov_sf(en * d), "KS")


# ---------------------------------------------------------------------------
# Maximum mean discrepancy


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = (a * a).sum(axis=1)
    bb = (b * b).sum(axis=1)
    return np.maximum(aa[:, None] + bb[None, :] - 2.0 * a @ b.T, 0.0)


def rbf_gram(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-_sq_dists(a, b) / (2.0 * sigma * sigma))


def mmd2(x, y, sigma: float) -> float:
    """Biased V-statistic of squared MMD under the RBF kernel.

    Matches the population formula E k(X,X') - 2 E k(X,Y) + E k(Y,Y') with
    all pairs (self-pairs included), hence >= 0 and exactly 0 on identical
    multisets.
    """
    if sigma <= 0:
        raise StatsError("sigma must be positive")
    a, b = _as_matrix(x), _as_matrix(y)
    return float(rbf_gram(a, a, sigma).mean()
                 - 2.0 * rbf_gram(a, b, sigma).mean()
                 + rbf_gram(b, b, sigma).mean())


def mmd2_unbiased(x, y, sigma: float) -> float:
    """U-statistic variant (diagonal removed); can be negative under the null."""
    if sigma <= 0:
        raise StatsError("sigma must be positive")
    a, b = _as_matrix(x), _as_matrix(y)
    m, n = a.shape[0], b.shape[0]
    if m < 2 or n < 2:
        raise StatsError("unbiased MMD needs at least 2 samples per side")
    kxx = rbf_gram(a, a, sigma)
    kyy = rbf_gram(b, b, sigma)
    kxy = rbf_gram(a, b, sigma)
    return float((kxx.sum() - np.trace(kxx)) / (m * (m - 1))
                 - 2.0 * kxy.mean()
                 + (kyy.sum() - np.trace(kyy)) / (n * (n - 1)))


def mmd_permutation_test(x, y, sigma: float, n_permutations: int = 200,
                         seed: int = 0) -> TwoSampleResult:
    """Permutation p-value for the biased MMD^2 statistic.

    p = (1 + #{perm stats >= observed}) / (B + 1); permutations are drawn
    from a keyed stream so results do not depend on scheduling.
    """
    if n_permutations < 100:
        raise StatsError("need at least 100 permutations")
    from . import kernels

    a, b = _as_matrix(x), _as_matrix(y)
    nx = a.shape[0]
    pooled = np.vstack([a, b])
    K = rbf_gram(pooled, pooled, sigma)
    observed = mmd2(a, b, sigma)
    gen = rng.generator(seed, rng.DOMAIN_TEST)
    perms = np.empty((n_permutations, pooled.shape[0]), dtype=np.int64)
    for bi in range(n_permutations):
        perms[bi] = gen.permutation(pooled.shape[0])
    null = kernels.mmd_perm_stats(K, nx, perms)
    p = (1.0 + float(np.sum(null >= observed - 1e-15))) / (n_permutations + 1.0)
    return TwoSampleResult(observed, p, "MMD-permutation")


def median_heuristic_bandwidth(samples, seed: int = 0, max_points: int = 2000) -> float:
    """Median pairwise Euclidean distance of the pooled sample (subsampled to
    at most ``max_points``); falls back to 1.0 when the median degenerates."""
    a = _as_matrix(samples)
    if a.shape[0] < 2:
        raise StatsError("bandwidth heuristic needs at least 2 samples")
    if a.shape[0] > max_points:
        gen = rng.generator(seed, rng.DOMAIN_TEST, 1)
        a = a[gen.choice(a.shape[0], size=max_points, replace=False)]
    d2 = _sq_dists(a, a)
    iu = np.triu_indices(a.shape[0], k=1)
    med = float(np.median(np.sqrt(d2[iu])))
    return med if med > 0.0 else 1.0


# ---------------------------------------------------------------------------
# Finite-law tests


def total_variation(p: EmpiricalLaw, q: EmpiricalLaw) -> float:
    """Total variation distance between two label laws: 0.5 * sum |p - q|."""
    if p.kind != "label" or q.kind != "label":
        raise StatsError("total variation needs label laws on both sides")
    support = set(p.counts) | set(q.counts)
    return 0.5 * sum(abs(p.freq(s) - q.freq(s)) for s in support)


def fisher_binary_test(k1: int, n1: int, k2: int, n2: int) -> TwoSampleResult:
    """Exact two-sided test for two binomial samples (2x2 Fisher).

    Two-sided p sums the hypergeometric probabilities of all tables at most
    as likely as the observed one (the same convention scipy uses), computed
    vectorized from log-gammas.  Statistic is the absolute difference of
    success frequencies.
    """
    from scipy.special import gammaln

    total = n1 + n2
    k_tot = k1 + k2
    lo = max(0, k_tot - n2)
    hi = min(n1, k_tot)
    support = np.arange(lo, hi + 1)

    def log_comb(n, k):
        return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)

    logpmf = (log_comb(n1, support) + log_comb(n2, k_tot - support)
              - log_comb(total, k_tot))
    pmf = np.exp(logpmf - logpmf.max())
    pmf /= pmf.sum()
    observed = pmf[k1 - lo]
    p = float(pmf[pmf <= observed * (1.0 + 1e-7)].sum())
    return TwoSampleResult(abs(k1 / n1 - k2 / n2), min(1.0, p), "binomial")


def pattern_chi2_test(p: EmpiricalLaw, q: EmpiricalLaw) -> TwoSampleResult:
    """Chi-square homogeneity test over the union support of two label laws.

    Columns with zero combined mass are dropped; falls back to p = 1 when
    fewer than two support points remain.
    """
    from scipy.stats import chi2_contingency

    if p.kind != "label" or q.kind != "label":
        raise StatsError("pattern test needs label laws")
    support = sorted(set(p.counts) | set(q.counts), key=repr)
    table = np.array([[p.counts.get(s, 0) for s in support],
                      [q.counts.get(s, 0) for s in support]], dtype=float)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return TwoSampleResult(0.0, 1.0, "chi2")
    stat, pv, _, _ = chi2_contingency(table)
    return TwoSampleResult(float(stat), float(pv), "chi2")


def two_sample_test(x: EmpiricalLaw, y: EmpiricalLaw) -> TwoSampleResult:
    """Dispatch on law kind: KS for scalars, Fisher for binary labels,
    chi-square for larger supports."""
    if x.kind != y.kind:
        raise StatsError("cannot compare laws of different kinds")
    if x.kind == "scalar":
        return ks_test(x, y)
    support = sorted(set(x.counts) | set(y.counts), key=repr)
    if len(support) <= 2:
        s = support[-1]
        k1 = x.counts.get(s, 0)
        k2 = y.counts.get(s, 0)
        return fisher_binary_test(k1, x.n, k2, y.n)
    return pattern_chi2_test(x, y)


# ---------------------------------------------------------------------------
# Trace analytics


def firing_rate(trace, threshold: float, dt_ms: float) -> float:
    """Upward threshold crossings per second over the trace duration."""
    v = np.asarray(trace, dtype=float)
    if v.size < 2:
        raise StatsError("trace must have at least 2 samples")
    crossings = int(np.sum((v[:-1] < threshold) & (v[1:] >= threshold)))
    return crossings / (v.size * dt_ms / 1000.0)


def fit_logistic(x, y) -> dict:
    """Least-squares 4-parameter logistic fit.

    Model: lo + (hi - lo) / (1 + exp(-(x - midpoint)/scale)).  Returns the
    fitted parameters; ``midpoint`` is the half-rise location.
    """
    from scipy.optimize import curve_fit

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4:
        raise StatsError("logistic fit needs at least 4 points")

    def model(v, lo, hi, mid, scale):
        return lo + (hi - lo) / (1.0 + np.exp(-(v - mid) / scale))

    span = x.max() - x.min()
    p0 = (float(y.min()), float(y.max()), float(x.mean()), span / 6.0)
    bounds = ([-np.inf, -np.inf, x.min() - span, 1e-6],
              [np.inf, np.inf, x.max() + span, 10.0 * span])
    popt, _ = curve_fit(model, x, y, p0=p0, bounds=bounds, maxfev=20000)
    lo, hi, mid, scale = (float(c) for c in popt)
    return {"lo": lo, "hi": hi, "midpoint": mid, "scale": scale}


def steady_state_effect(trace_int, trace_obs, window_frac: float = 0.5) -> float:
    """Difference of mean values over the trailing window of two traces."""
    a = np.asarray(trace_int, dtype=float)
    b = np.asarray(trace_obs, dtype=float)
    if a.shape != b.shape:
        raise StatsError("traces must have equal length")
    start = int(round(a.size * (1.0 - window_frac)))
    return float(a[start:].mean() - b[start:].mean())
