"""Monte Carlo Birkhoff sums under ``mu_omega`` and statistical checks of the limit laws."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .errors import DegenerateVarianceError, PreconditionError
from .sampling import trajectory_bins
from .stats import fiber_values, fiberwise_variance, green_kubo_sigma2
from .transfer import Cocycle

ASIP_LABEL = (
    "diagnostic only: discrepancy against a same-seed Gaussian surrogate with matched step "
    "variances; this is a consistency indicator, not an almost-sure coupling"
)


@dataclass(frozen=True, eq=False)
class BirkhoffSamples:
    """``partials[s, k-1] = S_k(x_s) = sum_{i<k} psi~_i(f^i x_s)`` for k = 1..n."""

    n: int
    n_samples: int
    partials: np.ndarray = field(repr=False)
    seed: int
    bins: np.ndarray | None = field(default=None, repr=False)

    def at(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.n:
            raise PreconditionError(f"k must lie in [1, {self.n}], got {k}")
        return self.partials[:, k - 1]


def birkhoff_samples(cocycle: Cocycle, psi_tilde, h, n: int, n_samples: int, seed: int = 0,
                     keep_bins: bool = False) -> BirkhoffSamples:
    bins = trajectory_bins(cocycle, h, n, n_samples, seed)
    partials = np.empty((n_samples, n))
    acc = np.zeros(n_samples)
    for k in range(n):
        acc += np.asarray(fiber_values(psi_tilde, cocycle, k))[bins[:, k]]
        partials[:, k] = acc
    return BirkhoffSamples(n, n_samples, partials, seed, bins if keep_bins else None)


@dataclass(frozen=True)
class CltReport:
    ks_statistic: float
    p_value: float
    sample_variance: float
    target_sigma2: float
    k: int


def clt_test(samples: BirkhoffSamples, sigma2: float, k: int) -> CltReport:
    """One-sample KS test of ``S_k / sqrt(k sigma2)`` against N(0, 1), asymptotic p-value."""
    if not sigma2 > 0:
        raise DegenerateVarianceError(
            f"sigma2 = {sigma2!r} is not positive; a vanishing variance points to a coboundary (see coboundary_test)"
        )
    s = samples.at(k)
    z = s / math.sqrt(k * sigma2)
    res = sps.kstest(z, "norm", method="asymp")
    return CltReport(
        ks_statistic=float(res.statistic),
        p_value=float(min(1.0, max(0.0, res.pvalue))),
        sample_variance=float(np.var(s, ddof=1)),
        target_sigma2=float(sigma2),
        k=k,
    )


COBOUNDARY_HORIZONS = (250, 500, 1000, 2000)


@dataclass(frozen=True)
class CoboundaryVerdict:
    verdict: str
    evidence: dict


def coboundary_test(cocycle: Cocycle, psi_tilde, h, n_max: int = 2000, gk_lags: int = 50) -> CoboundaryVerdict:
    """Classify a centered observable as a coboundary or as having positive variance.

    Coboundary: ``tau_n^2`` stays bounded over the horizons (max/min < 2) and the
    Green-Kubo sum is below 1% of ``int psi~^2 dmu``.  Nondegenerate: ``tau_n^2/n``
    at the last two horizons agrees within 10% and is positive.
    """
    horizons = [t for t in COBOUNDARY_HORIZONS if t <= n_max] or [max(1, n_max // 2), n_max]
    if horizons[-1] != n_max and n_max > horizons[-1]:
        horizons.append(n_max)
    tau = fiberwise_variance(cocycle, psi_tilde, h, horizons[-1])
    tvals = np.array([tau[t - 1] for t in horizons])
    p0 = np.asarray(fiber_values(psi_tilde, cocycle, 0))
    second = float(np.mean(p0 * p0 * h[0]))
    lags = min(gk_lags, max(1, n_max))
    gk = green_kubo_sigma2(cocycle, psi_tilde, h, lags, ensemble=1).sigma2
    evidence = {
        "horizons": horizons,
        "tau2": tvals.tolist(),
        "tau2_over_n": (tvals / np.array(horizons)).tolist(),
        "green_kubo_sigma2": gk,
        "second_moment": second,
        "sup_tau2": float(tau.max()),
    }
    if second <= 1e-14 or float(tau.max()) <= 1e-14:
        return CoboundaryVerdict("coboundary", {**evidence, "reason": "observable vanishes after centering"})
    tmin = float(tvals.min())
    bounded = tmin > 0 and float(tvals.max()) / tmin < 2.0
    if bounded and gk < 0.01 * second:
        return CoboundaryVerdict("coboundary", {**evidence, "reason": "tau_n^2 bounded and Green-Kubo sum negligible"})
    r = evidence["tau2_over_n"]
    if len(r) >= 2 and r[-1] > 0 and abs(r[-1] - r[-2]) <= 0.1 * r[-1]:
        return CoboundaryVerdict("nondegenerate", {**evidence, "reason": "tau_n^2/n stabilizes at a positive value"})
    return CoboundaryVerdict("inconclusive", {**evidence, "reason": "neither criterion met"})


@dataclass(frozen=True)
class AsipReport:
    exponent_hat: float | None
    ci: tuple[float, float] | None
    flagged: bool
    label: str
    horizons: tuple[int, ...]
    mean_discrepancy: tuple[float, ...]


def gaussian_surrogate(shape, step_variances, seed: int) -> np.ndarray:
    """Partial sums ``W_k = sum_{i<k} sqrt(v_i) Z_i`` with i.i.d. standard normal ``Z``."""
    n_samples, n = shape
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, n))
    return np.cumsum(z * np.sqrt(np.asarray(step_variances, dtype=float))[None, :], axis=1)


def asip_error_scaling(samples: BirkhoffSamples, sigma2: float, step_variances=None, seed: int | None = None,
                       surrogate: np.ndarray | None = None) -> AsipReport:
    """Fitted exponent of ``mean_s max_{k<=n} |S_k - W_k|`` against ``n``.

    ``W`` is a Gaussian partial-sum process with per-step variances
    ``step_variances`` (default: ``sigma2`` at every step) drawn from ``seed``
    (default: the samples' own seed), or an explicit ``surrogate`` array.
    """
    if not sigma2 > 0:
        raise DegenerateVarianceError(f"sigma2 = {sigma2!r} is not positive")
    n = samples.n
    if surrogate is None:
        v = np.full(n, sigma2) if step_variances is None else np.asarray(step_variances, dtype=float)[:n]
        surrogate = gaussian_surrogate(samples.partials.shape, v, samples.seed if seed is None else seed)
    diff = np.abs(samples.partials - surrogate)
    running = np.maximum.accumulate(diff, axis=1)
    lo = max(10, n // 100) if n > 20 else 1
    grid = np.unique(np.geomspace(lo, n, num=min(30, n)).astype(int))
    mean = running.mean(axis=0)[grid - 1]
    if np.all(mean == 0) or np.sum(mean > 0) < 3:
        return AsipReport(None, None, True, ASIP_LABEL, tuple(int(g) for g in grid), tuple(float(m) for m in mean))
    ok = mean > 0
    fit = sps.linregress(np.log(grid[ok]), np.log(mean[ok]))
    slope, se = float(fit.slope), float(fit.stderr)
    return AsipReport(
        exponent_hat=slope,
        ci=(slope - 1.96 * se, slope + 1.96 * se),
        flagged=False,
        label=ASIP_LABEL,
        horizons=tuple(int(g) for g in grid),
        mean_discrepancy=tuple(float(m) for m in mean),
    )


def bin_frequency_check(bins0: np.ndarray, h0, z: float = 4.0) -> float:
    """Fraction of bins whose empirical frequency lies within ``z`` binomial sds of ``h0/n``."""
    h0 = np.asarray(h0, dtype=float)
    n = h0.size
    p = h0 / h0.sum()
    counts = np.bincount(bins0, minlength=n)
    m = bins0.size
    sd = np.sqrt(p * (1 - p) / m)
    return float(np.mean(np.abs(counts / m - p) <= z * sd + 1e-15))
