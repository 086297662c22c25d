"""Fiberwise correlations, exponential decay fits and variance of Birkhoff sums.

Every fiber integral here is a grid quadrature through the transfer cocycle;
nothing is sampled.  Monte Carlo lives in :mod:`quenchedlab.limits`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .driving import BaseSpec, sample_path
from .errors import ConfigurationError, FitError, PreconditionError, RangeError, ShapeError
from .spaces import _vals, bin_averages, bv_norm
from .transfer import Cocycle


@dataclass(frozen=True, eq=False)
class Observable:
    """A grid observable, either shared by all fibers or one row per driving symbol."""

    values: np.ndarray
    name: str = "observable"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] < 2:
            raise ShapeError("observable values must be (n_bins,) or (n_symbols, n_bins)")
        if not np.all(np.isfinite(v)):
            raise PreconditionError(f"observable {self.name!r} has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, fn, n_bins: int, name: str = "observable") -> "Observable":
        """Bin averages of ``fn`` (or of each function in a list, one per symbol)."""
        fns = fn if isinstance(fn, (list, tuple)) else [fn]
        return cls(np.stack([bin_averages(f, n_bins) for f in fns]), name=name)

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]

    @property
    def per_symbol(self) -> bool:
        return self.values.shape[0] > 1

    @property
    def bv_bound(self) -> float:
        return float(np.max(bv_norm(self.values)))

    def at(self, cocycle: Cocycle, k: int) -> np.ndarray:
        if not self.per_symbol:
            return self.values[0]
        s = cocycle.path[k]
        if s >= self.values.shape[0]:
            raise ConfigurationError(f"observable {self.name!r} has no row for symbol {s}")
        return self.values[s]


@dataclass(frozen=True, eq=False)
class CenteredObservable:
    """``psi_k - int psi_k h_k dm`` tabulated for offsets ``start, start+1, ...``."""

    start: int
    values: np.ndarray = field(repr=False)
    source: Observable | None = None
    name: str = "centered"

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]

    @property
    def offsets(self) -> range:
        return range(self.start, self.start + self.values.shape[0])

    def at(self, cocycle: Cocycle | None, k: int) -> np.ndarray:
        i = k - self.start
        if not 0 <= i < self.values.shape[0]:
            raise RangeError(
                f"centered observable covers offsets [{self.start}, {self.start + self.values.shape[0]}), not {k}",
                missing=[(k, k + 1)],
            )
        return self.values[i]

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.values == 0.0))

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def fiber_values(obs, cocycle: Cocycle, k: int) -> np.ndarray:
    if hasattr(obs, "at"):
        return obs.at(cocycle, k)
    return _vals(obs)


def _center(obs, cocycle: Cocycle, h, stop: int) -> CenteredObservable:
    from .martingale import center_observable

    if isinstance(obs, CenteredObservable):
        return obs
    return center_observable(obs, h, cocycle, stop=stop)


# -- correlations and decay -----------------------------------------------


def correlations(cocycle: Cocycle, phi, psi, h, n_max: int) -> np.ndarray:
    """``C_n = int L^{(n)}(phi h_0) psi_n dm - (int phi h_0)(int psi_n h_n)`` for n = 1..n_max."""
    h.require(0, n_max + 1)
    cocycle.path.require(0, n_max)
    phi0 = fiber_values(phi, cocycle, 0)
    v = phi0 * h[0]
    mean_phi = float(np.mean(v))
    out = np.empty(n_max)
    for n in range(1, n_max + 1):
        v = cocycle.step(n - 1, v)
        psi_n = fiber_values(psi, cocycle, n)
        out[n - 1] = float(np.mean(v * psi_n)) - mean_phi * float(np.mean(psi_n * h[n]))
    return out


@dataclass(frozen=True)
class DecayFit:
    K_hat: float
    rho_hat: float
    r2: float
    noise_floor: float
    lags: tuple[int, ...]

    def bound(self, n):
        return self.K_hat * self.rho_hat ** np.asarray(n, dtype=float)


def fit_decay(seq, noise_floor: float, lags=None) -> DecayFit:
    """Least-squares fit of ``log|C_n| = log K + n log rho`` over lags above the floor.

    ``lags`` defaults to ``1, 2, ...`` (``seq[0]`` is ``C_1``).
    """
    c = np.abs(np.asarray(seq, dtype=float))
    n = np.arange(1, c.size + 1) if lags is None else np.asarray(lags, dtype=float)
    use = c > noise_floor
    if use.sum() < 3:
        raise FitError(f"decay below noise floor: only {int(use.sum())} lags exceed {noise_floor:g}")
    x, y = n[use], np.log(c[use])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    rho = math.exp(slope)
    if not rho < 1.0:
        raise FitError(f"no decay: fitted rate {rho:.4g} >= 1")
    return DecayFit(
        K_hat=math.exp(intercept),
        rho_hat=rho,
        r2=r2,
        noise_floor=noise_floor,
        lags=tuple(int(t) for t in x),
    )


def default_noise_floor(n_bins: int) -> float:
    return 10.0 / n_bins


# -- variance ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VarianceReport:
    sigma2: float
    partial_sums: np.ndarray
    member_sigma2: np.ndarray
    tau_n: np.ndarray | None = None
    slope: float | None = None
    clipped: bool = False

    @property
    def ensemble(self) -> int:
        return self.member_sigma2.size


def _green_kubo_member(cocycle: Cocycle, psi_t: CenteredObservable, h, n_max: int) -> np.ndarray:
    p0 = psi_t.at(cocycle, 0)
    v = p0 * h[0]
    terms = np.empty(n_max + 1)
    terms[0] = float(np.mean(p0 * v))
    for n in range(1, n_max + 1):
        v = cocycle.step(n - 1, v)
        terms[n] = 2.0 * float(np.mean(v * psi_t.at(cocycle, n)))
    return np.cumsum(terms)


def green_kubo_sigma2(
    cocycle: Cocycle,
    psi,
    h,
    n_max: int,
    ensemble: int = 64,
    seed: int = 0,
    base: BaseSpec | None = None,
    tau_horizon: int | None = None,
) -> VarianceReport:
    """Green-Kubo sum truncated at ``n_max``, averaged over an ensemble of driving paths.

    Member 0 is the cocycle's own path.  Further members are drawn from ``base``
    with seeds derived from ``seed``; each gets its own equivariant density and
    fiberwise centering.  Without a base, or for a single-symbol family, the
    ensemble collapses to the given path.
    """
    from .acim import solve_equivariant

    if n_max < 1:
        raise PreconditionError("n_max must be >= 1")
    h.require(0, n_max + 1)
    cocycle.path.require(0, n_max)
    members = [(cocycle, h)]
    if base is not None and base.symbol_count > 1 and ensemble > 1:
        seeds = np.random.SeedSequence(seed).generate_state(ensemble - 1, dtype=np.uint64)
        need_past = max(h.pullback_depth, cocycle.path.n_past)
        for s in seeds:
            p = sample_path(base, need_past, n_max + 1, seed=int(s))
            c = cocycle.with_path(p)
            members.append((c, solve_equivariant(c, range(0, n_max + 1), depth=h.pullback_depth)))
    source = psi.source if isinstance(psi, CenteredObservable) and len(members) > 1 else psi
    sums = []
    for c, hh in members:
        psi_t = psi if (c is cocycle and isinstance(psi, CenteredObservable)) else _center(source, c, hh, n_max + 1)
        sums.append(_green_kubo_member(c, psi_t, hh, n_max))
    sums = np.array(sums)
    partial = sums.mean(axis=0)
    raw = float(partial[-1])
    if raw < -1e-9:
        raise PreconditionError(f"Green-Kubo sum is negative ({raw:.3e}); check centering and n_max")
    tau = slope = None
    if tau_horizon:
        psi_t = _center(psi, cocycle, h, tau_horizon)
        tau = fiberwise_variance(cocycle, psi_t, h, tau_horizon)
        slope = variance_slope(tau)
    return VarianceReport(
        sigma2=max(raw, 0.0),
        partial_sums=partial,
        member_sigma2=sums[:, -1],
        tau_n=tau,
        slope=slope,
        clipped=raw < 0,
    )


def fiberwise_variance(cocycle: Cocycle, psi_tilde, h, n: int) -> np.ndarray:
    """``tau_k^2 = E_omega (sum_{i<k} psi~_i o f^i)^2`` for k = 1..n.

    Expanding the square gives diagonal terms ``int psi~_k^2 h_k`` and cross
    terms ``int L^{(k-i)}(psi~_i h_i) psi~_k``.  The cross terms for a fixed
    ``k`` sum to ``int w_k psi~_k`` with ``w_k = sum_{i<k} L^{(k-i)}(psi~_i h_i)``,
    and ``w_{k+1} = L_k(w_k + psi~_k h_k)``, so all ``n`` values cost ``n``
    operator applications.
    """
    h.require(0, n)
    cocycle.path.require(0, n)
    tau = np.empty(n)
    w = np.zeros(cocycle.n_bins)
    acc = 0.0
    for k in range(n):
        p = fiber_values(psi_tilde, cocycle, k)
        ph = p * h[k]
        acc += float(np.mean(p * ph)) + 2.0 * float(np.mean(w * p))
        tau[k] = acc
        if k + 1 < n:
            w = cocycle.step(k, w + ph)
    return tau


def fiberwise_variance_pairs(cocycle: Cocycle, psi_tilde, h, n: int) -> np.ndarray:
    """The same quantity by the explicit double sum (quadratic cost); a cross-check."""
    h.require(0, n)
    P = np.array([fiber_values(psi_tilde, cocycle, k) for k in range(n)])
    E = np.zeros((n, n))
    for i in range(n):
        v = P[i] * h[i]
        E[i, i] = float(np.mean(P[i] * v))
        for k in range(i + 1, n):
            v = cocycle.step(k - 1, v)
            E[i, k] = float(np.mean(v * P[k]))
    out = np.empty(n)
    for k in range(n):
        blk = E[: k + 1, : k + 1]
        out[k] = float(np.trace(blk) + 2.0 * np.sum(np.triu(blk, 1)))
    return out


def variance_slope(tau) -> float:
    """Least-squares slope of ``tau_k^2`` against ``k`` over the second half of the range."""
    tau = np.asarray(tau, dtype=float)
    k = np.arange(1, tau.size + 1)
    half = tau.size // 2
    if tau.size - half < 2:
        return float(tau[-1] / tau.size)
    return float(np.polyfit(k[half:], tau[half:], 1)[0])

