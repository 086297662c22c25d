"""Equivariant densities ``h_k`` along a driving path, minoration and cone contraction.

The density at offset ``k`` is the pullback ``L^{(depth)}_{sigma^{k-depth} omega} 1``,
renormalized.  Two realizations are offered:

``"sweep"``
    one forward pass from ``min(offsets) - depth``; offset ``k`` is then the
    pullback of depth ``k - min(offsets) + depth`` and consecutive densities
    are exactly one operator application apart.
``"per_offset"``
    an independent pullback of fixed depth for every offset; equivariance then
    holds only up to the contraction error, which is what makes the residual
    a meaningful convergence check.

``"exact_fixed_point"`` runs power iteration for single-map families.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    ConvergenceWarning,
    DiagnosticError,
    FitError,
    NumericalError,
    PreconditionError,
    RangeError,
    SamplingError,
)
from .spaces import ConeParams, _aperture, bv_norm, cone_contains, esinf, hilbert_metric, l1_norm, variation
from .stats import fit_decay
from .transfer import Cocycle

STRATEGIES = ("sweep", "per_offset", "exact_fixed_point")
DEPTH_CAP = 200
CONVERGENCE_TOL = 1e-6
BV_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class EquivariantDensity:
    start: int
    densities: np.ndarray = field(repr=False)
    pullback_depth: int
    strategy: str = "sweep"
    convergence_gap: float = 0.0

    def __post_init__(self):
        d = np.array(self.densities, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "densities", d)

    @property
    def offsets(self) -> range:
        return range(self.start, self.start + self.densities.shape[0])

    @property
    def n_bins(self) -> int:
        return self.densities.shape[1]

    @property
    def c_lower(self) -> float:
        """Smallest essential infimum over the stored offsets."""
        return float(self.densities.min())

    @property
    def converged(self) -> bool:
        return self.convergence_gap <= CONVERGENCE_TOL

    def covers(self, start: int, stop: int) -> bool:
        return start >= self.start and stop <= self.start + self.densities.shape[0]

    def require(self, start: int, stop: int):
        if stop > start and not self.covers(start, stop):
            end = self.start + self.densities.shape[0]
            raise RangeError(
                f"densities cover offsets [{self.start}, {end}), need [{start}, {stop})",
                missing=[(start, min(stop, self.start)) if start < self.start else (max(start, end), stop)],
            )

    def __getitem__(self, k: int) -> np.ndarray:
        self.require(k, k + 1)
        return self.densities[k - self.start]

    def max_bv(self) -> float:
        return float(np.max(bv_norm(self.densities)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin"] + [f"offset_{k}" for k in self.offsets])
            for i in range(self.n_bins):
                w.writerow([i] + [repr(float(x)) for x in self.densities[:, i]])


def _normalize(v: np.ndarray) -> np.ndarray:
    mass = float(np.mean(v))
    if not mass > 0:
        raise NumericalError(f"pullback lost all mass (integral {mass:.3e})")
    return v / mass


def pullback(cocycle: Cocycle, k: int, depth: int, initial=None) -> np.ndarray:
    """``L^{(depth)}_{sigma^{k-depth} omega} g`` normalized, with ``g = 1`` by default."""
    g = np.ones(cocycle.n_bins) if initial is None else np.asarray(initial, dtype=float)
    return _normalize(cocycle.apply(k - depth, depth, g))


def estimate_rate(cocycle: Cocycle, start: int | None = None, n_max: int = 60) -> float:
    """Fitted contraction rate of ``L^{(n)}`` on a mean-zero test function."""
    if start is None:
        start = -cocycle.path.n_past
    n_max = min(n_max, cocycle.path.n_future - start)
    x = (np.arange(cocycle.n_bins) + 0.5) / cocycle.n_bins
    g = np.cos(2 * np.pi * x) + (x - 0.5)
    g -= g.mean()
    norms = []
    for k in range(n_max):
        g = cocycle.step(start + k, g)
        norms.append(float(l1_norm(g)))
    try:
        return fit_decay(norms, noise_floor=1e-13).rho_hat
    except FitError:
        # decay too fast to fit: at least a factor 10 per step
        return 0.1


def default_depth(rho: float, target: float = 1e-10, cap: int = DEPTH_CAP) -> int:
    if not 0 < rho < 1:
        return cap
    return int(min(cap, max(1, math.ceil(math.log(target) / math.log(rho)))))


def solve_equivariant(
    cocycle: Cocycle,
    offsets,
    depth="auto",
    strategy: str = "sweep",
    tol: float = 1e-13,
    max_iter: int = 100_000,
) -> EquivariantDensity:
    offsets = range(offsets[0], offsets[1]) if isinstance(offsets, tuple) else offsets
    lo, hi = min(offsets), max(offsets) + 1
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if depth == "auto":
        depth = default_depth(estimate_rate(cocycle))
    depth = int(depth)
    if depth < 1:
        raise PreconditionError("pullback depth must be >= 1")
    n = cocycle.n_bins

    if strategy == "exact_fixed_point":
        symbols = set(cocycle.path.window(lo, hi - 1).tolist()) if hi - 1 > lo else {cocycle.path[lo]}
        if len(cocycle.family) > 1 and len(symbols) > 1:
            raise ConfigurationError("exact_fixed_point needs a single-map family")
        backend = cocycle.backend(lo)
        v = np.ones(n)
        for it in range(max_iter):
            w = _normalize(backend.apply(v))
            gap = float(l1_norm(w - v))
            v = w
            if gap < tol:
                break
        else:
            warnings.warn(f"power iteration stopped at residual {gap:.2e}", ConvergenceWarning, stacklevel=2)
        return EquivariantDensity(lo, np.tile(v, (hi - lo, 1)), it + 1, strategy, gap)

    cocycle.path.require(lo - depth, hi - 1)
    if strategy == "sweep":
        out = np.empty((hi - lo, n))
        v = np.ones(n)
        for k in range(lo - depth, hi):
            if k >= lo:
                out[k - lo] = v
            if k + 1 < hi:
                v = _normalize(cocycle.step(k, v))
    else:
        out = np.array([pullback(cocycle, k, depth) for k in offsets])

    gap = 0.0
    if depth > 5:
        gap = float(l1_norm(out[0] - pullback(cocycle, lo, depth - 5)))
        if gap > CONVERGENCE_TOL:
            warnings.warn(
                f"pullback not converged: depth {depth} vs {depth - 5} differ by {gap:.2e} in L1",
                ConvergenceWarning,
                stacklevel=2,
            )
    return EquivariantDensity(lo, out, depth, strategy, gap)


def equivariance_residual(cocycle: Cocycle, h: EquivariantDensity) -> float:
    if h.densities.shape[0] < 2:
        raise PreconditionError("equivariance needs at least two consecutive offsets")
    ks = list(h.offsets)[:-1]
    return max(float(l1_norm(cocycle.step(k, h[k]) - h[k + 1])) for k in ks)


# -- cone sampling, minoration, contraction ----------------------------------


def sample_cone_element(rng: np.random.Generator, n_bins: int, cone, max_smoothing: int = 20_000) -> np.ndarray:
    """A random element of the cone, normalized to unit integral.

    Draws a coarse nonnegative step function (2 to 16 levels), then applies
    neighbor averaging until the variation constraint holds.
    """
    a = _aperture(cone)
    m = int(rng.integers(2, 17))
    levels = rng.uniform(0.0, 1.0, size=m)
    levels[rng.integers(0, m)] += rng.uniform(0.1, 1.0)
    v = np.repeat(levels, -(-n_bins // m))[:n_bins]
    for _ in range(max_smoothing):
        if variation(v) <= a * np.mean(v):
            return v / np.mean(v)
        p = np.concatenate([v[:1], v, v[-1:]])
        v = 0.25 * p[:-2] + 0.5 * p[1:-1] + 0.25 * p[2:]
    raise SamplingError(f"could not smooth a sample into the cone with a={a:g} after {max_smoothing} passes")


def _random_starts(rng, cocycle: Cocycle, steps: int, count: int) -> np.ndarray:
    lo, hi = -cocycle.path.n_past, cocycle.path.n_future - steps
    if hi < lo:
        cocycle.path.require(lo, lo + steps)
    return rng.integers(lo, hi + 1, size=count)


def minoration_estimate(cocycle: Cocycle, cone, n: int, trials: int, seed: int = 0) -> float:
    """Smallest ``esinf L^{(n)} g`` over random unit-mass cone elements and start offsets."""
    if n < 1 or trials < 1:
        raise PreconditionError("need n >= 1 and trials >= 1")
    rng = np.random.default_rng(seed)
    starts = _random_starts(rng, cocycle, n, trials)
    worst = math.inf
    for j in starts:
        g = sample_cone_element(rng, cocycle.n_bins, cone)
        worst = min(worst, float(esinf(cocycle.apply(int(j), n, g))))
    return worst


@dataclass(frozen=True)
class ConeContractionReport:
    kappa_hat: float
    delta_hat: float
    inclusion_rate: float
    pairs_used: int
    pairs: int
    steps: int
    bv_theta_ok: bool
    bv_theta_excess: float

    @property
    def birkhoff_bound(self) -> float:
        return math.tanh(self.delta_hat / 4.0)


def _bv_theta_excess(g1, g2, theta, a) -> float:
    """``||g1/|g1| - g2/|g2| ||_BV - 2(1+a) Theta``; nonpositive when the bound holds."""
    d = bv_norm(np.asarray(g1) / np.mean(g1) - np.asarray(g2) / np.mean(g2))
    return float(d - 2.0 * (1.0 + a) * theta)


def cone_contraction_check(
    cocycle: Cocycle, cone, R: int, N: int, pairs: int, seed: int = 0
) -> ConeContractionReport:
    a = _aperture(cone)
    steps = R * N
    rng = np.random.default_rng(seed)
    starts = _random_starts(rng, cocycle, steps, pairs)
    half = ConeParams(a / 2.0)
    included = 0
    ratios, after_thetas = [], []
    worst_bv = -math.inf
    for j in starts:
        phi = sample_cone_element(rng, cocycle.n_bins, a)
        psi = sample_cone_element(rng, cocycle.n_bins, a)
        Lphi = cocycle.apply(int(j), steps, phi)
        Lpsi = cocycle.apply(int(j), steps, psi)
        tol = 1e-12 * max(1.0, a)
        included += cone_contains(Lphi, half, tol) and cone_contains(Lpsi, half, tol)
        before = hilbert_metric(phi, psi, a).theta
        after = hilbert_metric(Lphi, Lpsi, a).theta
        for g1, g2, th in ((phi, psi, before), (Lphi, Lpsi, after)):
            if math.isfinite(th):
                worst_bv = max(worst_bv, _bv_theta_excess(g1, g2, th, a))
        if math.isfinite(after):
            after_thetas.append(after)
        if math.isfinite(before) and before > 0 and math.isfinite(after):
            ratios.append(after / before)
    if not after_thetas:
        raise DiagnosticError(f"every sampled Hilbert distance is infinite; try a larger aperture than a={a:g}")
    return ConeContractionReport(
        kappa_hat=float(max(ratios)) if ratios else math.nan,
        delta_hat=float(max(after_thetas)),
        inclusion_rate=included / pairs,
        pairs_used=len(ratios),
        pairs=pairs,
        steps=steps,
        bv_theta_ok=worst_bv <= BV_TOL,
        bv_theta_excess=worst_bv,
    )
