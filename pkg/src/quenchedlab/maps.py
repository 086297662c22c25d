"""Piecewise monotone expanding maps of [0, 1] and families of them.

A map is an ordered tuple of branches tiling [0, 1].  Each branch carries its
forward formula, its first and second derivative and a vectorized inverse.
Affine branches are inverted in closed form; smooth branches by bisection.

At a shared endpoint the left branch owns the point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, DomainError, ModelViolationError, NumericalError

_TILE_TOL = 1e-12
_ROOT_TOL = 1e-13
_BISECT_ITERS = 200


class Branch:
    """One monotone C^2 piece ``f: [a, b] -> [0, 1]``."""

    a: float
    b: float

    def forward(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def second_derivative(self, x):
        raise NotImplementedError

    def inverse(self, y):
        raise NotImplementedError

    @property
    def increasing(self) -> bool:
        return bool(self.forward(self.b) > self.forward(self.a))

    @property
    def image(self) -> tuple[float, float]:
        fa, fb = float(self.forward(self.a)), float(self.forward(self.b))
        return (min(fa, fb), max(fa, fb))

    @property
    def derivative_bounds(self) -> tuple[float, float, float]:
        """``(inf |f'|, sup |f'|, sup |f''|)`` on the branch."""
        raise NotImplementedError


@dataclass(frozen=True)
class AffineBranch(Branch):
    a: float
    b: float
    slope: float
    intercept: float

    def forward(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def derivative(self, x):
        return np.full(np.shape(x), self.slope, dtype=float)

    def second_derivative(self, x):
        return np.zeros(np.shape(x), dtype=float)

    def inverse(self, y):
        x = (np.asarray(y, dtype=float) - self.intercept) / self.slope
        return np.clip(x, self.a, self.b)

    @property
    def derivative_bounds(self):
        s = abs(self.slope)
        return (s, s, 0.0)


@dataclass(frozen=True)
class SmoothBranch(Branch):
    """Branch given by explicit formulas for ``f``, ``f'`` and ``f''``.

    ``critical`` lists points where ``|f'|`` or ``|f''|`` may attain an interior
    extremum; together with a dense sample they make the derivative bounds exact
    for the named forms shipped here.
    """

    a: float
    b: float
    func: Callable = field(repr=False)
    deriv: Callable = field(repr=False)
    deriv2: Callable = field(repr=False)
    label: str = "smooth"
    critical: tuple = ()

    def forward(self, x):
        return self.func(np.asarray(x, dtype=float))

    def derivative(self, x):
        return self.deriv(np.asarray(x, dtype=float))

    def second_derivative(self, x):
        return self.deriv2(np.asarray(x, dtype=float))

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        lo = np.full(y.shape, self.a)
        hi = np.full(y.shape, self.b)
        sign = 1.0 if self.increasing else -1.0
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            above = sign * (self.func(mid) - y) > 0
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
            if np.all(hi - lo <= 4e-16):
                break
        x = 0.5 * (lo + hi)
        resid = np.abs(self.func(x) - y)
        bad = resid > _ROOT_TOL
        if np.any(bad):
            raise NumericalError(
                f"branch {self.label} on [{self.a}, {self.b}]: inversion residual "
                f"{resid.max():.3e} exceeds {_ROOT_TOL} after {_BISECT_ITERS} bisection steps"
            )
        return x

    @property
    def derivative_bounds(self):
        xs = np.concatenate(
            [np.linspace(self.a, self.b, 4097), [c for c in self.critical if self.a <= c <= self.b]]
        )
        d1 = np.abs(self.deriv(xs))
        d2 = np.abs(self.deriv2(xs))
        return (float(d1.min()), float(d1.max()), float(d2.max()))


@dataclass(frozen=True)
class PiecewiseMap:
    branches: tuple
    name: str = "map"
    markov_points: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.branches:
            raise ConfigurationError("a map needs at least one branch")
        if abs(self.branches[0].a) > _TILE_TOL or abs(self.branches[-1].b - 1.0) > _TILE_TOL:
            raise ConfigurationError(f"{self.name}: branch domains must start at 0 and end at 1")
        for left, right in zip(self.branches, self.branches[1:]):
            if abs(left.b - right.a) > _TILE_TOL:
                raise ConfigurationError(
                    f"{self.name}: branch domains [{left.a}, {left.b}] and [{right.a}, {right.b}] do not abut"
                )
        for i, br in enumerate(self.branches):
            if not br.b > br.a:
                raise ConfigurationError(f"{self.name}: branch {i} has an empty domain")
            lo, hi = br.image
            if lo < -_TILE_TOL or hi > 1 + _TILE_TOL:
                raise ConfigurationError(f"{self.name}: branch {i} image [{lo}, {hi}] leaves [0, 1]")
            d = br.derivative(np.linspace(br.a, br.b, 257))
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ConfigurationError(f"{self.name}: branch {i} is not strictly monotone")
        if self.markov_points is not None:
            self.verify_markov(self.markov_points)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([br.a for br in self.branches] + [self.branches[-1].b])

    @property
    def N(self) -> int:
        return len(self.branches)

    @property
    def delta(self) -> float:
        return min(br.derivative_bounds[0] for br in self.branches)

    @property
    def D(self) -> float:
        return max(br.derivative_bounds[2] for br in self.branches)

    @property
    def is_affine(self) -> bool:
        return all(isinstance(br, AffineBranch) for br in self.branches)

    def branch_index(self, x):
        """Index of the branch owning ``x`` (left branch at shared endpoints)."""
        inner = self.breakpoints[1:-1]
        return np.searchsorted(inner, np.asarray(x, dtype=float), side="left")

    def evaluate(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(~((arr >= 0.0) & (arr <= 1.0))):
            raise DomainError(f"{self.name}: evaluation point outside [0, 1]")
        out = self._evaluate_unchecked(arr)
        return float(out) if np.ndim(x) == 0 else out

    def _evaluate_unchecked(self, x: np.ndarray) -> np.ndarray:
        idx = self.branch_index(x)
        out = np.empty(np.shape(x), dtype=float)
        for i, br in enumerate(self.branches):
            sel = idx == i
            if np.any(sel):
                out[sel] = br.forward(x[sel])
        return np.clip(out, 0.0, 1.0)

    def branch_preimages(self, y: float) -> list[tuple[float, float]]:
        """``[(x, |f'(x)|), ...]``, one entry per branch whose image contains ``y``."""
        if not 0.0 <= y <= 1.0:
            raise DomainError(f"{self.name}: preimage requested for y={y} outside [0, 1]")
        out = []
        for br in self.branches:
            lo, hi = br.image
            if lo - _TILE_TOL <= y <= hi + _TILE_TOL:
                x = float(br.inverse(np.array([min(max(y, lo), hi)]))[0])
                out.append((x, float(abs(br.derivative(np.array([x]))[0]))))
        return out

    def verify_markov(self, points: Sequence[float]):
        """Each one-sided branch endpoint image must be a partition point."""
        pts = np.asarray(sorted(points), dtype=float)
        for i, br in enumerate(self.branches):
            for v in br.image:
                if np.min(np.abs(pts - v)) > _TILE_TOL:
                    raise ModelViolationError(
                        f"{self.name}: branch {i} endpoint image {v} is not a Markov partition point"
                    )

    def is_grid_markov(self, n_bins: int, tol: float = _TILE_TOL) -> bool:
        """True when every bin piece maps affinely onto a union of grid bins."""
        if not self.is_affine:
            return False
        for br in self.branches:
            edges = np.arange(math.ceil(br.a * n_bins - tol), math.floor(br.b * n_bins + tol) + 1) / n_bins
            pts = np.concatenate([[br.a, br.b], edges[(edges > br.a) & (edges < br.b)]])
            img = br.forward(pts) * n_bins
            if np.max(np.abs(img - np.round(img))) > tol * n_bins:
                return False
        return True

    def validate_expansion(self):
        if not self.delta > 1.0:
            raise ModelViolationError(
                f"{self.name}: expansion hypothesis (sd) fails, inf |f'| = {self.delta:.6g} <= 1"
            )


@dataclass(frozen=True)
class UniformConstants:
    N: int
    delta: float
    D: float
    C: float


@dataclass(frozen=True)
class MapFamily:
    """Maps indexed by driving symbol."""

    maps: tuple

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        if not self.maps:
            raise ConfigurationError("map family is empty")

    def __len__(self):
        return len(self.maps)

    def __getitem__(self, i) -> PiecewiseMap:
        return self.maps[i]

    @property
    def constants(self) -> UniformConstants:
        return family_constants(self)


def lasota_yorke_constant(N: int, delta: float, D: float) -> float:
    return 4.0 * max(N / delta, 1.0) * max(D / delta**2, 1.0) * max(1.0 / delta, 1.0)


def family_constants(family: MapFamily) -> UniformConstants:
    """Uniform constants ``N``, ``delta``, ``D`` and the one-step BV bound ``C``."""
    for f in family.maps:
        f.validate_expansion()
    N = max(f.N for f in family.maps)
    delta = min(f.delta for f in family.maps)
    D = max(f.D for f in family.maps)
    return UniformConstants(N=N, delta=delta, D=D, C=lasota_yorke_constant(N, delta, D))


# -- constructors ---------------------------------------------------------


def linear_mod(slope: float, offset: float = 0.0, name: str | None = None) -> PiecewiseMap:
    """``x -> slope*x + offset (mod 1)`` with exact affine branches."""
    if slope <= 0:
        raise ConfigurationError("linear_mod needs a positive slope")
    lo, hi = offset, slope + offset
    ks = range(math.floor(lo), math.ceil(hi))
    branches = []
    for k in ks:
        a = max(0.0, (k - offset) / slope)
        b = min(1.0, (k + 1 - offset) / slope)
        if b - a > 1e-15:
            branches.append(AffineBranch(a, b, float(slope), float(offset - k)))
    if name is None:
        name = f"linear_mod(slope={slope:g})"
    markov = None
    if float(slope).is_integer() and float(offset).is_integer():
        markov = (0.0, 1.0)
    return PiecewiseMap(tuple(branches), name=name, markov_points=markov)


def doubling() -> PiecewiseMap:
    return linear_mod(2, name="doubling")


def tripling() -> PiecewiseMap:
    return linear_mod(3, name="tripling")


def lift_map(F, dF, d2F, name: str, critical: Sequence[float] = ()) -> PiecewiseMap:
    """Branches of ``F (mod 1)`` for a strictly increasing lift ``F`` on [0, 1]."""
    F0, F1 = float(F(0.0)), float(F(1.0))
    if not F1 > F0:
        raise ConfigurationError(f"{name}: lift must be increasing")
    cuts = [0.0]
    for k in range(math.floor(F0) + 1, math.ceil(F1)):
        cuts.append(brentq(lambda x, k=k: F(x) - k, 0.0, 1.0, xtol=1e-16, rtol=1e-15, maxiter=500))
    cuts.append(1.0)
    branches = []
    for a, b in zip(cuts, cuts[1:]):
        k = math.floor(F(0.5 * (a + b)))
        branches.append(
            SmoothBranch(
                a, b,
                func=lambda x, k=k: F(x) - k,
                deriv=dF,
                deriv2=d2F,
                label=f"{name}[{k}]",
                critical=tuple(critical),
            )
        )
    return PiecewiseMap(tuple(branches), name=name)


def sine_mod(slope: float, eps: float, k: int = 1, name: str | None = None) -> PiecewiseMap:
    """``x -> slope*x + eps*sin(2 pi k x)/(2 pi k) (mod 1)``; ``f' = slope + eps*cos(2 pi k x)``."""
    w = 2 * math.pi * k
    if slope - abs(eps) <= 0:
        raise ConfigurationError("sine_mod: lift is not increasing")
    crit = [j / (4 * k) for j in range(4 * k + 1)]
    return lift_map(
        lambda x: slope * x + eps * np.sin(w * x) / w,
        lambda x: slope + eps * np.cos(w * np.asarray(x)),
        lambda x: -eps * w * np.sin(w * np.asarray(x)),
        name=name or f"sine_mod(slope={slope:g}, eps={eps:g}, k={k})",
        critical=crit,
    )


def quadratic_mod(slope: float, q: float, name: str | None = None) -> PiecewiseMap:
    """``x -> slope*x + q*x**2 (mod 1)``."""
    if slope <= 0 or slope + 2 * q <= 0:
        raise ConfigurationError("quadratic_mod: lift is not increasing")
    return lift_map(
        lambda x: slope * x + q * x * x,
        lambda x: slope + 2 * q * np.asarray(x),
        lambda x: np.full(np.shape(x), 2 * q, dtype=float),
        name=name or f"quadratic_mod(slope={slope:g}, q={q:g})",
    )


def affine_table(breakpoints, slopes, intercepts, name: str = "affine_table") -> PiecewiseMap:
    bp = [float(b) for b in breakpoints]
    if len(bp) != len(slopes) + 1 or len(slopes) != len(intercepts):
        raise ConfigurationError("affine table needs len(breakpoints) == len(slopes) + 1 == len(intercepts) + 1")
    branches = [AffineBranch(a, b, float(s), float(c)) for a, b, s, c in zip(bp, bp[1:], slopes, intercepts)]
    return PiecewiseMap(tuple(branches), name=name)
