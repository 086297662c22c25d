"""Discrete BV functionals on a uniform grid, the cone C_a and its Hilbert metric.

A grid function is a vector of bin averages of a piecewise-constant function on
``n`` equal bins of [0, 1].  Every functional here is the exact value for that
piecewise-constant representative:

* ``l1 = mean(|v|)``
* ``variation = sum |v[k+1] - v[k]|`` (interior jumps only, so ``var(1) = 0``)
* ``sup = max |v|`` and ``esinf = min v``

Functions accept plain arrays or :class:`GridFunction` and act on the last axis.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, ShapeError

_BISECT_RTOL = 1e-10


def _vals(g) -> np.ndarray:
    return np.asarray(getattr(g, "values", g), dtype=float)


def l1_norm(g):
    return np.mean(np.abs(_vals(g)), axis=-1)


def variation(g):
    return np.sum(np.abs(np.diff(_vals(g), axis=-1)), axis=-1)


def sup_norm(g):
    return np.max(np.abs(_vals(g)), axis=-1)


def esinf(g):
    return np.min(_vals(g), axis=-1)


def bv_norm(g):
    return variation(g) + l1_norm(g)


def var_norm(g):
    return variation(g) + sup_norm(g)


@dataclass(frozen=True)
class Norms:
    l1: float
    variation: float
    sup: float
    esinf: float

    @property
    def bv(self) -> float:
        return self.variation + self.l1

    @property
    def var_norm(self) -> float:
        return self.variation + self.sup


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Bin averages of a density or observable on ``len(values)`` equal bins."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ShapeError("a grid function needs a 1-d array of at least 2 bins")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("grid function has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, n_bins: int, c: float = 1.0) -> "GridFunction":
        return cls(np.full(n_bins, float(c)))

    @classmethod
    def from_function(cls, fn, n_bins: int, nodes: int = 8) -> "GridFunction":
        return cls(bin_averages(fn, n_bins, nodes))

    @property
    def n_bins(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def norms(self) -> Norms:
        return norms(self)

    def to_csv(self, path):
        write_grid_csv(path, {"value": self.values})


def norms(g) -> Norms:
    v = _vals(g)
    return Norms(
        l1=float(l1_norm(v)),
        variation=float(variation(v)),
        sup=float(sup_norm(v)),
        esinf=float(esinf(v)),
    )


def bin_averages(fn, n_bins: int, nodes: int = 8) -> np.ndarray:
    """Gauss-Legendre bin averages of ``fn`` on ``n_bins`` equal bins."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    left = np.arange(n_bins)[:, None] / n_bins
    x = left + (t[None, :] + 1.0) / (2.0 * n_bins)
    return (np.asarray(fn(x), dtype=float) * w[None, :]).sum(axis=1) / 2.0


def write_grid_csv(path, columns: dict):
    names = list(columns)
    n = len(next(iter(columns.values())))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin"] + names)
        for i in range(n):
            w.writerow([i] + [repr(float(columns[c][i])) for c in names])


# -- cone and Hilbert metric ---------------------------------------------


@dataclass(frozen=True)
class ConeParams:
    """Aperture of ``C_a = {phi >= 0, var(phi) <= a * int(phi)}``."""

    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise PreconditionError(f"cone aperture must be positive, got {self.a}")

    @property
    def V(self) -> float:
        # var(1_X) / a; constants carry no interior jumps on the grid
        return 0.0


def _aperture(cone) -> float:
    return float(cone.a if isinstance(cone, ConeParams) else ConeParams(float(cone)).a)


def cone_contains(g, cone, tol: float = 0.0) -> bool:
    a = _aperture(cone)
    v = _vals(g)
    return bool(v.min() >= -tol and variation(v) <= a * np.mean(v) + tol)


def cone_violation(g, cone) -> str | None:
    a = _aperture(cone)
    v = _vals(g)
    if v.min() < 0:
        return f"phi >= 0 fails (min = {v.min():.3e})"
    var, mass = float(variation(v)), float(np.mean(v))
    if var > a * mass:
        return f"var(phi) <= a*int(phi) fails ({var:.6g} > {a:g} * {mass:.6g})"
    return None


@dataclass(frozen=True)
class HilbertReport:
    xi: float
    upsilon: float
    theta: float


def _in_cone_or_zero(h: np.ndarray, a: float, scale: float) -> bool:
    tol = 1e-13 * scale
    if h.min() < -tol:
        return False
    return variation(h) - a * np.mean(h) <= tol * (1.0 + a)


def hilbert_metric(g1, g2, cone) -> HilbertReport:
    """``Theta_a(g1, g2) = log(Upsilon / Xi)`` with the bounds found by bisection.

    ``Xi = sup{l >= 0 : g2 - l*g1 in C_a u {0}}`` and
    ``Upsilon = inf{m >= 0 : m*g1 - g2 in C_a u {0}}``.  The feasibility sets are
    intervals (nonnegativity is linear in the scalar, the cone inequality is
    convex), so bisection on the indicator is exact up to the tolerance.
    """
    a = _aperture(cone)
    v1, v2 = _vals(g1), _vals(g2)
    if v1.shape != v2.shape:
        raise ShapeError(f"grid sizes differ: {v1.shape} vs {v2.shape}")
    for name, v in (("first", v1), ("second", v2)):
        why = cone_violation(v, a)
        if why is not None:
            raise PreconditionError(f"{name} argument is not in C_a: {why}")
    if not np.any(v1 > 0) or not np.any(v2 > 0):
        raise PreconditionError("Hilbert metric is undefined for the zero function")
    scale = max(v1.max(), v2.max())

    pos = v1 > 0
    xi = _largest_feasible(lambda lam: _in_cone_or_zero(v2 - lam * v1, a, scale + lam * v1.max()),
                           float(np.min(v2[pos] / v1[pos])))
    if np.any((v1 <= 0) & (v2 > 0)):
        upsilon = math.inf
    else:
        upsilon = _smallest_feasible(lambda mu: _in_cone_or_zero(mu * v1 - v2, a, scale + mu * v1.max()),
                                     float(np.max(v2[pos] / v1[pos])))
    if xi <= 0 or not math.isfinite(upsilon):
        return HilbertReport(xi=xi, upsilon=upsilon, theta=math.inf)
    return HilbertReport(xi=xi, upsilon=upsilon, theta=max(0.0, math.log(upsilon / xi)))


def _largest_feasible(feasible, upper: float) -> float:
    # 0 is feasible (g2 in C_a); the feasible set is [0, x*] with x* <= upper
    if feasible(upper):
        return upper
    lo, hi = 0.0, upper
    while hi - lo > _BISECT_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _smallest_feasible(feasible, lower: float, max_doublings: int = 64) -> float:
    if feasible(lower):
        return lower
    hi = max(lower, 1e-300) * 2.0
    for _ in range(max_doublings):
        if feasible(hi):
            break
        hi *= 2.0
    else:
        return math.inf
    lo = lower
    while hi - lo > _BISECT_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def theta_to_constant_bound(psi, nu: float, cone) -> float:
    """Upper bound on ``Theta_a(psi, 1)`` for normalized ``psi`` in ``C_{nu a}``."""
    v = _vals(psi)
    V = ConeParams(_aperture(cone)).V
    if v.min() <= 0:
        return math.inf
    return math.log((1 + nu) * (1 + V) * v.max() / ((1 - nu) * (1 - V) * v.min()))
