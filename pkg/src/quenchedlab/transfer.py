"""Transfer operators on the uniform grid and their cocycles along a driving path.

A backend stores the *pieces* ``B_i ∩ f^{-1} B_j`` of the map, ordered along
[0, 1], with their exact lengths.  Everything else derives from the pieces:

* the mass-flow matrix ``T[i, j] = n * m(B_i ∩ f^{-1} B_j)`` (row-stochastic);
* the transfer operator on grid densities, ``L v = T^T v``;
* the discrete Koopman operator ``T psi`` (bin averages of ``psi∘f``);
* functions on the fine partition such as ``G∘f`` or ``(psi∘f) * phi``, and the
  transfer operator acting on them.

For piecewise-affine maps whose grid is Markov (every bin piece maps affinely
onto a union of bins) the ``exact_markov`` backend reproduces the true transfer
operator on grid functions, so all identities hold to rounding.  The ``ulam``
backend is Ulam's projection ``pi L pi`` and carries an O(1/n) bias.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .driving import OmegaPath
from .errors import ConfigurationError, PreconditionError, ShapeError
from .maps import MapFamily, PiecewiseMap
from .spaces import _vals, bv_norm, l1_norm, variation

METHODS = ("exact_markov", "ulam")
_SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class TransferBackend:
    method: str
    n_bins: int
    map_id: str
    src: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)
    length: np.ndarray = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)
    matrix_t: sp.csr_matrix = field(repr=False)
    weight: np.ndarray = field(repr=False)

    @property
    def n_pieces(self) -> int:
        return self.src.size

    def apply(self, v):
        """Push a density (or a stack of densities along axis 0) forward."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.n_bins:
            raise ShapeError(f"backend has {self.n_bins} bins, got shape {v.shape}")
        if v.ndim == 1:
            return self.matrix_t @ v
        return (self.matrix_t @ v.T).T

    def koopman(self, psi):
        """Bin averages of ``psi∘f`` for a grid function ``psi``."""
        psi = np.asarray(psi, dtype=float)
        if psi.shape[-1] != self.n_bins:
            raise ShapeError(f"backend has {self.n_bins} bins, got shape {psi.shape}")
        return self.matrix @ psi

    # -- functions on the fine partition (one value per piece) --

    def lift(self, g):
        """A grid function seen on the pieces."""
        return np.asarray(g, dtype=float)[self.src]

    def compose(self, g):
        """``g∘f`` on the pieces (exact for piecewise-constant ``g``)."""
        return np.asarray(g, dtype=float)[self.dst]

    def transfer_pieces(self, F):
        """Transfer operator applied to a function given on the pieces."""
        return np.bincount(self.dst, weights=self.weight * F, minlength=self.n_bins)

    def average_pieces(self, F):
        """Bin averages of a function given on the pieces."""
        return np.bincount(self.src, weights=self.weight * F, minlength=self.n_bins)

    def integrate_pieces(self, F):
        return float(np.dot(self.length, F))

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def to_csv(self, path):
        dense = self.to_dense()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source_bin"] + [f"to_{j}" for j in range(self.n_bins)])
            for i, row in enumerate(dense):
                w.writerow([i] + [repr(float(x)) for x in row])


def piece_variation(F) -> float:
    return float(np.sum(np.abs(np.diff(F))))


def _snap(x: np.ndarray, n: int) -> np.ndarray:
    r = np.round(x * n)
    return np.where(np.abs(x * n - r) < _SNAP, r / n, x)


def _branch_pieces(br, n: int):
    a, b = br.a, br.b
    lo, hi = br.image
    edges = np.arange(math.floor(a * n) + 1, math.ceil(b * n)) / n
    edges = edges[(edges > a) & (edges < b)]
    levels = np.arange(math.floor(lo * n) + 1, math.ceil(hi * n)) / n
    levels = levels[(levels > lo) & (levels < hi)]
    pre = _snap(br.inverse(levels), n) if levels.size else np.empty(0)
    cuts = np.unique(np.concatenate([[a, b], edges, pre]))
    keep = np.concatenate([[True], np.diff(cuts) > 1e-15])
    cuts = cuts[keep]
    cuts[-1] = b
    x0, x1 = cuts[:-1], cuts[1:]
    mid = 0.5 * (x0 + x1)
    src = np.clip(np.floor(mid * n).astype(np.int64), 0, n - 1)
    dst = np.clip(np.floor(br.forward(mid) * n).astype(np.int64), 0, n - 1)
    return src, dst, x1 - x0


def build_backend(fmap: PiecewiseMap, n_bins: int, method: str = "ulam") -> TransferBackend:
    if method not in METHODS:
        raise ConfigurationError(f"unknown backend method {method!r}; expected one of {METHODS}")
    if n_bins < 2:
        raise ConfigurationError("a backend needs at least 2 bins")
    if method == "exact_markov" and not fmap.is_grid_markov(n_bins):
        raise ConfigurationError(
            f"{fmap.name} is not Markov on the {n_bins}-bin grid; use method='ulam'"
        )
    parts = [_branch_pieces(br, n_bins) for br in fmap.branches]
    src = np.concatenate([p[0] for p in parts])
    dst = np.concatenate([p[1] for p in parts])
    length = np.concatenate([p[2] for p in parts])
    weight = n_bins * length
    T = sp.csr_matrix((weight, (src, dst)), shape=(n_bins, n_bins))
    T.sum_duplicates()
    for arr in (src, dst, length, weight):
        arr.setflags(write=False)
    return TransferBackend(
        method=method,
        n_bins=n_bins,
        map_id=fmap.name,
        src=src,
        dst=dst,
        length=length,
        matrix=T,
        matrix_t=T.T.tocsr(),
        weight=weight,
    )


def apply(backend: TransferBackend, g):
    return backend.apply(_vals(g))


def choose_method(family: MapFamily, n_bins: int) -> str:
    return "exact_markov" if all(f.is_grid_markov(n_bins) for f in family.maps) else "ulam"


class Cocycle:
    """Transfer operators ``L_{sigma^k omega}`` along a fixed path.

    Backends are built once per driving symbol and shared across offsets.
    """

    def __init__(self, family: MapFamily, path: OmegaPath, n_bins: int, method: str = "auto"):
        if path.symbol_count > len(family):
            raise ConfigurationError(
                f"path uses {path.symbol_count} symbols but the family has {len(family)} maps"
            )
        self.family = family
        self.path = path
        self.n_bins = int(n_bins)
        self.method = choose_method(family, n_bins) if method == "auto" else method
        self._backends: dict[int, TransferBackend] = {}

    def with_path(self, path: OmegaPath) -> "Cocycle":
        other = Cocycle.__new__(Cocycle)
        other.family, other.path, other.n_bins, other.method = self.family, path, self.n_bins, self.method
        other._backends = self._backends
        return other

    def backend_for_symbol(self, s: int) -> TransferBackend:
        if s not in self._backends:
            self._backends[s] = build_backend(self.family[s], self.n_bins, self.method)
        return self._backends[s]

    def backend(self, k: int) -> TransferBackend:
        return self.backend_for_symbol(self.path[k])

    def map(self, k: int) -> PiecewiseMap:
        return self.family[self.path[k]]

    def step(self, k: int, v):
        return self.backend(k).apply(v)

    def apply(self, j: int, k: int, v):
        """``L_{sigma^j omega}^{(k)} v``: offsets ``j, ..., j+k-1`` in that order."""
        if k < 0:
            raise PreconditionError("cocycle length must be nonnegative")
        self.path.require(j, j + k)
        out = np.asarray(_vals(v), dtype=float)
        for i in range(j, j + k):
            out = self.backend(i).apply(out)
        return out


def cocycle_apply(cocycle: Cocycle, j: int, k: int, g):
    return cocycle.apply(j, k, g)


def duality_residual(backend: TransferBackend, fmap: PiecewiseMap, phi, psi, composition: str = "exact") -> float:
    """Max of the duality defect and the ``L((psi∘f) phi) = psi L phi`` defect (L1).

    ``composition="exact"`` represents ``psi∘f`` on the fine partition;
    ``"midpoint"`` samples it at bin midpoints, which is exact only when ``psi``
    is constant on the images of bins.
    """
    phi, psi = _vals(phi), _vals(psi)
    n = backend.n_bins
    if phi.shape != (n,) or psi.shape != (n,):
        raise ShapeError("phi and psi must match the backend grid")
    Lphi = backend.apply(phi)
    lhs = float(np.mean(Lphi * psi))
    if composition == "exact":
        rhs = backend.integrate_pieces(backend.lift(phi) * backend.compose(psi))
        L_prod = backend.transfer_pieces(backend.lift(phi) * backend.compose(psi))
    elif composition == "midpoint":
        mids = (np.arange(n) + 0.5) / n
        psi_f = psi[np.clip(np.floor(fmap.evaluate(mids) * n).astype(int), 0, n - 1)]
        rhs = float(np.mean(phi * psi_f))
        L_prod = backend.apply(phi * psi_f)
    else:
        raise ConfigurationError(f"unknown composition mode {composition!r}")
    return max(abs(lhs - rhs), float(l1_norm(L_prod - psi * Lphi)))


# -- regularity checks -----------------------------------------------------


def random_test_functions(rng: np.random.Generator, n_bins: int, count: int, nonnegative: bool = False) -> np.ndarray:
    """A mixed bag of grid functions: smooth, stepped and rough."""
    out = np.empty((count, n_bins))
    x = (np.arange(n_bins) + 0.5) / n_bins
    for i in range(count):
        kind = i % 3
        if kind == 0:
            k = rng.integers(1, 6)
            g = rng.normal(size=k) @ np.cos(2 * np.pi * np.outer(np.arange(1, k + 1), x) + rng.uniform(0, 2 * np.pi, (k, 1)))
        elif kind == 1:
            m = int(rng.integers(2, 12))
            g = np.repeat(rng.normal(size=m), -(-n_bins // m))[:n_bins]
        else:
            g = np.cumsum(rng.normal(size=n_bins)) / math.sqrt(n_bins)
        if nonnegative:
            g = g - g.min() + rng.uniform(0, 0.5)
        out[i] = g
    return out


@dataclass(frozen=True)
class BVGrowthReport:
    C: float
    max_ratio: float
    violations: int
    samples: int


def bv_growth_check(cocycle: Cocycle, C: float, samples: int = 64, seed: int = 0) -> BVGrowthReport:
    """Compare ``||L g||_BV / ||g||_BV`` with the one-step constant ``C``."""
    rng = np.random.default_rng(seed)
    G = random_test_functions(rng, cocycle.n_bins, samples)
    ratios = []
    offsets = rng.integers(0, max(1, cocycle.path.n_future), size=samples)
    for g, k in zip(G, offsets):
        ratios.append(float(bv_norm(cocycle.step(int(k), g)) / bv_norm(g)))
    ratios = np.array(ratios)
    return BVGrowthReport(C=C, max_ratio=float(ratios.max()), violations=int(np.sum(ratios > C)), samples=samples)


@dataclass(frozen=True)
class LasotaYorkeFit:
    N: int
    alpha: float
    K: float
    samples: int

    @property
    def contracting(self) -> bool:
        return self.alpha < 1.0

    @property
    def iterated_constant(self) -> float:
        """``K / (1 - alpha)``, the constant of the iterated inequality."""
        return self.K / (1.0 - self.alpha) if self.alpha < 1 else math.inf


def lasota_yorke_fit(cocycle: Cocycle, N: int, samples: int = 96, seed: int = 0) -> LasotaYorkeFit:
    """Tightest-on-average ``(alpha, K)`` with ``var(L^N g) <= alpha var(g) + K ||g||_1`` on all samples."""
    rng = np.random.default_rng(seed)
    G = random_test_functions(rng, cocycle.n_bins, samples)
    span = max(1, cocycle.path.n_future - N)
    starts = rng.integers(0, span, size=samples)
    v = variation(G)
    m = l1_norm(G)
    w = np.array([variation(cocycle.apply(int(j), N, g)) for g, j in zip(G, starts)])
    res = linprog(
        c=[v.mean(), m.mean()],
        A_ub=-np.column_stack([v, m]),
        b_ub=-w,
        bounds=[(0, None), (0, None)],
        method="highs",
    )
    if not res.success:
        raise ConfigurationError(f"Lasota-Yorke fit failed: {res.message}")
    alpha, K = (float(t) for t in res.x)
    return LasotaYorkeFit(N=N, alpha=alpha, K=K, samples=samples)
