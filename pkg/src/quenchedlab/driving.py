"""Base (driving) system: finite two-sided windows of i.i.d. or Markov symbols.

The abstract invertible ergodic base ``sigma`` is only ever realized through a
finite word ``omega[-n_past:n_future]``.  Offset ``k`` of an :class:`OmegaPath`
is the symbol selecting the map applied at time ``k``, i.e. the symbol of
``sigma^k omega``.

All randomness comes from numpy's PCG64 bit generator (``np.random.default_rng``),
seeded with a 64-bit integer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DistributionError, RangeError

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class BaseSpec:
    """Law of the driving process.

    ``kind="iid"`` takes a probability vector in ``weights``; ``kind="markov"``
    takes a row-stochastic matrix, plus an optional ``initial`` law for the
    symbol at offset 0 (default: the stationary law).
    """

    kind: str
    weights: np.ndarray
    initial: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.initial is not None:
            init = np.array(self.initial, dtype=float)
            init.setflags(write=False)
            object.__setattr__(self, "initial", init)
        self.validate()

    @property
    def symbol_count(self) -> int:
        return self.weights.shape[0]

    def validate(self):
        if self.kind not in ("iid", "markov"):
            raise DistributionError(f"unknown base kind {self.kind!r}; expected 'iid' or 'markov'")
        w = self.weights
        if self.kind == "iid":
            if w.ndim != 1 or w.size < 1:
                raise DistributionError("iid weights must be a nonempty probability vector")
            _check_distribution(w, "weights")
        else:
            if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
                raise DistributionError("markov weights must be a square row-stochastic matrix")
            for i, row in enumerate(w):
                _check_distribution(row, f"transition row {i}")
            if not _is_primitive(w):
                raise DistributionError(
                    "markov transition matrix is not irreducible and aperiodic (no power is strictly positive)"
                )
            if self.initial is not None:
                if self.initial.shape != (w.shape[0],):
                    raise DistributionError("initial distribution has the wrong length")
                _check_distribution(self.initial, "initial")

    def stationary(self) -> np.ndarray:
        """Stationary law of a single symbol."""
        if self.kind == "iid":
            return self.weights.copy()
        vals, vecs = np.linalg.eig(self.weights.T)
        i = int(np.argmin(np.abs(vals - 1.0)))
        pi = np.abs(np.real(vecs[:, i]))
        return pi / pi.sum()


def _check_distribution(p: np.ndarray, name: str):
    if not np.all(np.isfinite(p)):
        raise DistributionError(f"{name} contains non-finite entries")
    if np.any(p < 0):
        raise DistributionError(f"{name} has a negative weight: {p.tolist()}")
    if abs(p.sum() - 1.0) > _SUM_TOL:
        raise DistributionError(f"{name} sums to {p.sum()!r}, not 1")


def _is_primitive(P: np.ndarray) -> bool:
    m = P.shape[0]
    # Wielandt: a primitive m x m matrix has a positive power at (m-1)^2 + 1.
    A = (P > 0).astype(float)
    Q = np.eye(m)
    for _ in range((m - 1) ** 2 + 1):
        Q = np.minimum(Q @ A, 1.0)
    return bool(np.all(Q > 0))


@dataclass(frozen=True, eq=False)
class OmegaPath:
    """Symbols for offsets ``-n_past <= k < n_future``; ``symbols[origin]`` is offset 0."""

    symbols: np.ndarray
    origin: int
    symbol_count: int = field(default=0)

    def __post_init__(self):
        s = np.array(self.symbols, dtype=np.int64)
        s.setflags(write=False)
        object.__setattr__(self, "symbols", s)
        if self.symbol_count == 0:
            object.__setattr__(self, "symbol_count", int(s.max()) + 1 if s.size else 1)
        if s.size and (s.min() < 0 or s.max() >= self.symbol_count):
            raise DistributionError("path symbols out of range")

    @property
    def n_past(self) -> int:
        return self.origin

    @property
    def n_future(self) -> int:
        return self.symbols.size - self.origin

    def covers(self, start: int, stop: int) -> bool:
        return start >= -self.n_past and stop <= self.n_future

    def require(self, start: int, stop: int):
        """Raise :class:`RangeError` unless offsets ``start..stop-1`` are realized."""
        if stop <= start:
            return
        if self.covers(start, stop):
            return
        missing = []
        if start < -self.n_past:
            missing.append((start, min(stop, -self.n_past)))
        if stop > self.n_future:
            missing.append((max(start, self.n_future), stop))
        desc = ", ".join(f"[{a}, {b})" for a, b in missing)
        raise RangeError(
            f"path window [{-self.n_past}, {self.n_future}) does not cover offsets {desc}",
            missing=missing,
        )

    def __getitem__(self, k: int) -> int:
        self.require(k, k + 1)
        return int(self.symbols[self.origin + k])

    def window(self, start: int, stop: int) -> np.ndarray:
        self.require(start, stop)
        return self.symbols[self.origin + start : self.origin + stop]

    def __eq__(self, other):
        if not isinstance(other, OmegaPath):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.symbol_count == other.symbol_count
            and np.array_equal(self.symbols, other.symbols)
        )

    def __hash__(self):
        return hash((self.origin, self.symbol_count, self.symbols.tobytes()))


def sample_path(spec: BaseSpec, n_past: int, n_future: int, seed: int | None = None) -> OmegaPath:
    """Draw the window ``omega[-n_past:n_future]`` from the stationary two-sided process.

    Future symbols run the chain forward from offset 0; past symbols run the
    time-reversed stationary chain (for i.i.d. bases both are plain independent
    draws).
    """
    if n_past < 0 or n_future < 1:
        raise RangeError(f"need n_past >= 0 and n_future >= 1, got {n_past}, {n_future}")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    m = spec.symbol_count
    total = n_past + n_future
    if m == 1:
        return OmegaPath(np.zeros(total, dtype=np.int64), n_past, symbol_count=1)

    if spec.kind == "iid":
        symbols = rng.choice(m, size=total, p=spec.weights)
        return OmegaPath(symbols, n_past, symbol_count=m)

    P = spec.weights
    pi = spec.stationary()
    init = pi if spec.initial is None else spec.initial
    # time reversal of a stationary chain: Pr[i, j] = pi_j P[j, i] / pi_i
    Pr = (P.T * pi[None, :]) / pi[:, None]
    Pr /= Pr.sum(axis=1, keepdims=True)
    fwd_cdf = np.cumsum(P, axis=1)
    rev_cdf = np.cumsum(Pr, axis=1)
    u = rng.random(total)
    symbols = np.empty(total, dtype=np.int64)
    symbols[n_past] = min(int(np.searchsorted(np.cumsum(init), u[n_past], side="right")), m - 1)
    for i in range(n_past + 1, total):
        symbols[i] = min(int(np.searchsorted(fwd_cdf[symbols[i - 1]], u[i], side="right")), m - 1)
    for i in range(n_past - 1, -1, -1):
        symbols[i] = min(int(np.searchsorted(rev_cdf[symbols[i + 1]], u[i], side="right")), m - 1)
    return OmegaPath(symbols, n_past, symbol_count=m)


def shift(path: OmegaPath, k: int) -> OmegaPath:
    """Re-index by ``sigma^k``: offset ``j`` of the result is offset ``j + k`` of ``path``."""
    if not (-path.n_past <= k < path.n_future):
        path.require(k, k + 1)
    return OmegaPath(path.symbols, path.origin + k, symbol_count=path.symbol_count)
