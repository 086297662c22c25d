"""Monte Carlo trajectories ``x, f_0 x, f_1 f_0 x, ...`` with ``x ~ h_0 dm``.

Orbits are iterated with the exact maps, not the grid operators.  Expanding
maps shed one bit of a float per doubling, so a plain float64 orbit of
``2x mod 1`` reaches 0 after about 53 steps.  After every step we therefore
add a tiny uniform perturbation (at most ``REFRESH_SCALE``) that keeps the
point in the same grid bin; this restores the discarded low-order bits and
amounts to a dynamical noise far below grid resolution.

Samples are processed in fixed-size chunks, each with its own generator
spawned from the master seed, so results do not depend on how the work is
scheduled.
"""
from __future__ import annotations

import numpy as np

from .errors import PreconditionError
from .transfer import Cocycle

REFRESH_SCALE = 2.0**-44
CHUNK = 512


def sample_initial(h0, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from the piecewise-constant density ``h0``."""
    h0 = np.asarray(h0, dtype=float)
    n = h0.size
    if np.any(h0 < -1e-12) or abs(float(np.mean(h0)) - 1.0) > 1e-8:
        raise PreconditionError("initial density must be nonnegative with unit integral")
    p = np.clip(h0, 0.0, None)
    bins = rng.choice(n, size=size, p=p / p.sum())
    return (bins + rng.random(size)) / n


def _refresh(y: np.ndarray, n_bins: int, rng: np.random.Generator) -> np.ndarray:
    y = np.minimum(y, np.nextafter(1.0, 0.0))
    b = np.floor(y * n_bins)
    e = rng.uniform(-REFRESH_SCALE, REFRESH_SCALE, size=y.size)
    out = y + e
    bad = (np.floor(out * n_bins) != b) | (out < 0.0) | (out >= 1.0)
    out[bad] = y[bad] - e[bad]
    bad = (np.floor(out * n_bins) != b) | (out < 0.0) | (out >= 1.0)
    out[bad] = y[bad]
    return out


def trajectory_bins(cocycle: Cocycle, h, n: int, n_samples: int, seed: int = 0) -> np.ndarray:
    """Grid bins of ``f_omega^k x`` for ``k = 0..n``; shape ``(n_samples, n + 1)``."""
    cocycle.path.require(0, n)
    nb = cocycle.n_bins
    maps = [cocycle.map(k) for k in range(n)]
    out = np.empty((n_samples, n + 1), dtype=np.int32)
    n_chunks = -(-n_samples // CHUNK)
    for c, ss in enumerate(np.random.SeedSequence(seed).spawn(n_chunks)):
        rng = np.random.default_rng(ss)
        lo, hi = c * CHUNK, min(n_samples, (c + 1) * CHUNK)
        x = sample_initial(h[0], hi - lo, rng)
        out[lo:hi, 0] = np.minimum(np.floor(x * nb), nb - 1)
        for k in range(n):
            x = _refresh(maps[k]._evaluate_unchecked(x), nb, rng)
            out[lo:hi, k + 1] = np.minimum(np.floor(x * nb), nb - 1)
    return out
