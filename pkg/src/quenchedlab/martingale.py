"""Reverse-martingale decomposition of fiberwise Birkhoff sums.

With centered observables ``psi~_k`` and equivariant densities ``h_k``:

    G_0 = 0,   G_{k+1} = L_k(psi~_k h_k + G_k h_k) / h_{k+1}
    M_k = psi~_k + G_k - G_{k+1} o f_k

so that ``sum_{k<n} M_k o f^k = sum_{k<n} psi~_k o f^k - G_n o f^n`` and
``L_k(h_k M_k) = 0``.  ``M_k`` depends on ``x`` through ``x`` itself and through
``f_k(x)``; we store it on the pieces ``B_i ∩ f_k^{-1} B_j`` of the backend,
where it is exactly ``(psi~_k + G_k)[i] - G_{k+1}[j]``.  Every identity below
is then an exact algebraic statement about the grid operators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .errors import DivisionError, PreconditionError
from .sampling import trajectory_bins
from .spaces import bv_norm
from .stats import CenteredObservable, Observable, fiber_values
from .transfer import Cocycle, piece_variation

DENSITY_FLOOR = 1e-8
MODES = ("recursion", "closed_form", "both")


def center_observable(psi, h, cocycle: Cocycle, stop: int | None = None) -> CenteredObservable:
    """Subtract ``int psi_k h_k dm`` on every fiber ``k`` from ``h.start`` up to ``stop``."""
    start = h.start
    stop = h.offsets.stop if stop is None else stop
    h.require(start, stop)
    rows = []
    for k in range(start, stop):
        p = np.asarray(fiber_values(psi, cocycle, k), dtype=float)
        # a constant is its own mean under any probability density
        rows.append(np.zeros_like(p) if np.ptp(p) == 0 else p - float(np.mean(p * h[k])))
    source = psi.source if isinstance(psi, CenteredObservable) else psi
    name = getattr(psi, "name", "observable")
    return CenteredObservable(start, np.array(rows), source=source if isinstance(source, Observable) else None, name=name)


@dataclass(frozen=True, eq=False)
class MartingaleSequences:
    G: np.ndarray = field(repr=False)
    psi_tilde: np.ndarray = field(repr=False)
    built_by: str
    cocycle: Cocycle = field(repr=False)
    closed_form_gap: float | None = None

    @property
    def n(self) -> int:
        return self.psi_tilde.shape[0]

    def left(self, k: int) -> np.ndarray:
        return self.psi_tilde[k] + self.G[k]

    def M_pieces(self, k: int) -> np.ndarray:
        """``M_k`` on the pieces of the backend at offset ``k``."""
        b = self.cocycle.backend(k)
        return b.lift(self.left(k)) - b.compose(self.G[k + 1])

    def M_grid(self, k: int) -> np.ndarray:
        """Bin averages of ``M_k``."""
        return self.cocycle.backend(k).average_pieces(self.M_pieces(k))

    def M_at(self, k: int, bin_k, bin_next) -> np.ndarray:
        return self.left(k)[bin_k] - self.G[k + 1][bin_next]

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.psi_tilde == 0.0) and np.all(self.G == 0.0))

    def second_moments(self, h) -> np.ndarray:
        """``E_omega(M_k^2 o f^k) = int M_k^2 h_k dm`` for k < n."""
        out = np.empty(self.n)
        for k in range(self.n):
            b = self.cocycle.backend(k)
            out[k] = b.integrate_pieces(b.lift(h[k]) * self.M_pieces(k) ** 2)
        return out

    def conditional_second_moment(self, k: int, h) -> np.ndarray:
        """``L_k(h_k M_k^2) / h_{k+1}`` on fiber ``k + 1``."""
        b = self.cocycle.backend(k)
        return b.transfer_pieces(b.lift(h[k]) * self.M_pieces(k) ** 2) / h[k + 1]

    def norms(self) -> dict:
        """Per-``k`` sizes: ``bv(G_k)``, ``||M_k^2||_var``, ``bv(M_k^2)`` and ``sup |M_k|``."""
        bvG = bv_norm(self.G)
        m2_var, m2_bv, m_sup = np.empty(self.n), np.empty(self.n), np.empty(self.n)
        for k in range(self.n):
            b = self.cocycle.backend(k)
            m = self.M_pieces(k)
            m2 = m * m
            v = piece_variation(m2)
            m2_var[k] = v + float(m2.max())
            m2_bv[k] = v + b.integrate_pieces(m2)
            m_sup[k] = float(np.abs(m).max())
        return {"bv_G": bvG, "var_norm_M2": m2_var, "bv_M2": m2_bv, "sup_M": m_sup}


def _check_floor(h, n: int):
    for k in range(n + 1):
        lo = float(h[k].min())
        if lo <= DENSITY_FLOOR:
            raise DivisionError(
                f"equivariant density at offset {k} has esinf {lo:.3e} <= {DENSITY_FLOOR:g}; "
                "the uniform lower bound on h is violated, so division by h is not allowed"
            )


def _rows(psi_tilde, cocycle: Cocycle, n: int) -> np.ndarray:
    return np.array([fiber_values(psi_tilde, cocycle, k) for k in range(n)], dtype=float)


def _recursion(cocycle, P, h, n):
    G = np.zeros((n + 1, cocycle.n_bins))
    for k in range(n):
        G[k + 1] = cocycle.step(k, (P[k] + G[k]) * h[k]) / h[k + 1]
    return G


def _closed_form(cocycle, P, h, n):
    acc = np.zeros((n + 1, cocycle.n_bins))
    for j in range(n):
        v = P[j] * h[j]
        for k in range(j + 1, n + 1):
            v = cocycle.step(k - 1, v)
            acc[k] += v
    G = np.zeros_like(acc)
    for k in range(1, n + 1):
        G[k] = acc[k] / h[k]
    return G


def decompose(cocycle: Cocycle, psi_tilde, h, n: int, mode: str = "recursion") -> MartingaleSequences:
    """``G_0..G_n`` and (implicitly) ``M_0..M_{n-1}``.

    ``mode="closed_form"`` sums ``L^{(k-j)}(psi~_j h_j)`` term by term (quadratic
    cost); ``"both"`` builds the two and records their largest L1 gap.
    """
    if mode not in MODES:
        raise PreconditionError(f"unknown mode {mode!r}; expected one of {MODES}")
    h.require(0, n + 1)
    cocycle.path.require(0, n)
    _check_floor(h, n)
    P = _rows(psi_tilde, cocycle, n)
    gap = None
    if mode == "closed_form":
        G = _closed_form(cocycle, P, h, n)
    else:
        G = _recursion(cocycle, P, h, n)
        if mode == "both":
            G2 = _closed_form(cocycle, P, h, n)
            gap = float(np.max(np.mean(np.abs(G - G2), axis=1)))
    G.setflags(write=False)
    P.setflags(write=False)
    return MartingaleSequences(G=G, psi_tilde=P, built_by=mode, cocycle=cocycle, closed_form_gap=gap)


# -- conditional expectations -------------------------------------------------


def conditional_expectation(cocycle: Cocycle, phi, l: int, n: int, h) -> np.ndarray:
    """The fiber function ``L^{(n-l)}_{sigma^l omega}(h_l phi) / h_n``.

    Composed with ``f^n`` it is the conditional expectation of ``phi o f^l``
    given the sigma-algebra generated by ``f^n``.
    """
    if not 0 <= l <= n:
        raise PreconditionError(f"need 0 <= l <= n, got l={l}, n={n}")
    h.require(l, n + 1)
    if float(h[n].min()) <= DENSITY_FLOOR:
        raise DivisionError(f"equivariant density at offset {n} is not bounded away from zero")
    return cocycle.apply(l, n - l, h[l] * np.asarray(phi, dtype=float)) / h[n]


def koopman_chain(cocycle: Cocycle, g, start: int, stop: int) -> np.ndarray:
    """Bin averages of ``g o f_{stop-1} o ... o f_start`` on fiber ``start``."""
    u = np.asarray(g, dtype=float)
    for k in range(stop - 1, start - 1, -1):
        u = cocycle.backend(k).koopman(u)
    return u


def ce_property_sides(cocycle: Cocycle, phi, l: int, n: int, h, g) -> tuple[float, float]:
    """Both sides of ``int (phi o f^l)(g o f^n) dmu_0 = int CE * g dmu_n``.

    The left side is computed backwards with Koopman operators from offset 0,
    the right side forwards with the conditional-expectation formula.
    """
    phi = np.asarray(phi, dtype=float)
    u = phi * koopman_chain(cocycle, g, l, n)
    lhs = float(np.mean(h[0] * koopman_chain(cocycle, u, 0, l)))
    ce = conditional_expectation(cocycle, phi, l, n, h)
    rhs = float(np.mean(ce * np.asarray(g, dtype=float) * h[n]))
    return lhs, rhs


# -- identities -----------------------------------------------------------------


def martingale_residual(cocycle: Cocycle, seqs: MartingaleSequences, h, n: int | None = None) -> float:
    """``max_k ||L_k(h_k M_k)||_1``; zero in exact arithmetic."""
    n = seqs.n if n is None else min(n, seqs.n)
    worst = 0.0
    for k in range(n):
        b = cocycle.backend(k)
        r = b.transfer_pieces(b.lift(h[k]) * seqs.M_pieces(k))
        worst = max(worst, float(np.mean(np.abs(r))))
    return worst


def orthogonality_matrix(cocycle: Cocycle, seqs: MartingaleSequences, h, k_max: int) -> np.ndarray:
    """``E[i, j] = E_omega((M_i o f^i)(M_j o f^j))`` for ``0 <= i < j <= k_max``.

    Computed backwards: the bin-averaged ``M_j`` is pulled to fiber ``i + 1``
    with Koopman operators and paired with ``h_i M_i`` on the pieces of ``f_i``.
    This route shares nothing with :func:`martingale_residual` beyond the
    sequences themselves.
    """
    if k_max >= seqs.n:
        raise PreconditionError(f"need sequences beyond k_max={k_max}, have n={seqs.n}")
    E = np.zeros((k_max + 1, k_max + 1))
    for j in range(1, k_max + 1):
        v = seqs.M_grid(j)
        for i in range(j - 1, -1, -1):
            b = cocycle.backend(i)
            E[i, j] = b.integrate_pieces(b.lift(h[i]) * seqs.M_pieces(i) * b.compose(v))
            v = b.koopman(v)
    return E


def telescoping_residual(seqs: MartingaleSequences, bins: np.ndarray, n: int | None = None) -> float:
    """Largest ``|sum_{k<n} M_k(f^k x) - sum_{k<n} psi~_k(f^k x) + G_n(f^n x)|`` over trajectories."""
    n = seqs.n if n is None else n
    lhs = np.zeros(bins.shape[0])
    birk = np.zeros(bins.shape[0])
    for k in range(n):
        lhs += seqs.M_at(k, bins[:, k], bins[:, k + 1])
        birk += seqs.psi_tilde[k][bins[:, k]]
    rhs = birk - seqs.G[n][bins[:, n]]
    return float(np.max(np.abs(lhs - rhs)))


# -- Sprindzuk diagnostic ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SprindzukReport:
    skipped: bool
    reason: str | None
    Theta_n: np.ndarray = field(repr=False)
    D_max_mean: np.ndarray = field(repr=False)
    D_max_se: np.ndarray = field(repr=False)
    slope: float
    slope_ci: tuple[float, float]
    sigma_n2: np.ndarray = field(repr=False)
    sup_M2_var: float
    sup_conditional: float
    sup_conditional_half: float
    sup_abs_M: float
    a_n: np.ndarray = field(repr=False)
    d: float


def sprindzuk_diagnostic(
    cocycle: Cocycle,
    seqs: MartingaleSequences,
    h,
    n_max: int,
    n_samples: int,
    seed: int = 0,
    d: float = 0.25,
    bins: np.ndarray | None = None,
) -> SprindzukReport:
    """Growth of ``D_n = sum_{k<n} (E(M_k^2 o f^k | f^{-(k+1)}) - E(M_k^2 o f^k))``.

    ``Theta(n) = sum_{k<n} (E(M_k^2 o f^k) + ||M_k^2||_var)`` is computed by
    quadrature.  ``D_n`` is evaluated along sampled orbits, ``max_{m<=n}|D_m|``
    is averaged over orbits, and its log-log slope against ``n`` is fitted.
    Square-root growth (slope 1/2 up to logarithms) is the expected behaviour.
    """
    if n_max > seqs.n:
        raise PreconditionError(f"sequences built to n={seqs.n}, diagnostic needs {n_max}")
    ks = np.arange(1, n_max + 1)
    a_n = ks ** (0.5 + d)
    if seqs.is_zero:
        z = np.zeros(n_max)
        return SprindzukReport(True, "observable is identically zero after centering", z, z, z,
                               0.0, (0.0, 0.0), z, 0.0, 0.0, 0.0, 0.0, a_n, d)

    e = seqs.second_moments(h)[:n_max]
    nrm = seqs.norms()
    theta = np.cumsum(e + nrm["var_norm_M2"][:n_max])
    cond = [seqs.conditional_second_moment(k, h) for k in range(n_max)]
    if bins is None:
        bins = trajectory_bins(cocycle, h, n_max, n_samples, seed)
    D = np.zeros(bins.shape[0])
    running = np.zeros(bins.shape[0])
    mean_max = np.empty(n_max)
    se_max = np.empty(n_max)
    for k in range(n_max):
        D += cond[k][bins[:, k + 1]] - e[k]
        np.maximum(running, np.abs(D), out=running)
        mean_max[k] = running.mean()
        se_max[k] = running.std(ddof=1) / math.sqrt(running.size) if running.size > 1 else 0.0

    lo = max(10, n_max // 100)
    grid = np.unique(np.geomspace(lo, n_max, num=30).astype(int)) if n_max > lo else ks
    y = mean_max[grid - 1]
    ok = y > 0
    if ok.sum() >= 3:
        fit = sps.linregress(np.log(grid[ok]), np.log(y[ok]))
        slope = float(fit.slope)
        ci = (slope - 1.96 * float(fit.stderr), slope + 1.96 * float(fit.stderr))
    else:
        slope, ci = 0.0, (0.0, 0.0)
    sup_cond = np.array([float(np.max(np.abs(c))) for c in cond])
    return SprindzukReport(
        skipped=False,
        reason=None,
        Theta_n=theta,
        D_max_mean=mean_max,
        D_max_se=se_max,
        slope=slope,
        slope_ci=ci,
        sigma_n2=np.cumsum(e),
        sup_M2_var=float(nrm["var_norm_M2"][:n_max].max()),
        sup_conditional=float(sup_cond.max()),
        sup_conditional_half=float(sup_cond[: max(1, n_max // 2)].max()),
        sup_abs_M=float(nrm["sup_M"][:n_max].max()),
        a_n=a_n,
        d=d,
    )


@dataclass(frozen=True)
class AsipHypothesisChecks:
    sigma_n2_growth: float
    sigma_n2_unbounded: bool
    sup_second_moment: float
    sup_abs_increment: float
    d: float


def asip_hypotheses(seqs: MartingaleSequences, h, d: float = 0.25) -> AsipHypothesisChecks:
    """Numerical proxies for the martingale-ASIP hypotheses.

    ``sigma_n^2 = sum_{k<n} E(M_k^2 o f^k)`` should grow without bound (we check
    that doubling ``n`` at least multiplies it by 1.5), second moments and
    increments should stay bounded.
    """
    if not 0 < d < 0.5:
        raise PreconditionError("d must lie in (0, 1/2)")
    e = seqs.second_moments(h)
    s = np.cumsum(e)
    half = s[seqs.n // 2 - 1] if seqs.n >= 2 else s[-1]
    growth = float(s[-1] / half) if half > 0 else 0.0
    return AsipHypothesisChecks(
        sigma_n2_growth=growth,
        sigma_n2_unbounded=growth >= 1.5,
        sup_second_moment=float(e.max()),
        sup_abs_increment=float(seqs.norms()["sup_M"].max()),
        d=d,
    )
