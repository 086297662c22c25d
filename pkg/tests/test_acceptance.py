"""One test per acceptance criterion.

Each test prints a single ``[criterion N] PASS|FAIL ...`` line with the measured
values and the pinned tolerances, then asserts.  Run with ``pytest -s`` to see
the lines inline; they are also kept in the captured output of failures.
"""
import math
import time

import numpy as np
import pytest

from quenchedlab.acim import (
    cone_contraction_check,
    equivariance_residual,
    minoration_estimate,
    solve_equivariant,
)
from quenchedlab.driving import sample_path
from quenchedlab.experiment import example_names, example_path, load_config
from quenchedlab.limits import (
    ASIP_LABEL,
    asip_error_scaling,
    birkhoff_samples,
    clt_test,
    coboundary_test,
)
from quenchedlab.martingale import (
    ce_property_sides,
    center_observable,
    decompose,
    martingale_residual,
    orthogonality_matrix,
    sprindzuk_diagnostic,
    telescoping_residual,
)
from quenchedlab.sampling import trajectory_bins
from quenchedlab.spaces import bv_norm, l1_norm, sup_norm, variation
from quenchedlab.stats import Observable, fiberwise_variance, green_kubo_sigma2
from quenchedlab.transfer import Cocycle

# pinned tolerances
C1_L1, C1_RESID, C1_SECONDS = 1e-6, 1e-12, 5.0
C2_SECONDS = 60.0
C3_SIGMA_REL, C3_TAU_REL = 0.02, 0.05
C4_TAU_SLACK, C4_SIGMA_REL = 0.1, 0.03
C5_GAP, C5_RESID, C5_ORTH, C5_TELE, C5_SECONDS = 1e-10, 1e-9, 1e-9, 1e-9, 30.0
C6_TOL = 1e-10
C7_P, C7_VAR_REL = 0.01, 0.05
C8_SLOPE = 0.6
C9_SLACK = 0.05
C10_C = 0.05
C11_TOL, C11_GRIDS = 1e-9, 10_000


def verdict(n, ok, detail):
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    return line


def config(name):
    return load_config(example_path(name))


def cocycle_for(cfg, n_past, n_future, n_bins=None, method=None):
    path = sample_path(cfg.base_spec(), n_past, n_future, seed=cfg.seed)
    return Cocycle(cfg.map_family(), path, n_bins or cfg.n_bins, method or cfg.backend)


def cos_obs(n_bins, k=1):
    return Observable.from_function(lambda x: np.cos(2 * np.pi * k * x), n_bins)


def identity_obs(n_bins):
    return Observable.from_function(lambda x: x, n_bins)


def test_criterion_01_trivial_family_density():
    t = time.perf_counter()
    c = cocycle_for(config("lebesgue_pair"), 40, 2001, n_bins=1024, method="exact_markov")
    h = solve_equivariant(c, range(0, 2001), depth=40)
    err = float(np.max(l1_norm(h.densities - 1.0)))
    res = equivariance_residual(c, h)
    secs = time.perf_counter() - t
    ok = err <= C1_L1 and res <= C1_RESID and secs < C1_SECONDS
    line = verdict(1, ok, f"max|h-1|_1={err:.2e} (<= {C1_L1}), residual={res:.2e} (<= {C1_RESID}), "
                          f"{secs:.2f}s (< {C1_SECONDS}s)")
    assert ok, line


def test_criterion_02_nontrivial_density_vs_doubled_resolution():
    t = time.perf_counter()
    cfg = config("smooth_pair")
    n = 2048
    coarse = cocycle_for(cfg, 200, 11, n_bins=n)
    fine = cocycle_for(cfg, 200, 11, n_bins=2 * n)
    h = solve_equivariant(coarse, range(0, 10))
    h2 = solve_equivariant(fine, range(0, 10))
    oracle = h2.densities.reshape(10, n, 2).mean(axis=2)
    gap = float(np.max(l1_norm(h.densities - oracle)))
    secs = time.perf_counter() - t
    ok = gap <= 2 / n and secs < C2_SECONDS and coarse.method == "ulam"
    line = verdict(2, ok, f"L1 gap {gap:.2e} (<= 2/{n} = {2 / n:.2e}), depth {h.pullback_depth}, "
                          f"{secs:.1f}s (< {C2_SECONDS}s)")
    assert ok, line


def test_criterion_03_variance_doubling_cos():
    cfg = config("single_doubling")
    c = cocycle_for(cfg, 40, 2001, n_bins=4096)
    h = solve_equivariant(c, range(0, 2001), depth=40)
    cos = cos_obs(4096)
    sigma2 = green_kubo_sigma2(c, cos, h, 20).sigma2
    tau = fiberwise_variance(c, center_observable(cos, h, c, stop=2000), h, 2000)
    ratio = tau[-1] / 2000
    ok = abs(sigma2 - 0.5) <= C3_SIGMA_REL * 0.5 and abs(ratio - sigma2) <= C3_TAU_REL * sigma2
    line = verdict(3, ok, f"Sigma^2={sigma2:.6f} (0.5 +- {C3_SIGMA_REL:.0%}), tau_2000^2/2000={ratio:.6f} "
                          f"(Sigma^2 +- {C3_TAU_REL:.0%})")
    assert ok, line


def test_criterion_04_coboundary_dichotomy():
    cfg = config("coboundary")
    c = cocycle_for(cfg, 40, 2001, n_bins=1024)
    h = solve_equivariant(c, range(0, 2001), depth=40)
    psi = Observable.from_function(lambda x: np.cos(4 * np.pi * x) - np.cos(2 * np.pi * x), 1024)
    v1 = coboundary_test(c, center_observable(psi, h, c), h, 2000)
    bound = 4 * 1.0**2 + C4_TAU_SLACK
    pcfg = config("lebesgue_pair")
    pc = cocycle_for(pcfg, 40, 2001)
    ph = solve_equivariant(pc, range(0, 2001), depth=40)
    v2 = coboundary_test(pc, center_observable(cos_obs(1024), ph, pc), ph, 2000)
    sigma2 = green_kubo_sigma2(pc, cos_obs(1024), ph, pcfg.gk_lags, ensemble=16, base=pcfg.base_spec()).sigma2
    ok = (v1.verdict == "coboundary" and v1.evidence["sup_tau2"] <= bound
          and v2.verdict == "nondegenerate" and abs(sigma2 - 0.5) <= C4_SIGMA_REL * 0.5)
    line = verdict(4, ok, f"coboundary case: {v1.verdict}, sup tau^2={v1.evidence['sup_tau2']:.4f} (<= {bound}); "
                          f"random pair cos: {v2.verdict}, Sigma^2={sigma2:.4f} (0.5 +- {C4_SIGMA_REL:.0%})")
    assert ok, line


@pytest.fixture(scope="module")
def pair_identity_setup():
    cfg = config("lebesgue_pair")
    c = cocycle_for(cfg, 40, 2001, method="exact_markov")
    h = solve_equivariant(c, range(0, 2001), depth=40)
    psi = center_observable(identity_obs(1024), h, c)
    return cfg, c, h, psi


def test_criterion_05_martingale_identities(pair_identity_setup):
    t = time.perf_counter()
    _, c, h, psi = pair_identity_setup
    n = 50
    s = decompose(c, psi, h, n, mode="both")
    res = martingale_residual(c, s, h)
    E = orthogonality_matrix(c, s, h, 30)
    orth = float(np.abs(np.triu(E, 1)).max())
    tele = telescoping_residual(s, trajectory_bins(c, h, n, 1000, seed=0))
    secs = time.perf_counter() - t
    ok = (s.closed_form_gap <= C5_GAP and res <= C5_RESID and orth <= C5_ORTH and tele <= C5_TELE
          and secs < C5_SECONDS and c.method == "exact_markov")
    line = verdict(5, ok, f"G gap {s.closed_form_gap:.1e} (<= {C5_GAP}), residual {res:.1e} (<= {C5_RESID}), "
                          f"orthogonality {orth:.1e} (<= {C5_ORTH}), telescoping {tele:.1e} (<= {C5_TELE}), "
                          f"{secs:.2f}s (< {C5_SECONDS}s)")
    assert ok, line


def test_criterion_06_conditional_expectation(pair_identity_setup):
    _, c, h, _ = pair_identity_setup
    n = 50
    x = (np.arange(1024) + 0.5) / 1024
    phi = np.exp(np.sin(2 * np.pi * x)) + x
    rng = np.random.default_rng(6)
    tests = [np.ones(1024), x, np.cos(6 * np.pi * x), (x < 0.37).astype(float), rng.normal(size=1024)]
    worst = 0.0
    for l in (0, 3, n):
        for g in tests:
            lhs, rhs = ce_property_sides(c, phi, l, n, h, g)
            worst = max(worst, abs(lhs - rhs))
    ok = worst <= C6_TOL
    line = verdict(6, ok, f"max defect over 5 test functions, l in (0, 3, {n}): {worst:.1e} (<= {C6_TOL})")
    assert ok, line


def test_criterion_07_clt_doubling_cos():
    cfg = config("single_doubling")
    c = cocycle_for(cfg, 40, 301, n_bins=4096)
    h = solve_equivariant(c, range(0, 301), depth=40)
    psi = center_observable(cos_obs(4096), h, c)
    tau = fiberwise_variance(c, psi, h, 300)
    s = birkhoff_samples(c, psi, h, 300, 5000, seed=cfg.seed)
    r = clt_test(s, tau[-1] / 300, 300)
    ok = r.p_value > C7_P and abs(r.sample_variance - 150) <= C7_VAR_REL * 150
    line = verdict(7, ok, f"KS p={r.p_value:.4f} (> {C7_P}), Var S_300={r.sample_variance:.2f} "
                          f"(150 +- {C7_VAR_REL:.0%})")
    assert ok, line


def test_criterion_08_sprindzuk(pair_identity_setup):
    cfg, c, h, psi = pair_identity_setup
    sigma2 = green_kubo_sigma2(c, identity_obs(1024), h, cfg.gk_lags, ensemble=16, base=cfg.base_spec()).sigma2
    s = decompose(c, psi, h, 2000)
    r = sprindzuk_diagnostic(c, s, h, 2000, 4000, seed=cfg.seed)
    ratio = r.Theta_n / np.arange(1, 2001)
    lo, hi = 0.1 * sigma2, 10 * (sigma2 + r.sup_M2_var)
    ok = r.slope <= C8_SLOPE and ratio.min() >= lo and ratio.max() <= hi
    line = verdict(8, ok, f"slope {r.slope:.3f} (<= {C8_SLOPE}), Theta(n)/n in [{ratio.min():.3f}, {ratio.max():.3f}] "
                          f"within [{lo:.3f}, {hi:.3f}], Sigma^2={sigma2:.4f}")
    assert ok, line


def shipped_families():
    seen = {}
    for name in example_names():
        cfg = config(name)
        key = repr(cfg.family)
        if key not in seen:
            seen[key] = cfg
    return list(seen.values())


def test_criterion_09_cone_machinery():
    parts, ok = [], True
    for cfg in shipped_families():
        c = cocycle_for(cfg, 0, 200)
        r = cone_contraction_check(c, 8, R=1, N=10, pairs=50, seed=cfg.seed)
        good = (r.inclusion_rate == 1.0 and r.kappa_hat < 1 and r.kappa_hat <= r.birkhoff_bound + C9_SLACK
                and r.bv_theta_ok)
        ok &= good
        parts.append(f"{cfg.name}: incl={r.inclusion_rate:.2f} kappa={r.kappa_hat:.2e} "
                     f"tanh(D/4)={r.birkhoff_bound:.2e} bv-theta excess={r.bv_theta_excess:.1e}")
    line = verdict(9, ok, f"a=8, RN=10, 50 pairs, slack {C9_SLACK}; " + "; ".join(parts))
    assert ok, line


def test_criterion_10_minoration():
    parts, ok = [], True
    for cfg in shipped_families():
        depth = 60 if cfg.depth == "auto" else int(cfg.depth)
        c = cocycle_for(cfg, depth, 501)
        est = minoration_estimate(c, 8, n=10, trials=100, seed=cfg.seed)
        h = solve_equivariant(c, range(0, 501), depth=depth)
        good = est >= C10_C and h.c_lower >= est / 2
        ok &= good
        parts.append(f"{cfg.name}: c={est:.3f} min esinf h={h.c_lower:.3f}")
    line = verdict(10, ok, f"c >= {C10_C} and min esinf h >= c/2; " + "; ".join(parts))
    assert ok, line


def test_criterion_11_space_axioms():
    rng = np.random.default_rng(11)
    fails = 0
    for i in range(C11_GRIDS):
        n = int(rng.integers(2, 65))
        scale = 10.0 ** rng.uniform(-3, 3)
        g, h = rng.normal(size=n) * scale, rng.normal(size=n) * scale
        t = rng.normal() * 10
        checks = [
            abs(variation(t * g) - abs(t) * variation(g)) <= C11_TOL * (1 + abs(t) * variation(g)),
            variation(g + h) <= variation(g) + variation(h) + C11_TOL * (1 + variation(g) + variation(h)),
            sup_norm(g) <= l1_norm(g) + variation(g) + C11_TOL * (1 + sup_norm(g)),
        ]
        p, q = np.abs(g), np.abs(h)
        checks.append(bv_norm(p * q) <= bv_norm(p) * bv_norm(q) * (1 + C11_TOL) + C11_TOL)
        w = p + rng.uniform(0.01, 1.0) * scale
        checks.append(variation(1 / w) <= variation(w) / w.min() ** 2 * (1 + C11_TOL) + C11_TOL)
        fails += not all(checks)
    ok = fails == 0
    line = verdict(11, ok, f"{C11_GRIDS} random grids, homogeneity, subadditivity, sup bound, product and "
                           f"reciprocal bounds with unit constants: {fails} failures (tolerance {C11_TOL})")
    assert ok, line


def test_criterion_12_asip_diagnostic_substitute():
    cfg = config("single_doubling")
    c = cocycle_for(cfg, 40, 1001, n_bins=4096)
    h = solve_equivariant(c, range(0, 1001), depth=40)
    psi = center_observable(cos_obs(4096), h, c)
    s = decompose(c, psi, h, 1000)
    samples = birkhoff_samples(c, psi, h, 1000, 2000, seed=cfg.seed)
    a = asip_error_scaling(samples, 0.5, s.second_moments(h), seed=1)
    b = asip_error_scaling(samples, 0.5, s.second_moments(h), seed=1)
    finite = (a.exponent_hat is not None and math.isfinite(a.exponent_hat)
              and all(math.isfinite(v) for v in a.ci) and a.ci[0] <= a.exponent_hat <= a.ci[1])
    nan_free = not any(math.isnan(v) for v in a.mean_discrepancy)
    ok = finite and nan_free and a == b and a.label == ASIP_LABEL and "diagnostic" in a.label
    line = verdict(12, ok, f"exponent {a.exponent_hat:.3f} CI ({a.ci[0]:.3f}, {a.ci[1]:.3f}), deterministic={a == b}, "
                           f"NaN-free={nan_free}, labeled diagnostic")
    assert ok, line
