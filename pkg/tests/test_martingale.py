import numpy as np
import pytest

from conftest import grid_cos, grid_identity
from quenchedlab.acim import EquivariantDensity
from quenchedlab.errors import DivisionError, PreconditionError
from quenchedlab.martingale import (
    asip_hypotheses,
    center_observable,
    ce_property_sides,
    conditional_expectation,
    decompose,
    martingale_residual,
    orthogonality_matrix,
    sprindzuk_diagnostic,
    telescoping_residual,
)
from quenchedlab.sampling import trajectory_bins
from quenchedlab.stats import CenteredObservable, fiberwise_variance


@pytest.fixture(scope="module")
def pair_identity(pair_cocycle, pair_density):
    return center_observable(grid_identity(1024), pair_density, pair_cocycle, stop=2001)


@pytest.fixture(scope="module")
def pair_seqs(pair_cocycle, pair_density, pair_identity):
    return decompose(pair_cocycle, pair_identity, pair_density, 2000)


def test_center_constant_and_mean_zero(doubling_cocycle, doubling_density):
    z = center_observable(np.full(4096, 2.5), doubling_density, doubling_cocycle, stop=10)
    assert z.is_zero
    cos = grid_cos(4096)
    c = center_observable(cos, doubling_density, doubling_cocycle, stop=10)
    np.testing.assert_allclose(c.values, np.tile(cos.values[0], (10, 1)), atol=1e-14)


def test_center_idempotent(smooth_cocycle, smooth_density):
    once = center_observable(grid_identity(1024), smooth_density, smooth_cocycle, stop=50)
    twice = center_observable(once, smooth_density, smooth_cocycle, stop=50)
    np.testing.assert_allclose(once.values, twice.values, atol=1e-15)
    for k in range(50):
        assert abs(np.mean(once.values[k] * smooth_density[k])) <= 1e-15


def test_zero_observable_decomposition(pair_cocycle, pair_density):
    zero = CenteredObservable(0, np.zeros((30, 1024)))
    s = decompose(pair_cocycle, zero, pair_density, 30)
    assert s.is_zero and np.all(s.G == 0)
    assert martingale_residual(pair_cocycle, s, pair_density) == 0.0
    r = sprindzuk_diagnostic(pair_cocycle, s, pair_density, 30, 10)
    assert r.skipped and np.all(r.Theta_n == 0) and np.all(r.D_max_mean == 0)


def test_doubling_cos_is_already_martingale(doubling_cocycle, doubling_density):
    cos = center_observable(grid_cos(4096), doubling_density, doubling_cocycle, stop=20)
    s = decompose(doubling_cocycle, cos, doubling_density, 20)
    assert np.abs(s.G).max() <= 1e-13
    for k in range(5):
        np.testing.assert_allclose(s.M_grid(k), cos.values[k], atol=1e-13)
    assert martingale_residual(doubling_cocycle, s, doubling_density) <= 1e-12


def test_recursion_matches_closed_form(pair_cocycle, pair_density, pair_identity):
    s = decompose(pair_cocycle, pair_identity, pair_density, 50, mode="both")
    assert s.closed_form_gap <= 1e-10
    c = decompose(pair_cocycle, pair_identity, pair_density, 50, mode="closed_form")
    np.testing.assert_allclose(c.G, s.G, atol=1e-12)
    assert np.all(s.G[0] == 0)


def test_identities_random_pair(pair_cocycle, pair_density, pair_seqs):
    assert martingale_residual(pair_cocycle, pair_seqs, pair_density, 50) <= 1e-9
    E = orthogonality_matrix(pair_cocycle, pair_seqs, pair_density, 30)
    assert np.abs(np.triu(E, 1)).max() <= 1e-9
    bins = trajectory_bins(pair_cocycle, pair_density, 50, 500, seed=1)
    assert telescoping_residual(pair_seqs, bins, 50) <= 1e-9


def test_identities_on_ulam_backend(smooth_cocycle, smooth_density):
    psi = center_observable(grid_cos(1024), smooth_density, smooth_cocycle, stop=60)
    s = decompose(smooth_cocycle, psi, smooth_density, 60, mode="both")
    assert smooth_cocycle.method == "ulam"
    assert s.closed_form_gap <= 1e-10
    assert martingale_residual(smooth_cocycle, s, smooth_density) <= 1e-9
    E = orthogonality_matrix(smooth_cocycle, s, smooth_density, 20)
    assert np.abs(np.triu(E, 1)).max() <= 1e-9
    bins = trajectory_bins(smooth_cocycle, smooth_density, 60, 300, seed=2)
    assert telescoping_residual(s, bins) <= 1e-9


def test_division_guard(pair_cocycle, pair_density, pair_identity):
    d = pair_density.densities[:20].copy()
    d[3, 10] = 0.0
    bad = EquivariantDensity(0, d, 40)
    with pytest.raises(DivisionError, match="lower bound"):
        decompose(pair_cocycle, pair_identity, bad, 10)
    with pytest.raises(DivisionError):
        conditional_expectation(pair_cocycle, np.ones(1024), 0, 3, bad)


def test_conditional_expectation_examples(pair_cocycle, pair_density):
    phi = grid_cos(1024).values[0]
    np.testing.assert_allclose(conditional_expectation(pair_cocycle, phi, 7, 7, pair_density), phi)
    np.testing.assert_allclose(conditional_expectation(pair_cocycle, np.ones(1024), 0, 9, pair_density), 1.0, atol=1e-13)
    with pytest.raises(PreconditionError):
        conditional_expectation(pair_cocycle, phi, 5, 3, pair_density)


@pytest.mark.parametrize("l", [0, 3, 12])
def test_conditional_expectation_property(smooth_cocycle, smooth_density, l):
    n = 12
    rng = np.random.default_rng(l)
    x = (np.arange(1024) + 0.5) / 1024
    phi = np.sin(6 * x) + x**2
    for g in (np.ones(1024), x, np.cos(2 * np.pi * x), rng.normal(size=1024), (x > 0.3).astype(float)):
        lhs, rhs = ce_property_sides(smooth_cocycle, phi, l, n, smooth_density, g)
        assert abs(lhs - rhs) <= 1e-10


def test_sprindzuk_random_pair(pair_cocycle, pair_density, pair_seqs):
    r = sprindzuk_diagnostic(pair_cocycle, pair_seqs, pair_density, 2000, 2000, seed=0)
    assert not r.skipped
    assert r.slope <= 0.6
    ratio = r.Theta_n / np.arange(1, 2001)
    assert ratio[100:].max() / ratio[100:].min() < 2.0
    assert r.a_n[-1] == pytest.approx(2000**0.75)


def test_theta_linear_doubling_cos(doubling_cocycle, doubling_density):
    cos = center_observable(grid_cos(4096), doubling_density, doubling_cocycle, stop=400)
    s = decompose(doubling_cocycle, cos, doubling_density, 400)
    r = sprindzuk_diagnostic(doubling_cocycle, s, doubling_density, 400, 200)
    ratio = r.Theta_n / np.arange(1, 401)
    assert 0.1 < ratio.min() and ratio.max() < 10


def test_conditional_moment_bounded_as_n_doubles(pair_cocycle, pair_density, pair_seqs):
    r1 = sprindzuk_diagnostic(pair_cocycle, pair_seqs, pair_density, 500, 50)
    r2 = sprindzuk_diagnostic(pair_cocycle, pair_seqs, pair_density, 1000, 50)
    assert np.isfinite(r2.sup_conditional)
    assert r2.sup_conditional <= 1.1 * r1.sup_conditional
    assert r2.sup_conditional_half == pytest.approx(r1.sup_conditional)


def test_sigma_n_over_tau_n(pair_cocycle, pair_density, pair_identity, pair_seqs):
    sigma = np.cumsum(pair_seqs.second_moments(pair_density))
    tau = fiberwise_variance(pair_cocycle, pair_identity, pair_density, 2000)
    assert sigma[-1] / tau[-1] == pytest.approx(1.0, abs=0.02)
    h = asip_hypotheses(pair_seqs, pair_density)
    assert h.sigma_n2_unbounded and np.isfinite(h.sup_abs_increment)
    with pytest.raises(PreconditionError):
        asip_hypotheses(pair_seqs, pair_density, d=0.7)


def test_norms_are_finite(pair_seqs):
    n = pair_seqs.norms()
    for key in ("bv_G", "var_norm_M2", "bv_M2", "sup_M"):
        assert np.all(np.isfinite(n[key]))
    assert n["bv_G"].max() < 10
