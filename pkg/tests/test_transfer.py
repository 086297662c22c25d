import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quenchedlab.driving import BaseSpec, sample_path
from quenchedlab.errors import ConfigurationError, PreconditionError, RangeError, ShapeError
from quenchedlab.maps import (
    MapFamily,
    affine_table,
    doubling,
    family_constants,
    linear_mod,
    quadratic_mod,
    sine_mod,
    tripling,
)
from quenchedlab.spaces import l1_norm
from quenchedlab.transfer import (
    Cocycle,
    apply,
    build_backend,
    bv_growth_check,
    choose_method,
    cocycle_apply,
    duality_residual,
    lasota_yorke_fit,
    random_test_functions,
)


def interval_oracle(fmap, n):
    """Mass-flow matrix from explicit interval intersections, one branch at a time."""
    T = np.zeros((n, n))
    for br in fmap.branches:
        for i in range(n):
            lo_i, hi_i = max(i / n, br.a), min((i + 1) / n, br.b)
            if hi_i <= lo_i:
                continue
            for j in range(n):
                y0, y1 = max(j / n, br.image[0]), min((j + 1) / n, br.image[1])
                if y1 <= y0:
                    continue
                x0, x1 = sorted(float(t) for t in br.inverse(np.array([y0, y1])))
                T[i, j] += n * max(0.0, min(hi_i, x1) - max(lo_i, x0))
    return T


def sampling_oracle(fmap, n, per_bin=4000):
    x = (np.arange(n * per_bin) + 0.5) / (n * per_bin)
    src = np.floor(x * n).astype(int)
    dst = np.clip(np.floor(fmap.evaluate(x) * n).astype(int), 0, n - 1)
    T = np.zeros((n, n))
    np.add.at(T, (src, dst), 1.0 / per_bin)
    return T


def test_doubling_two_bins():
    b = build_backend(doubling(), 2, "exact_markov")
    np.testing.assert_allclose(b.to_dense(), 0.5 * np.ones((2, 2)))
    np.testing.assert_allclose(apply(b, [2.0, 0.0]), [1.0, 1.0])
    np.testing.assert_allclose(b.apply(np.zeros(2)), 0.0)


def test_tripling_three_bins():
    b = build_backend(tripling(), 3, "exact_markov")
    np.testing.assert_allclose(b.to_dense(), np.ones((3, 3)) / 3)


@pytest.mark.parametrize("fmap", [doubling(), tripling(), linear_mod(3, 0.25), linear_mod(5, 0.7)])
def test_lebesgue_invariance_full_branch(fmap):
    b = build_backend(fmap, 64, "ulam")
    np.testing.assert_allclose(b.apply(np.ones(64)), 1.0, atol=1e-12)


@pytest.mark.parametrize(
    "fmap",
    [doubling(), tripling(), linear_mod(2.5), linear_mod(3, 0.25),
     affine_table([0, 0.25, 1], [2.0, 4 / 3], [0.0, -1 / 3])],
)
def test_matrix_matches_interval_oracle(fmap):
    n = 24
    np.testing.assert_allclose(build_backend(fmap, n).to_dense(), interval_oracle(fmap, n), atol=1e-12)


@pytest.mark.parametrize("fmap", [sine_mod(2, 0.5), quadratic_mod(2.6, 0.2)])
def test_smooth_matrix_matches_sampling(fmap):
    n = 16
    np.testing.assert_allclose(build_backend(fmap, n).to_dense(), sampling_oracle(fmap, n), atol=2e-3)


@pytest.mark.parametrize("fmap", [doubling(), tripling(), linear_mod(3, 0.25)])
def test_exact_and_ulam_agree_on_markov(fmap):
    e = build_backend(fmap, 256, "exact_markov").to_dense()
    u = build_backend(fmap, 256, "ulam").to_dense()
    assert np.abs(e - u).max() <= 1e-12


def test_backend_errors():
    with pytest.raises(ConfigurationError, match="not Markov"):
        build_backend(sine_mod(2, 0.5), 64, "exact_markov")
    with pytest.raises(ConfigurationError):
        build_backend(doubling(), 1)
    with pytest.raises(ConfigurationError):
        build_backend(doubling(), 8, "galerkin")
    with pytest.raises(ShapeError):
        build_backend(doubling(), 8).apply(np.ones(9))


def test_choose_method():
    assert choose_method(MapFamily([doubling(), tripling()]), 1024) == "exact_markov"
    assert choose_method(MapFamily([doubling(), sine_mod(2, 0.5)]), 1024) == "ulam"


@settings(max_examples=40, deadline=None)
@given(i=st.integers(0, 4), seed=st.integers(0, 10**6))
def test_mass_and_positivity(i, seed):
    fmap = [doubling(), sine_mod(2, 0.5), quadratic_mod(2.6, 0.2), linear_mod(2.5), sine_mod(3, 0.8, k=2)][i]
    b = build_backend(fmap, 128)
    assert b.to_dense().min() >= 0
    g = np.random.default_rng(seed).uniform(0, 5, 128)
    assert abs(l1_norm(b.apply(g)) - l1_norm(g)) <= 1e-12 * max(1.0, l1_norm(g))


def test_cocycle_composition():
    fam = MapFamily([doubling(), tripling()])
    path = sample_path(BaseSpec("iid", [0.5, 0.5]), 5, 30, seed=4)
    c = Cocycle(fam, path, 48)
    g = np.random.default_rng(0).normal(size=48)
    np.testing.assert_allclose(c.apply(2, 7, g), c.apply(5, 4, c.apply(2, 3, g)), atol=1e-13)
    np.testing.assert_allclose(cocycle_apply(c, -3, 0, g), g)
    # matrix-product oracle
    dense = [c.backend(k).to_dense() for k in range(2, 9)]
    M = np.eye(48)
    for D in dense:
        M = M @ D
    np.testing.assert_allclose(c.apply(2, 7, g), M.T @ g, atol=1e-12)
    with pytest.raises(RangeError):
        c.apply(25, 10, g)
    with pytest.raises(PreconditionError):
        c.apply(0, -1, g)


def test_doubling_twice_equals_two_step_cocycle():
    path = sample_path(BaseSpec("iid", [1.0]), 0, 3)
    c = Cocycle(MapFamily([doubling()]), path, 32)
    b = build_backend(doubling(), 32)
    g = np.arange(32.0)
    np.testing.assert_allclose(b.apply(b.apply(g)), c.apply(0, 2, g), atol=1e-12)


def test_cocycle_rejects_too_many_symbols():
    path = sample_path(BaseSpec("iid", [0.5, 0.5]), 0, 3)
    with pytest.raises(ConfigurationError):
        Cocycle(MapFamily([doubling()]), path, 16)


def test_duality_examples():
    b = build_backend(doubling(), 2, "exact_markov")
    assert duality_residual(b, doubling(), [2.0, 0.0], [1.0, 0.0]) <= 1e-14
    assert duality_residual(b, doubling(), [2.0, 0.0], [1.0, 0.0], composition="midpoint") > 0.1
    with pytest.raises(ConfigurationError):
        duality_residual(b, doubling(), [1.0, 1.0], [1.0, 1.0], composition="bogus")


@pytest.mark.parametrize("fmap", [doubling(), sine_mod(2, 0.5), quadratic_mod(2.6, 0.2)])
def test_duality_random(fmap):
    rng = np.random.default_rng(1)
    b = build_backend(fmap, 200)
    for _ in range(5):
        phi, psi = rng.normal(size=200), rng.normal(size=200)
        assert duality_residual(b, fmap, phi, psi) <= 1e-12


@pytest.mark.parametrize("n_bins", [64, 256, 1024])
def test_bv_growth_constant(n_bins):
    fam = MapFamily([sine_mod(2, 0.5), quadratic_mod(2.6, 0.2)])
    path = sample_path(BaseSpec("iid", [0.5, 0.5]), 0, 40, seed=2)
    C = family_constants(fam).C
    r = bv_growth_check(Cocycle(fam, path, n_bins), C, samples=48, seed=n_bins)
    assert r.violations == 0 and r.max_ratio <= C


def test_lasota_yorke_fit_contracts():
    fam = MapFamily([sine_mod(2, 0.5), quadratic_mod(2.6, 0.2)])
    path = sample_path(BaseSpec("iid", [0.5, 0.5]), 0, 60, seed=2)
    fit = lasota_yorke_fit(Cocycle(fam, path, 512), N=5, samples=60)
    assert fit.contracting
    assert np.isfinite(fit.iterated_constant) and fit.K >= 0


def test_random_test_functions_shape():
    G = random_test_functions(np.random.default_rng(0), 50, 7, nonnegative=True)
    assert G.shape == (7, 50) and G.min() >= 0


def test_backend_csv(tmp_path):
    p = tmp_path / "T.csv"
    build_backend(doubling(), 4).to_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0].startswith("source_bin") and len(rows) == 5
