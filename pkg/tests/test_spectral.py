import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sqgdisk.spectral import (
    DiskGrid,
    GridField,
    GridSizeError,
    SpectralField,
    analyze,
    analyze_values,
    apply_multiplier,
    build_basis,
    evaluate_points,
    l2_inner,
    lambda_power,
    resolvent_scaled,
    semigroup,
    signed_sum_sq,
    synthesize,
    synthesize_batch,
)

J01 = 2.404825557695773


def rand_field(basis, seed, decay=0.0):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(basis.shape) + 1j * rng.standard_normal(basis.shape)
    return SpectralField(basis, c * basis.lam ** (-decay))


@pytest.fixture(scope="module")
def small():
    b = build_basis(8, 8)
    return b, DiskGrid.for_basis(b)


def test_basis_examples():
    b = build_basis(0, 1)
    assert b.shape == (1, 1)
    assert b.lam[0, 0] == pytest.approx(J01, abs=1e-14)
    b = build_basis(32, 32)
    assert b.shape == (33, 32)
    assert b.mode_count == 2080
    assert len(b.modes()) == 2080
    assert b.lambda_min == pytest.approx(J01, abs=1e-14)


def test_basis_rejects_bad_sizes():
    with pytest.raises(ValueError):
        build_basis(-1, 3)
    with pytest.raises(ValueError):
        build_basis(3, 0)


def test_normalization_against_quadrature_oracle():
    b = build_basis(3, 3)
    from scipy.integrate import quad

    for m in range(4):
        for k in range(1, 4):
            lam, n = b.lam[m, k - 1], b.norm[m, k - 1]
            # complex mode N J_m(lam r) e^{i m t} has unit L^2 norm
            val = 2 * math.pi * quad(lambda r: float(mpmath.besselj(m, lam * r)) ** 2 * r, 0, 1, epsabs=1e-14, limit=200)[0]
            assert n * n * val == pytest.approx(1.0, rel=1e-10)


def test_ground_mode_vanishes_on_boundary(small):
    b, g = small
    e = SpectralField.mode(b, 0, 1)
    assert abs(evaluate_points(e, 1.0, 0.3).real) < 1e-12
    vals = synthesize(e, g).values
    expected = b.norm[0, 0] * np.array([float(mpmath.besselj(0, J01 * r)) for r in g.r])
    assert np.max(np.abs(vals - expected[:, None])) < 1e-13


def test_zero_field(small):
    b, g = small
    assert np.all(synthesize(SpectralField.zeros(b), g).values == 0)


@pytest.mark.parametrize("size", [(8, 8), (16, 12), (24, 24)])
def test_roundtrip(size):
    b = build_basis(*size)
    g = DiskGrid.for_basis(b)
    f = rand_field(b, 1)
    back = analyze(synthesize(f, g), b)
    assert np.max(np.abs(back.coeffs - f.coeffs)) / np.max(np.abs(f.coeffs)) < 1e-10


def test_orthonormality_of_mode(small):
    b, g = small
    e = SpectralField.mode(b, 1, 1)
    c = analyze(synthesize(e, g), b).coeffs
    assert abs(c[1, 0] - 1) < 1e-12
    c[1, 0] = 0
    assert np.max(np.abs(c)) < 1e-10


def test_constant_has_gibbs_expansion(small):
    b, g = small
    one = GridField(g, np.ones((g.nr, g.ntheta)))
    c = analyze(one, b)
    # only radial modes; J_0 coefficients 2 sqrt(pi) / lam
    assert np.max(np.abs(c.coeffs[1:])) < 1e-12
    assert np.allclose(c.coeffs[0].real, 2 * math.sqrt(math.pi) / b.lam[0] * np.sign(c.coeffs[0].real), rtol=1e-10)
    back = synthesize(c, g).values
    assert abs(back[-1, 0] - 1) > 0.05
    # Bessel's inequality: the missing L^2 mass of the constant is positive and shrinks with k
    mass = np.cumsum(np.abs(c.coeffs[0]) ** 2)
    assert np.all(mass < math.pi) and np.all(np.diff(math.pi - mass) < 0)


def test_linearity(small):
    b, g = small
    f, h = rand_field(b, 2), rand_field(b, 3)
    lhs = analyze(GridField(g, synthesize(f, g).values + 2 * synthesize(h, g).values), b).coeffs
    assert np.allclose(lhs, (f + 2 * h).coeffs, atol=1e-11)


@given(st.integers(0, 10_000))
def test_parseval(seed):
    b = build_basis(8, 8)
    g = DiskGrid.for_basis(b)
    f = rand_field(b, seed)
    vals = synthesize(f, g).values
    assert g.integrate(vals**2) == pytest.approx(signed_sum_sq(b, f.coeffs), rel=1e-10)
    assert l2_inner(f, f) == pytest.approx(signed_sum_sq(b, f.coeffs), rel=1e-14)


def test_grid_size_errors():
    b = build_basis(20, 4)
    with pytest.raises(GridSizeError):
        synthesize(SpectralField.zeros(b), DiskGrid(10, 16))
    with pytest.raises(GridSizeError):
        DiskGrid(10, 7)
    with pytest.raises(GridSizeError):
        SpectralField(b, np.zeros((3, 3)))


def test_batch_matches_single(small):
    b, g = small
    fs = [rand_field(b, s) for s in range(3)]
    batch = synthesize_batch(np.stack([f.coeffs for f in fs]), b, g)
    for f, v in zip(fs, batch):
        assert np.allclose(v, synthesize(f, g).values, atol=1e-13)
    back = analyze_values(batch, g, b)
    assert np.allclose(back, np.stack([f.coeffs for f in fs]), atol=1e-11)


def test_point_evaluation_matches_grid(small):
    b, g = small
    f = rand_field(b, 5)
    vals = synthesize(f, g).values
    p = evaluate_points(f, g.r[[3, 7]], g.theta[[5, 11]]).real
    assert np.allclose(p, [vals[3, 5], vals[7, 11]], atol=1e-12)


def test_multiplier_examples(small):
    b, _ = small
    f = rand_field(b, 7)
    assert np.allclose(apply_multiplier(lambda lam: np.ones_like(lam), f).coeffs, f.coeffs)
    e = SpectralField.mode(b, 0, 1)
    assert apply_multiplier(lambda lam: lam, e).coeffs[0, 0] == pytest.approx(J01, abs=1e-14)
    with pytest.raises(ValueError):
        apply_multiplier(lambda lam: np.full_like(lam, np.inf), f)


def test_semigroup_examples(small):
    b, g = small
    f = rand_field(b, 8)
    assert np.allclose(semigroup(0.0, f).coeffs, f.coeffs)
    e = SpectralField.mode(b, 0, 1)
    assert semigroup(1.0, e).coeffs[0, 0].real == pytest.approx(math.exp(-J01), rel=1e-14)
    with pytest.raises(ValueError):
        semigroup(-1.0, f)
    with pytest.raises(ValueError):
        semigroup(1.0, f, "bogus")
    # composition
    a = semigroup(0.3, semigroup(0.2, f, "viscous", 0.1), "viscous", 0.1)
    assert np.allclose(a.coeffs, semigroup(0.5, f, "viscous", 0.1).coeffs, atol=1e-14)


@given(st.integers(0, 1000), st.floats(0.001, 0.5))
def test_heat_semigroup_contracts_sup_norm(seed, t):
    b = build_basis(8, 8)
    g = DiskGrid.for_basis(b, refine=2)
    f = rand_field(b, seed, decay=2.0)
    s0 = np.max(np.abs(synthesize(f, g).values))
    s1 = np.max(np.abs(synthesize(semigroup(t, f, "laplacian"), g).values))
    assert s1 <= s0 * (1 + 1e-3)


def test_resolvent_examples(small):
    b, _ = small
    e = SpectralField.mode(b, 0, 1)
    assert resolvent_scaled(60, e).coeffs[0, 0].real == pytest.approx(1.0, abs=1e-12)
    f = SpectralField.mode(b, 2, 3)
    lam = b.lam[2, 2]
    j = math.log2(lam)
    assert resolvent_scaled(j, f).coeffs[2, 2].real == pytest.approx(0.5, abs=1e-14)


def test_lambda_power(small):
    b, _ = small
    f = rand_field(b, 9)
    assert np.allclose(lambda_power(0, f).coeffs, f.coeffs)
    assert np.allclose(lambda_power(2, f).coeffs, b.lam**2 * f.coeffs)
    assert np.allclose(lambda_power(1, lambda_power(-1, f)).coeffs, f.coeffs, atol=1e-12)


def test_restrict_roundtrip():
    a, c = build_basis(6, 6), build_basis(10, 9)
    f = rand_field(a, 10)
    assert np.array_equal(f.restrict(c).restrict(a).coeffs, f.coeffs)


def test_laplacian_eigenfunction_by_finite_differences():
    b = build_basis(4, 4)
    e = SpectralField.mode(b, 3, 2)
    lam = b.lam[3, 1]
    x0, y0, h = 0.31, -0.22, 1e-3

    def val(x, y):
        return evaluate_points(e, math.hypot(x, y), math.atan2(y, x)).real

    lap = (val(x0 + h, y0) + val(x0 - h, y0) + val(x0, y0 + h) + val(x0, y0 - h) - 4 * val(x0, y0)) / h**2
    assert lap == pytest.approx(-lam**2 * val(x0, y0), rel=1e-5)
