import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sqgdisk.besov import eta, spectral_sobolev_norm
from sqgdisk.spectral import DiskGrid, SpectralField, build_basis, synthesize
from sqgdisk.sqg import (
    BlowUpError,
    CFLError,
    SolverConfig,
    Trajectory,
    band_limited_datum,
    contraction_ratios,
    diagnostics,
    duhamel_residual,
    energy_defect,
    etd_step,
    integrate,
    phi_functions,
    picard_sequence,
    run_direct,
    run_linear,
    run_regularized,
    smooth_datum,
    sup_norm,
)

mpmath.mp.dps = 40

SMALL = SolverConfig(max_m=10, max_k=10, dt=4e-3, T=0.08)


@pytest.fixture(scope="module")
def datum():
    return smooth_datum(SMALL.basis(), seed=3, amplitude=1.0)


@given(st.floats(-50.0, -1e-8) | st.just(0.0))
def test_phi_functions_against_mpmath(z):
    p1, p2 = phi_functions(z)
    if z == 0:
        assert p1 == 1.0 and p2 == 0.5
        return
    zm = mpmath.mpf(z)
    r1 = float(mpmath.expm1(zm) / zm)
    r2 = float((mpmath.expm1(zm) - zm) / zm**2)
    assert abs(p1 - r1) < 1e-14 and abs(p2 - r2) < 1e-14


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0)
    with pytest.raises(ValueError):
        SolverConfig(epsilon=-1)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.003, T=0.01).steps
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"bogus": 1})
    assert SolverConfig.from_dict({"dt": 0.01, "T": 0.1}).steps == 10


def test_linear_step_is_exact():
    b = SMALL.basis()
    f = smooth_datum(b, 1)
    out = run_linear(f, SMALL.with_(T=0.04)).final
    assert np.allclose(out.coeffs, np.exp(-0.04 * b.lam) * f.coeffs, atol=1e-14)
    z = etd_step(SpectralField.zeros(b), 0.01)
    assert np.all(z.coeffs == 0)


def test_zero_data_stays_zero():
    b = SMALL.basis()
    run = run_direct(SpectralField.zeros(b), SMALL, with_diagnostics=True)
    assert np.all(run.trajectory.coeffs == 0)
    assert np.all(run.diagnostics.rows()[:, 1:] == 0)


def test_radial_mode_is_a_linear_solution():
    b = SMALL.basis()
    e = SpectralField.mode(b, 0, 1, 1e-6)
    run = run_direct(e, SMALL, with_diagnostics=False)
    t = run.trajectory.times
    l2 = np.array([SpectralField(b, c).l2_norm() for c in run.trajectory.coeffs])
    assert np.all(l2 <= np.exp(-b.lam[0, 0] * t) * 1e-6 * (1 + 1e-12))


def test_maximum_principle(datum):
    run = run_direct(datum, SMALL, with_diagnostics=True)
    sup = run.diagnostics.sup
    assert np.all(np.diff(sup) <= 1e-8)
    assert np.all(np.diff(run.diagnostics.l2) <= 0)
    assert np.all(np.diff(run.diagnostics.b1_integral) >= 0)


def test_duhamel_residual(datum):
    lin = run_linear(datum, SMALL)
    assert duhamel_residual(lin) <= 1e-10
    r1 = duhamel_residual(integrate(datum, SMALL))
    r2 = duhamel_residual(integrate(datum, SMALL.with_(dt=SMALL.dt / 2)))
    assert 3.0 < r1 / r2 < 5.0


def test_regularized_duhamel_uses_viscous_semigroup(datum):
    cfg = SMALL.with_(epsilon=0.01)
    assert duhamel_residual(run_regularized(datum, cfg)) < 5e-4 * datum.l2_norm()


def test_self_convergence_order(datum):
    cfg = SMALL.with_(T=0.04)
    ref = integrate(datum, cfg.with_(dt=cfg.dt / 8)).final
    errs = [(integrate(datum, cfg.with_(dt=cfg.dt / s)).final - ref).l2_norm() for s in (1, 2)]
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.25)


def test_energy_identity(datum):
    assert energy_defect(integrate(datum, SMALL.with_(dt=1e-3))) < 1e-6
    assert energy_defect(run_linear(datum, SMALL)) < 1e-13


def test_epsilon_limit(datum):
    direct = integrate(datum, SMALL).trajectory.coeffs
    gaps = [
        np.max([SpectralField(datum.basis, c).l2_norm() for c in integrate(datum, SMALL.with_(epsilon=e)).trajectory.coeffs - direct])
        for e in (4e-3, 2e-3, 1e-3)
    ]
    assert gaps[0] > gaps[1] > gaps[2]
    h2 = [spectral_sobolev_norm(integrate(datum, SMALL.with_(epsilon=e)).final, 2) for e in (0.0, 0.01, 0.05)]
    assert h2[0] > h2[1] > h2[2]


def test_blowup_guard_keeps_partial_run(datum):
    with pytest.raises(BlowUpError) as info:
        integrate(datum, SMALL.with_(blowup_factor=0.5))
    run = info.value.run
    assert run.aborted and len(run.trajectory.times) >= 1
    assert np.all(np.isfinite(run.trajectory.coeffs))


def test_cfl_guard():
    b = build_basis(10, 10)
    f = smooth_datum(b, 1, amplitude=50.0)
    with pytest.raises(CFLError):
        integrate(f, SolverConfig(max_m=10, max_k=10, dt=0.02, T=0.04))


def test_trajectory_interpolation():
    b = build_basis(1, 1)
    c = np.array([[[0.0]], [[1.0]], [[3.0]]], dtype=complex)
    tr = Trajectory(b, np.array([0.0, 1.0, 2.0]), c)
    assert tr.at(-1)[0, 0] == 0 and tr.at(5)[0, 0] == 3
    assert tr.at(1.5)[0, 0] == pytest.approx(2.0)


def test_polished_sup_norm():
    b = build_basis(6, 6)
    f = smooth_datum(b, 2)
    g = DiskGrid.for_basis(b, refine=2)
    grid_max = np.max(np.abs(synthesize(f, g).values))
    dense = DiskGrid(200, 200)
    vals = synthesize(f, dense).values
    i, l = np.unravel_index(np.argmax(np.abs(vals)), vals.shape)
    from scipy.optimize import minimize

    from sqgdisk.spectral import evaluate_points

    def neg(p):
        return -abs(evaluate_points(f, math.hypot(*p), math.atan2(p[1], p[0])).real)

    x0 = dense.r[i] * np.array([math.cos(dense.theta[l]), math.sin(dense.theta[l])])
    best = -minimize(neg, x0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-15}).fun
    s = sup_norm(f, g)
    assert s >= grid_max - 1e-15
    assert abs(s - best) < 1e-10
    assert sup_norm(SpectralField.zeros(b)) == 0.0


def test_picard_examples():
    b = build_basis(8, 8)
    cfg = SolverConfig(max_m=8, max_k=8, dt=5e-3, T=0.1)
    zero = picard_sequence(SpectralField.zeros(b), cfg, 4)
    assert all(s.D == 0 for s in zero[1:])
    assert contraction_ratios(zero) == []
    # theta_1 is the linear flow of S_1 theta_0; a mode below 4 is left alone by S_n for n >= 2
    e = SpectralField.mode(b, 0, 1, 1e-3)
    seq = picard_sequence(e, cfg, 3)
    s1 = eta(b.lam[0, 0] / 2)
    assert np.allclose(seq[0].trajectory.coeffs[-1], s1 * np.exp(-0.1 * b.lam) * e.coeffs, atol=1e-16)
    assert seq[1].trajectory.coeffs[0, 0, 0] == e.coeffs[0, 0]
    theta0 = band_limited_datum(b, 0, 1e-2, 8.0)
    seq = picard_sequence(theta0, cfg, 6)
    ratios = [q for n, q in contraction_ratios(seq) if n - 1 >= 3]
    assert ratios and max(ratios) < 0.6
    direct = integrate(theta0, cfg).final
    assert (seq[-1].trajectory.field(-1) - direct).l2_norm() < 1e-8
    with pytest.raises(ValueError):
        picard_sequence(theta0, cfg, 1)


def test_diagnostics_cadence(datum):
    run = integrate(datum, SMALL)
    d = diagnostics(run.trajectory, every=7, polish=False)
    assert d.t[0] == 0 and d.t[-1] == pytest.approx(SMALL.T)
    assert d.rows().shape == (len(d.t), len(d.COLUMNS))
