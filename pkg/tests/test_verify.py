import json
import math

import numpy as np
import pytest

from sqgdisk.besov import DYADIC, RESOLVENT, BesovSpec, besov_norms, psi
from sqgdisk.spectral import SpectralField, build_basis
from sqgdisk.sqg import norm_grid
from sqgdisk.verify import (
    CHECKS,
    FAIL,
    PASS,
    SUBORDINATION_C1,
    UNSTABLE,
    CheckReport,
    Ensemble,
    VerifyConfig,
    _finish,
    drift,
    kernel_l1_norm,
    localization_samples,
    manufactured_ratio,
    run_all,
    run_check,
    subordination_constant,
    summary_rows,
)

TINY = VerifyConfig(
    resolutions=((8, 8), (12, 12)),
    count=3,
    time_count=2,
    solver_T=0.1,
    solver_dt=5e-3,
    epsilons=(0.04, 0.02, 0.01, 0.005),
)


def test_ensemble_is_seeded_and_nested():
    a = Ensemble(seed=5, count=3)
    b = Ensemble(seed=5, count=3)
    small, big = build_basis(6, 6), build_basis(9, 8)
    ca, cb = a.coeffs(small), b.coeffs(big)
    assert ca.shape == (9, 7, 6) and cb.shape == (9, 10, 8)
    # profile 0 is unscaled; scaled profiles share draws up to eigenvalue rounding
    assert np.array_equal(ca[:3], cb[:3, :7, :6])
    assert np.allclose(ca, cb[:, :7, :6], rtol=1e-13, atol=0)
    assert np.all(ca[:, 0].imag == 0)
    assert not np.array_equal(a.coeffs(small, stream=1), ca)
    assert not np.array_equal(Ensemble(seed=6, count=3).coeffs(small), ca)
    assert a.labels() == [0.0] * 3 + [1.0] * 3 + [2.0] * 3


def test_drift_helper():
    assert drift(2.0, 1.0) == 2.0 == drift(1.0, 2.0)
    assert drift(0.0, 1.0) == math.inf
    assert drift(float("nan"), 1.0) == math.inf


def test_subordination_constant():
    assert subordination_constant() == pytest.approx(SUBORDINATION_C1, rel=1e-12)
    assert SUBORDINATION_C1 == pytest.approx(0.28209479, abs=1e-8)


def test_single_mode_localization_ratio():
    b = build_basis(8, 8)
    g = norm_grid(b)
    m, k = 3, 2
    lam = b.lam[m, k - 1]
    j = int(round(math.log2(lam)))
    e = SpectralField.mode(b, m, k).coeffs[None]
    ratios, _ = localization_samples(e, b, g, [j])
    assert ratios[0, 0] == pytest.approx(lam / 2.0**j, rel=1e-12)
    assert 0.5 <= ratios[0, 0] <= 2


def test_single_mode_norm_equivalence_s0():
    b = build_basis(8, 8)
    g = norm_grid(b)
    e = SpectralField.mode(b, 2, 2).coeffs[None]
    spec = BesovSpec(0, math.inf, 1)
    d = besov_norms(e, b, spec, DYADIC, g)
    r = besov_norms(e, b, spec, RESOLVENT, g)
    assert d[0] / r[0] == pytest.approx(1.0, abs=1e-9)


def test_manufactured_and_kernel_norms():
    b = build_basis(8, 8)
    g = norm_grid(b)
    assert 1.0 <= manufactured_ratio(b, g) < 3.0
    # the truncated identity has kernel L^1 norm at least 1 at the centre
    assert kernel_l1_norm(np.ones(b.shape), b, g, [0.0]) >= 1.0 - 1e-12
    assert kernel_l1_norm(psi(1, b.lam), b, g) > 0


def test_finish_status_rules():
    rep = CheckReport("x", {})
    rep.details["drift_limit"] = 1.5
    rep.constants = {"C": [1.0, 1.2]}
    assert _finish(rep, 0.0, ["C"]).status == PASS
    rep.constants = {"C": [1.0, 2.0]}
    assert _finish(rep, 0.0, ["C"]).status == UNSTABLE
    assert not rep.passed and "UNSTABLE" in rep.notes[-1]
    rep.constants = {"C": [1.0, math.inf]}
    assert _finish(rep, 0.0, ["C"]).status == FAIL
    rep.constants = {"C": [1.0, 1.0]}
    assert _finish(rep, 0.0, ["C"], extra_ok=False).status == FAIL


def test_unknown_check():
    with pytest.raises(KeyError):
        run_check("nope", TINY)
    with pytest.raises(KeyError):
        run_all(TINY, ["localization", "nope"])


def test_config_from_dict():
    cfg = VerifyConfig.from_dict({"resolutions": [[8, 8], [10, 10]], "profiles": [0, 1], "count": 2})
    assert cfg.resolutions == ((8, 8), (10, 10)) and cfg.profiles == (0.0, 1.0)
    with pytest.raises(TypeError):
        VerifyConfig.from_dict({"bogus": 1})


@pytest.mark.parametrize("name", [n for n in CHECKS if n != "picard_epsilon"])
def test_each_check_runs_at_tiny_scale(name):
    rep = run_check(name, TINY)
    assert rep.name == name
    assert rep.status in (PASS, UNSTABLE, FAIL)
    for label, vals in rep.constants.items():
        assert len(vals) in (1, 2), label
        assert all(math.isfinite(v) and v > 0 for v in vals), (label, vals)
    data = json.loads(rep.to_json())
    assert data["ensemble"]["seed"] == TINY.seed
    assert data["runtime"] > 0


def test_tiny_reports_are_deterministic():
    a = run_check("bilinear", TINY)
    b = run_check("bilinear", TINY)
    assert a.constants == b.constants


def test_localization_and_commutator_pass_at_tiny_scale():
    loc = run_check("localization", TINY)
    assert min(loc.constants["min_ratio"]) > 0
    com = run_check("commutator", TINY)
    assert com.details["remainder_identity_rel_error"] < 1e-6


def test_picard_epsilon_tiny():
    rep = run_check("picard_epsilon", TINY)
    pic = rep.details["picard"]
    assert pic["passed"]
    assert pic["limit_l2_error"] < 1e-8
    eps = rep.details["epsilon"]
    assert len(eps["h1_gaps"]) == 4 and all(g > 0 for g in eps["h1_gaps"])
    assert np.all(np.diff(eps["h1_gaps"]) < 0)


def test_summary_rows():
    rep = run_check("second_derivative", TINY)
    (row,) = summary_rows([rep])
    assert row["check"] == "second_derivative" and row["passed"] == rep.passed
    assert row["max_constant"] == max(v for vals in rep.constants.values() for v in vals)
