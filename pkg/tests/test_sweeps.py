import math

import numpy as np
import pytest

from qrgrating import SPECIES, GratingSpec, rayleigh_angles, solve
from qrgrating.errors import CalibrationFailed, FitRefused, ValidationError
from qrgrating.solver import SolverSettings
from qrgrating.sweeps import (
    SweepPlan,
    calibrate_absorber,
    convergence_study,
    fit_threshold_slope,
    scan_efficiency_vs_angle,
    scan_fixed_wavelength,
    scan_kperp,
)

HE = SPECIES["He"]
SMALL = SolverSettings(channels=5, n_points=2001, z_end=100.0)


def test_plan_validation_and_empty_plan():
    with pytest.raises(ValidationError):
        SweepPlan(HE, (3.0, 2.0))
    with pytest.raises(ValidationError):
        SweepPlan(HE, (3.0, 3.0))
    res = scan_kperp(SweepPlan(HE, (), wavelength=0.179, settings=SMALL))
    assert res.points == [] and res.failed == []
    assert res.to_csv(orders=(0,)).count("\n") == 1


def test_from_kperp_round_trip():
    plan = SweepPlan.from_kperp(HE, (0.01, 0.1, 0.4), wavelength=0.179, settings=SMALL)
    for a, k in zip(plan.angles, (0.01, 0.1, 0.4)):
        beam = plan.beam(a)
        assert 10 * beam.k_incident * math.sin(beam.theta) == pytest.approx(k, rel=1e-12)


def test_serial_equals_parallel_and_repeatable():
    plan = SweepPlan(HE, (2.0, 4.0, 6.0, 8.0), wavelength=0.179, settings=SMALL)
    a = scan_kperp(plan, threads=1).to_csv(orders=(0, -1))
    b = scan_kperp(plan, threads=3).to_csv(orders=(0, -1))
    c = scan_kperp(plan, threads=1).to_csv(orders=(0, -1))
    assert a == b == c


def test_manifest_has_no_volatile_fields():
    m = SweepPlan(HE, (2.0,), wavelength=0.179, settings=SMALL, label="x").manifest()
    assert m["label"] == "x" and m["angles_mrad"] == [2.0]
    assert "threads" not in m and "timestamp" not in m


def test_failed_points_are_flagged():
    plan = SweepPlan(HE, (2.0, 5.0), wavelength=0.179, settings=SMALL.with_(cond_bound=1.0))
    res = scan_kperp(plan)
    assert len(res.failed) == 2
    assert "IllConditionedMatch" in res.failed[0].error
    rows = res.to_csv(orders=(0,)).splitlines()
    assert all(r.split(",")[-1].startswith("IllConditionedMatch") for r in rows[1:])
    assert all(len(r.split(",")) >= len(rows[0].split(",")) for r in rows[1:])
    assert res.manifest()["failed_points"][0]["angle_mrad"] == 2.0


def test_fit_threshold_slope_exact_line():
    k = np.geomspace(1e-3, 1.0, 13)
    fit = fit_threshold_slope(k, 1 - 0.4 * k)
    assert fit.slope == pytest.approx(0.4, rel=1e-12)
    assert fit.b == pytest.approx(0.2, rel=1e-12)
    assert fit.residual < 1e-12
    assert fit.k_max == pytest.approx(1e-2, rel=1e-9)
    assert fit.n_points == 5


def test_fit_refused():
    with pytest.raises(FitRefused):
        fit_threshold_slope([0.01], [0.9])
    with pytest.raises(FitRefused):
        fit_threshold_slope([0.01, 1.0], [0.9, 0.1])


def test_fixed_wavelength_scan_and_markers():
    res = scan_fixed_wavelength([HE], 0.179, (0.05, 0.1, 0.2, 0.4), settings=SMALL)["He"]
    assert res.slope is not None and res.slope.slope > 0
    table = rayleigh_angles(0.179, GratingSpec().period)
    assert res.rayleigh == table
    assert res.rayleigh_markers() == []
    k, p = res.kperp_series()
    assert np.all(np.diff(p) < 0)


def test_efficiency_scan_below_threshold_and_normalized():
    theta_r = rayleigh_angles(0.179, 20.0).angle(-1)
    angles = (theta_r - 0.5, theta_r + 0.5, theta_r + 1.0)
    res = scan_efficiency_vs_angle(HE, 0.179, angles, orders=(-1,), normalize=True, settings=SMALL)
    th, eff = res.efficiency_series(-1)
    assert eff[0] == 0.0 and eff[1] > 0
    _, norm = res.efficiency_series(-1, normalized=True)
    assert norm.max() == pytest.approx(1.0, rel=1e-15)
    assert res.rayleigh_markers() == [(-1, theta_r)]
    assert "efficiency_norm_-1" in res.to_csv(orders=(-1,)).splitlines()[0]


def test_calibration_accepts_first_candidate_at_infinite_tolerance():
    beam = HE.beam(5.0, wavelength=0.179)
    res = calibrate_absorber(HE, beam, settings=SMALL, tolerance=math.inf, amplitudes=(1e-3, 1e-2),
                             alphas=(0.3, 0.5))
    assert [s[0] for s in res.stages] == ["first_order", "other"]
    assert all(s[5] == 1 for s in res.stages)
    assert res.absorber.amplitudes["first_order"] == 1e-3
    assert res.absorber.alphas["other"] == 0.3
    assert 0 < res.baseline < 1


def test_calibration_needs_an_absorbing_amplitude():
    with pytest.raises(CalibrationFailed):
        calibrate_absorber(HE, HE.beam(5.0, wavelength=0.179), settings=SMALL, amplitudes=(0.0,))


def test_calibration_reaches_tolerance():
    beam = HE.beam(5.0, wavelength=0.179)
    res = calibrate_absorber(HE, beam, settings=SMALL, tolerance=0.05)
    assert all(s[4] <= 0.05 for s in res.stages)
    final = solve(HE, beam, settings=SMALL, orders=(-2, -1, 0, 1, 2), absorber=res.absorber).specular
    assert abs(final - res.baseline) <= 0.05 * res.baseline


def test_convergence_study_small():
    beam = HE.beam(5.0, wavelength=0.179)
    rep = convergence_study(HE, beam, settings=SMALL, grid_points=(1001, 2001, 4001), channel_counts=(1, 3, 5),
                            tolerance=1e-3, tail_check=True)
    kinds = [r.kind for r in rep.rows]
    assert kinds == ["grid"] * 3 + ["channels"] * 3 + ["z_end"] * 2
    assert math.isnan(rep.rows[0].delta)
    ch = [r for r in rep.rows if r.kind == "channels"]
    # the one-channel answer misses the diffraction losses
    assert abs(ch[0].p_qr - ch[-1].p_qr) > 1e-3
    lines = rep.to_csv().splitlines()
    assert lines[0] == "kind,value,p_qr,specular,rel_delta" and len(lines) == 9
