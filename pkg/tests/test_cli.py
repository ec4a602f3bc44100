import json
import subprocess
import sys

import pytest

from qrgrating import __version__
from qrgrating.cli import main, parse_config
from qrgrating.errors import ParseError, UnitError, ValidationError

FAST = """
[species]
preset = "He"

[solver]
channels = 5
n_points = 2001
z_end = "100 angstrom"
"""


def _config(tmp_path, extra="", base=FAST):
    p = tmp_path / "run.toml"
    p.write_text(base + extra)
    return p


def _run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    return main([*argv, "--output", str(out)]), out


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_usage_errors_exit_1(tmp_path):
    for argv in (["bogus"], [], ["solve", "--channels", "x"]):
        with pytest.raises(SystemExit) as info:
            main(argv + ["--output", str(tmp_path)])
        assert info.value.code == 1


def test_rayleigh_and_manifest(tmp_path):
    rc, out = _run(tmp_path, "rayleigh", "--wavelength", "0.179")
    assert rc == 0
    rows = (out / "rayleigh.csv").read_text().splitlines()
    assert rows[0] == "n,theta_R_mrad"
    assert rows[1].startswith("-1,4.23084")
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == "rayleigh" and m["outputs"] == ["rayleigh.csv"]
    assert m["config"]["species"]["name"] == "He"
    assert m["config"]["derived_potential"]["well_depth"] > 0


def test_dump_potential(tmp_path):
    cfg = _config(tmp_path, '\n[potential]\nz_min = "-5 angstrom"\nz_max = "50 angstrom"\nn_points = 12\n')
    rc, out = _run(tmp_path, "dump-potential", "--config", str(cfg))
    assert rc == 0
    lines = (out / "potential.txt").read_text().splitlines()
    assert len(lines) == 13
    assert float(lines[1].split()[0]) == -5.0


def test_solve_outputs(tmp_path):
    cfg = _config(tmp_path)
    rc, out = _run(tmp_path, "solve", "--config", str(cfg), "--angle", "5", "--wavelength", "0.179")
    assert rc == 0
    summary = json.loads((out / "solution.json").read_text())
    assert 0 < float(summary["p_qr"]) < 1
    assert "-1" in summary["bragg_angles_mrad"]
    assert (out / "solution.csv").read_text().startswith("n,kz2,open")


def test_solve_without_absorber_is_unitary(tmp_path):
    cfg = _config(tmp_path)
    rc, out = _run(tmp_path, "solve", "--config", str(cfg), "--angle", "5", "--wavelength", "0.179",
                   "--no-absorber")
    assert rc == 0
    assert float(json.loads((out / "solution.json").read_text())["p_qr"]) == pytest.approx(1.0, abs=1e-6)


def test_missing_angle_exits_2(tmp_path):
    rc, _ = _run(tmp_path, "solve", "--config", str(_config(tmp_path)))
    assert rc == 2


def test_scans(tmp_path):
    cfg = _config(tmp_path, '\n[scan]\nangles = ["3 mrad", "5 mrad"]\norders = [-1]\nnormalize = true\n')
    rc, out = _run(tmp_path, "scan-kperp", "--config", str(cfg), "--wavelength", "0.179", name="k")
    assert rc == 0
    assert (out / "scan_kperp.csv").read_text().splitlines()[0].startswith("theta_mrad,k_perp_per_nm,p_qr")
    rc, out = _run(tmp_path, "scan-angle", "--config", str(cfg), "--wavelength", "0.179", name="a")
    assert rc == 0
    head = (out / "scan_angle.csv").read_text().splitlines()[0]
    assert "efficiency_norm_-1" in head
    assert "-1" in json.loads((out / "manifest.json").read_text())["rayleigh_markers_mrad"]


def test_scan_universal(tmp_path):
    cfg = _config(tmp_path, '\n[scan]\nspecies = ["He", "He2"]\nangles = ["0.1 mrad", "0.3 mrad", "0.8 mrad"]\n')
    rc, out = _run(tmp_path, "scan-universal", "--config", str(cfg))
    assert rc == 0
    slopes = (out / "slopes.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in slopes[1:]] == ["He", "He2"]
    assert (out / "universal_He2.csv").exists()


def test_partial_failure_exits_3(tmp_path):
    cfg = _config(tmp_path, '\n[scan]\nangles = ["3 mrad", "5 mrad"]\n', base=FAST + "cond_bound = 1.0\n")
    rc, out = _run(tmp_path, "scan-kperp", "--config", str(cfg))
    assert rc == 3
    assert json.loads((out / "manifest.json").read_text())["sweep"]["failed_points"]


def test_calibrate(tmp_path):
    cfg = _config(tmp_path, '\n[calibrate]\ntolerance = 1e9\namplitudes = ["1e-3 hartree"]\nalphas = [0.5]\n')
    rc, out = _run(tmp_path, "calibrate", "--config", str(cfg), "--angle", "5", "--wavelength", "0.179")
    assert rc == 0
    rows = (out / "calibration.csv").read_text().splitlines()
    assert rows[1].startswith("first_order,1.00000000000e-03,5.00000000000e-01")


def test_converge(tmp_path):
    cfg = _config(tmp_path, "\n[converge]\ngrid_points = [1001, 2001]\nchannels = [1, 3]\n")
    rc, out = _run(tmp_path, "converge", "--config", str(cfg), "--angle", "5", "--wavelength", "0.179")
    assert rc == 0
    assert len((out / "convergence.csv").read_text().splitlines()) == 5


def test_parse_error_has_position(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text('[species]\npreset = "He"\nchi = \n')
    with pytest.raises(ParseError) as info:
        parse_config(p)
    assert info.value.line == 3
    assert _run(tmp_path, "rayleigh", "--config", str(p))[0] == 2


def test_empty_file_and_unknown_key(tmp_path):
    p = tmp_path / "empty.toml"
    p.write_text("")
    with pytest.raises(ValidationError):
        parse_config(p)
    assert _run(tmp_path, "rayleigh", "--config", str(p))[0] == 2
    with pytest.raises(ValidationError, match="solver.chanels"):
        parse_config(_config(tmp_path, base=FAST.replace("channels", "chanels")))
    with pytest.raises(ValidationError):
        parse_config(_config(tmp_path, base='[species]\nchi = "0.5 /angstrom"\n'))


def test_missing_unit_rejected(tmp_path):
    with pytest.raises(UnitError):
        parse_config(_config(tmp_path, '\n[beam]\nangle = 3.4\n'))
    assert _run(tmp_path, "rayleigh", "--config", str(_config(tmp_path, '\n[beam]\nangle = 3.4\n')))[0] == 2


def test_missing_config_file_exits_2(tmp_path):
    assert _run(tmp_path, "rayleigh", "--config", str(tmp_path / "nope.toml"))[0] == 2


def test_no_gap_grating_warns(tmp_path, caplog):
    cfg = parse_config(_config(tmp_path, '\n[grating]\nperiod = "20 um"\nstrip_width = "20 um"\n'))
    assert cfg.warnings and "diffraction is disabled" in cfg.warnings[0]
    assert "strip_width equals period" in caplog.text


def test_preset_defaults_and_overrides(tmp_path):
    cfg = parse_config(_config(tmp_path, base='[species]\npreset = "Ne"\nl = "12 nm"\n'))
    assert cfg.species.name == "Ne"
    assert cfg.species.l == pytest.approx(120.0)
    assert cfg.solver.channels == 61
    r = cfg.resolved()
    assert r["species"]["z_end"] == 2000.0
    cfg = parse_config(_config(tmp_path, base='[species]\npreset = "He"\nc3 = "7 1e-50J*m^3"\n'))
    assert cfg.species.c3 == pytest.approx(7.0, rel=1e-12)


def test_threads_do_not_change_bytes(tmp_path):
    cfg = _config(tmp_path, '\n[scan]\nangles = ["2 mrad", "4 mrad", "6 mrad"]\n')
    rc1, a = _run(tmp_path, "scan-kperp", "--config", str(cfg), "--threads", "1", name="t1")
    rc2, b = _run(tmp_path, "scan-kperp", "--config", str(cfg), "--threads", "3", name="t3")
    assert rc1 == rc2 == 0
    assert (a / "scan_kperp.csv").read_bytes() == (b / "scan_kperp.csv").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "qrgrating", "rayleigh", "--output", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.startswith("n,theta_R_mrad")
