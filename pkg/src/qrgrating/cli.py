"""Command-line front end.

Usage::

    qrgrating [--config FILE] [options] SUBCOMMAND

The optional TOML config names a species preset and overrides any of its
parameters; every physical quantity in the file is a string with a unit,
e.g. ``chi = "0.5 /angstrom"``.  Without a config the preset is chosen with
``--species``.  Outputs go to ``--output`` together with ``manifest.json``,
which records the fully resolved configuration.

Exit status: 0 success, 1 usage, 2 config, 3 numerical failure.
"""

import argparse
import json
import logging
import math
import re
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ParseError, QRError, ValidationError
from .kinematics import bragg_angles, rayleigh_angles
from .potential import ABSORBER_CLASSES, GratingSpec, eval_vertical
from .presets import SPECIES, get_species
from .smatrix import fmt
from .solver import SolverSettings, solve
from .sweeps import (
    DEFAULT_ALPHAS,
    DEFAULT_AMPLITUDES,
    SweepPlan,
    calibrate_absorber,
    convergence_study,
    scan_efficiency_vs_angle,
    scan_fixed_wavelength,
    scan_kperp,
)
from .units import UNITS, from_internal, parse_quantity

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("qrgrating")

SUBCOMMANDS = ("dump-potential", "rayleigh", "solve", "scan-kperp", "scan-angle", "scan-universal",
               "calibrate", "converge")

# ---------------------------------------------------------------------------
# config

_SPECIES_KEYS = {
    "atom_mass": "mass", "chi": "inverse_length", "c3": "c3", "l": "length",
    "z_start": "length", "z_end": "length", "source_temperature": "temperature",
}
_SECTIONS = {
    "species": {"preset", "name", "cluster_count", "n_points", "absorber", *_SPECIES_KEYS},
    "grating": {"period", "strip_width", "max_fourier_order"},
    "beam": {"angle", "wavelength", "source_temperature"},
    "solver": {"channels", "absorber", "formula_mode", "inner_boundary", "threshold_eps", "cond_bound",
               "n_points", "z_start", "z_end"},
    "scan": {"angles", "k_perp", "species", "orders", "normalize"},
    "calibrate": {"tolerance", "amplitudes", "alphas"},
    "converge": {"grid_points", "channels", "tolerance", "tail_check"},
    "potential": {"z_min", "z_max", "n_points"},
}


@dataclass
class RunConfig:
    species: object
    grating: GratingSpec = field(default_factory=GratingSpec)
    beam: dict = field(default_factory=dict)
    solver: SolverSettings = field(default_factory=SolverSettings)
    scan: dict = field(default_factory=dict)
    calibrate: dict = field(default_factory=dict)
    converge: dict = field(default_factory=dict)
    potential: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def resolved(self):
        sp = asdict(self.species)
        return {
            "species": sp,
            "derived_potential": asdict(self.species.vertical()),
            "grating": asdict(self.grating),
            "beam": self.beam,
            "solver": self.solver.as_dict(),
            "scan": {k: list(v) if isinstance(v, tuple) else v for k, v in self.scan.items()},
            "calibrate": {k: list(v) if isinstance(v, tuple) else v for k, v in self.calibrate.items()},
            "converge": {k: list(v) if isinstance(v, tuple) else v for k, v in self.converge.items()},
            "potential": self.potential,
        }


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ValidationError("expected a table", key=where)
    for k in table:
        if k not in allowed:
            raise ValidationError(f"unknown key (allowed: {', '.join(sorted(allowed))})", key=f"{where}.{k}")


def _q(table, key, dim, where):
    try:
        return parse_quantity(table[key], dim)
    except QRError as exc:
        raise type(exc)(f"{where}.{key}: {exc}") from None


def _int(table, key, where, minimum=None):
    v = table[key]
    if not isinstance(v, int) or isinstance(v, bool) or (minimum is not None and v < minimum):
        raise ValidationError(f"expected an integer >= {minimum}", key=f"{where}.{key}")
    return v


def _number(table, key, where):
    v = table[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ValidationError("expected a number", key=f"{where}.{key}")
    return float(v)


def _species_from(table):
    _check_keys(table, _SECTIONS["species"], "species")
    if "preset" not in table:
        raise ValidationError(f"a species preset is required ({', '.join(SPECIES)})", key="species.preset")
    sp = get_species(table["preset"])
    kw = {}
    for key, dim in _SPECIES_KEYS.items():
        if key in table:
            v = _q(table, key, dim, "species")
            if key == "c3":
                v = v / UNITS.c3_1e50
            kw[key] = v
    if "name" in table:
        kw["name"] = str(table["name"])
    for key in ("cluster_count", "n_points"):
        if key in table:
            kw[key] = _int(table, key, "species", 1)
    if "absorber" in table:
        ab = table["absorber"]
        _check_keys(ab, set(ABSORBER_CLASSES), "species.absorber")
        amps, alps = dict(sp.absorber_amplitudes), dict(sp.absorber_alphas)
        for cls, entry in ab.items():
            where = f"species.absorber.{cls}"
            _check_keys(entry, {"amplitude", "alpha"}, where)
            if "amplitude" in entry:
                amps[cls] = _q(entry, "amplitude", "energy", where) / UNITS.hartree
            if "alpha" in entry:
                alps[cls] = _number(entry, "alpha", where)
        kw["absorber_amplitudes"], kw["absorber_alphas"] = amps, alps
    return replace(sp, **kw)


def build_config(data):
    """Validate a parsed TOML document into a :class:`RunConfig`."""
    _check_keys(data, set(_SECTIONS), "")
    if "species" not in data:
        raise ValidationError("no [species] block", key="species")
    cfg = RunConfig(species=_species_from(data["species"]))

    if "grating" in data:
        g = data["grating"]
        _check_keys(g, _SECTIONS["grating"], "grating")
        kw = {}
        for key in ("period", "strip_width"):
            if key in g:
                kw[key] = from_internal(_q(g, key, "length", "grating"), "um", "length")
        if "max_fourier_order" in g:
            kw["max_fourier_order"] = _int(g, "max_fourier_order", "grating", 1)
        cfg.grating = GratingSpec(**kw)
    if cfg.grating.strip_width == cfg.grating.period:
        msg = "strip_width equals period: every off-diagonal coupling vanishes, diffraction is disabled"
        cfg.warnings.append(msg)
        log.warning(msg)

    if "beam" in data:
        b = data["beam"]
        _check_keys(b, _SECTIONS["beam"], "beam")
        if "angle" in b:
            cfg.beam["angle"] = _q(b, "angle", "angle", "beam") * 1e3
        if "wavelength" in b:
            cfg.beam["wavelength"] = from_internal(_q(b, "wavelength", "length", "beam"), "nm", "length")
        if "source_temperature" in b:
            cfg.beam["source_temperature"] = _q(b, "source_temperature", "temperature", "beam")

    if "solver" in data:
        s = data["solver"]
        _check_keys(s, _SECTIONS["solver"], "solver")
        kw = {}
        for key in ("channels", "n_points"):
            if key in s:
                kw[key] = _int(s, key, "solver", 1)
        for key in ("z_start", "z_end"):
            if key in s:
                kw[key] = _q(s, key, "length", "solver")
        if "absorber" in s:
            if not isinstance(s["absorber"], bool):
                raise ValidationError("expected true or false", key="solver.absorber")
            kw["absorber"] = s["absorber"]
        for key in ("formula_mode", "inner_boundary"):
            if key in s:
                kw[key] = str(s[key])
        if "threshold_eps" in s:
            kw["threshold_eps"] = _q(s, "threshold_eps", "inverse_area", "solver")
        if "cond_bound" in s:
            kw["cond_bound"] = _number(s, "cond_bound", "solver")
        cfg.solver = SolverSettings(**kw)

    if "scan" in data:
        sc = data["scan"]
        _check_keys(sc, _SECTIONS["scan"], "scan")
        if "angles" in sc and "k_perp" in sc:
            raise ValidationError("give either angles or k_perp, not both", key="scan")
        if "angles" in sc:
            cfg.scan["angles"] = tuple(1e3 * parse_quantity(a, "angle") for a in sc["angles"])
        if "k_perp" in sc:
            cfg.scan["k_perp"] = tuple(10.0 * parse_quantity(k, "inverse_length") for k in sc["k_perp"])
        if "species" in sc:
            for name in sc["species"]:
                get_species(name)
            cfg.scan["species"] = tuple(sc["species"])
        if "orders" in sc:
            cfg.scan["orders"] = tuple(int(n) for n in sc["orders"])
        if "normalize" in sc:
            cfg.scan["normalize"] = bool(sc["normalize"])

    if "calibrate" in data:
        c = data["calibrate"]
        _check_keys(c, _SECTIONS["calibrate"], "calibrate")
        if "tolerance" in c:
            cfg.calibrate["tolerance"] = _number(c, "tolerance", "calibrate")
        if "amplitudes" in c:
            cfg.calibrate["amplitudes"] = tuple(parse_quantity(a, "energy") / UNITS.hartree for a in c["amplitudes"])
        if "alphas" in c:
            cfg.calibrate["alphas"] = tuple(float(a) for a in c["alphas"])

    if "converge" in data:
        c = data["converge"]
        _check_keys(c, _SECTIONS["converge"], "converge")
        for key in ("grid_points", "channels"):
            if key in c:
                cfg.converge[key] = tuple(int(v) for v in c[key])
        if "tolerance" in c:
            cfg.converge["tolerance"] = _number(c, "tolerance", "converge")
        if "tail_check" in c:
            cfg.converge["tail_check"] = bool(c["tail_check"])

    if "potential" in data:
        p = data["potential"]
        _check_keys(p, _SECTIONS["potential"], "potential")
        for key in ("z_min", "z_max"):
            if key in p:
                cfg.potential[key] = _q(p, key, "length", "potential")
        if "n_points" in p:
            cfg.potential["n_points"] = _int(p, "n_points", "potential", 2)
    return cfg


def parse_config(path):
    """Read and validate a TOML run configuration.

    Raises
    ------
    ParseError
        Malformed TOML (with line and column).
    ValidationError
        Unknown or invalid key, or a missing species block.
    UnitError
        Missing or unknown unit on a physical quantity.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ParseError(f"{path}: {str(exc).split(' (at')[0]}", line, col) from None
    return build_config(data)


# ---------------------------------------------------------------------------
# dispatch


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def make_parser():
    p = _Parser(prog="qrgrating", description="Quantum reflection and diffraction from a strip grating.")
    p.add_argument("subcommand", choices=SUBCOMMANDS, metavar="SUBCOMMAND", help=", ".join(SUBCOMMANDS))
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--output", type=Path, default=Path("."), help="output directory")
    p.add_argument("--species", help=f"species preset ({', '.join(SPECIES)}) when no config is given")
    p.add_argument("--angle", type=float, help="grazing angle in mrad")
    p.add_argument("--wavelength", type=float, help="de Broglie wavelength in nm")
    p.add_argument("--temperature", type=float, help="source temperature in K")
    p.add_argument("--channels", type=int, help="number of diffraction channels (odd)")
    p.add_argument("--grid-points", type=int, help="number of z-grid points")
    p.add_argument("--no-absorber", action="store_true", help="disable the imaginary absorber")
    p.add_argument("--formula-mode", choices=("as_printed", "fourier_consistent"))
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _apply_flags(cfg, args):
    if args.species:
        if args.config is not None and args.species != cfg.species.name:
            raise ValidationError("--species conflicts with the config species block", key="species")
        cfg.species = get_species(args.species) if args.config is None else cfg.species
    kw = {}
    if args.channels is not None:
        kw["channels"] = args.channels
    if args.grid_points is not None:
        kw["n_points"] = args.grid_points
    if args.no_absorber:
        kw["absorber"] = False
    if args.formula_mode:
        kw["formula_mode"] = args.formula_mode
    if kw:
        cfg.solver = cfg.solver.with_(**kw)
    if args.angle is not None:
        cfg.beam["angle"] = args.angle
    if args.wavelength is not None:
        cfg.beam["wavelength"] = args.wavelength
        if args.temperature is None:
            cfg.beam.pop("source_temperature", None)
    if args.temperature is not None:
        cfg.beam["source_temperature"] = args.temperature
        if args.wavelength is None:
            cfg.beam.pop("wavelength", None)
    if args.threads < 1:
        raise ValidationError("must be >= 1", key="threads")
    return cfg


def _beam(cfg, angle=None):
    angle = cfg.beam.get("angle") if angle is None else angle
    if angle is None:
        raise ValidationError("a grazing angle is required (beam.angle or --angle)", key="beam.angle")
    return cfg.species.beam(angle, wavelength=cfg.beam.get("wavelength"),
                            source_temperature=cfg.beam.get("source_temperature"))


def _wavelength(cfg):
    if "wavelength" in cfg.beam:
        return cfg.beam["wavelength"]
    return cfg.species.beam(0.0, source_temperature=cfg.beam.get("source_temperature")).de_broglie_wavelength


def _angles(cfg, default):
    if "angles" in cfg.scan:
        return cfg.scan["angles"]
    if "k_perp" in cfg.scan:
        k_i = 2.0 * math.pi / _wavelength(cfg)
        return tuple(1e3 * math.asin(k / k_i) for k in cfg.scan["k_perp"])
    return tuple(default)


class _Out:
    """Serialized writer for one run's files plus the manifest."""

    def __init__(self, directory, command, cfg):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = {"version": __version__, "command": command, "config": cfg.resolved(),
                         "warnings": list(cfg.warnings), "outputs": []}

    def write(self, name, text):
        (self.dir / name).write_text(text, encoding="utf-8")
        self.manifest["outputs"].append(name)

    def close(self, **extra):
        self.manifest.update(extra)
        text = json.dumps(self.manifest, indent=2, sort_keys=True, default=_json_default) + "\n"
        (self.dir / "manifest.json").write_text(text, encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _cmd_dump_potential(cfg, args, out):
    sp = cfg.species
    z0 = cfg.potential.get("z_min", sp.z_start)
    z1 = cfg.potential.get("z_max", sp.z_end)
    n = cfg.potential.get("n_points", 2001)
    z = np.linspace(z0, z1, n)
    v = eval_vertical(sp.vertical(), z)
    lines = ["# z_angstrom V_meV"] + [f"{fmt(a)} {fmt(b)}" for a, b in zip(z, v)]
    out.write("potential.txt", "\n".join(lines) + "\n")
    vert = sp.vertical()
    print(f"{sp.name}: z_bar = {vert.z_bar:.6f} A, D = {vert.well_depth:.6f} meV")
    return 0


def _cmd_rayleigh(cfg, args, out):
    lam = _wavelength(cfg)
    table = rayleigh_angles(lam, cfg.grating.period)
    text = "n,theta_R_mrad\n" + "".join(f"{n},{fmt(a)}\n" for n, a in zip(table.orders, table.angles))
    out.write("rayleigh.csv", text)
    sys.stdout.write(text)
    return 0


def _cmd_solve(cfg, args, out):
    beam = _beam(cfg)
    sol = solve(cfg.species, beam, cfg.grating, cfg.solver)
    out.write("solution.csv", sol.to_csv())
    summary = sol.summary()
    open_orders = set(sol.open_orders)
    summary["bragg_angles_mrad"] = {str(n): fmt(a) for n, a in bragg_angles(beam, cfg.grating) if n in open_orders}
    out.write("solution.json", json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    print(f"{cfg.species.name} theta={beam.grazing_angle} mrad  P_QR = {fmt(sol.p_qr)}  "
          f"specular = {fmt(sol.specular)}  open = {sol.open_orders}")
    return 0


def _finish_sweep(results, out):
    failed = sum(len(r.failed) for r in results)
    for r in results:
        for p in r.failed:
            log.error("%s: point %.6g mrad failed: %s", r.plan.label, p.angle, p.error)
    return 3 if failed else 0


def _cmd_scan_kperp(cfg, args, out):
    sp = cfg.species
    plan = SweepPlan(sp, _angles(cfg, sp.scan_angles), source_temperature=cfg.beam.get("source_temperature"),
                     wavelength=cfg.beam.get("wavelength"), settings=cfg.solver, grating=cfg.grating,
                     label=f"kperp-{sp.name}")
    res = scan_kperp(plan, args.threads)
    out.write("scan_kperp.csv", res.to_csv(orders=(0,)))
    out.manifest["sweep"] = res.manifest()
    return _finish_sweep([res], out)


def _cmd_scan_angle(cfg, args, out):
    sp = cfg.species
    lam = _wavelength(cfg)
    orders = cfg.scan.get("orders", (-1,))
    default = np.round(np.linspace(3.0, 9.0, 61), 6)
    res = scan_efficiency_vs_angle(sp, lam, _angles(cfg, default), orders=orders,
                                   normalize=cfg.scan.get("normalize", False), settings=cfg.solver,
                                   grating=cfg.grating, threads=args.threads)
    out.write("scan_angle.csv", res.to_csv(orders=(0,) + tuple(n for n in orders if n != 0)))
    out.manifest["sweep"] = res.manifest()
    out.manifest["rayleigh_markers_mrad"] = {str(n): a for n, a in res.rayleigh_markers()}
    return _finish_sweep([res], out)


def _cmd_scan_universal(cfg, args, out):
    lam = cfg.beam.get("wavelength", 0.179)
    names = cfg.scan.get("species", tuple(SPECIES))
    species = [cfg.species if n == cfg.species.name else get_species(n) for n in names]
    default = np.round(np.linspace(0.02, 0.5, 13), 6)
    results = scan_fixed_wavelength(species, lam, _angles(cfg, default), settings=cfg.solver,
                                    grating=cfg.grating, threads=args.threads)
    rows = ["species,slope_per_nm,b_nm,residual,n_points,k_max_per_nm,note"]
    for name, res in results.items():
        out.write(f"universal_{name}.csv", res.to_csv(orders=(0,)))
        f = res.slope
        if f is not None:
            rows.append(f"{name},{fmt(f.slope)},{fmt(f.b)},{fmt(f.residual)},{f.n_points},{fmt(f.k_max)},")
        else:
            rows.append(f"{name},,,,,,{res.slope_error}")
    out.write("slopes.csv", "\n".join(rows) + "\n")
    out.manifest["sweeps"] = {n: r.manifest() for n, r in results.items()}
    return _finish_sweep(list(results.values()), out)


def _cmd_calibrate(cfg, args, out):
    beam = _beam(cfg, cfg.beam.get("angle", cfg.species.scan_angles[0] if cfg.species.scan_angles else None))
    res = calibrate_absorber(cfg.species, beam, cfg.grating, cfg.solver,
                             tolerance=cfg.calibrate.get("tolerance", 0.05),
                             amplitudes=cfg.calibrate.get("amplitudes", DEFAULT_AMPLITUDES),
                             alphas=cfg.calibrate.get("alphas", DEFAULT_ALPHAS))
    rows = ["class,amplitude_hartree,alpha,specular,rel_residual,candidates_tried"]
    for cls, amp, alpha, spec, resid, tried in res.stages:
        rows.append(f"{cls},{fmt(amp)},{fmt(alpha)},{fmt(spec)},{fmt(resid)},{tried}")
    out.write("calibration.csv", "\n".join(rows) + "\n")
    out.manifest["calibration"] = {"baseline_specular": fmt(res.baseline),
                                   "absorber": {"amplitudes_hartree": res.absorber.amplitudes,
                                                "alphas": res.absorber.alphas}}
    print("\n".join(rows))
    return 0


def _cmd_converge(cfg, args, out):
    beam = _beam(cfg, cfg.beam.get("angle", cfg.species.scan_angles[0] if cfg.species.scan_angles else None))
    rep = convergence_study(cfg.species, beam, cfg.grating, cfg.solver,
                            grid_points=cfg.converge.get("grid_points", (5000, 10000, 20000, 40000)),
                            channel_counts=cfg.converge.get("channels", (21, 41, 61, 81)),
                            tolerance=cfg.converge.get("tolerance", 1e-3),
                            tail_check=cfg.converge.get("tail_check", False), threads=args.threads)
    out.write("convergence.csv", rep.to_csv())
    out.manifest["convergence"] = {"grid_converged_at": rep.grid_converged_at,
                                   "channels_converged_at": rep.channels_converged_at,
                                   "tolerance": rep.tolerance}
    sys.stdout.write(rep.to_csv())
    return 0


_COMMANDS = {
    "dump-potential": _cmd_dump_potential,
    "rayleigh": _cmd_rayleigh,
    "solve": _cmd_solve,
    "scan-kperp": _cmd_scan_kperp,
    "scan-angle": _cmd_scan_angle,
    "scan-universal": _cmd_scan_universal,
    "calibrate": _cmd_calibrate,
    "converge": _cmd_converge,
}


def dispatch(subcommand, cfg, args):
    """Run one subcommand; returns the exit status."""
    out = _Out(args.output, subcommand, cfg)
    try:
        status = _COMMANDS[subcommand](cfg, args, out)
    finally:
        out.close()
    return status


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = make_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = parse_config(args.config)
        else:
            cfg = RunConfig(species=get_species(args.species or "He"))
        cfg = _apply_flags(cfg, args)
        return dispatch(args.subcommand, cfg, args)
    except QRError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
