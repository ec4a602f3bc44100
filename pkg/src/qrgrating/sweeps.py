"""Parameter scans, threshold-slope fits, absorber calibration and convergence studies.

Every scan is described by a :class:`SweepPlan`.  Points are independent and
may be solved by a process pool; results are always merged in plan order,
and BLAS runs single-threaded inside each solve, so the output does not
depend on the worker count.
"""

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import CalibrationFailed, FitRefused, QRError, ValidationError
from .kinematics import rayleigh_angles
from .potential import GratingSpec
from .smatrix import fmt
from .solver import SolverSettings, solve

# ---------------------------------------------------------------------------
# plans and results


@dataclass(frozen=True)
class SweepPlan:
    """A list of grazing angles (mrad) solved with identical settings.

    Exactly one of ``source_temperature`` (K) and ``wavelength`` (nm) fixes
    the beam energy; if both are ``None`` the species' experimental source
    temperature is used.
    """

    species: object
    angles: tuple
    source_temperature: float = None
    wavelength: float = None
    settings: SolverSettings = field(default_factory=SolverSettings)
    grating: GratingSpec = field(default_factory=GratingSpec)
    label: str = ""

    def __post_init__(self):
        a = tuple(float(x) for x in self.angles)
        if any(b <= c for c, b in zip(a, a[1:])):
            raise ValidationError("sweep angles must be strictly increasing", key="angles")
        object.__setattr__(self, "angles", a)

    @classmethod
    def from_kperp(cls, species, k_perp, **kw):
        """Plan over perpendicular wave vectors (1/nm) instead of angles."""
        probe = species.beam(0.0, wavelength=kw.get("wavelength"), source_temperature=kw.get("source_temperature"))
        k_i = 10.0 * probe.k_incident
        angles = [1e3 * math.asin(k / k_i) for k in k_perp]
        return cls(species, tuple(angles), **kw)

    def beam(self, angle):
        return self.species.beam(angle, wavelength=self.wavelength, source_temperature=self.source_temperature)

    def manifest(self):
        sp = asdict(self.species)
        return {
            "version": __version__,
            "label": self.label,
            "species": sp,
            "angles_mrad": list(self.angles),
            "source_temperature_K": self.source_temperature,
            "wavelength_nm": self.wavelength,
            "settings": self.settings.as_dict(),
            "grating": asdict(self.grating),
        }


@dataclass
class SweepPoint:
    angle: float  # mrad
    k_perp: float  # 1/nm
    solution: object = None
    error: str = None

    @property
    def ok(self):
        return self.solution is not None


@dataclass(frozen=True)
class SlopeFit:
    """Line through the origin 1 - P = s k fitted on the smallest decade of k.

    ``b = s / 2`` is the characteristic length of the threshold law
    |R| ~ 1 - 2 k b (in nm, since k is in 1/nm).
    """

    slope: float
    b: float
    residual: float
    n_points: int
    k_max: float


@dataclass
class SweepResult:
    plan: SweepPlan
    points: list
    rayleigh: object = None
    slope: SlopeFit = None
    slope_error: str = None
    normalization: dict = field(default_factory=dict)

    @property
    def failed(self):
        return [p for p in self.points if not p.ok]

    def kperp_series(self):
        pts = [p for p in self.points if p.ok]
        return np.array([p.k_perp for p in pts]), np.array([p.solution.p_qr for p in pts])

    def efficiency_series(self, n, normalized=False):
        pts = [p for p in self.points if p.ok]
        eff = np.array([_order_value(p.solution, n, "efficiency") for p in pts])
        if normalized:
            peak = self.normalization.get(n) or (eff.max() if eff.size else 0.0)
            eff = eff / peak if peak > 0 else eff
        return np.array([p.angle for p in pts]), eff

    def rayleigh_markers(self):
        """Rayleigh angles (n, mrad) falling inside the scanned angle range."""
        if self.rayleigh is None or not self.points:
            return []
        lo, hi = self.points[0].angle, self.points[-1].angle
        return [(n, a) for n, a in zip(self.rayleigh.orders, self.rayleigh.angles) if lo <= a <= hi]

    def to_csv(self, orders=()):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["theta_mrad", "k_perp_per_nm", "p_qr", "n_open"]
        for n in orders:
            head += [f"intensity_{n}", f"efficiency_{n}"]
            if self.normalization:
                head.append(f"efficiency_norm_{n}")
        w.writerow(head + ["status"])
        for p in self.points:
            row = [fmt(p.angle), fmt(p.k_perp)]
            if p.ok:
                s = p.solution
                row += [fmt(s.p_qr), int(s.open.sum())]
                for n in orders:
                    e = _order_value(s, n, "efficiency")
                    row += [fmt(_order_value(s, n, "intensity")), fmt(e)]
                    if self.normalization:
                        peak = self.normalization.get(n, 0.0)
                        row.append(fmt(e / peak if peak > 0 else 0.0))
                row.append("ok")
            else:
                row += [""] * (len(head) - 2) + [p.error]
            w.writerow(row)
        return buf.getvalue()

    def manifest(self):
        out = self.plan.manifest()
        out["failed_points"] = [{"angle_mrad": p.angle, "error": p.error} for p in self.failed]
        if self.rayleigh is not None:
            out["rayleigh_mrad"] = {str(n): a for n, a in zip(self.rayleigh.orders, self.rayleigh.angles)}
        if self.slope is not None:
            out["slope_fit"] = asdict(self.slope)
        if self.slope_error:
            out["slope_fit_error"] = self.slope_error
        return out


def _order_value(solution, n, what):
    try:
        i = solution.index(n)
    except KeyError:
        return 0.0
    values = solution.efficiencies if what == "efficiency" else solution.intensities
    return float(values[i])


# ---------------------------------------------------------------------------
# execution


def _solve_point(task):
    species, beam, grating, settings = task
    try:
        return solve(species, beam, grating, settings), None
    except QRError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_tasks(fn, tasks, threads=1):
    """Apply ``fn`` to ``tasks`` with up to ``threads`` worker processes, in order."""
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def run_plan(plan, threads=1):
    beams = [plan.beam(a) for a in plan.angles]
    tasks = [(plan.species, b, plan.grating, plan.settings) for b in beams]
    out = run_tasks(_solve_point, tasks, threads)
    points = []
    for b, (sol, err) in zip(beams, out):
        points.append(SweepPoint(b.grazing_angle, 10.0 * b.k_incident * math.sin(b.theta), sol, err))
    return points


def scan_kperp(plan, threads=1):
    """P^QR against k_perp over the plan's angles (failed points are flagged)."""
    return SweepResult(plan, run_plan(plan, threads))


# ---------------------------------------------------------------------------
# threshold law


def fit_threshold_slope(k_perp, p_qr, decade=10.0):
    """Fit 1 - P^QR = s k_perp through the origin on k_perp <= decade * min(k_perp).

    The residual is ||y - s k|| / ||y||.

    Raises
    ------
    FitRefused
        With fewer than two points in the window.
    """
    k = np.asarray(k_perp, dtype=float)
    y = 1.0 - np.asarray(p_qr, dtype=float)
    if k.size < 2:
        raise FitRefused(f"slope fit needs at least 2 points, got {k.size}")
    k_max = decade * k.min()
    m = k <= k_max * (1 + 1e-12)
    if m.sum() < 2:
        raise FitRefused(f"only {int(m.sum())} point(s) within the smallest decade of k_perp")
    k, y = k[m], y[m]
    s = float(k @ y / (k @ k))
    ny = float(np.linalg.norm(y))
    res = float(np.linalg.norm(y - s * k)) / ny if ny > 0 else 0.0
    return SlopeFit(slope=s, b=0.5 * s, residual=res, n_points=int(m.sum()), k_max=float(k.max()))


def scan_fixed_wavelength(species_list, wavelength, angles, settings=None, grating=None, threads=1, decade=10.0):
    """One k_perp scan per species at a common de Broglie wavelength (nm).

    With the wavelength fixed, k_i and hence the k_perp grid are the same
    for every species.  Returns ``{name: SweepResult}`` with slope fits.
    """
    settings = settings or SolverSettings()
    grating = grating or GratingSpec()
    out = {}
    for sp in species_list:
        plan = SweepPlan(sp, tuple(angles), wavelength=wavelength, settings=settings, grating=grating,
                         label=f"universal-{sp.name}")
        res = scan_kperp(plan, threads)
        res.rayleigh = rayleigh_angles(wavelength, grating.period)
        k, p = res.kperp_series()
        try:
            res.slope = fit_threshold_slope(k, p, decade)
        except FitRefused as exc:
            res.slope_error = str(exc)
        out[sp.name] = res
    return out


# ---------------------------------------------------------------------------
# efficiencies


def scan_efficiency_vs_angle(species, wavelength, angles, orders=(-1,), normalize=False, settings=None,
                             grating=None, threads=1):
    """Diffraction efficiencies against grazing angle at fixed wavelength (nm).

    The result carries the Rayleigh table for (wavelength, period); with
    ``normalize`` each requested order is scaled to unit peak.
    """
    settings = settings or SolverSettings()
    grating = grating or GratingSpec()
    plan = SweepPlan(species, tuple(angles), wavelength=wavelength, settings=settings, grating=grating,
                     label=f"efficiency-{species.name}")
    res = SweepResult(plan, run_plan(plan, threads), rayleigh=rayleigh_angles(wavelength, grating.period))
    if normalize:
        for n in orders:
            _, eff = res.efficiency_series(n)
            res.normalization[n] = float(eff.max()) if eff.size else 0.0
    return res


# ---------------------------------------------------------------------------
# absorber calibration

DEFAULT_AMPLITUDES = tuple(float(a) for a in np.logspace(-6, -1, 11))  # hartree
DEFAULT_ALPHAS = (0.1, 0.3, 0.5, 0.9, 1.5)


@dataclass(frozen=True)
class CalibrationResult:
    absorber: object
    baseline: float  # one-channel specular probability
    stages: tuple  # (class, amplitude, alpha, specular, relative residual, candidates tried)


def calibrate_absorber(species, beam, grating=None, settings=None, tolerance=0.05,
                       amplitudes=DEFAULT_AMPLITUDES, alphas=DEFAULT_ALPHAS):
    """Staged absorber calibration against the one-channel specular probability.

    The specular parameters (A0, alpha0) of the species stay fixed and define
    the one-channel baseline.  Stage 1 scans (A1, alpha1) with channels
    {0, +-1}; stage 2 scans (A2, alpha2) with {0, +-1, +-2}.  Candidates run
    amplitude-major in the given order and the first one whose specular
    probability is within ``tolerance`` (relative) of the baseline is kept.

    Raises
    ------
    CalibrationFailed
        If the search box has no absorbing amplitude or no candidate passes.
    """
    grating = grating or GratingSpec()
    settings = (settings or SolverSettings()).with_(absorber=True, drop_closed=False)
    if not any(a > 0 for a in amplitudes):
        raise CalibrationFailed("search box contains no absorbing amplitude (A > 0)")
    absorber = species.absorber()
    base = solve(species, beam, grating, settings.with_(channels=1), absorber=absorber).specular
    stages = []
    for cls, orders in (("first_order", (-1, 0, 1)), ("other", (-2, -1, 0, 1, 2))):
        tried = 0
        chosen = None
        for amp in amplitudes:
            for alpha in alphas:
                tried += 1
                cand = absorber.replace(cls, amplitude=amp, alpha=alpha)
                try:
                    spec = solve(species, beam, grating, settings, orders=orders, absorber=cand).specular
                except QRError:
                    continue
                resid = abs(spec - base) / base if base > 0 else math.inf
                if resid <= tolerance:
                    chosen = (cls, amp, alpha, spec, resid, tried)
                    break
            if chosen:
                break
        if chosen is None:
            raise CalibrationFailed(f"no ({cls}) candidate within {tolerance:.3g} of the one-channel baseline")
        absorber = absorber.replace(cls, amplitude=chosen[1], alpha=chosen[2])
        stages.append(chosen)
    return CalibrationResult(absorber, base, tuple(stages))


# ---------------------------------------------------------------------------
# convergence


@dataclass(frozen=True)
class ConvergenceRow:
    kind: str  # "grid", "channels" or "z_end"
    value: float
    p_qr: float
    specular: float
    delta: float  # relative change of P^QR from the previous row of the same kind


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple
    grid_converged_at: int = None
    channels_converged_at: int = None
    tolerance: float = 1e-3

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "value", "p_qr", "specular", "rel_delta"])
        for r in self.rows:
            w.writerow([r.kind, r.value, fmt(r.p_qr), fmt(r.specular), "" if math.isnan(r.delta) else fmt(r.delta)])
        return buf.getvalue()


def _study(kind, values, tasks, threads):
    rows = []
    prev = None
    for v, (sol, err) in zip(values, run_tasks(_solve_point, tasks, threads)):
        if sol is None:
            raise QRError(f"convergence point {kind}={v} failed: {err}")
        d = abs(sol.p_qr - prev) / abs(prev) if prev else math.nan
        rows.append(ConvergenceRow(kind, v, sol.p_qr, sol.specular, d))
        prev = sol.p_qr
    return rows


def _first_converged(rows, tol):
    for r in rows[1:]:
        if r.delta < tol:
            return r.value
    return None


def convergence_study(species, beam, grating=None, settings=None, grid_points=(5000, 10000, 20000, 40000),
                      channel_counts=(21, 41, 61, 81), tolerance=1e-3, tail_check=False, threads=1):
    """P^QR against grid size (at the settings' channel count) and channel count
    (at the species grid), plus an optional doubled-z_end check.

    A sweep is declared converged at the first value whose relative change
    from its predecessor is below ``tolerance``.
    """
    grating = grating or GratingSpec()
    settings = settings or SolverSettings()
    grid_tasks = [(species, beam, grating, settings.with_(n_points=int(n))) for n in grid_points]
    ch_tasks = [(species, beam, grating, settings.with_(channels=int(c))) for c in channel_counts]
    g_rows = _study("grid", list(grid_points), grid_tasks, threads)
    c_rows = _study("channels", list(channel_counts), ch_tasks, threads)
    rows = g_rows + c_rows
    if tail_check:
        grid = settings.grid_for(species)
        span = grid.z_end - grid.z_start
        doubled = settings.with_(z_start=grid.z_start, z_end=grid.z_start + 2 * span, n_points=2 * grid.n_points - 1)
        tasks = [(species, beam, grating, settings.with_(z_start=grid.z_start, z_end=grid.z_end,
                                                          n_points=grid.n_points)),
                 (species, beam, grating, doubled)]
        rows += _study("z_end", [grid.z_end, grid.z_start + 2 * span], tasks, threads)
    return ConvergenceReport(tuple(rows), _first_converged(g_rows, tolerance), _first_converged(c_rows, tolerance),
                             tolerance)
