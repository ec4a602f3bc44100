"""Vertical atom-grating interaction, grating couplings and absorbing potential.

The vertical potential is a Morse well for ``z < z_bar`` joined to the
van der Waals-Casimir tail ``-C4 / ((l + z) z^3)`` beyond it, with value and
slope continuous at ``z_bar``.  For given stiffness ``chi``, ``C3`` and ``l``
the two continuity conditions fix both ``z_bar`` and the well depth ``D``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DomainError, InvalidMode, NoMatchingPoint, NonConvergence, ValidationError
from .units import UNITS

FORMULA_MODES = ("as_printed", "fourier_consistent")
ABSORBER_CLASSES = ("specular", "first_order", "other")


@dataclass(frozen=True)
class MorseCasimirPotential:
    """Morse well matched to a vdW-Casimir tail.

    Parameters
    ----------
    chi : float
        Morse stiffness (1/angstrom).
    well_depth : float
        Morse well depth D (meV).
    c3 : float
        van der Waals coefficient (meV angstrom^3).
    l : float
        vdW to Casimir crossover length (angstrom).
    z_bar : float
        Matching point (angstrom).
    """

    chi: float
    well_depth: float
    c3: float
    l: float
    z_bar: float

    def __post_init__(self):
        for name in ("chi", "well_depth", "c3", "l", "z_bar"):
            if not getattr(self, name) > 0:
                raise ValidationError("must be positive", key=name)

    @property
    def c4(self):
        return self.c3 * self.l

    def morse(self, z):
        e = np.exp(-self.chi * np.asarray(z, dtype=float))
        return self.well_depth * (e * e - 2.0 * e)

    def morse_derivative(self, z):
        e = np.exp(-self.chi * np.asarray(z, dtype=float))
        return 2.0 * self.chi * self.well_depth * (e - e * e)

    def casimir(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise DomainError("Casimir tail is singular at z <= 0")
        return -self.c4 / ((self.l + z) * z**3)

    def casimir_derivative(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise DomainError("Casimir tail is singular at z <= 0")
        return self.c4 * (4.0 * z + 3.0 * self.l) / ((self.l + z) ** 2 * z**4)

    def __call__(self, z):
        return eval_vertical(self, z)


def eval_vertical(potential, z):
    """V(z) in meV: Morse branch below ``z_bar``, Casimir tail at and above it."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    inner = z < potential.z_bar
    out[inner] = potential.morse(z[inner])
    if np.any(~inner):
        out[~inner] = potential.casimir(z[~inner])
    return out if out.ndim else float(out)


def _matching_residual(z, chi, l):
    # V/V' of the Morse branch minus V/V' of the tail; D and C4 cancel.
    u = math.exp(-chi * z)
    g = (u - 2.0) / (2.0 * chi * (1.0 - u)) + (l + z) * z / (4.0 * z + 3.0 * l)
    dg = u / (2.0 * (1.0 - u) ** 2) + (4.0 * z * z + 6.0 * l * z + 3.0 * l * l) / (4.0 * z + 3.0 * l) ** 2
    return g, dg


def match_morse_casimir(chi, c3, l, bracket=(0.1, 100.0), tol=1e-12, max_iter=200, n_scan=400):
    """Find ``z_bar`` and ``D`` so that V and V' are continuous.

    The bracket is scanned for the first sign change of the ratio residual,
    then refined by Newton steps safeguarded with bisection.

    Parameters
    ----------
    chi : float
        Morse stiffness (1/angstrom).
    c3 : float
        vdW coefficient (meV angstrom^3).
    l : float
        Crossover length (angstrom).

    Returns
    -------
    MorseCasimirPotential

    Raises
    ------
    NoMatchingPoint
        If the residual does not change sign inside ``bracket``.
    NonConvergence
        If the root or the continuity residuals miss their tolerances.
    """
    if not (chi > 0 and c3 > 0 and l > 0):
        raise ValidationError("chi, c3 and l must be positive")
    zs = np.linspace(bracket[0], bracket[1], n_scan)
    gs = np.array([_matching_residual(z, chi, l)[0] for z in zs])
    change = np.nonzero(np.sign(gs[:-1]) * np.sign(gs[1:]) <= 0)[0]
    if change.size == 0:
        raise NoMatchingPoint(
            f"no matching point in {bracket} for chi={chi}, c3={c3}, l={l}"
        )
    lo, hi = zs[change[0]], zs[change[0] + 1]
    g_lo = gs[change[0]]
    z = 0.5 * (lo + hi)
    for _ in range(max_iter):
        g, dg = _matching_residual(z, chi, l)
        if g == 0.0:
            break
        if (g < 0) == (g_lo < 0):
            lo = z
        else:
            hi = z
        step = z - g / dg
        z_new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(z_new - z) < tol:
            z = z_new
            break
        z = z_new
    else:
        raise NonConvergence(f"matching point did not converge in {max_iter} iterations")

    u = math.exp(-chi * z)
    c4 = c3 * l
    v_tail = -c4 / ((l + z) * z**3)
    depth = v_tail / (u * u - 2.0 * u)
    pot = MorseCasimirPotential(chi=chi, well_depth=depth, c3=c3, l=l, z_bar=z)

    dv = abs(pot.morse(z) - pot.casimir(z))
    ddv = abs(pot.morse_derivative(z) - pot.casimir_derivative(z))
    if dv > 1e-10 * abs(v_tail) or ddv > 1e-8 * abs(pot.casimir_derivative(z)):
        raise NonConvergence(f"continuity residuals too large at z_bar={z}: {dv:.3e}, {ddv:.3e}")
    return pot


@dataclass(frozen=True)
class GratingSpec:
    """Strip grating of period ``d`` with strips of width ``a`` (both in um)."""

    period: float = 20.0
    strip_width: float = 10.0
    max_fourier_order: int = 6

    def __post_init__(self):
        if not 0 < self.strip_width <= self.period:
            raise ValidationError("need 0 < strip_width <= period", key="strip_width")
        if self.max_fourier_order < 1:
            raise ValidationError("must be >= 1", key="max_fourier_order")

    @property
    def period_angstrom(self):
        return self.period * 1e4

    @property
    def fill_fraction(self):
        return self.strip_width / self.period

    @property
    def reciprocal(self):
        """Reciprocal lattice vector 2 pi / d in 1/angstrom."""
        return 2.0 * math.pi / self.period_angstrom


def sinc(x):
    """sin(pi x) / (pi x) with exact zeros at nonzero integers."""
    x = np.asarray(x, dtype=float)
    out = np.sinc(x)
    r = np.round(x)
    out = np.where((np.abs(x - r) < 1e-12) & (r != 0), 0.0, out)
    return out if out.ndim else float(out)


def fourier_coefficient(n, grating):
    """c_n = (a/d) sinc(n a/d) of the strip profile h(x)."""
    if abs(n) > grating.max_fourier_order:
        raise ValidationError(
            f"|n|={abs(n)} exceeds max_fourier_order={grating.max_fourier_order}", key="n"
        )
    f = grating.fill_fraction
    return f * sinc(n * f)


def coupling_factor(n_diff, grating, formula_mode="as_printed"):
    """Ratio V_n(z) / V(z).

    ``as_printed`` uses 2 sinc(n a/d); ``fourier_consistent`` uses
    c_n / c_0 = sinc(n a/d).  Orders beyond the truncation give 0 and the
    diagonal is 1 in both modes.
    """
    if formula_mode not in FORMULA_MODES:
        raise InvalidMode(f"unknown formula_mode {formula_mode!r}; use one of {FORMULA_MODES}")
    n_diff = np.asarray(n_diff)
    s = sinc(n_diff * grating.fill_fraction)
    f = 2.0 * s if formula_mode == "as_printed" else s
    f = np.where(n_diff == 0, 1.0, f)
    f = np.where(np.abs(n_diff) > grating.max_fourier_order, 0.0, f)
    return f if f.ndim else float(f)


def coupling(n_diff, potential, grating, formula_mode="as_printed"):
    """Return the coupling term V_{n_diff}(z) as a function of z (meV)."""
    fac = coupling_factor(n_diff, grating, formula_mode)

    def v_n(z):
        return fac * eval_vertical(potential, z)

    return v_n


def channel_class(n):
    """Absorber class of diffraction order ``n``: 0, +-1, or everything else."""
    n = abs(int(n))
    if n == 0:
        return "specular"
    if n == 1:
        return "first_order"
    return "other"


@dataclass(frozen=True)
class WoodsSaxonAbsorber:
    """Imaginary Woods-Saxon absorber ``A / (1 + exp(alpha chi (z - z_i)))``.

    Amplitudes are stored in hartree (as tabulated) and converted to meV on
    evaluation; ``alpha`` is dimensionless and multiplies ``chi (z - z_i)``.
    """

    amplitudes: dict
    alphas: dict
    z_i: float
    chi: float

    def __post_init__(self):
        for cls in ABSORBER_CLASSES:
            if cls not in self.amplitudes or cls not in self.alphas:
                raise ValidationError(f"missing absorber class {cls!r}")
            if self.amplitudes[cls] < 0:
                raise ValidationError("absorber amplitude must be >= 0", key=cls)

    def amplitude_mev(self, cls):
        return self.amplitudes[cls] * UNITS.hartree

    def scaled(self, factor):
        return WoodsSaxonAbsorber(
            {k: v * factor for k, v in self.amplitudes.items()}, dict(self.alphas), self.z_i, self.chi
        )

    def replace(self, cls, amplitude=None, alpha=None):
        amps, alps = dict(self.amplitudes), dict(self.alphas)
        if amplitude is not None:
            amps[cls] = amplitude
        if alpha is not None:
            alps[cls] = alpha
        return WoodsSaxonAbsorber(amps, alps, self.z_i, self.chi)


def absorber_value(absorber, channel_cls, z):
    """Magnitude (meV) of the imaginary absorber for ``channel_cls`` at ``z``.

    The channel potential receives ``-1j`` times this value.
    """
    z = np.asarray(z, dtype=float)
    x = absorber.alphas[channel_cls] * absorber.chi * (z - absorber.z_i)
    out = absorber.amplitude_mev(channel_cls) * expit(-x)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PotentialModel:
    """Everything needed to build the channel potential matrix."""

    vertical: MorseCasimirPotential
    grating: GratingSpec = field(default_factory=GratingSpec)
    absorber: WoodsSaxonAbsorber = None
    formula_mode: str = "as_printed"

    def __post_init__(self):
        if self.formula_mode not in FORMULA_MODES:
            raise InvalidMode(f"unknown formula_mode {self.formula_mode!r}")
