"""Beam and diffraction-channel kinematics.

Conventions used throughout the package:

* angles are grazing angles, measured from the grating surface plane;
* diffraction orders use the experimental sign, where negative orders leave
  closer to the surface and are the ones that close at grazing incidence.
  The close-coupling index is the negated order (see :attr:`ChannelSet.cc_index`).

In these conventions the perpendicular wave vector squared of order n is

    k_nz^2 = k_i^2 - (k_i cos(theta) - G n)^2,   G = 2 pi / d,

which is evaluated as a product of two factors to avoid cancellation.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import constants as _c

from .errors import InconsistentSpec, ValidationError
from .units import UNITS


@dataclass(frozen=True)
class BeamSpec:
    """Incident particle and incidence condition.

    Exactly one of ``source_temperature`` (K) and ``wavelength`` (nm) is
    required; if both are given they must agree to 1e-9.  The kinetic energy
    per atom of the supersonic expansion is (5/2) k_B T0 and a cluster of N
    atoms moves with the same velocity, so its momentum is N times larger.
    """

    atom_mass: float
    grazing_angle: float  # mrad
    cluster_count: int = 1
    source_temperature: float = None
    wavelength: float = None

    def __post_init__(self):
        if self.cluster_count < 1:
            raise ValidationError("must be >= 1", key="cluster_count")
        if not self.atom_mass > 0:
            raise ValidationError("must be positive", key="atom_mass")
        if not 0 <= self.grazing_angle < 1e3 * math.pi / 2:
            raise ValidationError("grazing angle must lie in [0, pi/2)", key="grazing_angle")
        t, lam = self.source_temperature, self.wavelength
        if t is None and lam is None:
            raise ValidationError("give source_temperature or wavelength")
        if t is not None and lam is not None:
            lam_t = _wavelength_from_temperature(self.atom_mass, self.cluster_count, t)
            if abs(lam_t - lam) > 1e-9 * lam:
                raise InconsistentSpec(
                    f"T0={t} K gives lambda={lam_t:.12g} nm, not {lam} nm"
                )

    @property
    def total_mass(self):
        return self.atom_mass * self.cluster_count

    @property
    def de_broglie_wavelength(self):
        """Wavelength in nm."""
        if self.wavelength is not None:
            return self.wavelength
        return _wavelength_from_temperature(self.atom_mass, self.cluster_count, self.source_temperature)

    @property
    def temperature(self):
        """Source temperature in K (derived from the wavelength if needed)."""
        if self.source_temperature is not None:
            return self.source_temperature
        return temperature_for_wavelength(self.atom_mass, self.cluster_count, self.wavelength)

    @property
    def k_incident(self):
        """Incident wave vector in 1/angstrom."""
        return 2.0 * math.pi / (10.0 * self.de_broglie_wavelength)

    @property
    def theta(self):
        """Grazing angle in rad."""
        return 1e-3 * self.grazing_angle

    @property
    def energy(self):
        """Total kinetic energy hbar^2 k^2 / 2M in meV."""
        return UNITS.hbar2_over_2m(self.total_mass) * self.k_incident**2

    def with_angle(self, grazing_angle):
        return replace(self, grazing_angle=grazing_angle)


def _wavelength_from_temperature(atom_mass, n, t0):
    p = n * math.sqrt(5.0 * atom_mass * _c.atomic_mass * _c.k * t0)
    return 2.0 * math.pi * _c.hbar / p * 1e9


def temperature_for_wavelength(atom_mass, cluster_count, wavelength):
    """Source temperature (K) giving de Broglie wavelength ``wavelength`` (nm)."""
    p = 2.0 * math.pi * _c.hbar / (wavelength * 1e-9) / cluster_count
    return p * p / (5.0 * atom_mass * _c.atomic_mass * _c.k)


def beam_kinematics(beam):
    """Return ``(k_i, k_perp, lambda)`` in nm^-1, nm^-1 and nm."""
    lam = beam.de_broglie_wavelength
    k_i = 2.0 * math.pi / lam
    return k_i, k_i * math.sin(beam.theta), lam


def _kz2(k_i, theta, g, n):
    n = np.asarray(n, dtype=float)
    s = math.sin(0.5 * theta)
    c = math.cos(0.5 * theta)
    # k_i - k_par and k_i + k_par with k_par = k_i cos(theta) - g n
    return (2.0 * k_i * s * s + g * n) * (2.0 * k_i * c * c - g * n)


def channel_kz2(beam, grating, n):
    """Perpendicular wave vector squared (1/angstrom^2) of order ``n``."""
    out = _kz2(beam.k_incident, beam.theta, grating.reciprocal, n)
    return out if np.ndim(out) else float(out)


def parallel_wavevector(beam, grating, n):
    """k_i cos(theta) - G n in 1/angstrom."""
    return beam.k_incident * math.cos(beam.theta) - grating.reciprocal * np.asarray(n, dtype=float)


@dataclass(frozen=True)
class ChannelSet:
    """Diffraction channels kept in the close-coupling expansion."""

    orders: np.ndarray
    kz2: np.ndarray
    open: np.ndarray
    period: float  # um
    threshold_eps: float = 1e-14

    @classmethod
    def build(cls, beam, grating, n_max=None, orders=None, threshold_eps=1e-14):
        """Channels ``-n_max..n_max`` (or an explicit list of ``orders``)."""
        if orders is None:
            if n_max is None or n_max < 0:
                raise ValidationError("n_max must be >= 0", key="n_max")
            orders = np.arange(-n_max, n_max + 1)
        orders = np.asarray(sorted(int(n) for n in orders))
        if 0 not in orders:
            raise ValidationError("the specular order 0 must be included", key="orders")
        kz2 = np.asarray(channel_kz2(beam, grating, orders), dtype=float).reshape(orders.shape)
        return cls(orders, kz2, kz2 > threshold_eps, grating.period, threshold_eps)

    def __len__(self):
        return len(self.orders)

    @property
    def cc_index(self):
        return -self.orders

    @property
    def incident_index(self):
        return int(np.nonzero(self.orders == 0)[0][0])

    @property
    def at_threshold(self):
        return np.abs(self.kz2) <= self.threshold_eps

    @property
    def n_open(self):
        return int(self.open.sum())

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return ChannelSet(self.orders[mask], self.kz2[mask], self.open[mask], self.period, self.threshold_eps)

    def open_only(self):
        return self.subset(self.open)


def _angle_from_one_minus_cos(x):
    # theta with 1 - cos(theta) = x, accurate for tiny x
    return 2.0 * np.arcsin(np.sqrt(0.5 * x))


def bragg_angles(beam, grating, orders=range(-30, 31)):
    """Outgoing grazing angles (mrad) of each diffraction order with a real angle.

    Solves cos(theta_i) - cos(theta_n) = n lambda / d.  Negative orders leave
    closer to the surface than the specular beam.
    """
    ratio = beam.de_broglie_wavelength / (grating.period * 1e3)
    one_minus_cos_i = 2.0 * math.sin(0.5 * beam.theta) ** 2
    out = []
    for n in orders:
        x = one_minus_cos_i + n * ratio  # 1 - cos(theta_n)
        if 0.0 <= x <= 2.0:
            out.append((int(n), 1e3 * float(_angle_from_one_minus_cos(x))))
    return out


@dataclass(frozen=True)
class RayleighTable:
    """Threshold grazing angles at which order ``n`` emerges."""

    wavelength: float  # nm
    period: float  # um
    orders: tuple
    angles: tuple  # mrad

    def angle(self, n):
        return self.angles[self.orders.index(n)]

    def as_dict(self):
        return dict(zip(self.orders, self.angles))


def rayleigh_angles(wavelength, period, orders=range(-1, -11, -1)):
    """Rayleigh (emerging-beam) angles theta_R(n) = arccos(1 + n lambda / d).

    Only orders with a real threshold are kept (negative n with
    |n| lambda / d <= 2); the table is sorted by |n|.
    """
    if not (wavelength > 0 and period > 0):
        raise ValidationError("wavelength and period must be positive")
    ratio = wavelength / (period * 1e3)
    rows = []
    for n in sorted(set(int(n) for n in orders), key=abs):
        x = -n * ratio  # 1 - cos(theta_R)
        if n != 0 and 0.0 < x <= 2.0:
            rows.append((n, 1e3 * float(_angle_from_one_minus_cos(x))))
    return RayleighTable(wavelength, period, tuple(r[0] for r in rows), tuple(r[1] for r in rows))
