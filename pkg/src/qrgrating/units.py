"""Unit system: lengths in angstrom, energies in meV, masses in amu.

Laboratory quantities (K, mrad, nm, um, J m^3, hartree) are converted once at
the boundary.  Conversion constants come from CODATA via :mod:`scipy.constants`.
"""

import re
from dataclasses import dataclass

from scipy import constants as _c

from .errors import UnitError

_MEV = _c.e * 1e-3
_ANGSTROM = 1e-10


@dataclass(frozen=True)
class UnitSystem:
    """Derived constants of the internal unit system."""

    #: hbar^2 / (amu * angstrom^2) expressed in meV
    hbar2_amu: float = _c.hbar**2 / (_c.atomic_mass * _ANGSTROM**2) / _MEV
    #: 1e-50 J m^3 expressed in meV angstrom^3
    c3_1e50: float = 1e-50 / _MEV / _ANGSTROM**3
    hartree: float = _c.physical_constants["Hartree energy"][0] / _MEV
    k_boltzmann: float = _c.k / _MEV  # meV / K

    def hbar2_over_2m(self, mass_amu):
        """hbar^2 / 2M in meV angstrom^2 for a mass in amu."""
        return 0.5 * self.hbar2_amu / mass_amu


UNITS = UnitSystem()

# dimension -> unit name -> factor to internal
_TABLE = {
    "length": {
        "angstrom": 1.0, "a": 1.0, "å": 1.0,
        "nm": 10.0, "um": 1e4, "µm": 1e4, "micron": 1e4, "mm": 1e7, "m": 1e10,
        "bohr": _c.physical_constants["Bohr radius"][0] / _ANGSTROM,
    },
    "inverse_length": {
        "/angstrom": 1.0, "1/angstrom": 1.0, "/a": 1.0, "1/a": 1.0,
        "/nm": 0.1, "1/nm": 0.1,
        "/bohr": _ANGSTROM / _c.physical_constants["Bohr radius"][0],
    },
    "inverse_area": {
        "/angstrom^2": 1.0, "1/angstrom^2": 1.0, "/a^2": 1.0, "1/a^2": 1.0, "/nm^2": 0.01, "1/nm^2": 0.01,
    },
    "energy": {
        "mev": 1.0, "ev": 1e3, "hartree": UNITS.hartree, "au": UNITS.hartree,
        "j": 1.0 / _MEV, "k": UNITS.k_boltzmann,
    },
    "temperature": {"k": 1.0},
    "angle": {"rad": 1.0, "mrad": 1e-3, "deg": _c.pi / 180.0},
    "mass": {"amu": 1.0, "u": 1.0, "da": 1.0},
    "c3": {
        "mev*angstrom^3": 1.0, "mev*a^3": 1.0,
        "j*m^3": 1.0 / _MEV / _ANGSTROM**3,
        "1e-50j*m^3": UNITS.c3_1e50,
    },
}

_ALIASES = {"ang": "angstrom", "angstroms": "angstrom", "kelvin": "k"}


def _normalize(unit):
    u = unit.strip().lower().replace(" ", "*").replace("**", "^")
    u = re.sub(r"\*+", "*", u)
    u = u.replace("*/", "/")
    return _ALIASES.get(u, u)


def factor(unit, dimension):
    """Multiplicative factor taking ``unit`` to the internal unit of ``dimension``."""
    try:
        table = _TABLE[dimension]
    except KeyError:
        raise UnitError(f"unknown dimension {dimension!r}") from None
    key = _normalize(unit)
    if key not in table:
        known = ", ".join(sorted(table))
        raise UnitError(f"unit {unit!r} is not a {dimension} unit (known: {known})")
    return table[key]


def to_internal(value, unit, dimension):
    return value * factor(unit, dimension)


def from_internal(value, unit, dimension):
    return value / factor(unit, dimension)


_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


def parse_quantity(text, dimension):
    """Parse ``"0.5 /angstrom"`` style strings into the internal unit.

    A bare number is rejected: every physical quantity must name its unit.
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        raise UnitError(f"quantity {text!r} has no unit (dimension: {dimension})")
    if not isinstance(text, str):
        raise UnitError(f"expected a quantity string, got {text!r}")
    m = _QUANTITY.match(text)
    if not m or not m.group(2):
        raise UnitError(f"cannot parse {text!r} as '<number> <unit>' ({dimension})")
    return to_internal(float(m.group(1)), m.group(2), dimension)
