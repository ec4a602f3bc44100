"""Built-in species: potential parameters, absorber parameters and grids."""

from dataclasses import dataclass, field, replace
from functools import lru_cache

from .errors import ValidationError
from .potential import WoodsSaxonAbsorber, match_morse_casimir
from .units import UNITS

HE_MASS = 4.002602
NE_MASS = 20.1797


@dataclass(frozen=True)
class Species:
    """Incident particle with its interaction and numerical defaults.

    ``c3`` is in units of 1e-50 J m^3 and absorber amplitudes in hartree, as
    tabulated; ``reference_depth`` is the tabulated well depth (meV) kept for
    comparison only, the model always derives D from the matching condition.
    """

    name: str
    atom_mass: float
    cluster_count: int
    chi: float
    c3: float
    l: float
    absorber_amplitudes: dict
    absorber_alphas: dict
    z_start: float
    z_end: float
    n_points: int
    reference_depth: float = None
    source_temperature: float = None  # K, experimental scan
    scan_angles: tuple = field(default=())  # mrad, experimental scan

    @property
    def total_mass(self):
        return self.atom_mass * self.cluster_count

    @property
    def c3_internal(self):
        return self.c3 * UNITS.c3_1e50

    def vertical(self):
        return _matched(self.chi, self.c3_internal, self.l)

    def absorber(self):
        return WoodsSaxonAbsorber(dict(self.absorber_amplitudes), dict(self.absorber_alphas), self.z_start, self.chi)

    def beam(self, grazing_angle, wavelength=None, source_temperature=None):
        from .kinematics import BeamSpec

        if wavelength is None and source_temperature is None:
            source_temperature = self.source_temperature
        return BeamSpec(
            atom_mass=self.atom_mass,
            cluster_count=self.cluster_count,
            grazing_angle=grazing_angle,
            source_temperature=source_temperature,
            wavelength=wavelength,
        )

    def with_overrides(self, **kw):
        return replace(self, **kw)


@lru_cache(maxsize=64)
def _matched(chi, c3, l):
    return match_morse_casimir(chi, c3, l)


def _ws(a0, al0, a1, al1, a2, al2):
    return (
        {"specular": a0, "first_order": a1, "other": a2},
        {"specular": al0, "first_order": al1, "other": al2},
    )


def _make(name, mass, n, chi, depth, l, c3, ws, z0, z1, npts, t0, angles):
    amps, alphas = ws
    return Species(name, mass, n, chi, c3, l, amps, alphas, z0, z1, npts, depth, t0, tuple(angles))


SPECIES = {
    s.name: s
    for s in (
        _make("He", HE_MASS, 1, 0.5, 9.8, 93.0, 3.5, _ws(7.0e-4, 0.5, 9.0e-5, 0.1, 7.0e-3, 0.3),
              -10.0, 500.0, 10001, 20.0, (3.4, 5.2, 7.6, 9.1, 12.1, 15.1, 18.9)),
        _make("He2", HE_MASS, 2, 0.43, 12.28, 93.0, 7.0, _ws(2.0e-6, 0.1, 9.0e-5, 0.1, 4.0e-2, 0.3),
              -20.0, 1000.0, 20001, 15.0, (3.4, 5.2, 7.6, 9.1, 12.1, 15.1, 18.9)),
        _make("He3", HE_MASS, 3, 0.405, 15.3, 93.0, 10.5, _ws(2.0e-3, 0.3, 2.0e-1, 0.5, 2.0e-4, 0.1),
              -21.0, 1000.0, 20001, 8.7, (0.8, 1.1, 1.2, 1.4, 1.6)),
        _make("Ne", NE_MASS, 1, 0.5, 19.8, 118.4, 7.0, _ws(2.0e-2, 0.9, 2.0e-2, 1.5, 2.0e-2, 0.12),
              -12.0, 2000.0, 60001, 40.0, (0.5, 0.6, 0.7, 0.8, 1.1, 1.3)),
    )
}


def get_species(name):
    try:
        return SPECIES[name]
    except KeyError:
        raise ValidationError(f"unknown species {name!r}; presets: {', '.join(SPECIES)}") from None
