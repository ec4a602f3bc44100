"""One incidence condition from species, beam and grating to a ScatteringSolution."""

from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ValidationError
from .kinematics import ChannelSet
from .potential import FORMULA_MODES, GratingSpec, InvalidMode, eval_vertical
from .propagator import INNER_BOUNDARIES, CouplingBuilder, RadialGrid, propagate
from .smatrix import DEFAULT_COND_BOUND, match_asymptotic, observables
from .units import UNITS


@dataclass(frozen=True)
class SolverSettings:
    """Numerical settings shared by every point of a run.

    ``None`` for a grid field means the species default.  ``drop_closed``
    removes every closed channel from the expansion (used to demonstrate
    that closed channels matter; not a physical approximation).
    """

    channels: int = 61
    n_points: int = None
    z_start: float = None
    z_end: float = None
    absorber: bool = True
    formula_mode: str = "as_printed"
    inner_boundary: str = "wall"
    threshold_eps: float = 1e-14
    cond_bound: float = DEFAULT_COND_BOUND
    drop_closed: bool = False

    def __post_init__(self):
        if self.channels < 1 or self.channels % 2 == 0:
            raise ValidationError("channel count must be odd and positive", key="channels")
        if self.formula_mode not in FORMULA_MODES:
            raise InvalidMode(f"unknown formula_mode {self.formula_mode!r}; use one of {FORMULA_MODES}")
        if self.inner_boundary not in INNER_BOUNDARIES:
            raise ValidationError(f"use one of {INNER_BOUNDARIES}", key="inner_boundary")

    @property
    def n_max(self):
        return self.channels // 2

    def grid_for(self, species):
        return RadialGrid(
            species.z_start if self.z_start is None else self.z_start,
            species.z_end if self.z_end is None else self.z_end,
            species.n_points if self.n_points is None else self.n_points,
        )

    def with_(self, **kw):
        return replace(self, **kw)

    def as_dict(self):
        return asdict(self)


def solve(species, beam, grating=None, settings=None, orders=None, absorber=None):
    """Solve the close-coupling problem for one incidence condition.

    Parameters
    ----------
    species : Species
    beam : BeamSpec
    grating : GratingSpec, optional
    settings : SolverSettings, optional
    orders : sequence of int, optional
        Explicit channel list (experimental order sign); overrides
        ``settings.channels``.
    absorber : WoodsSaxonAbsorber, optional
        Replaces the species absorber (ignored when ``settings.absorber`` is
        off).

    Returns
    -------
    ScatteringSolution
    """
    grating = grating or GratingSpec()
    settings = settings or SolverSettings()
    grid = settings.grid_for(species)
    channels = ChannelSet.build(
        beam, grating, n_max=settings.n_max, orders=orders, threshold_eps=settings.threshold_eps
    )
    if settings.drop_closed:
        channels = channels.open_only()
    vertical = species.vertical()
    wsa = None
    if settings.absorber:
        wsa = absorber if absorber is not None else species.absorber()
        wsa = replace(wsa, z_i=grid.z_start)
    builder = CouplingBuilder(vertical, grating, channels, beam.total_mass, wsa, settings.formula_mode)
    result = propagate(grid, builder, inner=settings.inner_boundary)
    s = match_asymptotic(result, channels, cond_bound=settings.cond_bound)

    open_kz2 = channels.kz2[channels.open]
    e_min = UNITS.hbar2_over_2m(beam.total_mass) * float(open_kz2.min()) if open_kz2.size else float("nan")
    meta = {
        "species": species.name,
        "grazing_angle_mrad": beam.grazing_angle,
        "wavelength_nm": beam.de_broglie_wavelength,
        "k_perp_per_nm": 10.0 * beam.k_incident * np.sin(beam.theta),
        "channels": len(channels),
        "n_open": channels.n_open,
        "grid": {"z_start": grid.z_start, "z_end": grid.z_end, "n_points": grid.n_points},
        "absorber": wsa is not None,
        "formula_mode": settings.formula_mode,
        "inner_boundary": settings.inner_boundary,
        "max_phase_per_step": result.max_phase_per_step,
        "tail_ratio": abs(float(eval_vertical(vertical, grid.z_end))) / e_min,
    }
    return observables(s, channels, meta)
