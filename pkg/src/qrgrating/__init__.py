"""Coupled-channel simulation of quantum reflection from a periodic strip grating."""

from .errors import (
    CalibrationFailed,
    ConfigError,
    DomainError,
    IllConditionedMatch,
    InconsistentSpec,
    InvalidMode,
    NoMatchingPoint,
    NonConvergence,
    NumericalBlowup,
    QRError,
)
from .kinematics import BeamSpec, ChannelSet, beam_kinematics, bragg_angles, channel_kz2, rayleigh_angles
from .potential import (
    GratingSpec,
    MorseCasimirPotential,
    WoodsSaxonAbsorber,
    absorber_value,
    coupling,
    fourier_coefficient,
    match_morse_casimir,
)
from .presets import SPECIES, Species, get_species
from .solver import SolverSettings, solve

__version__ = "0.1.0"

__all__ = [
    "BeamSpec",
    "CalibrationFailed",
    "ChannelSet",
    "ConfigError",
    "DomainError",
    "GratingSpec",
    "IllConditionedMatch",
    "InconsistentSpec",
    "InvalidMode",
    "MorseCasimirPotential",
    "NoMatchingPoint",
    "NonConvergence",
    "NumericalBlowup",
    "QRError",
    "SPECIES",
    "SolverSettings",
    "Species",
    "WoodsSaxonAbsorber",
    "absorber_value",
    "beam_kinematics",
    "bragg_angles",
    "channel_kz2",
    "coupling",
    "fourier_coefficient",
    "get_species",
    "match_morse_casimir",
    "rayleigh_angles",
    "solve",
]
