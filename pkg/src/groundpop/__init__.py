"""Ground-state population reconstruction from weak-probe absorption spectra."""
from .forward import PopulationDistribution, ProbeConfig, Spectrum, coupling_matrix, synthesize
from .lineshape import VoigtParams, voigt
from .reconstruction import ReconstructionOptions, reconstruct
from .structure import GroundState, LevelScheme, load_scheme, rb87_d1

__version__ = "0.1.0"

__all__ = [
    "GroundState",
    "LevelScheme",
    "PopulationDistribution",
    "ProbeConfig",
    "ReconstructionOptions",
    "Spectrum",
    "VoigtParams",
    "coupling_matrix",
    "load_scheme",
    "rb87_d1",
    "reconstruct",
    "synthesize",
    "voigt",
]
