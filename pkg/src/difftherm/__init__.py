"""Differentiable SRK thermodynamics and flash calculations."""
from . import ad
from .flash import DerivativeMode, FlashResult, FlashSpec, SolverOptions, flash, flash_ph, flash_pt, flash_pv
from .properties import BinarySet, Component, default_components, load_components
from .srk import SRK, MixtureState

__version__ = "0.1.0"

__all__ = [
    "ad",
    "BinarySet",
    "Component",
    "DerivativeMode",
    "FlashResult",
    "FlashSpec",
    "MixtureState",
    "SRK",
    "SolverOptions",
    "default_components",
    "flash",
    "flash_ph",
    "flash_pt",
    "flash_pv",
    "load_components",
]
