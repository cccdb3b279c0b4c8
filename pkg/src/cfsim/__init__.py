"""Simulation and counterfactuality analysis of single-photon communication protocols."""
from .errors import CfsimError, NullStateError, TooLargeError, UnconvergedError, ValidationError

__version__ = "0.1.0"
