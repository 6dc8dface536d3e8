"""Coupled quantum van der Pol oscillators: Lindblad, classical and noisy-classical models."""

__version__ = "0.1.0"

from .params import DEFAULT_PARAMS, ModelParams  # noqa: E402,F401
