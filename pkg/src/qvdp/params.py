"""Physical parameters shared by the quantum, classical and noisy-classical models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ModelParams:
    """Parameters of two conjugately coupled van der Pol oscillators.

    Attributes
    ----------
    omega : float
        Intrinsic frequency of each oscillator.
    k1 : float
        Linear pumping rate (single-photon creation in the quantum model).
    k2 : float
        Nonlinear damping rate (two-photon absorption in the quantum model).
    eps : float
        Coupling strength.
    """

    omega: float = 2.0
    k1: float = 1.0
    k2: float = 0.2
    eps: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        for name in ("k1", "k2", "eps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not self.weak_quantum:
            warnings.warn(
                f"k1={self.k1} <= k2={self.k2}: outside the weak quantum regime",
                stacklevel=3,
            )

    @property
    def weak_quantum(self) -> bool:
        return self.k1 > self.k2

    @property
    def eps_hopf(self) -> float:
        """Coupling at which the homogeneous state gains stability (inverse Hopf)."""
        return self.k1

    @property
    def eps_pitchfork(self) -> float:
        """Coupling at which the homogeneous state loses stability (pitchfork)."""
        return self.omega**2 / (self.omega + self.k1)

    def with_eps(self, eps: float) -> "ModelParams":
        return replace(self, eps=float(eps))

    def as_dict(self) -> dict:
        return {"omega": self.omega, "k1": self.k1, "k2": self.k2, "eps": self.eps}


DEFAULT_PARAMS = ModelParams()


def eps_sweep(base: ModelParams, eps_values) -> list[ModelParams]:
    return [base.with_eps(e) for e in eps_values]
