"""Truncated Fock-space operator algebra.

Operators and states are dense complex ``numpy`` arrays.  Two-mode objects
always use the ordering mode-1 (x) mode-2, i.e. ``a1 = kron(a, I)`` and
``a2 = kron(I, a)``; the basis index of ``|n1, n2>`` is ``n1 * N + n2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Top-level population above which a state is considered truncation-limited.
TRUNCATION_THRESHOLD = 1e-4


class TruncationWarning(UserWarning):
    """The highest retained Fock level carries non-negligible population."""


@dataclass(frozen=True)
class FockConfig:
    n_levels: int
    n_modes: int = 2

    def __post_init__(self):
        if self.n_levels < 2:
            raise ValueError(f"n_levels must be >= 2, got {self.n_levels}")
        if self.n_modes not in (1, 2):
            raise ValueError(f"n_modes must be 1 or 2, got {self.n_modes}")

    @property
    def dim(self) -> int:
        return self.n_levels**self.n_modes


def _levels(config) -> int:
    if isinstance(config, FockConfig):
        if config.n_modes != 1:
            raise ValueError("single-mode operator requested for a two-mode config")
        return config.n_levels
    return int(config)


def annihilation(config) -> np.ndarray:
    """Single-mode annihilation operator, ``<n-1|a|n> = sqrt(n)``.

    ``config`` is a single-mode :class:`FockConfig` or an integer number of levels.
    """
    n = _levels(config)
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def creation(config) -> np.ndarray:
    return annihilation(config).conj().T


def number(config) -> np.ndarray:
    n = _levels(config)
    return np.diag(np.arange(n, dtype=float)).astype(complex)


def tensor(op_a: np.ndarray, op_b: np.ndarray) -> np.ndarray:
    """Two-mode operator ``op_a (x) op_b`` with mode 1 as the left factor."""
    op_a = np.asarray(op_a)
    op_b = np.asarray(op_b)
    if op_a.ndim != 2 or op_a.shape[0] != op_a.shape[1]:
        raise ValueError(f"op_a is not square: {op_a.shape}")
    if op_b.shape != op_a.shape:
        raise ValueError(f"dimension mismatch: {op_a.shape} vs {op_b.shape}")
    return np.kron(op_a, op_b)


def mode_operators(n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Annihilation operators ``(a1, a2)`` on the two-mode space."""
    a = annihilation(n_levels)
    eye = np.eye(n_levels, dtype=complex)
    return tensor(a, eye), tensor(eye, a)


def basis(n_levels: int, n: int) -> np.ndarray:
    ket = np.zeros(n_levels, dtype=complex)
    ket[n] = 1.0
    return ket


def fock_dm(n_levels: int, n: int) -> np.ndarray:
    ket = basis(n_levels, n)
    return np.outer(ket, ket.conj())


def coherent_state(beta: complex, n_levels: int) -> np.ndarray:
    """Coherent-state ket from the normalized series ``beta^n / sqrt(n!)``.

    Renormalized after truncation, so it is only accurate for ``n_levels >> |beta|^2``.
    """
    n = np.arange(n_levels)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    mag = np.exp(n * np.log(abs(beta)) - 0.5 * log_fact) if beta != 0 else (n == 0).astype(float)
    ket = mag * np.exp(1j * np.angle(beta) * n)
    return ket / np.linalg.norm(ket)


def _split_dim(dim: int, n_levels: int | None) -> int:
    if n_levels is None:
        n_levels = math.isqrt(dim)
    if n_levels * n_levels != dim:
        raise ValueError(f"dimension {dim} is not the square of n_levels={n_levels}")
    return n_levels


def partial_trace(rho: np.ndarray, keep_mode: int, n_levels: int | None = None) -> np.ndarray:
    """Reduced single-mode density matrix of a two-mode state.

    ``keep_mode`` is 1 or 2.  ``n_levels`` defaults to ``sqrt(dim)``.
    """
    rho = np.asarray(rho)
    n = _split_dim(rho.shape[0], n_levels)
    r = rho.reshape(n, n, n, n)
    if keep_mode == 1:
        return np.einsum("ijkj->ik", r)
    if keep_mode == 2:
        return np.einsum("jijk->ik", r)
    raise ValueError(f"keep_mode must be 1 or 2, got {keep_mode}")


def swap_modes(op: np.ndarray, n_levels: int | None = None) -> np.ndarray:
    """Exchange the two mode factors of a two-mode operator or state."""
    op = np.asarray(op)
    n = _split_dim(op.shape[0], n_levels)
    return op.reshape(n, n, n, n).transpose(1, 0, 3, 2).reshape(n * n, n * n)


def expectation(rho: np.ndarray, op: np.ndarray) -> complex:
    """``Tr(rho @ op)``."""
    rho = np.asarray(rho)
    op = np.asarray(op)
    if rho.shape != op.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs op {op.shape}")
    # Tr(AB) = sum_ij A_ij B_ji
    return complex(np.sum(rho * op.T))


def fock_populations(rho: np.ndarray) -> np.ndarray:
    return np.real(np.diagonal(rho)).copy()


def top_level_population(rho: np.ndarray, n_levels: int | None = None) -> float:
    """Largest population of the highest Fock level over all modes of ``rho``."""
    rho = np.asarray(rho)
    if n_levels is None or n_levels == rho.shape[0]:
        return float(np.real(rho[-1, -1]))
    return max(
        float(np.real(partial_trace(rho, m, n_levels)[-1, -1])) for m in (1, 2)
    )


def check_density_matrix(rho: np.ndarray, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8):
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValueError(f"not Hermitian: max|rho - rho^H| = {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        raise ValueError(f"trace {tr} differs from 1")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam < -eig_tol:
        raise ValueError(f"negative eigenvalue {lam:.3e}")
    return rho


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = np.asarray(rho) - np.asarray(sigma)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))
