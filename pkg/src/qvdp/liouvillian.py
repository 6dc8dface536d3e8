"""Lindblad generator of the coupled quantum van der Pol oscillators.

The master equation is

    drho/dt = -i[H, rho] + k1 sum_j D[a_j^+] rho + k2 sum_j D[a_j^2] rho + eps sum_j D[a_j] rho

with ``D[L] rho = L rho L^+ - {L^+ L, rho}/2`` and the conjugate-coupling
Hamiltonian assembled in :func:`build_hamiltonian`.

Vectorization is column stacking, ``vec(rho) = rho.reshape(-1, order="F")``,
so that ``vec(A X B) = (B^T (x) A) vec(X)``.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fock import (
    TRUNCATION_THRESHOLD,
    FockConfig,
    TruncationWarning,
    annihilation,
    check_density_matrix,
    mode_operators,
    number,
    partial_trace,
    top_level_population,
)
from .params import ModelParams

log = logging.getLogger(__name__)

DEFAULT_LEVELS = 14
DEFAULT_TOL = 1e-8
MEMORY_BUDGET_BYTES = 2 * 1024**3


class IntegrationError(RuntimeError):
    """Explicit time stepping went unstable or drifted off the trace-one manifold."""


class ConvergenceError(RuntimeError):
    """Steady-state residual was not reached within the maximum horizon."""


class MemoryBudgetError(MemoryError):
    pass


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = math.isqrt(v.shape[0])
    return v.reshape(d, d, order="F")


def _as_config(config) -> FockConfig:
    return config if isinstance(config, FockConfig) else FockConfig(int(config), 2)


def build_hamiltonian(config, params: ModelParams) -> np.ndarray:
    """Two-mode Hamiltonian with frequency term and conjugate coupling.

    ``H = w(n1 + n2) + e/2 (a1^+ a2 + a2^+ a1) - e/2 (a1^+ a2^+ + a1 a2)
    - i e/4 (a1^+2 + a2^+2 - a1^2 - a2^2)``.  For a single-mode config only
    ``w n`` survives and ``eps`` must be zero.
    """
    config = _as_config(config)
    w, e = params.omega, params.eps
    if config.n_modes == 1:
        if e != 0:
            raise ValueError("coupling requires a two-mode config")
        return w * number(config.n_levels)
    a1, a2 = mode_operators(config.n_levels)
    c1, c2 = a1.conj().T, a2.conj().T
    h = w * (c1 @ a1 + c2 @ a2)
    h = h + 0.5 * e * (c1 @ a2 + c2 @ a1)
    h = h - 0.5 * e * (c1 @ c2 + a1 @ a2)
    h = h - 0.25j * e * (c1 @ c1 + c2 @ c2 - a1 @ a1 - a2 @ a2)
    return h


def collapse_operators(config, params: ModelParams) -> list[tuple[float, np.ndarray]]:
    """``(rate, L)`` pairs: pumping ``a^+``, two-photon loss ``a^2``, coupling loss ``a``."""
    config = _as_config(config)
    if config.n_modes == 1:
        a = annihilation(config.n_levels)
        modes = [a]
        if params.eps != 0:
            raise ValueError("coupling requires a two-mode config")
    else:
        modes = list(mode_operators(config.n_levels))
    ops = []
    for a in modes:
        ops.append((params.k1, a.conj().T))
    for a in modes:
        ops.append((params.k2, a @ a))
    for a in modes:
        ops.append((params.eps, a))
    return [(rate, op) for rate, op in ops if rate != 0]


def lindblad_dissipator(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    L = np.asarray(L)
    rho = np.asarray(rho)
    if L.shape != rho.shape:
        raise ValueError(f"dimension mismatch: L {L.shape} vs rho {rho.shape}")
    Ld = L.conj().T
    LdL = Ld @ L
    return L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)


def master_rhs(rho: np.ndarray, hamiltonian: np.ndarray, c_ops) -> np.ndarray:
    """Direct (matrix-form) evaluation of the master-equation right-hand side."""
    out = -1j * (hamiltonian @ rho - rho @ hamiltonian)
    for rate, L in c_ops:
        out = out + rate * lindblad_dissipator(L, rho)
    return out


@dataclass(frozen=True, eq=False)
class Liouvillian:
    config: FockConfig
    params: ModelParams
    superop: sp.csr_matrix
    hamiltonian: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def n_levels(self) -> int:
        return self.config.n_levels

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.superop @ vec(rho))

    def residual(self, rho: np.ndarray) -> float:
        return float(np.max(np.abs(self.superop @ vec(rho))))


def estimate_nnz(config, params: ModelParams) -> int:
    """Upper bound on the superoperator nonzeros, computed without assembling it."""
    config = _as_config(config)
    d = config.dim
    h = sp.csr_matrix(build_hamiltonian(config, params))
    nnz = 2 * d * h.nnz
    for _, L in collapse_operators(config, params):
        Ls = sp.csr_matrix(L)
        nnz += Ls.nnz**2 + 2 * d * (Ls.conj().T @ Ls).nnz
    return nnz


def build_liouvillian(config, params: ModelParams, memory_budget: int = MEMORY_BUDGET_BYTES) -> Liouvillian:
    """Assemble the sparse superoperator acting on column-stacked ``vec(rho)``."""
    config = _as_config(config)
    nnz = estimate_nnz(config, params)
    # complex128 data + int32 index per entry; assembly holds roughly three copies
    need = 3 * nnz * 20
    if need > memory_budget:
        raise MemoryBudgetError(
            f"superoperator needs ~{nnz} nonzeros (~{need / 1e9:.2f} GB), budget {memory_budget / 1e9:.2f} GB"
        )
    d = config.dim
    eye = sp.identity(d, dtype=complex, format="csr")
    h_dense = build_hamiltonian(config, params)
    h = sp.csr_matrix(h_dense)
    superop = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    for rate, L in collapse_operators(config, params):
        Ls = sp.csr_matrix(L)
        LdL = (Ls.conj().T @ Ls).tocsr()
        term = sp.kron(Ls.conj(), Ls) - 0.5 * sp.kron(eye, LdL) - 0.5 * sp.kron(LdL.T, eye)
        superop = superop + rate * term
    superop = sp.csr_matrix(superop)
    superop.eliminate_zeros()
    return Liouvillian(config, params, superop, h_dense)


@dataclass
class EvolveResult:
    rho: np.ndarray
    t: float
    steps: int
    hermiticity_correction: float
    trace_correction: float


def _rk4(superop, v: np.ndarray, dt: float, n_steps: int) -> np.ndarray:
    half = 0.5 * dt
    sixth = dt / 6.0
    for i in range(n_steps):
        k1 = superop @ v
        k2 = superop @ (v + half * k1)
        k3 = superop @ (v + half * k2)
        k4 = superop @ (v + dt * k3)
        v = v + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        if i % 256 == 255 and not np.all(np.isfinite(v[:: max(1, v.shape[0] // 64)])):
            raise IntegrationError(f"non-finite state after {i + 1} steps of dt={dt}")
    return v


def _finalize(rho: np.ndarray, trace_limit: float = 1e-4):
    tr = np.trace(rho)
    if not np.isfinite(tr) or abs(tr - 1) > trace_limit:
        raise IntegrationError(f"trace drifted to {tr}; step size too large or generator not trace-preserving")
    herm = 0.5 * (rho + rho.conj().T)
    herm_corr = float(np.max(np.abs(herm - rho)))
    tr = np.trace(herm).real
    return herm / tr, herm_corr, float(abs(tr - 1))


def evolve(L: Liouvillian, rho0: np.ndarray, t_final: float, dt: float) -> EvolveResult:
    """Fixed-step classical RK4 integration of ``vec(rho)' = L vec(rho)``.

    The step is shrunk slightly so that an integer number of steps lands on
    ``t_final``.  The result is Hermitized and trace-renormalized once, and the
    size of both corrections is reported.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_final < 0:
        raise ValueError(f"t_final must be nonnegative, got {t_final}")
    rho0 = np.asarray(rho0, dtype=complex)
    if t_final == 0:
        return EvolveResult(rho0.copy(), 0.0, 0, 0.0, 0.0)
    n_steps = max(1, math.ceil(t_final / dt - 1e-12))
    v = _rk4(L.superop, vec(rho0), t_final / n_steps, n_steps)
    rho, herm_corr, tr_corr = _finalize(unvec(v))
    return EvolveResult(rho, float(t_final), n_steps, herm_corr, tr_corr)


def stable_step(L: Liouvillian, safety: float = 2.0) -> float:
    """RK4 step from an estimate of the generator's spectral radius.

    A fixed ARPACK start vector keeps the step, and so every downstream
    result, reproducible from run to run.
    """
    v0 = np.random.default_rng(0).normal(size=L.superop.shape[0]).astype(complex)
    try:
        lam = spla.eigs(L.superop, k=1, which="LM", tol=1e-3, v0=v0, return_eigenvectors=False, maxiter=5000)
        radius = float(np.abs(lam[0]))
    except (spla.ArpackNoConvergence, ValueError):
        radius = float(spla.norm(L.superop, 1))
    return safety / radius


@dataclass
class SteadyState:
    rho: np.ndarray
    residual: float
    horizon: float
    n_levels: int
    top_level_population: float
    method: str
    warnings: list[str] = field(default_factory=list)

    def reduced(self, mode: int = 1) -> np.ndarray:
        if self.rho.shape[0] == self.n_levels:
            return self.rho
        return partial_trace(self.rho, mode, self.n_levels)


def _vacuum(dim: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def _wrap_up(L: Liouvillian, rho: np.ndarray, horizon: float, method: str) -> SteadyState:
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    check_density_matrix(rho)
    ptop = top_level_population(rho, L.n_levels)
    notes = []
    if ptop > TRUNCATION_THRESHOLD:
        msg = f"top Fock level population {ptop:.2e} exceeds {TRUNCATION_THRESHOLD:g} at N={L.n_levels}"
        warnings.warn(msg, TruncationWarning, stacklevel=3)
        notes.append(msg)
    return SteadyState(rho, L.residual(rho), horizon, L.n_levels, ptop, method, notes)


def steady_state(
    L: Liouvillian,
    tol: float = DEFAULT_TOL,
    rho0: np.ndarray | None = None,
    dt: float | None = None,
    first_horizon: float = 5.0,
    max_horizon: float = 5000.0,
    check_every: float = 1.0,
) -> SteadyState:
    """Steady state by long-time RK4 evolution with a doubling horizon.

    The state is evolved to ``first_horizon``, then the horizon is doubled
    until ``max|L vec(rho)| < tol``; the residual is also checked every
    ``check_every`` time units so the run stops as soon as it converges.
    """
    rho = _vacuum(L.dim) if rho0 is None else np.asarray(rho0, dtype=complex)
    dt = stable_step(L) if dt is None else dt
    n_check = max(1, round(check_every / dt))
    v = vec(rho)
    t = 0.0
    horizon = first_horizon
    residual = float(np.max(np.abs(L.superop @ v)))
    while residual >= tol:
        if t >= max_horizon:
            raise ConvergenceError(f"residual {residual:.2e} > tol {tol:.1e} after t={t:.1f}")
        while t < horizon and residual >= tol:
            v = _rk4(L.superop, v, dt, n_check)
            t += n_check * dt
            residual = float(np.max(np.abs(L.superop @ v)))
        horizon = min(2 * horizon, max_horizon)
    rho, _, _ = _finalize(unvec(v))
    log.debug("steady state N=%d eps=%g t=%.1f residual=%.2e", L.n_levels, L.params.eps, t, residual)
    return _wrap_up(L, rho, t, "evolve")


def steady_state_dense(L: Liouvillian, max_levels: int = 6) -> SteadyState:
    """Exact null space of the dense superoperator; an oracle for small truncations."""
    if L.config.n_modes == 2 and L.n_levels > max_levels:
        raise ValueError(f"dense null-space solve limited to N<={max_levels} per mode, got {L.n_levels}")
    dense = L.superop.toarray()
    _, s, vh = scipy.linalg.svd(dense)
    v = vh[-1].conj()
    if s[-2] < 1e-10 * s[0]:
        warnings.warn("steady state is not unique: second smallest singular value ~ 0", stacklevel=2)
    rho = unvec(v)
    rho = rho / np.trace(rho)
    return _wrap_up(L, rho, math.inf, "dense")


def solve_point(
    params: ModelParams,
    n_levels: int = DEFAULT_LEVELS,
    tol: float = DEFAULT_TOL,
    auto_raise: bool = True,
    max_levels: int = 22,
    level_step: int = 2,
) -> SteadyState:
    """Steady state at one parameter point, enlarging N while the top level is populated."""
    while True:
        L = build_liouvillian(FockConfig(n_levels, 2), params)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            ss = steady_state(L, tol=tol)
        if ss.top_level_population <= TRUNCATION_THRESHOLD or not auto_raise or n_levels >= max_levels:
            if ss.top_level_population > TRUNCATION_THRESHOLD:
                warnings.warn(ss.warnings[-1], TruncationWarning, stacklevel=2)
            return ss
        log.info("eps=%g: p_top=%.2e at N=%d, raising truncation", params.eps, ss.top_level_population, n_levels)
        n_levels += level_step


def photon_numbers(ss: SteadyState) -> tuple[float, float]:
    n = number(ss.n_levels)
    return (
        float(np.real(np.trace(ss.reduced(1) @ n))),
        float(np.real(np.trace(ss.reduced(2) @ n))),
    )


def _photon_row(params: ModelParams, n_levels: int, tol: float, auto_raise: bool) -> dict:
    ss = solve_point(params, n_levels, tol, auto_raise)
    n1, n2 = photon_numbers(ss)
    return {
        "eps": params.eps,
        "mean_n1": n1,
        "mean_n2": n2,
        "residual": ss.residual,
        "top_level_pop": ss.top_level_population,
        "n_levels": ss.n_levels,
    }


def map_points(fn, items, jobs: int = 1):
    """Apply ``fn`` to ``items`` in order, optionally across ``jobs`` processes."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


class _PhotonTask:
    def __init__(self, n_levels, tol, auto_raise):
        self.args = (n_levels, tol, auto_raise)

    def __call__(self, params):
        return _photon_row(params, *self.args)


def mean_photon_sweep(config, params_grid, tol: float = DEFAULT_TOL, auto_raise: bool = True, jobs: int = 1):
    """Per-point ``<a1^+ a1>``, ``<a2^+ a2>``, residual and top-level population."""
    params_grid = list(params_grid)
    if not params_grid:
        raise ValueError("params_grid is empty")
    config = _as_config(config)
    return map_points(_PhotonTask(config.n_levels, tol, auto_raise), params_grid, jobs)
