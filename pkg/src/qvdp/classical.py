"""Deterministic coupled van der Pol model: vector field, fixed points, stability, bifurcation table.

States are arrays whose last axis is ``(x1, y1, x2, y2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import ModelParams


class DivergenceError(RuntimeError):
    pass


class SingularBranchError(ValueError):
    """The inhomogeneous fixed-point formula is singular (eps == 0 or eps == omega)."""


def vdp_rhs(s, p: ModelParams, eps=None) -> np.ndarray:
    """Time derivative of the conjugately coupled oscillators.

    ``eps`` overrides ``p.eps`` and may be an array broadcasting against the
    leading axes of ``s`` (used to integrate a whole coupling grid at once).
    """
    s = np.asarray(s, dtype=float)
    e = p.eps if eps is None else eps
    x1, y1, x2, y2 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    w, k1, k2 = p.omega, p.k1, p.k2
    return np.stack(
        [
            w * y1 + e * (y2 - x1),
            -w * x1 + (k1 - 8 * k2 * x1**2) * y1,
            w * y2 + e * (y1 - x2),
            -w * x2 + (k1 - 8 * k2 * x2**2) * y2,
        ],
        axis=-1,
    )


def amplitude_rhs(alpha1: complex, alpha2: complex, p: ModelParams) -> tuple[complex, complex]:
    """Complex amplitude equation obtained in the harmonic approximation."""

    def one(a, b):
        return (
            -1j * p.omega * a
            + (0.5 * p.k1 - p.k2 * abs(a) ** 2) * a
            - 0.5 * p.eps * ((a + a.conjugate()) + 1j * (b - b.conjugate()))
        )

    a1, a2 = complex(alpha1), complex(alpha2)
    return one(a1, a2), one(a2, a1)


def jacobian(s, p: ModelParams) -> np.ndarray:
    x1, y1, x2, y2 = np.asarray(s, dtype=float)
    w, k1, k2, e = p.omega, p.k1, p.k2, p.eps
    return np.array(
        [
            [-e, w, 0.0, e],
            [-w - 16 * k2 * x1 * y1, k1 - 8 * k2 * x1**2, 0.0, 0.0],
            [0.0, e, -e, w],
            [0.0, 0.0, -w - 16 * k2 * x2 * y2, k1 - 8 * k2 * x2**2],
        ]
    )


def jacobian_eigs(s, p: ModelParams) -> np.ndarray:
    """Eigenvalues of the Jacobian at ``s``, sorted by real part (largest first)."""
    lam = np.linalg.eigvals(jacobian(s, p))
    return lam[np.lexsort((-lam.imag, -lam.real))]


@dataclass(frozen=True)
class FixedPointSet:
    hss: np.ndarray
    ihss_plus: np.ndarray | None
    ihss_minus: np.ndarray | None
    exists_ihss: bool
    residual: float = 0.0


def fixed_points(p: ModelParams, tol: float = 1e-10) -> FixedPointSet:
    """Homogeneous state at the origin and, when it exists, the antisymmetric pair.

    The pair is ``(x*, y*, -x*, -y*)`` with ``x* = (w - e) y*/e`` and
    ``y* = sqrt(k1 - w(w - e)/e) / (sqrt(8 k2) (1 - w/e))``; it exists when the
    radicand is positive.
    """
    w, k1, k2, e = p.omega, p.k1, p.k2, p.eps
    if e == 0:
        raise SingularBranchError("eps = 0: inhomogeneous branch undefined")
    if abs(e - w) < 1e-9:
        raise SingularBranchError(f"eps = omega = {w}: y* diverges")
    hss = np.zeros(4)
    radicand = k1 - w * (w - e) / e
    if radicand <= 0:
        return FixedPointSet(hss, None, None, False)
    y_star = math.sqrt(radicand) / (math.sqrt(8 * k2) * (1 - w / e))
    x_star = (w - e) / e * y_star
    plus = np.array([x_star, y_star, -x_star, -y_star])
    res = float(np.linalg.norm(vdp_rhs(plus, p)))
    scale = max(1.0, float(np.max(np.abs(plus))) ** 3)
    if res > tol * scale:
        raise ArithmeticError(f"fixed point residual {res:.2e} exceeds tolerance")
    return FixedPointSet(hss, plus, -plus, True, res)


def is_stable(eigs, margin: float = 0.0) -> bool:
    return bool(np.max(np.real(eigs)) < -margin)


def _max_real(p: ModelParams, eps: float) -> float:
    return float(jacobian_eigs(np.zeros(4), p.with_eps(eps))[0].real)


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def locate_thresholds(p: ModelParams, eps_max: float | None = None, step: float = 1e-2,
                      tol: float = 1e-7) -> dict:
    """Coupling values where the origin changes stability, found by eigenvalue bisection.

    A crossing through a complex pair is labelled ``"hopf"``, through a real
    eigenvalue ``"pitchfork"``.  Only the first crossing of each kind is kept.
    """
    eps_max = 2 * p.omega if eps_max is None else eps_max
    grid = np.arange(step, eps_max + step / 2, step)
    f = lambda e: _max_real(p, e)  # noqa: E731
    vals = [f(e) for e in grid]
    found = {}
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if (fa > 0) == (fb > 0):
            continue
        root = _bisect(f, a, b, tol)
        lam = jacobian_eigs(np.zeros(4), p.with_eps(root))
        crit = lam[np.argmin(np.abs(lam.real))]
        kind = "hopf" if abs(crit.imag) > 1e-6 else "pitchfork"
        found.setdefault(kind, root)
    return found


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (n_samples, ..., 4)


def integrate(s0, p: ModelParams, t_final: float = 500.0, dt: float = 1e-3, sample_every: int = 10,
              eps=None, max_norm: float = 1e6) -> Trajectory:
    """Fixed-step RK4 integration; ``s0`` may hold a batch of states along leading axes."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = np.array(s0, dtype=float)
    n_steps = int(round(t_final / dt))
    f = lambda y: vdp_rhs(y, p, eps)  # noqa: E731
    ts, out = [0.0], [s.copy()]
    # blow-ups are caught by the norm check below
    with np.errstate(over="ignore", invalid="ignore"):
        _rk4_loop(f, s, dt, n_steps, sample_every, max_norm, ts, out)
    return Trajectory(np.array(ts), np.array(out))


def _rk4_loop(f, s, dt, n_steps, sample_every, max_norm, ts, out):
    for i in range(1, n_steps + 1):
        k1 = f(s)
        k2 = f(s + 0.5 * dt * k1)
        k3 = f(s + 0.5 * dt * k2)
        k4 = f(s + dt * k3)
        s = s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if i % sample_every == 0:
            if not np.all(np.abs(s) < max_norm):
                raise DivergenceError(f"|s| exceeded {max_norm:g} at t={i * dt:.3f}")
            ts.append(i * dt)
            out.append(s.copy())


BIFURCATION_COLUMNS = [
    "eps", "hss_stable", "ihss_exists", "ihss_stable", "x_star", "y_star",
    "osc_min_x1", "osc_max_x1", "regime",
]


def bifurcation_diagram(p_base: ModelParams, eps_grid, t_final: float = 500.0, dt: float = 1e-3,
                        transient: float = 0.8, seed: int = 0, osc_threshold: float = 1e-3) -> list[dict]:
    """Stability of both fixed-point families plus simulated x1 extrema at each coupling.

    All couplings are integrated together from one small random start near
    the origin; samples before ``transient * t_final`` are discarded.
    """
    eps = np.asarray(list(eps_grid), dtype=float)
    if eps.size == 0:
        raise ValueError("eps_grid is empty")
    rng = np.random.default_rng(seed)
    s0 = np.tile(rng.uniform(-0.1, 0.1, size=4), (eps.size, 1))
    traj = integrate(s0, p_base, t_final, dt, eps=eps)
    keep = traj.t >= transient * t_final
    x1 = traj.states[keep, :, 0]
    lo, hi = x1.min(axis=0), x1.max(axis=0)

    rows = []
    for i, e in enumerate(eps):
        p = p_base.with_eps(e)
        hss_stable = is_stable(jacobian_eigs(np.zeros(4), p))
        x_star = y_star = math.nan
        exists = stable = False
        if e != 0 and abs(e - p.omega) >= 1e-9:
            fp = fixed_points(p)
            if fp.exists_ihss:
                exists = True
                x_star, y_star = float(fp.ihss_plus[0]), float(fp.ihss_plus[1])
                stable = is_stable(jacobian_eigs(fp.ihss_plus, p))
        # slow decay near the Hopf point leaves a residual swing, so stability wins
        if hss_stable:
            regime = "AD"
        elif hi[i] - lo[i] > osc_threshold:
            regime = "Osc"
        elif stable:
            regime = "OD"
        else:
            regime = "unresolved"
        rows.append({
            "eps": float(e), "hss_stable": hss_stable, "ihss_exists": exists, "ihss_stable": stable,
            "x_star": x_star, "y_star": y_star, "osc_min_x1": float(lo[i]), "osc_max_x1": float(hi[i]),
            "regime": regime,
        })
    return rows
