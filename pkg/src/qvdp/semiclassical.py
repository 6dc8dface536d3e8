"""Noisy classical model: truncated Wigner Fokker-Planck dynamics as an Ito SDE.

``dX = mu(X) dt + sigma(X) dW`` with ``X = (x1, y1, x2, y2)``, drift

    mu_xj = w y_j + [k1/2 - k2(r_j^2 - 1) - e] x_j + e y_j'
    mu_yj = -w x_j + [k1/2 - k2(r_j^2 - 1)] y_j

and diagonal diffusion ``D = diag(nu1, nu1, nu2, nu2)/2`` with
``nu_j = k1/2 + k2(2 r_j^2 - 1) + e/2``; ``sigma = sqrt(D)``.  The third-order
derivative terms of the full Wigner equation are dropped, which is
justified for ``k2 << k1``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .classical import DivergenceError
from .params import ModelParams
from .wigner import DEFAULT_PROMINENCE, find_maxima, label_from_marginals

NC_LABELS = ("Osc", "AD", "OD")


class NegativeDiffusionError(ArithmeticError):
    """nu_j < 0: the Fokker-Planck truncation has broken down for this state."""


def drift(s, p: ModelParams) -> np.ndarray:
    """Drift vector; ``s`` may carry leading batch axes."""
    s = np.asarray(s, dtype=float)
    x1, y1, x2, y2 = (s[..., i] for i in range(4))
    g1 = 0.5 * p.k1 - p.k2 * (x1**2 + y1**2 - 1)
    g2 = 0.5 * p.k1 - p.k2 * (x2**2 + y2**2 - 1)
    w, e = p.omega, p.eps
    return np.stack(
        [w * y1 + (g1 - e) * x1 + e * y2, -w * x1 + g1 * y1,
         w * y2 + (g2 - e) * x2 + e * y1, -w * x2 + g2 * y2],
        axis=-1,
    )


def _nu(s, p: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=float)
    base = 0.5 * p.k1 - p.k2 + 0.5 * p.eps
    return (base + 2 * p.k2 * (s[..., 0] ** 2 + s[..., 1] ** 2),
            base + 2 * p.k2 * (s[..., 2] ** 2 + s[..., 3] ** 2))


def diffusion(s, p: ModelParams) -> np.ndarray:
    """The 4x4 diagonal diffusion matrix at a single state."""
    nu1, nu2 = _nu(s, p)
    if nu1 < 0 or nu2 < 0:
        raise NegativeDiffusionError(f"nu = ({nu1:.4g}, {nu2:.4g}) < 0 at state {np.asarray(s).tolist()}")
    return 0.5 * np.diag([nu1, nu1, nu2, nu2])


def noise_amplitude(s, p: ModelParams) -> np.ndarray:
    """``sqrt(diag D)`` for a batch of states, shape ``s.shape``."""
    nu1, nu2 = _nu(s, p)
    if np.min(nu1) < 0 or np.min(nu2) < 0:
        bad = np.argmin(np.minimum(nu1, nu2).reshape(-1))
        state = np.asarray(s).reshape(-1, 4)[bad]
        raise NegativeDiffusionError(f"negative diffusion at state {state.tolist()}")
    a1, a2 = np.sqrt(0.5 * nu1), np.sqrt(0.5 * nu2)
    return np.stack([a1, a1, a2, a2], axis=-1)


def em_step(s, p: ModelParams, dt: float, noise) -> np.ndarray:
    """One Euler-Maruyama step ``s + mu dt + sigma sqrt(dt) noise``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = np.asarray(s, dtype=float)
    out = s + drift(s, p) * dt + noise_amplitude(s, p) * math.sqrt(dt) * np.asarray(noise)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite state after EM step from {s.tolist()}")
    return out


@dataclass(frozen=True)
class SDEConfig:
    dt: float = 1e-3
    t_final: float = 200.0
    n_trajectories: int = 1000
    transient_fraction: float = 0.5
    seed: int = 20231
    sample_every: int = 100
    init_box: float = 2.0
    block: int = 1000

    def __post_init__(self):
        if self.dt <= 0 or self.t_final <= 0:
            raise ValueError("dt and t_final must be positive")
        if self.n_trajectories < 2:
            raise ValueError("need at least two trajectories")
        if not 0 < self.transient_fraction < 1:
            raise ValueError("transient_fraction must lie in (0, 1)")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def first_kept_step(self) -> int:
        return int(round(self.transient_fraction * self.n_steps)) + 1

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SDEEnsemble:
    params: ModelParams
    config: SDEConfig
    samples: np.ndarray  # (n_trajectories, n_samples, 4), steady window only
    amp_sums: np.ndarray  # per-trajectory sum of x1^2 + y1^2 over every steady-window step
    n_steady_steps: int

    @property
    def pooled(self) -> np.ndarray:
        return self.samples.reshape(-1, 4)


def trajectory_streams(seed: int, n: int) -> list[np.random.Generator]:
    """Per-trajectory generators: trajectory ``i`` uses ``SeedSequence(seed).spawn(n)[i]``."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(n)]


@njit(cache=True)
def _em_block(s, noise, w, k1, k2, e, dt, sq, step0, first, every, amp, samples):
    """Advance every trajectory through one noise block in place.

    Returns ``(code, trajectory)``: code 0 ok, 1 negative diffusion, 2 divergence.
    """
    n, k = noise.shape[0], noise.shape[1]
    base = 0.5 * k1 - k2 + 0.5 * e
    for j in range(n):
        x1, y1, x2, y2 = s[0, j], s[1, j], s[2, j], s[3, j]
        acc = 0.0
        for i in range(k):
            r1 = x1 * x1 + y1 * y1
            r2 = x2 * x2 + y2 * y2
            g1 = 0.5 * k1 - k2 * (r1 - 1.0)
            g2 = 0.5 * k1 - k2 * (r2 - 1.0)
            nu1 = base + 2.0 * k2 * r1
            nu2 = base + 2.0 * k2 * r2
            if nu1 < 0.0 or nu2 < 0.0:
                s[0, j], s[1, j], s[2, j], s[3, j] = x1, y1, x2, y2
                return 1, j
            a1 = np.sqrt(0.5 * nu1) * sq
            a2 = np.sqrt(0.5 * nu2) * sq
            nx1 = x1 + (w * y1 + (g1 - e) * x1 + e * y2) * dt + a1 * noise[j, i, 0]
            ny1 = y1 + (-w * x1 + g1 * y1) * dt + a1 * noise[j, i, 1]
            nx2 = x2 + (w * y2 + (g2 - e) * x2 + e * y1) * dt + a2 * noise[j, i, 2]
            ny2 = y2 + (-w * x2 + g2 * y2) * dt + a2 * noise[j, i, 3]
            x1, y1, x2, y2 = nx1, ny1, nx2, ny2
            step = step0 + i + 1
            if step >= first:
                acc += x1 * x1 + y1 * y1
                if (step - first) % every == 0:
                    m = (step - first) // every
                    samples[j, m, 0] = x1
                    samples[j, m, 1] = y1
                    samples[j, m, 2] = x2
                    samples[j, m, 3] = y2
        amp[j] += acc
        s[0, j], s[1, j], s[2, j], s[3, j] = x1, y1, x2, y2
        if not (abs(x1) < 1e6 and abs(y1) < 1e6 and abs(x2) < 1e6 and abs(y2) < 1e6):
            return 2, j
    return 0, -1


def _run_chunk(p: ModelParams, cfg: SDEConfig, start: int, stop: int, sigma_scale: float):
    gens = trajectory_streams(cfg.seed, cfg.n_trajectories)[start:stop]
    n = stop - start
    s = np.stack([g.uniform(-cfg.init_box, cfg.init_box, size=4) for g in gens], axis=1)
    first = cfg.first_kept_step
    n_samples = (cfg.n_steps - first) // cfg.sample_every + 1
    samples = np.empty((n, n_samples, 4))
    amp = np.zeros(n)
    sq = math.sqrt(cfg.dt) * sigma_scale
    noise = np.empty((n, cfg.block, 4))
    step = 0
    while step < cfg.n_steps:
        k = min(cfg.block, cfg.n_steps - step)
        for j, g in enumerate(gens):
            noise[j, :k] = g.standard_normal((k, 4))
        code, j = _em_block(s, noise[:, :k], p.omega, p.k1, p.k2, p.eps, cfg.dt, sq,
                            step, first, cfg.sample_every, amp, samples)
        step += k
        if code == 1:
            raise NegativeDiffusionError(
                f"trajectory {start + j}: negative diffusion at state {s[:, j].tolist()}"
            )
        if code == 2:
            raise DivergenceError(
                f"trajectory {start + j} (seed {cfg.seed}, spawn key ({start + j},)) diverged before t={step * cfg.dt:.3f}"
            )
    return samples, amp


def run_ensemble(p: ModelParams, cfg: SDEConfig | None = None, jobs: int = 1,
                 sigma_scale: float = 1.0) -> SDEEnsemble:
    """Integrate ``cfg.n_trajectories`` independent paths from uniform random starts.

    Results depend only on ``(p, cfg)``: each trajectory owns its own random
    stream, so the split across ``jobs`` processes does not change them.
    ``sigma_scale = 0`` switches the noise off.
    """
    cfg = cfg or SDEConfig()
    n = cfg.n_trajectories
    if jobs <= 1:
        chunks = [_run_chunk(p, cfg, 0, n, sigma_scale)]
    else:
        edges = np.linspace(0, n, min(jobs, n) + 1).astype(int)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_run_chunk, p, cfg, a, b, sigma_scale) for a, b in zip(edges[:-1], edges[1:])]
            chunks = [f.result() for f in futs]
    samples = np.concatenate([c[0] for c in chunks])
    amp = np.concatenate([c[1] for c in chunks])
    return SDEEnsemble(p, cfg, samples, amp, cfg.n_steps - cfg.first_kept_step + 1)


def averaged_amplitude(ens: SDEEnsemble) -> float:
    """Mean of ``x1^2 + y1^2`` over trajectories and steady-window steps."""
    if ens.n_steady_steps <= 0:
        raise ValueError("empty steady window")
    return float(np.sum(ens.amp_sums) / (ens.amp_sums.size * ens.n_steady_steps))


def histogram(values, bins: int = 101, min_per_bin: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Density histogram ``(centers, density)`` over the sample range.

    Falls back to Freedman-Diaconis binning when there are fewer than
    ``min_per_bin`` samples per requested bin.
    """
    values = np.asarray(values, dtype=float).ravel()
    spec = bins if values.size >= min_per_bin * bins else "fd"
    dens, edges = np.histogram(values, bins=spec, density=True)
    return 0.5 * (edges[:-1] + edges[1:]), dens


def trajectory_extrema(ens: SDEEnsemble, component: int = 1) -> tuple[float, float]:
    """Mean of the local maxima and of the local minima of one coordinate along each path."""
    y = ens.samples[:, :, component]
    mid = y[:, 1:-1]
    is_max = (mid > y[:, :-2]) & (mid > y[:, 2:])
    is_min = (mid < y[:, :-2]) & (mid < y[:, 2:])
    hi = float(mid[is_max].mean()) if is_max.any() else math.nan
    lo = float(mid[is_min].mean()) if is_min.any() else math.nan
    return hi, lo


def classify_ensemble(ens: SDEEnsemble, bins: int = 101, prominence: float = DEFAULT_PROMINENCE) -> dict:
    pooled = ens.pooled
    cx, px = histogram(pooled[:, 0], bins)
    cy, py = histogram(pooled[:, 1], bins)
    xm = find_maxima(px, cx, prominence)
    ym = find_maxima(py, cy, prominence)
    label, ambiguous = label_from_marginals(len(xm) >= 2, len(ym) >= 2, NC_LABELS)
    return {
        "label": label,
        "ambiguous": ambiguous,
        "delta_y": abs(ym[0] - ym[1]) if len(ym) >= 2 else 0.0,
        "x_maxima": xm,
        "y_maxima": ym,
        "bin_width": float(cy[1] - cy[0]),
    }


def noisy_bifurcation(p_base: ModelParams, eps_grid, cfg: SDEConfig | None = None, bins: int = 101,
                      prominence: float = DEFAULT_PROMINENCE, jobs: int = 1) -> list[dict]:
    """Per coupling: averaged amplitude, y1-histogram maxima and trajectory extrema."""
    eps_grid = list(eps_grid)
    if not eps_grid:
        raise ValueError("eps_grid is empty")
    cfg = cfg or SDEConfig()
    rows = []
    for e in eps_grid:
        ens = run_ensemble(p_base.with_eps(e), cfg, jobs)
        c = classify_ensemble(ens, bins, prominence)
        hi, lo = trajectory_extrema(ens)
        rows.append({
            "eps": float(e),
            "mean_amp_nc": averaged_amplitude(ens),
            "delta_y_nc": c["delta_y"],
            "label_nc": c["label"],
            "y_maxima": c["y_maxima"],
            "bin_width": c["bin_width"],
            "traj_max_y1": hi,
            "traj_min_y1": lo,
            "n_traj": cfg.n_trajectories,
            "dt": cfg.dt,
        })
    return rows
