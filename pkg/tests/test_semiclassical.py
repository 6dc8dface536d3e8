import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DEFAULT
from qvdp.classical import amplitude_rhs
from qvdp.params import ModelParams
from qvdp.semiclassical import (
    NegativeDiffusionError,
    SDEConfig,
    averaged_amplitude,
    classify_ensemble,
    diffusion,
    drift,
    em_step,
    histogram,
    noise_amplitude,
    noisy_bifurcation,
    run_ensemble,
    trajectory_streams,
)

coord = st.floats(-3, 3, allow_nan=False)
state = st.tuples(coord, coord, coord, coord).map(np.array)


def quiet(**kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ModelParams(**kw)


def test_drift_vanishes_at_origin():
    np.testing.assert_array_equal(drift(np.zeros(4), DEFAULT.with_eps(1.3)), 0)


@settings(max_examples=50, deadline=None)
@given(state, st.floats(0, 2.5))
def test_drift_is_shifted_amplitude_equation(s, eps):
    # the only difference from the deterministic amplitude equation is the
    # noise-induced gain k2 on each component
    p = DEFAULT.with_eps(eps)
    a1, a2 = amplitude_rhs(complex(s[0], s[1]), complex(s[2], s[3]), p)
    det = np.array([a1.real, a1.imag, a2.real, a2.imag])
    np.testing.assert_allclose(drift(s, p) - det, p.k2 * s, atol=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * np.pi))
def test_uncoupled_drift_tangent_on_shifted_radius(phi):
    r = np.sqrt(DEFAULT.k1 / (2 * DEFAULT.k2) + 1)
    s = np.array([r * np.cos(phi), r * np.sin(phi), 0.3, -0.1])
    mu = drift(s, DEFAULT)
    assert abs(mu[0] * s[0] + mu[1] * s[1]) < 1e-12


def test_diffusion_values():
    np.testing.assert_allclose(diffusion(np.zeros(4), DEFAULT), 0.15 * np.eye(4))
    d = diffusion([1.0, 0.0, 0.0, 2.0], DEFAULT.with_eps(1.0))
    # nu = k1/2 - k2 + e/2 + 2 k2 r^2
    np.testing.assert_allclose(np.diag(d), 0.5 * np.array([1.2, 1.2, 2.4, 2.4]))


@settings(max_examples=50, deadline=None)
@given(state, st.floats(0, 2.5))
def test_diffusion_floor(s, eps):
    p = DEFAULT.with_eps(eps)
    d = np.diag(diffusion(s, p))
    assert np.all(d >= 0.5 * (p.k1 / 2 - p.k2 + eps / 2) - 1e-15)
    np.testing.assert_allclose(noise_amplitude(s, p) ** 2, d)


def test_diffusion_grows_with_radius():
    vals = [diffusion([r, 0, 0, 0], DEFAULT)[0, 0] for r in (0, 0.5, 1, 2)]
    assert np.all(np.diff(vals) > 0)


def test_negative_diffusion_raises():
    p = quiet(omega=2.0, k1=0.2, k2=0.5)
    with pytest.raises(NegativeDiffusionError):
        diffusion(np.zeros(4), p)
    with pytest.raises(NegativeDiffusionError):
        run_ensemble(p, SDEConfig(t_final=0.1, n_trajectories=2, init_box=0.1))


def test_em_step_without_noise_is_euler():
    s = np.array([0.4, -1.0, 0.2, 0.7])
    p = DEFAULT.with_eps(0.8)
    np.testing.assert_allclose(em_step(s, p, 0.01, np.zeros(4)), s + 0.01 * drift(s, p))
    with pytest.raises(ValueError):
        em_step(s, p, 0.0, np.zeros(4))


def test_kernel_matches_em_step():
    cfg = SDEConfig(dt=1e-3, t_final=0.2, n_trajectories=3, transient_fraction=0.05, sample_every=1, seed=9)
    p = DEFAULT.with_eps(1.3)
    ens = run_ensemble(p, cfg)
    for i, g in enumerate(trajectory_streams(cfg.seed, cfg.n_trajectories)):
        s = g.uniform(-cfg.init_box, cfg.init_box, size=4)
        noise = g.standard_normal((cfg.n_steps, 4))
        path = []
        for k in range(cfg.n_steps):
            s = em_step(s, p, cfg.dt, noise[k])
            if k + 1 >= cfg.first_kept_step:
                path.append(s)
        np.testing.assert_allclose(ens.samples[i], path, atol=1e-12)


def test_stationary_covariance_of_linear_model():
    # with k2 = 0 the SDE is linear with constant noise; its stationary
    # covariance solves A S + S A^T + sigma sigma^T = 0 with sigma sigma^T = D
    p = ModelParams(omega=2.0, k1=0.1, k2=0.0, eps=1.0)
    g = p.k1 / 2
    e, w = p.eps, p.omega
    A = np.array([[g - e, w, 0, e], [-w, g, 0, 0], [0, e, g - e, w], [0, 0, -w, g]])
    assert np.max(np.linalg.eigvals(A).real) < 0
    D = diffusion(np.zeros(4), p)
    cov_exact = scipy.linalg.solve_continuous_lyapunov(A, -D)
    cfg = SDEConfig(dt=1e-3, t_final=120, n_trajectories=400, transient_fraction=0.25, sample_every=50, seed=3)
    ens = run_ensemble(p, cfg)
    cov = np.cov(ens.pooled.T)
    for i in range(4):
        assert cov[i, i] == pytest.approx(cov_exact[i, i], rel=0.05)
    scale = np.sqrt(np.outer(np.diag(cov_exact), np.diag(cov_exact)))
    assert np.max(np.abs(cov - cov_exact) / scale) < 0.05


def test_reproducible_and_split_invariant():
    cfg = SDEConfig(t_final=5, n_trajectories=6, seed=42)
    p = DEFAULT.with_eps(0.5)
    a = run_ensemble(p, cfg)
    b = run_ensemble(p, cfg)
    c = run_ensemble(p, cfg, jobs=2)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.samples, c.samples)
    np.testing.assert_array_equal(a.amp_sums, c.amp_sums)
    d = run_ensemble(p, SDEConfig(t_final=5, n_trajectories=6, seed=43))
    assert not np.array_equal(a.samples, d.samples)


def test_deterministic_limit_cycle_radius():
    cfg = SDEConfig(t_final=60, n_trajectories=10)
    ens = run_ensemble(DEFAULT, cfg, sigma_scale=0.0)
    assert averaged_amplitude(ens) == pytest.approx(DEFAULT.k1 / (2 * DEFAULT.k2) + 1, rel=0.01)


def test_step_size_convergence():
    p = DEFAULT.with_eps(0.1)
    coarse = run_ensemble(p, SDEConfig(dt=1e-3, t_final=100, n_trajectories=200))
    fine = run_ensemble(p, SDEConfig(dt=5e-4, t_final=100, n_trajectories=200, sample_every=200))
    a, b = averaged_amplitude(coarse), averaged_amplitude(fine)
    assert abs(a - b) / b < 0.02


def test_histogram_binning():
    rng = np.random.default_rng(0)
    c, d = histogram(rng.normal(size=20000), bins=101)
    assert c.size == 101
    assert np.sum(d) * (c[1] - c[0]) == pytest.approx(1.0)
    c, _ = histogram(rng.normal(size=500), bins=101)
    assert c.size != 101


def test_sweep_rejects_empty_grid():
    with pytest.raises(ValueError):
        noisy_bifurcation(DEFAULT, [])


def test_config_validation():
    with pytest.raises(ValueError):
        SDEConfig(dt=0)
    with pytest.raises(ValueError):
        SDEConfig(n_trajectories=1)
    with pytest.raises(ValueError):
        SDEConfig(transient_fraction=1.0)


@pytest.mark.slow
@pytest.mark.parametrize("eps,label", [(0.1, "Osc"), (1.3, "AD"), (1.99, "OD")])
def test_ensemble_regimes(sde_ensembles, eps, label):
    c = classify_ensemble(sde_ensembles[eps])
    assert c["label"] == label


@pytest.mark.slow
def test_oscillation_death_histogram_symmetric(sde_ensembles):
    c = classify_ensemble(sde_ensembles[1.99])
    y0, y1 = c["y_maxima"][:2]
    assert abs(y0 + y1) < 2 * c["bin_width"]
    y = sde_ensembles[1.99].pooled[:, 1]
    assert abs(np.mean(y > 0) - 0.5) < 0.05
