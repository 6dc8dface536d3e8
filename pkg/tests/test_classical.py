import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DEFAULT
from qvdp.classical import (
    BIFURCATION_COLUMNS,
    DivergenceError,
    SingularBranchError,
    amplitude_rhs,
    bifurcation_diagram,
    fixed_points,
    integrate,
    is_stable,
    jacobian,
    jacobian_eigs,
    locate_thresholds,
    vdp_rhs,
)
from qvdp.params import ModelParams

coord = st.floats(-3, 3, allow_nan=False)
state = st.tuples(coord, coord, coord, coord).map(np.array)


def test_rhs_examples():
    np.testing.assert_allclose(vdp_rhs([1, 0, 0, 0], DEFAULT), [0, -2, 0, 0])
    np.testing.assert_allclose(vdp_rhs([0, 1, 0, 0], DEFAULT.with_eps(1.0)), [2, 1, 1, 0])
    # nonlinear damping term: (k1 - 8 k2 x1^2) y1 = (1 - 1.6) * 1 at x1 = y1 = 1
    np.testing.assert_allclose(vdp_rhs([1, 1, 0, 0], DEFAULT), [2, -2 - 0.6, 0, 0])


def test_rhs_broadcasts_over_coupling():
    s = np.tile([0.3, -0.2, 0.5, 0.1], (3, 1))
    eps = np.array([0.0, 1.0, 1.5])
    batch = vdp_rhs(s, DEFAULT, eps)
    for i, e in enumerate(eps):
        np.testing.assert_allclose(batch[i], vdp_rhs(s[i], DEFAULT.with_eps(e)))


@settings(max_examples=50, deadline=None)
@given(state, st.floats(0, 2.5))
def test_amplitude_equation_cartesian(s, eps):
    p = DEFAULT.with_eps(eps)
    x1, y1, x2, y2 = s
    w, k1, k2 = p.omega, p.k1, p.k2
    g1 = k1 / 2 - k2 * (x1**2 + y1**2)
    g2 = k1 / 2 - k2 * (x2**2 + y2**2)
    d1 = complex(w * y1 + g1 * x1 - eps * (x1 - y2), -w * x1 + g1 * y1)
    d2 = complex(w * y2 + g2 * x2 - eps * (x2 - y1), -w * x2 + g2 * y2)
    a1, a2 = amplitude_rhs(complex(x1, y1), complex(x2, y2), p)
    assert abs(a1 - d1) < 1e-12 * max(1, abs(d1))
    assert abs(a2 - d2) < 1e-12 * max(1, abs(d2))


@settings(max_examples=50, deadline=None)
@given(state, st.floats(0, 2.5))
def test_symmetries(s, eps):
    p = DEFAULT.with_eps(eps)
    f = vdp_rhs(s, p)
    np.testing.assert_allclose(vdp_rhs(-s, p), -f, atol=1e-12)
    swap = s[[2, 3, 0, 1]]
    np.testing.assert_allclose(vdp_rhs(swap, p), f[[2, 3, 0, 1]], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(state, st.floats(0, 2.5))
def test_jacobian_finite_difference(s, eps):
    p = DEFAULT.with_eps(eps)
    h = 1e-6
    fd = np.column_stack([(vdp_rhs(s + h * e, p) - vdp_rhs(s - h * e, p)) / (2 * h) for e in np.eye(4)])
    np.testing.assert_allclose(jacobian(s, p), fd, atol=1e-6 * max(1, np.max(np.abs(s)) ** 2))


def test_origin_eigenvalues_uncoupled():
    lam = jacobian_eigs(np.zeros(4), DEFAULT)
    # (k1 +- sqrt(k1^2 - 4 w^2)) / 2, twice
    np.testing.assert_allclose(sorted(lam.real), [0.5] * 4)
    assert not is_stable(lam)


@pytest.mark.parametrize("eps", [0.5, 1.2, 1.5, 1.99, 2.5, 4.0])
def test_fixed_point_residuals(eps):
    p = DEFAULT.with_eps(eps)
    fp = fixed_points(p)
    np.testing.assert_array_equal(fp.hss, 0)
    if fp.exists_ihss:
        for s in (fp.ihss_plus, fp.ihss_minus):
            assert np.linalg.norm(vdp_rhs(s, p)) < 1e-10 * max(1, np.max(np.abs(s)) ** 3)
        np.testing.assert_allclose(fp.ihss_plus[2:], -fp.ihss_plus[:2])


def test_fixed_point_existence_boundary():
    assert not fixed_points(DEFAULT.with_eps(1.3)).exists_ihss
    assert fixed_points(DEFAULT.with_eps(1.34)).exists_ihss
    with pytest.raises(SingularBranchError):
        fixed_points(DEFAULT.with_eps(0.0))
    with pytest.raises(SingularBranchError):
        fixed_points(DEFAULT.with_eps(2.0))


def test_ihss_diverges_towards_omega():
    ys = [abs(fixed_points(DEFAULT.with_eps(e)).ihss_plus[1]) for e in (1.9, 1.99, 1.999)]
    assert ys[0] < ys[1] < ys[2]


def test_thresholds_default():
    th = locate_thresholds(DEFAULT)
    assert th["hopf"] == pytest.approx(1.0, abs=1e-6)
    assert th["pitchfork"] == pytest.approx(4 / 3, abs=1e-6)


def test_thresholds_random_parameters():
    rng = np.random.default_rng(17)
    done = 0
    while done < 10:
        w, k1 = rng.uniform(1.0, 3.0), rng.uniform(0.2, 1.5)
        pitch = w**2 / (w + k1)
        if not k1 < pitch - 0.05:
            continue
        p = ModelParams(omega=w, k1=k1, k2=0.2 * k1)
        th = locate_thresholds(p)
        assert th["hopf"] == pytest.approx(k1, abs=1e-6)
        assert th["pitchfork"] == pytest.approx(pitch, abs=1e-6)
        done += 1


def test_ihss_stable_past_pitchfork():
    for eps in (1.35, 1.5, 1.8, 1.99):
        fp = fixed_points(DEFAULT.with_eps(eps))
        assert is_stable(jacobian_eigs(fp.ihss_plus, DEFAULT.with_eps(eps)))


def test_integrate_limit_cycle():
    tr = integrate([0.1, 0, 0.1, 0], DEFAULT.with_eps(0.5), t_final=150, dt=5e-3)
    late = tr.states[tr.t > 100]
    assert np.ptp(late[:, 0]) > 1.0
    assert tr.states.shape[1:] == (4,)


def test_integrate_amplitude_death():
    tr = integrate([0.5, -0.2, 0.1, 0.3], DEFAULT.with_eps(1.2), t_final=150, dt=5e-3)
    assert np.max(np.abs(tr.states[-1])) < 1e-6


def test_integrate_oscillation_death():
    p = DEFAULT.with_eps(1.5)
    tr = integrate([0.5, -0.2, -0.1, 0.3], p, t_final=150, dt=5e-3)
    fp = fixed_points(p)
    end = tr.states[-1]
    dist = min(np.linalg.norm(end - fp.ihss_plus), np.linalg.norm(end - fp.ihss_minus))
    assert dist < 1e-6


def test_integrate_divergence_guard():
    with pytest.raises(DivergenceError):
        integrate([1e3, 1e3, 0, 0], DEFAULT, t_final=1, dt=1e-3, max_norm=1e4)


def test_bifurcation_windows():
    eps = np.round(np.arange(0.1, 2.0, 0.1), 2)
    rows = bifurcation_diagram(DEFAULT, eps, t_final=300, dt=5e-3)
    assert list(rows[0]) == BIFURCATION_COLUMNS
    regime = {r["eps"]: r["regime"] for r in rows}
    for e in eps:
        if e < 1.0:
            assert regime[e] == "Osc"
        elif 1.0 < e < 4 / 3:
            assert regime[e] == "AD"
        elif e > 4 / 3:
            assert regime[e] == "OD"
    for r in rows:
        if abs(r["eps"] - 1.0) < 1e-9:
            continue  # marginal at the Hopf point
        assert r["hss_stable"] == (1.0 < r["eps"] < 4 / 3)
        assert r["ihss_exists"] == (r["eps"] > 4 / 3)


def test_bifurcation_rejects_empty_grid():
    with pytest.raises(ValueError):
        bifurcation_diagram(DEFAULT, [])
