import numpy as np
import pytest

from hessbundle import hermitian as hm
from hessbundle.bundle import (
    Metric,
    chern_del,
    curvature,
    endo_norm,
    exp_step,
    geodesic,
    geodesic_derivative_bound_check,
    log_ratio,
    perturb,
    perturbation_bounds,
    random_ball_element,
    random_direction,
    random_metric,
    self_adjoint_defect,
)
from hessbundle.errors import ConfigurationError, DegenerateMetricError
from hessbundle.geometry import Background, EndForm, dbar, del_, random_field


def test_background_curvature(bg8):
    F = curvature(Metric.identity(bg8))
    iF = F * 1j
    for a in range(2):
        for b in range(2):
            expected = np.pi * np.eye(2) * (a == b) * 1j  # i F = pi m sum i dz ^ dzbar
            np.testing.assert_allclose(iF[((a,), (b,))], np.broadcast_to(expected, bg8.field_shape), atol=1e-12)


def test_conformal_metric_oracle(bg16, rng):
    phi = np.real(random_field(bg16, rng, 1, hermitian=True, rank=1)[..., 0, 0]) * 0.4
    H = Metric(bg16, np.exp(phi)[..., None, None] * np.eye(2))
    F = curvature(H)
    phi_form = EndForm.scalar(2, phi[..., None, None] + 0j)
    ddphi = dbar(bg16, del_(bg16, phi_form))
    for key, v in F.comps.items():
        expected = bg16.model_curvature().comps[key] + ddphi.comps[key] * np.eye(2)
        # e^phi is not band-limited, so h^{-1} dh = dphi only up to aliasing
        np.testing.assert_allclose(v, expected, atol=1e-8)


def test_curvature_is_h_hermitian(metric16):
    F = curvature(metric16)
    worst = 0.0
    for a in range(2):
        for b in range(2):
            worst = max(worst, np.max(np.abs(metric16.adjoint(F[(a,), (b,)]) - F[(b,), (a,)])))
    assert worst / F.max_abs() < 1e-8


def test_curvature_scale_invariant(metric16):
    F = curvature(metric16)
    G = curvature(metric16.scaled(3.7))
    assert (F - G).max_abs() < 1e-12 * F.max_abs()


def test_chern_del_leibniz_on_functions(metric16, rng):
    bg = metric16.bg
    f = EndForm.scalar(2, random_field(bg, rng, 1, hermitian=False))
    lhs = chern_del(metric16, f)
    A = metric16.connection
    rhs = del_(bg, f) + EndForm(2, 1, 0, {k: hm.mm(v, f.comps[((), ())]) - hm.mm(f.comps[((), ())], v) for k, v in A.comps.items()})
    assert (lhs - rhs).max_abs() < 1e-12


def test_geodesic_endpoints_and_velocity(metric16, metric16b):
    s = log_ratio(metric16, metric16b)
    assert self_adjoint_defect(metric16, s) < 1e-12
    np.testing.assert_allclose(exp_step(metric16, s).h, metric16b.h, atol=1e-12)
    t, d = 0.3, 1e-5
    Ht = geodesic(metric16, metric16b, t)
    vel = hm.mm(Ht.hinv, (geodesic(metric16, metric16b, t + d).h - geodesic(metric16, metric16b, t - d).h) / (2 * d))
    np.testing.assert_allclose(vel, s, atol=1e-8)


def test_geodesic_midpoint_symmetry(metric16, metric16b):
    a = geodesic(metric16, metric16b, 0.5)
    b = geodesic(metric16b, metric16, 0.5)
    np.testing.assert_allclose(a.h, b.h, atol=1e-12)


def test_perturb_zero_is_identity(metric16, rng):
    s = random_direction(metric16, rng)
    assert perturb(metric16, s, 0.0) is metric16


def test_random_ball_element_in_ball(metric16, rng):
    K, pert = random_ball_element(metric16, rng, 0.05)
    assert pert.in_ball(0.05)
    again = perturbation_bounds(metric16, pert.s)
    assert again.sup_s == pytest.approx(pert.sup_s, rel=1e-12)
    assert again.sup_derivs == pytest.approx(pert.sup_derivs, rel=1e-12)
    np.testing.assert_allclose(log_ratio(metric16, K), pert.s, atol=1e-12)


def test_endo_norm_is_frobenius(bg8):
    H = Metric.identity(bg8)
    a = np.broadcast_to(np.array([[1.0, 2.0], [0.0, 2.0]], complex), bg8.field_shape)
    np.testing.assert_allclose(endo_norm(H, a), 3.0)


def test_z2_bound_on_geodesic(metric16, metric16b):
    out = geodesic_derivative_bound_check(metric16, metric16b, np.linspace(0, 1, 5))
    assert out["max_violation"] <= 1e-8
    assert out["samples"][0]["max_lhs"] == 0.0


def test_metric_validation(bg8):
    eye = bg8.identity()
    with pytest.raises(ConfigurationError):
        Metric(bg8, eye[..., :1, :1])
    with pytest.raises(DegenerateMetricError):
        Metric(bg8, -eye)
    bad = eye.copy()
    bad[..., 0, 1] = 0.5
    with pytest.raises(DegenerateMetricError):
        Metric(bg8, bad)
    nan = eye.copy()
    nan[0, 0, 0, 0, 0, 0] = np.nan
    with pytest.raises(DegenerateMetricError):
        Metric(bg8, nan)


def test_split_background_rejects_off_diagonal():
    bg = Background(2, 8, 2, (1, 2))
    h = bg.identity()
    h[..., 0, 1] = h[..., 1, 0] = 0.1
    with pytest.raises(ConfigurationError):
        Metric(bg, h)
    Metric(bg, bg.identity() * 2.0)


def test_random_metric_deterministic(bg8):
    np.testing.assert_array_equal(random_metric(bg8, 5, 0.2).h, random_metric(bg8, 5, 0.2).h)
    assert random_metric(bg8, 5, 0.0).h is not None
