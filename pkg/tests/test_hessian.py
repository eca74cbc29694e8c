import json

import numpy as np
import pytest

from hessbundle.bundle import Metric, exp_step, random_direction
from hessbundle.errors import ConfigurationError
from hessbundle.functional import lambda_k
from hessbundle.geometry import Background
from hessbundle.hessian import (
    all_cone_reports,
    dual_nakano_form,
    n1_n3_index_oracle,
    nakano_form,
    pipeline_one_sided,
    psi_k,
    residual,
    sample_points,
    sigma_k_form,
    sigma_k_report,
    strongly_sigma2_forms,
    strongly_sigma2_report,
    write_positivity,
)


def test_psi_at_constant_solution(bg8):
    H = Metric.identity(bg8)
    for k in (1, 2):
        assert np.max(np.abs(psi_k(H, k) - lambda_k(bg8, k) * np.eye(2))) < 1e-12
        assert residual(H, k).sup_norm < 1e-12


def test_psi_rejects_bad_k(bg8):
    with pytest.raises(ConfigurationError):
        psi_k(Metric.identity(bg8), 3)


def test_residual_of_random_metric(metric16):
    res = residual(metric16, 2)
    assert res.sup_norm > 0.1
    assert res.self_adjoint_defect < 1e-8
    # the returned field is H-self-adjoint
    np.testing.assert_allclose(metric16.adjoint(res.field), res.field, atol=1e-10)


def test_trace_of_residual_integrates_to_zero(metric16):
    res = residual(metric16, 2)
    assert abs(np.mean(np.trace(res.field, axis1=-2, axis2=-1))) < 1e-10


@pytest.mark.parametrize("m, k, expected", [(1, 2, 2 * np.pi), (1, 1, 1.0), (-1, 2, -2 * np.pi), (2, 2, 4 * np.pi)])
def test_constant_model_sigma_forms(m, k, expected):
    H = Metric.identity(Background(2, 8, 2, m))
    ev = np.linalg.eigvalsh(sigma_k_form(H, k, 0))
    np.testing.assert_allclose(ev, expected, atol=1e-12)


def test_one_sided_forms_sum_to_sigma2():
    H = Metric.identity(Background(2, 8, 2, 1))
    a, b = strongly_sigma2_forms(H, 3)
    np.testing.assert_allclose(np.linalg.eigvalsh(a), np.pi, atol=1e-12)
    np.testing.assert_allclose(np.linalg.eigvalsh(b), np.pi, atol=1e-12)
    np.testing.assert_allclose(a + b, sigma_k_form(H, 2, 3), atol=1e-12)


def test_sigma_forms_hermitian_for_random_metric(metric16):
    A = sigma_k_form(metric16, 2, 17)
    np.testing.assert_allclose(A, A.conj().T, atol=1e-12)
    a, b = strongly_sigma2_forms(metric16, 17)
    np.testing.assert_allclose(a + b, A, atol=1e-10)


def test_n3_constant_model():
    H = Metric.identity(Background(3, 2, 1, 1))
    # k c^{k-1} (n-1)!/(n-k)! with c = pi
    np.testing.assert_allclose(np.linalg.eigvalsh(sigma_k_form(H, 3, 0)), 3 * np.pi**2 * 2, atol=1e-10)
    np.testing.assert_allclose(np.linalg.eigvalsh(sigma_k_form(H, 2, 0)), 2 * np.pi * 2, atol=1e-10)


def test_central_nakano_forms():
    c = 2.5
    F = {(a, b): c * np.eye(2) * (a == b) for a in range(2) for b in range(2)}
    np.testing.assert_allclose(np.linalg.eigvalsh(nakano_form(F)), c)
    np.testing.assert_allclose(np.linalg.eigvalsh(dual_nakano_form(F)), c)


def test_nakano_forms_are_block_transposes(rng):
    F = {(a, b): rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for a in range(2) for b in range(2)}
    N, D = nakano_form(F), dual_nakano_form(F)
    np.testing.assert_allclose(N[0:2, 2:4], D[2:4, 0:2])
    np.testing.assert_allclose(N[0:2, 0:2], D[0:2, 0:2])


@pytest.mark.parametrize("seed", range(5))
def test_index_oracle_matches_pipeline(seed):
    rng = np.random.default_rng(seed)
    n, r = 2, 2
    F = {(a, b): rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r)) for a in range(n) for b in range(n)}
    g = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    h = g @ g.conj().T + np.eye(r)
    xi = [rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r)) for _ in range(n)]
    o = n1_n3_index_oracle(F, xi, h)
    p = pipeline_one_sided(n, F, xi, h)
    np.testing.assert_allclose(o, p, rtol=1e-12, atol=1e-12)


def test_sample_points():
    assert len(sample_points(Background(2, 8, 2))) == 8**4
    pts = sample_points(Background(2, 32, 1), max_points=100)
    assert len(pts) == 100 and len(set(pts)) == 100
    np.testing.assert_array_equal(pts, sample_points(Background(2, 32, 1), max_points=100))


def test_reports_near_constant_solution(bg8, rng):
    H = Metric.identity(bg8)
    K = exp_step(H, random_direction(H, rng), 0.01)
    pts = np.arange(0, 8**4, 97)
    rep = sigma_k_report(K, 2, pts)
    assert rep.positive and abs(rep.global_min - 2 * np.pi) < 0.5
    s2 = strongly_sigma2_report(K, pts)
    assert s2.extra["first_min_eig"] > 0 and s2.extra["second_min_eig"] > 0


def test_negative_background_fails_cones():
    H = Metric.identity(Background(2, 8, 2, -1))
    reps = all_cone_reports(H, 2, points=[0, 1])
    assert [r.cone for r in reps] == ["sigma_k", "strongly_sigma2", "nakano", "dual_nakano"]
    assert not any(r.positive for r in reps)


def test_write_positivity(tmp_path, bg8):
    reps = all_cone_reports(Metric.identity(bg8), 2, points=[0, 5])
    write_positivity(reps, tmp_path / "p.csv", tmp_path / "p.json")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "cone,point_index,min_eig" and len(lines) == 1 + 4 * 2
    doc = json.loads((tmp_path / "p.json").read_text())
    assert doc["reports"][0]["global_min_eig"] == pytest.approx(2 * np.pi)
