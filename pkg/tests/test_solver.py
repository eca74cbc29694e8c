import numpy as np
import pytest

import hessbundle.solver as solver
from hessbundle.bundle import Metric, exp_step, random_direction, random_metric
from hessbundle.errors import ConfigurationError, StallError
from hessbundle.geometry import Background
from hessbundle.hessian import psi_k
from hessbundle.solver import (
    TRACE_HEADER,
    SolverConfig,
    central_direction_difference,
    flow_step,
    initial_state,
    local_min_experiment,
    recenter,
    solve,
)


@pytest.fixture(scope="module")
def perturbed8():
    bg = Background(2, 8, 2, 1)
    H = Metric.identity(bg)
    return exp_step(H, random_direction(H, np.random.default_rng(0)), 0.1)


@pytest.fixture(scope="module")
def solved8(perturbed8):
    return solve(perturbed8, SolverConfig(k=2, cone_sample=16))


def test_fixed_point_is_unchanged(bg8):
    H = Metric.identity(bg8)
    st = initial_state(H, 2)
    assert st.residual_sup < 1e-12
    out, rej = flow_step(st, 2, tol=0.0)
    assert rej == 0 and out.iter == 0 and np.array_equal(out.H.h, H.h)
    Hs, rep = solve(H)
    assert rep.converged and rep.iterations == 0 and np.array_equal(Hs.h, H.h)
    # even with a zero tolerance the roundoff residual is not mistaken for a direction
    _, rep = solve(H, SolverConfig(tol=1e-300, cone_sample=0))
    assert rep.converged and rep.reason == "fixed_point" and rep.iterations == 0


def test_infinite_tolerance_returns_start(perturbed8):
    Hs, rep = solve(perturbed8, SolverConfig(tol=np.inf, cone_sample=0))
    assert rep.converged and rep.iterations == 0
    np.testing.assert_allclose(Hs.h, recenter(perturbed8).h)


def test_k2_converges_monotonically(solved8):
    Hs, rep = solved8
    assert rep.converged and rep.reason == "tolerance"
    assert rep.state.residual_sup < 1e-6
    assert rep.monotone
    M = np.array([float(row[2]) for row in rep.trace])
    assert np.all(np.diff(M) < 0)
    assert abs(np.mean(Hs.logdet())) < 1e-12
    assert rep.state.cone_margin == pytest.approx(2 * np.pi, abs=1e-3)


def test_trace_csv(solved8):
    _, rep = solved8
    lines = rep.trace_csv().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(lines) == rep.iterations + 2
    assert rep.summary()["iterations"] == rep.iterations


def test_trace_conservation(perturbed8):
    st = initial_state(perturbed8, 2)
    for _ in range(5):
        st, _ = flow_step(st, 2)
        assert st.trace_drift < 1e-10


def test_gauge_invariance(perturbed8):
    runs = []
    for a in (1.0, 3.0):
        _, rep = solve(perturbed8.scaled(a), SolverConfig(k=2, max_iters=5, cone_sample=0))
        runs.append(rep.state.H.h)
    np.testing.assert_allclose(runs[0], runs[1], atol=1e-12)


def test_flat_bundle_k1_converges_to_constant():
    bg = Background(2, 8, 2, 0)
    Hs, rep = solve(random_metric(bg, 3, 0.3, 1), SolverConfig(k=1, tol=1e-8, cone_sample=4))
    assert rep.converged and rep.state.residual_sup < 1e-8
    # the limit is a constant metric
    assert np.max(np.abs(Hs.h - Hs.h[(0,) * 4])) < 1e-5


def test_split_equal_k1():
    bg = Background(2, 8, 2, (1, 1))
    Hs, rep = solve(random_metric(bg, 3, 0.3, 1), SolverConfig(k=1, tol=1e-6, cone_sample=4))
    assert rep.converged
    assert np.max(np.abs(psi_k(Hs, 1) - 2 * np.pi * np.eye(2))) < 1e-6


def test_stall_is_reported(perturbed8, monkeypatch):
    monkeypatch.setattr(solver, "geodesic_increment", lambda *a, **k: 1.0)
    with pytest.raises(StallError) as err:
        flow_step(initial_state(perturbed8, 2), 2, dt_min=1e-3)
    assert err.value.state is not None
    _, rep = solve(perturbed8, SolverConfig(k=2, dt_min=1e-3, cone_sample=0))
    assert not rep.converged and rep.reason == "stall" and rep.iterations == 0


def test_budget_exhausted(perturbed8):
    _, rep = solve(perturbed8, SolverConfig(k=2, max_iters=3, cone_sample=0))
    assert not rep.converged and rep.reason == "max_iters" and rep.iterations == 3


@pytest.mark.parametrize("kwargs", [dict(tol=0.0), dict(max_iters=-1), dict(growth=0.5)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kwargs)


def test_solve_rejects_bad_k(perturbed8):
    with pytest.raises(ConfigurationError):
        solve(perturbed8, SolverConfig(k=3))


def test_recenter(perturbed8):
    H = recenter(perturbed8.scaled(5.0))
    assert abs(np.mean(H.logdet())) < 1e-13


def test_local_min_zero_radius(bg8):
    H = Metric.identity(bg8)
    rep = local_min_experiment(H, H, 2, 0.0, 5)
    assert np.all(rep.differences == 0.0)


def test_local_min_positive(bg8):
    H = Metric.identity(bg8)
    rep = local_min_experiment(H, H, 2, 0.01, 5, seed=3)
    assert rep.passes() and rep.strictly_positive_noncentral()
    assert rep.summary()["max_radius"] < 0.01
    assert rep.cone_margin == pytest.approx(2 * np.pi)


def test_central_direction_is_flat(bg8):
    assert abs(central_direction_difference(Metric.identity(bg8), 2, 0.4)) < 1e-12
