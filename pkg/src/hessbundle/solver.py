"""Gradient flow for ``psi_k(H) = lambda Id``.

The flow ``H^{-1} dH/dt = -(psi_k(H) - lambda)`` decreases the Donaldson-type
functional at rate ``int |psi_k - lambda|^2_H``. Steps are exponential Euler
updates ``H <- H exp(-dt R)`` with ``R`` the H-Hermitian part of the residual,
so the metric never leaves the positive cone. A step is kept only if the
functional drops; the drop is measured along the step geodesic with the
two-point Lobatto rule, which reuses the curvature at both ends.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bundle import Metric, exp_step, random_ball_element
from .errors import ConfigurationError, StallError
from .functional import geodesic_increment, lambda_k
from .hessian import psi_k, residual, sample_points, sigma_k_report

TRACE_HEADER = ("iter", "dt", "M", "residual_sup", "residual_l2", "cone_margin")

# residuals below this (relative to max(1, lambda)) are roundoff in psi_k, not a direction
ROUNDOFF = 1e-12


@dataclass
class FlowState:
    """Metric plus diagnostics; ``M_value`` is measured from the starting metric."""

    H: Metric
    iter: int
    M_value: float
    residual_sup: float
    residual_l2: float
    dt: float
    cone_margin: float
    monotone_ok: bool
    psi: np.ndarray = field(repr=False, default=None)
    trace_drift: float = 0.0

    def trace_row(self):
        return (self.iter, repr(self.dt), repr(self.M_value), repr(self.residual_sup), repr(self.residual_l2), repr(self.cone_margin))


@dataclass
class SolverConfig:
    k: int = 2
    tol: float = 1e-6
    max_iters: int = 5000
    dt0: float | None = None  # default 0.1 / sup|psi - lambda|
    dt_min: float = 1e-12
    growth: float = 1.25
    cone_every: int = 100
    cone_sample: int = 64

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("solver tolerance must be positive")
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be non-negative")
        if not self.growth >= 1:
            raise ConfigurationError("growth factor must be >= 1")


@dataclass
class ConvergenceReport:
    converged: bool
    reason: str
    iterations: int
    rejected: int
    monotone: bool
    state: FlowState
    trace: list

    def trace_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        w.writerows(self.trace)
        return buf.getvalue()

    def summary(self):
        s = self.state
        return {
            "converged": self.converged,
            "reason": self.reason,
            "iterations": self.iterations,
            "rejected_steps": self.rejected,
            "monotone": self.monotone,
            "M": s.M_value,
            "residual_sup": s.residual_sup,
            "residual_l2": s.residual_l2,
            "final_dt": s.dt,
            "cone_margin": s.cone_margin,
        }


def recenter(H: Metric) -> Metric:
    """Scale ``h`` so that the grid mean of ``tr log h`` vanishes."""
    shift = float(np.mean(H.logdet())) / H.bg.r
    if shift == 0.0:
        return H
    return H.scaled(math.exp(-shift))


def _cone_margin(H, k, points):
    if points is None or len(points) == 0:
        return float("nan")
    return sigma_k_report(H, k, points).global_min


def cone_points(bg, count, seed=0):
    """A fixed stratified subset of grid points used for cheap cone tracking."""
    if count <= 0:
        return np.array([], dtype=int)
    return sample_points(bg, max_points=count, seed=seed, full_threshold=0)


def initial_state(H: Metric, k: int, lam=None, dt0=None, points=None) -> FlowState:
    lam = lambda_k(H.bg, k) if lam is None else lam
    psi = psi_k(H, k)
    res = residual(H, k, lam, psi)
    if dt0 is None:
        dt0 = 0.1 / res.sup_norm if res.sup_norm > ROUNDOFF * max(1.0, abs(lam)) else 1.0
    return FlowState(H, 0, 0.0, res.sup_norm, res.l2_norm, dt0, _cone_margin(H, k, points), True, psi)


def flow_step(state: FlowState, k: int, lam=None, tol=0.0, dt_min=1e-12, growth=1.25, points=None, update_cone=False):
    """One accepted step of the flow, with backtracking on the functional.

    Returns ``(new_state, rejected)``. A state whose residual is at roundoff
    level is a fixed point and is returned unchanged. Raises :class:`StallError` if the step size drops below
    ``dt_min`` without a decrease.
    """
    H = state.H
    bg = H.bg
    lam = lambda_k(bg, k) if lam is None else lam
    psi = psi_k(H, k) if state.psi is None else state.psi
    res = residual(H, k, lam, psi)
    if res.sup_norm <= ROUNDOFF * max(1.0, abs(lam)):
        return state, 0
    R = res.field
    dt = state.dt
    rejected = 0
    ld0 = float(np.mean(H.logdet()))
    while True:
        s = -dt * R
        K = exp_step(H, s)
        drift = abs(float(np.mean(K.logdet())) - ld0)  # int tr(psi - lambda) = 0
        K = recenter(K)
        psi_new = psi_k(K, k)
        dM = geodesic_increment(H, s, k, lam, endpoints=(psi, psi_new))
        new_res = residual(K, k, lam, psi_new)
        if dM < 0 or new_res.sup_norm < tol:
            break
        rejected += 1
        dt *= 0.5
        if dt < dt_min:
            raise StallError(f"step size fell below {dt_min:g} at iteration {state.iter}", state=state)
    margin = _cone_margin(K, k, points) if update_cone else state.cone_margin
    new = FlowState(
        K, state.iter + 1, state.M_value + dM, new_res.sup_norm, new_res.l2_norm,
        dt * growth, margin, state.monotone_ok and dM < 0, psi_new, drift,
    )
    return new, rejected


def solve(H: Metric, config: SolverConfig | None = None, lam=None, progress=None):
    """Run the flow from ``H`` until ``sup|psi_k - lambda| < tol`` or the budget runs out.

    Returns ``(metric, ConvergenceReport)``; stalls and exhausted budgets are
    reported as non-converged with the last accepted state.
    """
    cfg = SolverConfig() if config is None else config
    k = cfg.k
    if not 1 <= k <= H.bg.n:
        raise ConfigurationError(f"k={k} outside 1..{H.bg.n}")
    lam = lambda_k(H.bg, k) if lam is None else lam
    pts = cone_points(H.bg, cfg.cone_sample)
    state = initial_state(recenter(H), k, lam, cfg.dt0, pts)
    trace = [state.trace_row()]
    rejected = 0
    reason = "max_iters"
    while True:
        if state.residual_sup < cfg.tol:
            reason = "tolerance"
            break
        if state.iter >= cfg.max_iters:
            break
        update = cfg.cone_every > 0 and (state.iter + 1) % cfg.cone_every == 0
        try:
            new, rej = flow_step(state, k, lam, cfg.tol, cfg.dt_min, cfg.growth, pts, update)
        except StallError:
            reason = "stall"
            break
        if new is state:
            reason = "fixed_point"
            break
        state = new
        rejected += rej
        trace.append(state.trace_row())
        if progress is not None:
            progress(state)
    converged = reason in ("tolerance", "fixed_point")
    if converged and len(pts):
        state = replace(state, cone_margin=_cone_margin(state.H, k, pts))
        trace[-1] = state.trace_row()
    report = ConvergenceReport(converged, reason, state.iter, rejected, state.monotone_ok, state, trace)
    return state.H, report


# ----------------------------------------------------------------------------
# local minimality


@dataclass
class LocalMinReport:
    eps: float
    differences: np.ndarray
    noncentral: np.ndarray
    radii: np.ndarray
    residual_sup: float
    cone_margin: float

    @property
    def min_difference(self):
        return float(np.min(self.differences)) if len(self.differences) else 0.0

    def passes(self, floor=-1e-10):
        return bool(np.all(self.differences >= floor))

    def strictly_positive_noncentral(self):
        d = self.differences[self.noncentral]
        return bool(np.all(d > 0))

    def summary(self):
        return {
            "eps": self.eps,
            "trials": int(len(self.differences)),
            "min_difference": self.min_difference,
            "max_difference": float(np.max(self.differences)) if len(self.differences) else 0.0,
            "noncentral_trials": int(np.sum(self.noncentral)),
            "strictly_positive_noncentral": self.strictly_positive_noncentral(),
            "max_radius": float(np.max(self.radii)) if len(self.radii) else 0.0,
            "residual_sup": self.residual_sup,
            "cone_margin": self.cone_margin,
        }


def local_min_experiment(H_solved: Metric, H0: Metric, k: int, eps: float, trials: int, seed=0, band=1, nodes=4, cone_sample=64):
    """Sample ``K = H exp(s)`` with ``s`` in ``S_{H,eps}`` and compare functionals.

    The difference ``M(H0, K) - M(H0, H)`` is evaluated as ``M(H, K)`` along
    the geodesic ``H exp(t s)`` (the two agree by the cocycle identity, and the
    direct form avoids cancelling two O(1) numbers). ``H0`` only fixes the
    reference and does not enter the value.
    """
    del H0
    bg = H_solved.bg
    lam = lambda_k(bg, k)
    res = residual(H_solved, k, lam)
    margin = _cone_margin(H_solved, k, cone_points(bg, cone_sample))
    rng = np.random.default_rng(seed)
    diffs, noncentral, radii = [], [], []
    for _ in range(trials):
        if eps == 0:
            diffs.append(0.0)
            noncentral.append(False)
            radii.append(0.0)
            continue
        _, pert = random_ball_element(H_solved, rng, eps, band)
        diffs.append(geodesic_increment(H_solved, pert.s, k, lam, nodes))
        centred = pert.s - np.mean(pert.s, axis=tuple(range(bg.n * 2)))
        noncentral.append(bool(np.max(np.abs(centred)) > 1e-12))
        radii.append(pert.radius())
    return LocalMinReport(eps, np.array(diffs), np.array(noncentral, bool), np.array(radii), res.sup_norm, margin)


def central_direction_difference(H: Metric, k: int, c: float, nodes=4):
    """``M(H, H e^c)``; zero by the normalization identity."""
    bg = H.bg
    s = c * np.broadcast_to(np.eye(bg.r, dtype=complex), bg.field_shape)
    return geodesic_increment(H, s, k, lambda_k(bg, k), nodes)
