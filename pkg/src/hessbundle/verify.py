"""Executable certification of the identities behind the functional and the equation.

Every check returns a :class:`SuiteResult` holding named measurements with
their tolerances. ``run_all`` assembles the full tree and writes a JSON
verdict. Tolerances are absolute unless a check name says ``relative``; all
pointwise matrix norms are Frobenius.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import hermitian as hm
from .bundle import (
    Metric,
    chern_del,
    curvature,
    exp_step,
    geodesic,
    geodesic_derivative_bound_check,
    log_ratio,
    random_ball_element,
    random_direction,
    random_metric,
)
from .errors import ConfigurationError
from .functional import (
    PathSpec,
    donaldson_M,
    first_variation,
    lambda_k,
    lambda_k_analytic,
    second_variation_geodesic,
)
from .geometry import (
    Background,
    EndForm,
    contract_top,
    dbar,
    del_,
    integrate,
    integrate_function,
    power,
    random_field,
    trace,
    wedge,
)
from .hessian import (
    _reduce,
    dual_nakano_form,
    form_matrices,
    i_curvature,
    n1_n3_index_oracle,
    nakano_form,
    pipeline_one_sided,
    psi_k,
    sigma_k_report,
)


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    detail: dict = field(default_factory=dict)

    @classmethod
    def below(cls, name, value, tol, **detail):
        value = float(value)
        return cls(name, value, float(tol), bool(value <= tol), detail)

    @classmethod
    def above(cls, name, value, floor, **detail):
        """Pass when ``value >= floor``; the floor is stored as the tolerance."""
        value = float(value)
        return cls(name, value, float(floor), bool(value >= floor), {"direction": ">=", **detail})


@dataclass
class SuiteResult:
    name: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, check):
        self.checks.append(check)
        return check

    def to_dict(self, timings=True):
        out = {
            "passed": self.passed,
            "checks": {c.name: {"value": c.value, "tol": c.tol, "pass": c.passed, **c.detail} for c in self.checks},
        }
        if timings:
            out["seconds"] = self.seconds
        return out


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _rel(a, b, floor=1e-300):
    return abs(a - b) / max(abs(a), abs(b), floor)


def _form_max(f):
    return 0.0 if f is None else f.max_abs()


def _diff_max(a, b):
    if a is None and b is None:
        return 0.0
    if a is None:
        return b.max_abs()
    if b is None:
        return a.max_abs()
    return (a - b).max_abs()


# ----------------------------------------------------------------------------
# geometry and bundle


@_timed
def check_geometry(bg: Background, seed=0, band=1, tol=1e-12) -> SuiteResult:
    """Nilpotency, anticommutation, Stokes and the volume normalisation."""
    res = SuiteResult("geometry")
    rng = np.random.default_rng(seed)
    f = EndForm.scalar(bg.n, random_field(bg, rng, band, hermitian=False))
    scale = max(1.0, np.pi * band) ** 2
    res.add(Check.below("dbar_dbar", _form_max(dbar(bg, dbar(bg, f))) / scale, tol))
    res.add(Check.below("del_del", _form_max(del_(bg, del_(bg, f))) / scale, tol))
    anti = dbar(bg, del_(bg, f)) + del_(bg, dbar(bg, f))
    res.add(Check.below("del_dbar_anticommute", anti.max_abs() / scale, tol))
    # Stokes on an (n, n-1) scalar form
    comps = {}
    from itertools import combinations

    for J in combinations(range(bg.n), bg.n - 1):
        comps[(tuple(range(bg.n)), J)] = random_field(bg, rng, band, hermitian=False, rank=1)
    g = EndForm(bg.n, bg.n, bg.n - 1, comps)
    res.add(Check.below("stokes_dbar", abs(integrate(bg, dbar(bg, g))), 1e-10 * g.max_abs() * bg.volume))
    for k in range(1, bg.n + 1):
        om = bg.omega_power(k)
        c = contract_top(bg, om, bg.n - k)  # omega^k/k! against omega^(n-k)/(n-k)!
        res.add(Check.below(f"contract_omega_{k}", np.max(np.abs(c - math.comb(bg.n, k))), 1e-14))
    return res


@_timed
def check_bundle(bg: Background, seed=0, amplitude=0.3, band=1, sym_tol=1e-8, fd_tol=1e-8) -> SuiteResult:
    """Curvature symmetry, scale invariance and the geodesic velocity identity."""
    res = SuiteResult("bundle")
    H = random_metric(bg, seed, amplitude, band)
    K = random_metric(bg, seed + 1, amplitude, band)
    F = curvature(H)
    sym = 0.0
    for a in range(bg.n):
        for b in range(bg.n):
            sym = max(sym, float(np.max(np.abs(H.adjoint(F[(a,), (b,)]) - F[(b,), (a,)]))))
    res.add(Check.below("curvature_h_hermitian_relative", sym / F.max_abs(), sym_tol))
    Fa = curvature(H.scaled(2.5))
    res.add(Check.below("curvature_scale_invariance", (Fa - F).max_abs(), 1e-12 * F.max_abs()))
    s = log_ratio(H, K)
    t, d = 0.4, 1e-4
    Hp, Hm = geodesic(H, K, t + d), geodesic(H, K, t - d)
    Ht = geodesic(H, K, t)
    vel = hm.mm(Ht.hinv, (Hp.h - Hm.h) / (2 * d))
    res.add(Check.below("geodesic_velocity_is_s", np.max(np.abs(vel - s)), fd_tol * max(1.0, np.max(np.abs(s)))))
    ends = max(np.max(np.abs(geodesic(H, K, 0.0).h - H.h)), np.max(np.abs(geodesic(H, K, 1.0).h - K.h)))
    res.add(Check.below("geodesic_endpoints", ends, 0.0))
    return res


# ----------------------------------------------------------------------------
# functional


def _pairs(bg, count, seed, amplitude, band):
    for i in range(count):
        yield random_metric(bg, seed + 2 * i, amplitude, band), random_metric(bg, seed + 2 * i + 1, amplitude, band)


@_timed
def check_chern_weil(bg: Background, seed=0, amplitude=0.3, band=1, metrics=3, tol=1e-8) -> SuiteResult:
    res = SuiteResult("chern_weil")
    for k in range(1, bg.n + 1):
        ref = lambda_k(bg, k)
        exact = lambda_k_analytic(bg, k)
        res.add(Check.below(f"lambda_{k}_analytic_relative", _rel(ref, exact, 1.0), tol, lam=ref, analytic=exact))
        worst = 0.0
        for i in range(metrics):
            H = random_metric(bg, seed + 100 + i, amplitude, band)
            worst = max(worst, _rel(lambda_k(bg, k, H), ref, 1.0))
        res.add(Check.below(f"lambda_{k}_metric_independence_relative", worst, tol))
    return res


@_timed
def check_path_independence(bg, k, pairs=20, seed=0, amplitude=0.3, band=1, nodes=8, tol=1e-8) -> SuiteResult:
    """Linear, geodesic and two-segment waypoint paths give the same M."""
    res = SuiteResult("path_independence")
    lam = lambda_k(bg, k)
    worst = 0.0
    values = []
    for i, (H0, H1) in enumerate(_pairs(bg, pairs, seed + 1000, amplitude, band)):
        W = random_metric(bg, seed + 5000 + i, amplitude, band)
        vals = [
            donaldson_M(H0, H1, k, PathSpec("linear", nodes), lam).M,
            donaldson_M(H0, H1, k, PathSpec("geodesic", nodes), lam).M,
            donaldson_M(H0, H1, k, PathSpec("piecewise", nodes, [W]), lam).M,
        ]
        spread = (max(vals) - min(vals)) / max(max(abs(v) for v in vals), 1e-300)
        worst = max(worst, spread)
        values.append(vals)
    res.add(Check.below("max_relative_spread", worst, tol, pairs=pairs, k=k))
    return res


@_timed
def check_cocycle(bg, k, triples=3, seed=0, amplitude=0.3, band=1, nodes=8, tol=1e-8, norm_tol=1e-10) -> SuiteResult:
    res = SuiteResult("cocycle")
    lam = lambda_k(bg, k)
    path = PathSpec("geodesic", nodes)
    worst = 0.0
    for i in range(triples):
        H0, H1, H2 = (random_metric(bg, seed + 3000 + 3 * i + j, amplitude, band) for j in range(3))
        m01 = donaldson_M(H0, H1, k, path, lam)
        m12 = donaldson_M(H1, H2, k, path, lam)
        m02 = donaldson_M(H0, H2, k, path, lam)
        scale = max(abs(m01.M), abs(m12.M), abs(m02.M), abs(m01.M0), abs(m12.M0), abs(m02.M0))
        worst = max(worst, abs(m01.M + m12.M - m02.M) / scale)
    res.add(Check.below("cocycle_relative", worst, tol, triples=triples))
    H = random_metric(bg, seed + 3999, amplitude, band)
    for a in (0.5, 2.0):
        res.add(Check.below(f"normalization_a{a:g}", abs(donaldson_M(H, H.scaled(a), k, path, lam).M), norm_tol))
    return res


def _richardson(fn, h):
    """Central first difference with one Richardson extrapolation."""
    d1 = (fn(h) - fn(-h)) / (2 * h)
    d2 = (fn(h / 2) - fn(-h / 2)) / h
    return (4 * d2 - d1) / 3


def _richardson2(fn, h):
    f0 = fn(0.0)
    d1 = (fn(h) - 2 * f0 + fn(-h)) / h**2
    d2 = (fn(h / 2) - 2 * f0 + fn(-h / 2)) / (h / 2) ** 2
    return (4 * d2 - d1) / 3


@_timed
def check_variations(bg, k, directions=10, seed=0, amplitude=0.3, band=1, nodes=8, step=1e-4, tol1=1e-6, tol2=1e-5) -> SuiteResult:
    """First variation and geodesic second variation against finite differences of M."""
    res = SuiteResult("variations")
    lam = lambda_k(bg, k)
    path = PathSpec("geodesic", nodes)
    rng = np.random.default_rng(seed + 7000)
    worst1 = worst2 = 0.0
    for i in range(directions):
        H0 = random_metric(bg, seed + 7100 + i, amplitude, band)
        H = random_metric(bg, seed + 7200 + i, amplitude, band)
        sdot = random_direction(H, rng, band)
        exact = first_variation(H, sdot, k, lam)
        fd = _richardson(lambda t: donaldson_M(H0, exp_step(H, sdot, t), k, path, lam).M, step)
        worst1 = max(worst1, abs(exact - fd) / max(abs(exact), 1e-300))
        K = random_metric(bg, seed + 7300 + i, amplitude, band)
        t0 = 0.5
        exact2 = second_variation_geodesic(H, K, k, t0)
        fd2 = _richardson2(lambda d: donaldson_M(H0, geodesic(H, K, t0 + d), k, path, lam).M, step)
        worst2 = max(worst2, abs(exact2 - fd2) / max(abs(exact2), 1e-300))
    res.add(Check.below("first_variation_relative", worst1, tol1, directions=directions))
    res.add(Check.below("second_variation_relative", worst2, tol2, directions=directions))
    return res


# ----------------------------------------------------------------------------
# identity suites


@_timed
def check_z2(bg, geodesics=10, t_samples=11, seed=0, amplitude=0.3, band=1, eps=0.1, tol=1e-8) -> SuiteResult:
    """The a-priori bound on ``h(t)^{-1} d_H h(t)`` along geodesics ``H -> H e^{eps s}``."""
    res = SuiteResult("z2_bound")
    rng = np.random.default_rng(seed + 8000)
    ts = np.linspace(0.0, 1.0, t_samples)
    worst = -np.inf
    for i in range(geodesics):
        H = random_metric(bg, seed + 8100 + i, amplitude, band)
        K = exp_step(H, random_direction(H, rng, band), eps)
        rep = geodesic_derivative_bound_check(H, K, ts)
        worst = max(worst, rep["max_violation"])
    res.add(Check.below("max_violation", worst, tol, geodesics=geodesics, t_samples=t_samples))
    return res


def _family(H0, a, b, c, tau, s):
    """``H0 exp(tau a + s b + tau s c)`` for H0-self-adjoint a, b, c."""
    return exp_step(H0, tau * a + s * b + tau * s * c)


def _family_logderivs(H0, a, b, c, tau, s):
    """``(h^{-1} dh/dtau, h^{-1} dh/ds)`` for the family, computed in closed form."""
    X = tau * a + s * b + tau * s * c
    Y = hm.hermitian_part(hm.mm3(H0.sqrt, X, H0.invsqrt))
    out = []
    for dX in (a + s * c, b + tau * c):
        dY = hm.mm3(H0.sqrt, dX, H0.invsqrt)
        out.append(hm.mm3(H0.invsqrt, hm.exp_log_derivative(Y, dY), H0.sqrt))
    return out


def _claim_density(H, k, L):
    """``tr[(iF)^k L]`` as a scalar (k, k)-form."""
    return trace(power(i_curvature(H), k).right(L))


def _sum_terms(iF, X, k):
    """``sum_i (iF)^i X (iF)^{k-1-i}`` for a 0-form X."""
    total = None
    for i in range(k):
        left = power(iF, i)
        term = wedge(left.right(X), power(iF, k - 1 - i))
        total = term if total is None else total + term
    return total


@_timed
def check_claim1(bg, k, seed=0, amplitude=0.3, band=1, family_scale=0.3, tau0=0.2, s0=0.4, nodes=12,
                 step=1e-4, tol=1e-7, stokes_tol=1e-9, pointwise_tol=1e-6, commuting=False) -> SuiteResult:
    """The exactness claim behind path independence, pointwise and integrated.

    For ``H(tau, s) = H0 exp(tau a + s b + tau s c)``:

    * pointwise, ``d_tau tr[(iF)^k L_s] - d_s tr[(iF)^k L_tau]`` against
      ``-del tr[i dbar(eta_k) L_s] - dbar tr[i d_H(phi_k) L_tau]``;
    * integrated over M, both sides (the right side is exact);
    * integrated over M x [0,1], ``d/dtau`` of the s-quadrature equals the
      boundary term ``[int tr((iF)^k L_tau) ^ omega^{n-k}/(n-k)!]_{s=0}^{1}``.
    """
    res = SuiteResult(f"claim1_k{k}")
    rng = np.random.default_rng(seed + 9000)
    H0 = random_metric(bg, seed + 9100, amplitude, band)
    if commuting:
        eye = np.broadcast_to(np.eye(bg.r, dtype=complex), bg.field_shape)
        a, b, c = (family_scale * rng.standard_normal() * eye for _ in range(3))
    else:
        a, b, c = (family_scale * random_direction(H0, rng, band) for _ in range(3))
    om = bg.omega_power(bg.n - k)

    def density(tau, s, which):
        H = _family(H0, a, b, c, tau, s)
        L = _family_logderivs(H0, a, b, c, tau, s)[which]
        return _claim_density(H, k, L)

    # pointwise
    d_tau = _richardson(lambda d: density(tau0 + d, s0, 1), step)
    d_s = _richardson(lambda d: density(tau0, s0 + d, 0), step)
    lhs = d_tau - d_s
    H = _family(H0, a, b, c, tau0, s0)
    L_tau, L_s = _family_logderivs(H0, a, b, c, tau0, s0)
    iF = i_curvature(H)
    eta = _sum_terms(iF, L_tau, k)
    phi = _sum_terms(iF, L_s, k)
    rhs1 = del_(bg, trace((dbar(bg, eta) * 1j).right(L_s)))
    rhs2 = dbar(bg, trace((chern_del(H, phi) * 1j).right(L_tau)))
    rhs = -(rhs1 + rhs2)
    scale = max(_form_max(d_tau), _form_max(d_s), 1e-300)
    res.add(Check.below("pointwise_relative", _diff_max(lhs, rhs) / scale, pointwise_tol))
    # integrated over M: both sides of the claim
    lhs_int = integrate(bg, wedge(lhs, om))
    rhs_int = integrate(bg, wedge(rhs, om))
    res.add(Check.below("stokes_lhs_integral", abs(lhs_int - rhs_int), stokes_tol, lhs=abs(lhs_int), rhs=abs(rhs_int)))

    # integrated over M x [0,1]: the form actually used for path independence
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    xs, ws = 0.5 * (xs + 1), 0.5 * ws

    def s_quadrature(tau):
        total = 0.0
        for x, w in zip(xs, ws):
            Hs = _family(H0, a, b, c, tau, x)
            L = _family_logderivs(H0, a, b, c, tau, x)[1]
            total += w * integrate_function(bg, np.trace(hm.mm(psi_k(Hs, k), L), axis1=-2, axis2=-1))
        return total

    def boundary(s):
        Hs = _family(H0, a, b, c, tau0, s)
        L = _family_logderivs(H0, a, b, c, tau0, s)[0]
        return integrate_function(bg, np.trace(hm.mm(psi_k(Hs, k), L), axis1=-2, axis2=-1))

    dA = _richardson(lambda d: s_quadrature(tau0 + d), step)
    bnd = boundary(1.0) - boundary(0.0)
    res.add(Check.below("integrated_mismatch", abs(dA - bnd), tol, d_tau_quadrature=float(np.real(dA)), boundary=float(np.real(bnd))))
    return res


def _relative_log(H, K):
    """``h = K^{-1} H`` as a matrix field (K-self-adjoint)."""
    return hm.mm(K.hinv, H.h)


@_timed
def check_u1(bg, k, seed=0, amplitude=0.3, band=1, tol=1e-9, same=False) -> SuiteResult:
    """``(iF_H)^k - (iF_K)^k = sum_i (iF_H)^{k-i} ^ i dbar(h^{-1} d_K h) ^ (iF_K)^{i-1}``, pointwise."""
    res = SuiteResult(f"u1_k{k}")
    H = random_metric(bg, seed + 10000, amplitude, band)
    K = H if same else random_metric(bg, seed + 10001, amplitude, band)
    h = _relative_log(H, K)
    X = chern_del(K, EndForm.scalar(bg.n, h)).left(hm.inv(h))
    D = dbar(bg, X) * 1j
    iFH, iFK = i_curvature(H), i_curvature(K)
    lhs = power(iFH, k) - power(iFK, k)
    rhs = None
    for i in range(1, k + 1):
        term = wedge(wedge(power(iFH, k - i), D), power(iFK, i - 1))
        rhs = term if rhs is None else rhs + term
    scale = max(power(iFH, k).max_abs(), power(iFK, k).max_abs())
    res.add(Check.below("pointwise_relative", (lhs - rhs).max_abs() / scale, tol, lhs_max=lhs.max_abs()))
    return res


def _k_sqrt_pieces(H, K):
    """``h = K^{-1}H`` with ``h^{1/2}`` and ``h^{-1/2}`` taken in a K-unitary frame."""
    P = hm.hermitian_part(hm.mm3(K.invsqrt, H.h, K.invsqrt))
    half = hm.mm3(K.invsqrt, hm.sqrtm(P), K.sqrt)
    inv_half = hm.mm3(K.invsqrt, hm.invsqrtm(P), K.sqrt)
    return hm.mm(K.hinv, H.h), half, inv_half


def thm2_terms(H: Metric, K: Metric):
    """``(left, right_1, right_2)`` of the integration-by-parts chain for k = 2."""
    bg = H.bg
    if bg.n < 2:
        raise ConfigurationError("the k=2 identity needs n >= 2")
    h, _, ih = _k_sqrt_pieces(H, K)
    om = bg.omega_power(bg.n - 2) * math.factorial(bg.n - 2)  # omega^{n-2}
    iFH, iFK = i_curvature(H), i_curvature(K)
    h_form = EndForm.scalar(bg.n, h)
    dh_H = chern_del(H, h_form)
    dh_K = chern_del(K, h_form)
    dbh = dbar(bg, h_form)
    left = integrate(bg, wedge(trace((power(iFH, 2) - power(iFK, 2)).right(h)), om))
    t1 = wedge(wedge(iFH, (dh_H * 1j).right(ih)), dbh.left(ih))
    t2 = wedge(wedge((dh_K * 1j).left(ih), iFK), dbh.right(ih))
    r1 = integrate(bg, wedge(trace(t1), om))
    r2 = integrate(bg, wedge(trace(t2), om))
    return left, r1, r2


@_timed
def check_thm2_identity(bg, seed=0, amplitude=0.3, band=1, tol=1e-8, zero_tol=1e-10) -> SuiteResult:
    res = SuiteResult("thm2_identity")
    H = random_metric(bg, seed + 11000, amplitude, band)
    K = random_metric(bg, seed + 11001, amplitude, band)
    left, r1, r2 = thm2_terms(H, K)
    scale = max(abs(left), abs(r1), abs(r2))
    res.add(Check.below("random_pair_relative", abs(left - r1 - r2) / scale, tol,
                        left=float(np.real(left)), right1=float(np.real(r1)), right2=float(np.real(r2))))
    same = max(abs(x) for x in thm2_terms(H, H))
    res.add(Check.below("same_metric_all_zero", same, zero_tol))
    # two constant solutions differing by a scalar: every term vanishes
    S = Metric.identity(bg)
    vals = thm2_terms(S, S.scaled(math.e**0.7))
    res.add(Check.below("scalar_multiple_solutions_zero", max(abs(v) for v in vals), zero_tol))
    return res


# ----------------------------------------------------------------------------
# Nakano lemma


def _random_positive(rng, dim):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return g @ g.conj().T / dim + 0.05 * np.eye(dim)


def _block_transpose(M, n, r):
    out = np.empty_like(M)
    for a in range(n):
        for b in range(n):
            out[a * r : (a + 1) * r, b * r : (b + 1) * r] = M[b * r : (b + 1) * r, a * r : (a + 1) * r]
    return out


def sample_nakano_tensors(n, r, count, rng, max_tries=None):
    """Rejection-sample constant curvature tensors that are Nakano and dual Nakano positive.

    Returns ``(samples, exempt, tries)``. Each sample is ``(F_point, h_point)``
    with ``F_point`` in the coordinate frame of the random metric ``h_point``;
    ``exempt`` holds Nakano-positive samples whose dual form is indefinite.
    """
    max_tries = 1000 * count if max_tries is None else max_tries
    samples, exempt, tries = [], [], 0
    while len(samples) < count:
        if tries >= max_tries:
            raise ConfigurationError(f"Nakano sampler starved: {len(samples)} accepted in {tries} tries")
        tries += 1
        N = _random_positive(rng, n * r)  # Nakano matrix in a unitary frame
        hp = _random_positive(rng, r) + np.eye(r)
        hs = hm.sqrtm(hp)
        his = np.linalg.inv(hs)
        Fu = {(a, b): N[b * r : (b + 1) * r, a * r : (a + 1) * r] for a in range(n) for b in range(n)}
        F = {key: his @ v @ hs for key, v in Fu.items()}
        dual_min = np.linalg.eigvalsh(_block_transpose(N, n, r))[0]
        if dual_min > 0:
            samples.append((F, hp))
        else:
            exempt.append((F, hp))
    if len(samples) < (1e-3 * tries):
        raise ConfigurationError("Nakano sampler rejection rate above 99.9%")
    return samples, exempt, tries


def _one_sided_margins(n, samples):
    r = samples[0][1].shape[-1]
    bg = Background(n, 2, r)
    iF = {}
    for a in range(n):
        for b in range(n):
            iF[((a,), (b,))] = np.stack([1j * np.asarray(F[(a, b)], complex) for F, _ in samples])
    iF_pts = EndForm(n, 1, 1, iF)
    h_pts = np.stack([np.asarray(h, complex) for _, h in samples])
    A1, G = form_matrices(bg, iF_pts, h_pts, [(1, 0)], n - 2)
    A2, _ = form_matrices(bg, iF_pts, h_pts, [(0, 1)], n - 2)
    return _reduce(A1, G)[:, 0], _reduce(A2, G)[:, 0]


@_timed
def check_nakano_lemma(n=2, r=2, samples=1000, seed=0, oracle_tol=1e-12, central_tol=1e-10) -> SuiteResult:
    """Nakano plus dual Nakano positivity forces both one-sided sigma_2 forms positive."""
    res = SuiteResult("nakano_lemma")
    rng = np.random.default_rng(seed + 12000)
    acc, exempt, tries = sample_nakano_tensors(n, r, samples, rng)
    m1, m2 = _one_sided_margins(n, acc)
    bad = int(np.sum((m1 <= 0) | (m2 <= 0)))
    res.add(Check.below("counterexamples", bad, 0, samples=samples, tries=tries,
                        min_first=float(m1.min()), min_second=float(m2.min())))
    # hypothesis gating: Nakano-only samples are reported, not judged
    if exempt:
        e1, _ = _one_sided_margins(n, exempt[: min(len(exempt), samples)])
        res.checks[-1].detail.update({"exempt": len(exempt), "exempt_first_form_positive": int(np.sum(e1 > 0))})
    # index oracle vs wedge pipeline on the accepted samples
    worst = 0.0
    for F, hp in acc[: min(len(acc), 200)]:
        xi = [rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r)) for _ in range(n)]
        o = n1_n3_index_oracle(F, xi, hp)
        p = pipeline_one_sided(n, F, xi, hp)
        sc = max(abs(o[0]), abs(o[1]), 1.0)
        worst = max(worst, abs(o[0] - p[0]) / sc, abs(o[1] - p[1]) / sc)
    res.add(Check.below("n1_n3_oracle_relative", worst, oracle_tol))
    # central tensors: each one-sided margin is c, their sum (the sigma_2 margin) 2c
    c = 1.7
    Fc = {(a, b): (c * np.eye(r) if a == b else np.zeros((r, r))) for a in range(n) for b in range(n)}
    c1, c2 = _one_sided_margins(n, [(Fc, np.eye(r))])
    res.add(Check.below("central_margin", max(abs(c1[0] - c), abs(c2[0] - c)), central_tol, analytic=c, sigma2_margin=2 * c))
    nak = np.linalg.eigvalsh(nakano_form(Fc))[0]
    dual = np.linalg.eigvalsh(dual_nakano_form(Fc))[0]
    res.add(Check.below("central_nakano_margins", max(abs(nak - c), abs(dual - c)), central_tol))
    return res


# ----------------------------------------------------------------------------
# positivity of the constant model and local minimality


@_timed
def check_constant_model(bg, k, tol=1e-8) -> SuiteResult:
    """The constant solution: zero residual and the analytic cone margins."""
    res = SuiteResult("constant_model")
    H = Metric.identity(bg)
    lam = lambda_k(bg, k)
    psi = psi_k(H, k)
    res.add(Check.below("residual", np.max(np.abs(psi - lam * np.eye(bg.r))), 1e-10 * max(1.0, abs(lam))))
    if bg.central and bg.m != 0:
        rep = sigma_k_report(H, k, points=np.arange(4))
        expected = sigma_k_constant_margin(bg.n, k, np.pi * bg.m)
        res.add(Check.below("sigma_k_margin", abs(rep.global_min - expected), tol, margin=rep.global_min, analytic=expected))
    return res


def sigma_k_constant_margin(n, k, c):
    """Sigma_k form of ``iF = c omega`` relative to ``|xi|^2``: ``k c^(k-1) (n-1)! / (n-k)!``."""
    return k * c ** (k - 1) * math.factorial(n - 1) / math.factorial(n - k)


@_timed
def check_margin_robustness(bg, k, eps_values=(0.1, 0.03, 0.01), seed=0, band=1, sample=16, t_samples=(0.0, 0.5, 1.0)) -> SuiteResult:
    """Cone margin along geodesics from the constant solution into B_{H,eps}.

    The degradation ``delta - min margin`` must shrink with eps.
    """
    res = SuiteResult("margin_robustness")
    H = Metric.identity(bg)
    rng = np.random.default_rng(seed + 13000)
    pts = np.linspace(0, bg.N ** (2 * bg.n) - 1, sample).astype(int)
    delta = sigma_k_report(H, k, pts).global_min
    degr = []
    for eps in eps_values:
        K, _ = random_ball_element(H, rng, eps, band)
        worst = min(sigma_k_report(geodesic(H, K, t), k, pts).global_min for t in t_samples)
        degr.append(delta - worst)
    ordered = all(degr[i + 1] <= degr[i] + 1e-12 for i in range(len(degr) - 1))
    res.add(Check("degradation_decreasing", float(degr[-1]), float(degr[0]), bool(ordered),
                  {"eps": list(eps_values), "degradation": [float(d) for d in degr], "delta": float(delta)}))
    return res


@_timed
def check_local_min(bg, k, eps=0.01, trials=100, seed=0, band=1, nodes=4, floor=-1e-10) -> SuiteResult:
    from .solver import central_direction_difference, local_min_experiment

    res = SuiteResult("local_min")
    H = Metric.identity(bg)
    rep = local_min_experiment(H, H, k, eps, trials, seed + 14000, band, nodes)
    res.add(Check.above("min_difference", rep.min_difference, floor, trials=trials, eps=eps))
    res.add(Check("strictly_positive_noncentral", float(np.min(rep.differences[rep.noncentral])) if rep.noncentral.any() else 0.0,
                  0.0, rep.strictly_positive_noncentral(), {"noncentral_trials": int(rep.noncentral.sum())}))
    res.add(Check.below("central_direction", abs(central_direction_difference(H, k, 0.3, nodes)), 1e-12))
    return res


# ----------------------------------------------------------------------------
# orchestration


@dataclass
class VerifyConfig:
    n: int = 2
    N: int = 16
    r: int = 2
    m: int = 1
    k: int = 2
    seed: int = 0
    amplitude: float = 0.3
    band: int = 1
    nodes: int = 8
    pairs: int = 20
    triples: int = 3
    directions: int = 10
    geodesics: int = 10
    t_samples: int = 11
    nakano_samples: int = 1000
    local_min_trials: int = 100
    local_min_eps: float = 0.01
    tol_scale: float = 1.0
    suites: tuple = ()

    def background(self):
        return Background(self.n, self.N, self.r, self.m)


SUITES = (
    "geometry", "bundle", "chern_weil", "constant_model", "path_independence", "cocycle", "variations",
    "z2_bound", "claim1", "u1", "thm2_identity", "nakano_lemma", "margin_robustness", "local_min",
)


# Tolerance multipliers for the coarse N=8 grid. Products of non-band-limited
# fields alias at this resolution; the listed factors cover the measured
# defects (amplitude 0.3, band 1) with roughly a decade of headroom. Roundoff-level
# identities (geometry, Chern-Weil, Nakano algebra) keep their tolerances.
COARSE_FACTORS = {
    8: {
        "bundle": 1e5,
        "path_independence": 1e2,
        "cocycle": 1e2,
        "claim1": 1e5,
        "u1": 1e6,
        "thm2_identity": 1e2,
    },
}


def tolerance_factor(N, suite):
    return COARSE_FACTORS.get(N, {}).get(suite, 1.0)


def run_all(cfg: VerifyConfig | None = None, progress=None):
    """Run every suite (or ``cfg.suites``) and return ``{name: SuiteResult}``."""
    cfg = VerifyConfig() if cfg is None else cfg
    bg = cfg.background()
    common = dict(seed=cfg.seed, amplitude=cfg.amplitude, band=cfg.band)

    def ts(name):
        return cfg.tol_scale * tolerance_factor(cfg.N, name)

    jobs = {
        "geometry": lambda: check_geometry(bg, cfg.seed, cfg.band, tol=1e-12 * ts("geometry")),
        "bundle": lambda: check_bundle(bg, **common, sym_tol=1e-8 * ts("bundle")),
        "chern_weil": lambda: check_chern_weil(bg, **common, tol=1e-8 * ts("chern_weil")),
        "constant_model": lambda: check_constant_model(bg, cfg.k),
        "path_independence": lambda: check_path_independence(
            bg, cfg.k, cfg.pairs, nodes=cfg.nodes, tol=1e-8 * ts("path_independence"), **common),
        "cocycle": lambda: check_cocycle(bg, cfg.k, cfg.triples, nodes=cfg.nodes, tol=1e-8 * ts("cocycle"), **common),
        "variations": lambda: check_variations(
            bg, cfg.k, cfg.directions, nodes=cfg.nodes, tol1=1e-6 * ts("variations"), tol2=1e-5 * ts("variations"), **common),
        "z2_bound": lambda: check_z2(bg, cfg.geodesics, cfg.t_samples, **common),
        "claim1": lambda: check_claim1(
            bg, cfg.k, tol=1e-7 * ts("claim1"), stokes_tol=1e-9 * ts("claim1"), pointwise_tol=1e-6 * ts("claim1"), **common),
        "u1": lambda: check_u1(bg, cfg.k, tol=1e-9 * ts("u1"), **common),
        "thm2_identity": lambda: check_thm2_identity(bg, tol=1e-8 * ts("thm2_identity"), **common),
        "nakano_lemma": lambda: check_nakano_lemma(max(cfg.n, 2), cfg.r, cfg.nakano_samples, cfg.seed),
        "margin_robustness": lambda: check_margin_robustness(bg, cfg.k, seed=cfg.seed, band=cfg.band),
        "local_min": lambda: check_local_min(bg, cfg.k, cfg.local_min_eps, cfg.local_min_trials, cfg.seed, cfg.band),
    }
    if bg.n < 2:
        jobs.pop("thm2_identity")
    selected = cfg.suites or SUITES
    unknown = set(selected) - set(SUITES)
    if unknown:
        raise ConfigurationError(f"unknown suites {sorted(unknown)}")
    results = {}
    for name in SUITES:
        if name in selected and name in jobs:
            results[name] = jobs[name]()
            if progress is not None:
                progress(name, results[name])
    return results


def verdict(results, timings=True):
    return {
        "passed": all(r.passed for r in results.values()),
        "suites": {name: r.to_dict(timings) for name, r in results.items()},
    }


def write_verdict(results, path, timings=False):
    with open(path, "w") as fh:
        json.dump(verdict(results, timings), fh, indent=2, sort_keys=True)
        fh.write("\n")
