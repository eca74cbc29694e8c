"""Hermitian metrics on the model bundle, Chern curvature and geodesics.

A metric is stored as ``h = H0^{-1} H``: a pointwise Hermitian positive-definite
matrix field relative to the background metric ``H0`` of ``E = L^m (x) O^r``.
Because the background curvature is central, End(E) is trivial and ``h`` is a
plain periodic matrix field; ``d_{H0}`` on End(E)-valued forms is ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hermitian as hm
from .errors import ConfigurationError, DegenerateMetricError
from .geometry import Background, EndForm, dbar, del_, field_del, norm_sq, random_field, wedge


class Metric:
    """Pointwise Hermitian positive-definite field ``h`` on a :class:`Background`."""

    def __init__(self, bg: Background, h, eps_pd=hm.EPS_PD, check=True):
        h = np.asarray(h, dtype=complex)
        if h.shape != bg.field_shape:
            raise ConfigurationError(f"metric shape {h.shape} != {bg.field_shape}")
        if check:
            if not np.all(np.isfinite(h)):
                raise DegenerateMetricError("metric has non-finite entries")
            asym = np.max(np.abs(h - hm.dagger(h)))
            if asym > 1e-10 * max(1.0, float(np.max(np.abs(h)))):
                raise DegenerateMetricError(f"metric is not Hermitian (defect {asym:.2e})")
            h = hm.hermitian_part(h)
            lo = float(np.min(hm.eigvalsh(h)[..., 0]))
            if lo < eps_pd:
                raise DegenerateMetricError(f"metric eigenvalue {lo:.3e} below {eps_pd:g}")
            if not bg.central:
                off = h - np.einsum("...ii->...i", h)[..., None] * np.eye(bg.r)
                if np.max(np.abs(off)) > 0:
                    raise ConfigurationError("split non-central backgrounds admit only diagonal metrics")
        self.bg = bg
        self.h = h
        self._cache = {}

    @classmethod
    def identity(cls, bg):
        return cls(bg, bg.identity(), check=False)

    def scaled(self, a):
        return Metric(self.bg, self.h * a, check=False)

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def hinv(self):
        return self._get("hinv", lambda: hm.inv(self.h))

    @property
    def sqrt(self):
        return self._get("sqrt", lambda: hm.sqrtm(self.h))

    @property
    def invsqrt(self):
        return self._get("invsqrt", lambda: hm.invsqrtm(self.h))

    @property
    def connection(self):
        """``h^{-1} dh`` as a (1,0)-form: the difference ``D_H - D_{H0}``."""

        def build():
            dh = field_del(self.bg, self.h)
            comps = {((a,), ()): hm.mm(self.hinv, d) for a, d in enumerate(dh)}
            return EndForm(self.bg.n, 1, 0, comps)

        return self._get("connection", build)

    @property
    def curvature(self):
        return self._get("curvature", lambda: curvature(self))

    def adjoint(self, a):
        """Pointwise H-adjoint of a matrix field."""
        return hm.mm3(self.hinv, hm.dagger(a), self.h)

    def logdet(self):
        return hm.logdet(self.h)


def curvature(H: Metric) -> EndForm:
    """Chern curvature ``F_H = F_{H0} + dbar(h^{-1} d h)``."""
    return H.bg.model_curvature() + dbar(H.bg, H.connection)


def chern_del(H: Metric, f: EndForm):
    """``d_H f = d f + A ^ f - (-1)^{deg f} f ^ A`` with ``A = h^{-1} dh``."""
    A = H.connection
    out = del_(H.bg, f)
    if out is None:
        return None
    sign = -1 if f.degree % 2 == 0 else 1
    return out + wedge(A, f) + wedge(f, A) * sign


def log_ratio(H: Metric, K: Metric):
    """``s = log(H^{-1} K)``, an H-self-adjoint field.

    Computed through the Hermitian matrix ``P = h^{-1/2} k h^{-1/2}`` so that
    ``s = h^{-1/2} log(P) h^{1/2}``.
    """
    P = hm.mm3(H.invsqrt, K.h, H.invsqrt)
    return hm.mm3(H.invsqrt, hm.logm(hm.hermitian_part(P)), H.sqrt)


def geodesic(H: Metric, K: Metric, t: float) -> Metric:
    """``H(t) = H exp(t s)`` with ``s = log(H^{-1} K)``; H(0) = H, H(1) = K."""
    if t == 0:
        return H
    if t == 1:
        return K
    P = hm.hermitian_part(hm.mm3(H.invsqrt, K.h, H.invsqrt))
    ht = hm.mm3(H.sqrt, hm.powm(P, t), H.sqrt)
    return Metric(H.bg, hm.hermitian_part(ht))


def exp_step(H: Metric, s, t=1.0) -> Metric:
    """``H exp(t s)`` for an H-self-adjoint field ``s``."""
    X = hm.hermitian_part(hm.mm3(H.sqrt, s, H.invsqrt))
    return Metric(H.bg, hm.hermitian_part(hm.mm3(H.sqrt, hm.expm(t * X), H.sqrt)))


def perturb(H: Metric, s, eps) -> Metric:
    """``H exp(eps s)``; realises membership of the neighbourhood B_{H,eps}."""
    if eps == 0:
        return H
    return exp_step(H, s, eps)


def self_adjoint_defect(H: Metric, s):
    """Max of ``|s^{*H} - s|``; zero for elements of S_H(E)."""
    return float(np.max(np.abs(H.adjoint(s) - s)))


def endo_norm(H: Metric, a):
    """Pointwise Frobenius norm ``sqrt(tr(a a^{*H}))``."""
    return np.sqrt(np.maximum(np.real(np.trace(hm.mm(a, H.adjoint(a)), axis1=-2, axis2=-1)), 0.0))


def form_norm(H: Metric, f: EndForm):
    return np.sqrt(np.maximum(norm_sq(H.bg, f, H.h), 0.0))


@dataclass
class Perturbation:
    """An H-self-adjoint direction with the sup-norm bounds that define S_{H,eps}.

    ``sup_s`` is ``sup |s|_H``; ``sup_derivs`` is ``sup(|d_H s|_H + |dbar d_H s|_H)``.
    The field lies in S_{H,eps} iff both are below ``eps``.
    """

    s: np.ndarray
    sup_s: float
    sup_derivs: float

    def radius(self):
        return max(self.sup_s, self.sup_derivs)

    def in_ball(self, eps):
        return self.sup_s < eps and self.sup_derivs < eps


def perturbation_bounds(H: Metric, s) -> Perturbation:
    s_form = EndForm.scalar(H.bg.n, s)
    ds = chern_del(H, s_form)
    dbds = dbar(H.bg, ds)
    sup_s = float(np.max(endo_norm(H, s)))
    sup_d = float(np.max(form_norm(H, ds) + form_norm(H, dbds)))
    return Perturbation(s, sup_s, sup_d)


def random_direction(H: Metric, rng, band=1, zero_mean=False):
    """Band-limited H-self-adjoint field with unit sup Frobenius norm (before transport)."""
    X = random_field(H.bg, rng, band, hermitian=True, zero_mean=zero_mean)
    return hm.mm3(H.invsqrt, X, H.sqrt)


def random_metric(bg: Background, seed, amplitude, band=1) -> Metric:
    """``h = exp(amplitude * X)`` for a band-limited Hermitian X with sup|X| = 1."""
    if amplitude == 0:
        return Metric.identity(bg)
    rng = np.random.default_rng(seed)
    X = random_field(bg, rng, band, hermitian=True)
    return Metric(bg, hm.expm(amplitude * X))


def random_ball_element(H: Metric, rng, eps, band=1, shrink=0.99):
    """Return ``(K, pert)`` with ``K = H exp(s)`` and ``s`` in S_{H,eps}.

    A random direction is rescaled so that its larger bound equals
    ``shrink * eps``.
    """
    d = random_direction(H, rng, band)
    p = perturbation_bounds(H, d)
    s = d * (shrink * eps / p.radius())
    return exp_step(H, s), Perturbation(s, p.sup_s * shrink * eps / p.radius(), p.sup_derivs * shrink * eps / p.radius())


def geodesic_derivative_bound_check(H: Metric, K: Metric, t_samples):
    """Pointwise check of the a-priori bound on ``h(t)^{-1} d_H h(t)`` along a geodesic.

    For ``h(t) = exp(t s)`` (relative to H) and ``X(t) = h(t)^{-1} d_H h(t)``::

        |dbar X| + |X| <= (|dbar d_H s| + |d_H s|) (e^{4 t c} - 1) / (4 c),
        c = |s| + |dbar s|,

    all norms pointwise in H. Returns a dict with the largest violation
    (left minus right, expected <= 0) and per-t maxima.
    """
    bg = H.bg
    s = log_ratio(H, K)
    s_form = EndForm.scalar(bg.n, s)
    ds = chern_del(H, s_form)
    dbs = dbar(bg, s_form)
    dbds = dbar(bg, ds)
    amp = form_norm(H, dbds) + form_norm(H, ds)
    c = endo_norm(H, s) + form_norm(H, dbs)
    P = hm.hermitian_part(hm.mm3(H.invsqrt, K.h, H.invsqrt))
    rows = []
    worst = -np.inf
    for t in t_samples:
        t = float(t)
        if t == 0:
            lhs = np.zeros(bg.grid_shape)
            rhs = np.zeros(bg.grid_shape)
        else:
            rel = hm.mm3(H.invsqrt, hm.powm(P, t), H.sqrt)  # exp(t s)
            rel_form = EndForm.scalar(bg.n, rel)
            X = chern_del(H, rel_form).left(hm.inv(rel))
            Y = dbar(bg, X)
            lhs = form_norm(H, Y) + form_norm(H, X)
            with np.errstate(invalid="ignore", divide="ignore"):
                growth = np.where(c > 1e-300, np.expm1(4 * t * c) / (4 * np.where(c > 1e-300, c, 1.0)), t)
            rhs = amp * growth
        v = float(np.max(lhs - rhs))
        worst = max(worst, v)
        rows.append({"t": t, "max_lhs": float(np.max(lhs)), "max_rhs": float(np.max(rhs)), "max_violation": v})
    return {"max_violation": worst, "samples": rows}
