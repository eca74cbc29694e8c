"""Generalized Donaldson functionals, the constants lambda_k and k-omega slopes."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import hermitian as hm
from .bundle import Metric, chern_del, geodesic, log_ratio
from .errors import ConfigurationError
from .geometry import Background, EndForm, contract_top, dbar, integrate, integrate_function, power, trace, wedge
from .hessian import i_curvature, lambda_from_metric, psi_k

PATH_KINDS = ("linear", "geodesic", "piecewise")


@dataclass
class PathSpec:
    """A path from H0 to H used for the s-quadrature.

    ``kind`` is ``linear`` (``h(s) = (1-s) h0 + s h1``), ``geodesic``
    (``H0 exp(s log(H0^{-1} H))``) or ``piecewise`` (geodesic segments through
    ``waypoints``). ``nodes`` is the Gauss-Legendre count per segment.
    """

    kind: str = "geodesic"
    nodes: int = 8
    waypoints: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise ConfigurationError(f"unknown path kind {self.kind!r}")
        if self.nodes < 2:
            raise ConfigurationError("quadrature needs at least 2 nodes")


@dataclass
class FunctionalReport:
    k: int
    path_kind: str
    nodes: int
    M0: float
    logdet_term: float
    M: float
    lam: float

    def csv_row(self):
        return (self.k, self.path_kind, self.nodes, repr(self.M0), repr(self.logdet_term), repr(self.M), repr(self.lam))


CSV_HEADER = ("k", "path_kind", "Q", "M0", "logdet_term", "M", "lambda")


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


# ----------------------------------------------------------------------------
# lambda and slopes


def lambda_k_analytic(bg: Background, k: int, levels=None) -> float:
    """``lambda_k`` for constant diagonal curvature ``i F = pi diag(m_i) omega_0``.

    ``omega_0 = sum i dz^a ^ dzbar^a`` is the flat form carrying integral
    periods; the value is ``sum_i (pi m_i)^k c_k / r`` where ``c_k`` is the
    contraction of ``omega_0^k`` against ``omega^(n-k)/(n-k)!``.
    """
    _check_k(bg, k)
    levels = bg.levels if levels is None else levels
    ck = _omega0_contraction(bg, k)
    return float(sum((np.pi * m) ** k for m in levels) * ck / len(levels))


def _omega0_contraction(bg, k):
    n = bg.n
    om0 = EndForm(n, 1, 1, {((a,), (b,)): np.array([[1j if a == b else 0j]]) for a in range(n) for b in range(n)})
    return float(np.real(contract_top(bg, power(om0, k))[0, 0]))


def _check_k(bg, k):
    if not 1 <= k <= bg.n:
        raise ConfigurationError(f"k={k} outside 1..{bg.n}")


def lambda_k(bg: Background, k: int, H: Metric | None = None) -> float:
    """Chern-Weil ``int tr((iF_H)^k) ^ omega^(n-k)/(n-k)! / (r vol)``.

    Computed from the background metric unless ``H`` is given; the value does
    not depend on the metric.
    """
    _check_k(bg, k)
    if H is None:
        H = Metric.identity(bg)
    return lambda_from_metric(H, k)


@dataclass
class SlopeReport:
    subset: tuple
    degree: float
    slope: float
    bundle_slope: float
    verdict: str  # "stable", "semistable" or "unstable" for this sub-sum


def deg_slope(bg: Background, sub, k: int):
    """k-omega degree and slope of the sub-sum of line factors ``sub``.

    ``degree = int ch_k ^ omega^(n-k)/(n-k)!``. The slope is reported on the
    lambda scale, ``(2 pi)^k k! degree / (rank vol)``, so the slope of the whole
    bundle equals ``lambda_k``.
    """
    _check_k(bg, k)
    sub = tuple(sorted(set(sub)))
    if not sub:
        raise ConfigurationError("empty sub-bundle")
    if any(i < 0 or i >= bg.r for i in sub):
        raise ConfigurationError(f"sub-bundle indices {sub} out of range for rank {bg.r}")
    levels = [bg.levels[i] for i in sub]
    ck = _omega0_contraction(bg, k)
    chern_weil = sum((np.pi * m) ** k for m in levels) * ck * bg.volume  # int tr (iF)^k ^ ...
    degree = chern_weil / ((2 * np.pi) ** k * math.factorial(k))
    slope = chern_weil / (len(sub) * bg.volume)
    return float(degree), float(slope)


def stability(bg: Background, k: int):
    """Compare every proper sub-sum with the whole bundle.

    Returns ``(overall, reports)`` where overall is ``stable`` if every proper
    sub-sum has strictly smaller slope, ``semistable`` if some tie and none
    exceed, else ``unstable``.
    """
    _, mu = deg_slope(bg, range(bg.r), k)
    reports = []
    tol = 1e-12 * max(1.0, abs(mu))
    for size in range(1, bg.r):
        for sub in combinations(range(bg.r), size):
            d, s = deg_slope(bg, sub, k)
            verdict = "stable" if s < mu - tol else ("semistable" if s <= mu + tol else "unstable")
            reports.append(SlopeReport(sub, d, s, mu, verdict))
    verdicts = {r.verdict for r in reports}
    if "unstable" in verdicts:
        overall = "unstable"
    elif "semistable" in verdicts:
        overall = "semistable"
    else:
        overall = "stable"
    return overall, reports


# ----------------------------------------------------------------------------
# the functional


def _gauss(nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def _segment_integral(H0: Metric, H1: Metric, k, kind, nodes):
    """``int_0^1 int_M tr[psi_k(H(s)) h^{-1} dh/ds] dvol ds`` on one segment."""
    bg = H0.bg
    xs, ws = _gauss(nodes)
    total = 0.0
    if kind == "linear":
        dh = H1.h - H0.h
        for x, w in zip(xs, ws):
            Hs = Metric(bg, (1 - x) * H0.h + x * H1.h)
            integrand = np.trace(hm.mm3(psi_k(Hs, k), Hs.hinv, dh), axis1=-2, axis2=-1)
            total += w * integrate_function(bg, integrand)
    else:
        s = log_ratio(H0, H1)
        for x, w in zip(xs, ws):
            Hs = geodesic(H0, H1, x)
            integrand = np.trace(hm.mm(psi_k(Hs, k), s), axis1=-2, axis2=-1)
            total += w * integrate_function(bg, integrand)
    return float(np.real(total))


def donaldson_M(H0: Metric, H: Metric, k: int, path: PathSpec | None = None, lam=None) -> FunctionalReport:
    """Generalized Donaldson functional ``M_k(H0, H) = M0 - lambda int log det(H0^{-1} H)``."""
    _check_k(H0.bg, k)
    path = PathSpec() if path is None else path
    lam = lambda_k(H0.bg, k) if lam is None else lam
    if path.kind == "piecewise":
        chain = [H0, *path.waypoints, H]
        M0 = sum(_segment_integral(a, b, k, "geodesic", path.nodes) for a, b in zip(chain, chain[1:]))
    else:
        M0 = _segment_integral(H0, H, k, path.kind, path.nodes)
    ld = H.logdet() - H0.logdet()
    logdet_term = float(np.real(integrate_function(H0.bg, ld))) * lam
    return FunctionalReport(k, path.kind, path.nodes, M0, logdet_term, M0 - logdet_term, lam)


def donaldson_M_refined(H0, H, k, kind="geodesic", nodes=8, rtol=1e-12, max_nodes=128, waypoints=()):
    """Double the node count until successive values agree to ``rtol``."""
    prev = donaldson_M(H0, H, k, PathSpec(kind, nodes, list(waypoints)))
    while nodes < max_nodes:
        nodes *= 2
        cur = donaldson_M(H0, H, k, PathSpec(kind, nodes, list(waypoints)), lam=prev.lam)
        if abs(cur.M - prev.M) <= rtol * max(abs(cur.M), abs(cur.M0), 1e-300):
            return cur
        prev = cur
    return prev


def geodesic_increment(H: Metric, s, k, lam, nodes=8, endpoints=None):
    """``M(H, H exp(s))`` along the geodesic, combining the log-det term pointwise.

    With ``endpoints=(psi_start, psi_end)`` the two-point Lobatto rule is used.
    """
    from .bundle import exp_step

    bg = H.bg
    shift = lam * np.eye(bg.r)
    if endpoints is not None:
        vals = [np.trace(hm.mm(p - shift, s), axis1=-2, axis2=-1) for p in endpoints]
        return float(np.real(integrate_function(bg, 0.5 * (vals[0] + vals[1]))))
    xs, ws = _gauss(nodes)
    total = 0.0
    for x, w in zip(xs, ws):
        Hs = exp_step(H, s, x)
        total += w * integrate_function(bg, np.trace(hm.mm(psi_k(Hs, k) - shift, s), axis1=-2, axis2=-1))
    return float(np.real(total))


def first_variation(H: Metric, sdot, k: int, lam=None) -> float:
    """``dM/dt = int tr[(psi_k(H) - lambda) H^{-1} dH/dt] omega^n/n!`` with ``H^{-1} dH/dt = sdot``."""
    lam = lambda_k(H.bg, k) if lam is None else lam
    R = psi_k(H, k) - lam * np.eye(H.bg.r)
    return float(np.real(integrate_function(H.bg, np.trace(hm.mm(R, sdot), axis1=-2, axis2=-1))))


def second_variation_geodesic(H: Metric, K: Metric, k: int, t: float) -> float:
    """``d^2/dt^2 M(H0, H(t))`` along ``H(t) = H exp(t s)``, ``s = log(H^{-1} K)``.

    Evaluates ``int omega^(n-k)/(n-k)! ^ tr[sum_i (iF)^i ^ i d_{H(t)} s ^ (iF)^(k-1-i) ^ dbar s]``.
    """
    bg = H.bg
    s = log_ratio(H, K)
    Ht = geodesic(H, K, t)
    s_form = EndForm.scalar(bg.n, s)
    ds = chern_del(Ht, s_form) * 1j
    dbs = dbar(bg, s_form)
    iF = i_curvature(Ht)
    total = None
    for i in range(k):
        term = wedge(wedge(wedge(power(iF, i), ds), power(iF, k - 1 - i)), dbs) if i or k - 1 - i else wedge(ds, dbs)
        total = term if total is None else total + term
    top = wedge(bg.omega_power(bg.n - k), trace(total))
    return float(np.real(integrate(bg, top)))
