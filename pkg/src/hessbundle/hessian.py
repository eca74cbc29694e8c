"""The bundle-valued k-Hessian operator and its positivity cones.

``psi_k(H) = [(i F_H)^k ^ omega^(n-k)/(n-k)!] / [omega^n/n!]`` is an
End(E)-valued function; the equation is ``psi_k(H) = lambda_k Id``.

Quadratic forms on End(E)-valued (0,1)-forms are assembled by evaluating the
sesquilinear form on the standard basis ``e_(b,i,j) = E_ij dzbar^b`` through
the same wedge pipeline used everywhere else, then reduced against the Gram
matrix of ``|xi|^2_{omega,H}`` so eigenvalues are margins relative to that
norm.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import hermitian as hm
from .bundle import Metric, endo_norm
from .errors import ConfigurationError, ConsistencyError
from .geometry import EndForm, contract_top, integrate_function, power, wedge


def i_curvature(H: Metric) -> EndForm:
    return H.curvature * 1j


def psi_k(H: Metric, k: int):
    if not 1 <= k <= H.bg.n:
        raise ConfigurationError(f"k={k} outside 1..{H.bg.n}")
    return contract_top(H.bg, power(i_curvature(H), k))


def lambda_from_metric(H: Metric, k: int) -> float:
    """Chern-Weil value ``int tr psi_k / (r vol)``."""
    tr = np.trace(psi_k(H, k), axis1=-2, axis2=-1)
    return float(np.real(integrate_function(H.bg, tr)) / (H.bg.r * H.bg.volume))


def h_hermitian_part(H: Metric, a):
    """``(a + a^{*H}) / 2``."""
    return 0.5 * (a + H.adjoint(a))


@dataclass
class Residual:
    field: np.ndarray
    sup_norm: float
    l2_norm: float
    self_adjoint_defect: float


def residual(H: Metric, k: int, lam: float | None = None, psi=None) -> Residual:
    """``psi_k(H) - lambda Id`` with H-Frobenius sup and L2 norms.

    The returned field is the H-Hermitian part; the discarded anti-Hermitian
    part is reported as ``self_adjoint_defect`` (relative to ``|H psi|``).
    """
    from .functional import lambda_k

    if lam is None:
        lam = lambda_k(H.bg, k)
    if psi is None:
        psi = psi_k(H, k)
    R = psi - lam * np.eye(H.bg.r)
    Rh = h_hermitian_part(H, R)
    Hpsi = hm.mm(H.h, psi)
    defect = float(np.max(np.abs(Hpsi - hm.dagger(Hpsi))) / max(np.max(np.abs(Hpsi)), 1e-300))
    pointwise = endo_norm(H, Rh)
    l2 = math.sqrt(max(float(np.real(integrate_function(H.bg, pointwise**2))), 0.0))
    return Residual(Rh, float(np.max(pointwise)), l2, defect)


# ----------------------------------------------------------------------------
# quadratic forms on End(E)-valued (0,1)-forms


def _basis(n, r):
    """Standard basis of the xi-space, ordered (b, i, j)."""
    out = []
    for b in range(n):
        for i in range(r):
            for j in range(r):
                out.append((b, i, j))
    return out


def _basis_forms(n, r, batch_ndim):
    """(0,1)-forms carrying the basis along a leading axis of length n r^2."""
    D = n * r * r
    comps = {}
    for b in range(n):
        arr = np.zeros((D,) + (1,) * batch_ndim + (r, r), complex)
        for a, (bb, i, j) in enumerate(_basis(n, r)):
            if bb == b:
                arr[(a,) + (0,) * batch_ndim + (i, j)] = 1.0
        comps[((), (b,))] = arr
    return EndForm(n, 0, 1, comps)


def _sesquilinear(bg, iF_pts, h_pts, terms, omega_deg):
    """Matrix ``A[a, b] = Q(e_a, e_b)`` at a batch of points.

    ``terms`` lists pairs ``(i, j)``; each contributes
    ``i tr[(iF)^i ^ xi^{*H} ^ (iF)^j ^ eta]`` wedged with ``omega^omega_deg``.
    ``iF_pts`` components and ``h_pts`` have shape ``(P, r, r)``.
    """
    n, r = bg.n, bg.r
    D = n * r * r
    P = h_pts.shape[0]
    hinv = hm.inv(h_pts)
    # xi^{*H} for xi = E_ij dzbar^b is h^{-1} E_ji h dz^b; batch (D, 1, P)
    star = {}
    for b in range(n):
        arr = np.zeros((D, 1, P, r, r), complex)
        for a, (bb, i, j) in enumerate(_basis(n, r)):
            if bb == b:
                arr[a, 0] = hinv[:, :, j : j + 1] @ h_pts[:, i : i + 1, :]
        star[((b,), ())] = arr
    xi_star = EndForm(n, 1, 0, star)
    eta = _basis_forms(n, r, 1)._map(lambda v: v[None])  # batch (1, D, 1)
    F = iF_pts._map(lambda v: v[None, None])
    omega = bg.omega_power(omega_deg)
    total = None
    for i, j in terms:
        left = wedge(power(F, i), xi_star) if i else xi_star
        right = wedge(power(F, j), eta) if j else eta
        top = wedge(wedge(left, right), omega)
        val = np.trace(top.top(), axis1=-2, axis2=-1)
        total = val if total is None else total + val
    # divide by the volume density to turn the top form into a function
    return 1j * total / bg.volume_density  # (D, D, P)


def _reduce(A, G):
    """Eigenvalues of ``A`` relative to the Hermitian PD Gram matrix ``G`` (batched)."""
    L = np.linalg.cholesky(G)
    Linv = np.linalg.inv(L)
    M = Linv @ A @ hm.dagger(Linv)
    return np.linalg.eigvalsh(hm.hermitian_part(M))


def _point_data(H: Metric, points):
    """Curvature components and metric at flat grid indices, batch (P,)."""
    iF = i_curvature(H)
    flat = lambda v: v.reshape((-1,) + v.shape[-2:]) if v.ndim > 2 else np.broadcast_to(v, (1,) + v.shape)
    idx = np.asarray(points)

    def take(v):
        fv = flat(v)
        return fv[idx] if fv.shape[0] > 1 else np.broadcast_to(fv[0], (len(idx),) + fv.shape[1:])

    iF_pts = iF._map(take)
    h_pts = H.h.reshape((-1,) + H.h.shape[-2:])[idx]
    return iF_pts, h_pts


def _sigma_terms(k):
    return [(i, k - 1 - i) for i in range(k)]


def _check_hermitian(A, tol=1e-3):
    # Aliasing on coarse grids breaks the symmetry of F at the 1e-4 level; a
    # wrong sign or index order breaks it at order one.
    scale = max(float(np.max(np.abs(A))), 1e-300)
    defect = float(np.max(np.abs(A - np.conj(np.swapaxes(A, 0, 1))))) / scale
    if defect > tol:
        raise ConsistencyError(f"assembled quadratic form is not Hermitian (defect {defect:.2e})")


def form_matrices(bg, iF_pts, h_pts, terms, omega_deg):
    """Batched Hermitian matrices ``(P, D, D)`` of a quadratic form and the Gram matrix."""
    A = _sesquilinear(bg, iF_pts, h_pts, terms, omega_deg)
    _check_hermitian(A)
    G = _sesquilinear(bg, iF_pts, h_pts, [(0, 0)], bg.n - 1)
    _check_hermitian(G)
    A = np.moveaxis(A, -1, 0)
    G = np.moveaxis(G, -1, 0)
    return hm.hermitian_part(A), hm.hermitian_part(G)


def sigma_k_form(H: Metric, k: int, point: int):
    """Hermitian matrix (size n r^2) of the sigma_k test form at one grid point.

    Returned in coordinates where the Gram matrix of ``|xi|^2_{omega,H}`` is the
    identity, so its eigenvalues are the pointwise cone margins.
    """
    if not 1 <= k <= H.bg.n:
        raise ConfigurationError(f"k={k} outside 1..{H.bg.n}")
    iF_pts, h_pts = _point_data(H, [point])
    A, G = form_matrices(H.bg, iF_pts, h_pts, _sigma_terms(k), H.bg.n - k)
    return _orthonormalise(A[0], G[0])


def strongly_sigma2_forms(H: Metric, point: int):
    """The two one-sided k=2 forms: ``tr[iF ^ xi* ^ xi]`` and ``tr[xi* ^ iF ^ xi]``."""
    if H.bg.n < 2:
        raise ConfigurationError("strong sigma_2 positivity needs n >= 2")
    iF_pts, h_pts = _point_data(H, [point])
    A1, G = form_matrices(H.bg, iF_pts, h_pts, [(1, 0)], H.bg.n - 2)
    A2, _ = form_matrices(H.bg, iF_pts, h_pts, [(0, 1)], H.bg.n - 2)
    return _orthonormalise(A1[0], G[0]), _orthonormalise(A2[0], G[0])


def _orthonormalise(A, G):
    L = np.linalg.cholesky(G)
    Linv = np.linalg.inv(L)
    return hm.hermitian_part(Linv @ A @ hm.dagger(Linv))


# ----------------------------------------------------------------------------
# Nakano and dual Nakano


def unitary_components(F_point, h_point):
    """Conjugate curvature components into an H-unitary frame.

    ``F_point`` maps ``(a, b)`` to the r x r matrix ``F_{a bbar}``. The frame is
    the columns of ``h^{-1/2}``, in which ``<u, v>_H = v^dagger u``.
    """
    hs = hm.sqrtm(np.asarray(h_point, complex))
    his = hm.inv(hs)
    return {key: hs @ np.asarray(v, complex) @ his for key, v in F_point.items()}


def _blocks(F_unitary, n, r, dual):
    M = np.zeros((n * r, n * r), complex)
    for a in range(n):
        for b in range(n):
            blk = F_unitary[(a, b)]
            if dual:
                # <F_{a bbar} v^b, v^a>: row block a, column block b
                M[a * r : (a + 1) * r, b * r : (b + 1) * r] = blk
            else:
                # <F_{a bbar} u^a, u^b>: row block b, column block a
                M[b * r : (b + 1) * r, a * r : (a + 1) * r] = blk
    return M


def nakano_form(F_point, h_point=None):
    """Matrix of ``sum <F_{a bbar} u^a, u^b>_H`` on n-tuples of fibre vectors."""
    n, r = _shape(F_point)
    Fu = F_point if h_point is None else unitary_components(F_point, h_point)
    return _blocks(Fu, n, r, dual=False)


def dual_nakano_form(F_point, h_point=None):
    """Matrix of ``sum <F_{a bbar} v^b, v^a>_H``."""
    n, r = _shape(F_point)
    Fu = F_point if h_point is None else unitary_components(F_point, h_point)
    return _blocks(Fu, n, r, dual=True)


def _shape(F_point):
    n = 1 + max(a for a, _ in F_point)
    r = next(iter(F_point.values())).shape[-1]
    return n, r


def curvature_from_components(n, F_point):
    """Constant (1,1)-form ``F = sum F_{a bbar} dz^a ^ dzbar^b``."""
    return EndForm(n, 1, 1, {((a,), (b,)): np.asarray(v, complex) for (a, b), v in F_point.items()})


def n1_n3_index_oracle(F_point, xi_point, h_point):
    """Index-sum expansions of the two one-sided sigma_2 forms (flat omega).

    ``xi_point[b]`` is the coefficient of ``dzbar^b``; returns the values of
    ``i tr[(iF) ^ xi* ^ xi] ^ omega^{n-2}/(n-2)!`` and
    ``i tr[xi* ^ (iF) ^ xi] ^ omega^{n-2}/(n-2)!`` divided by ``omega^n/n!``,
    evaluated with an explicit H-unitary frame ``{e_i}``.
    """
    n, r = _shape(F_point)
    h = np.asarray(h_point, complex)
    hinv = np.linalg.inv(h)
    frame = hm.invsqrtm(h)  # columns are H-unitary
    inner = lambda u, v: np.vdot(v, h @ u)  # <u, v>_H
    star = [hinv @ np.conj(np.asarray(x)).T @ h for x in xi_point]
    xi = [np.asarray(x, complex) for x in xi_point]
    F = {key: np.asarray(v, complex) for key, v in F_point.items()}
    first = 0.0
    second = 0.0
    for i in range(r):
        e = frame[:, i]
        for a in range(n):
            for b in range(a + 1, n):
                ua, ub = star[a] @ e, star[b] @ e
                first += (
                    inner(F[(a, a)] @ ub, ub)
                    - inner(F[(a, b)] @ ub, ua)
                    + inner(F[(b, b)] @ ua, ua)
                    - inner(F[(b, a)] @ ua, ub)
                )
                va, vb = xi[a] @ e, xi[b] @ e
                second += (
                    inner(F[(b, b)] @ va, va)
                    - inner(F[(b, a)] @ vb, va)
                    + inner(F[(a, a)] @ vb, vb)
                    - inner(F[(a, b)] @ va, vb)
                )
    return complex(first), complex(second)


def pipeline_one_sided(n, F_point, xi_point, h_point):
    """The same two quantities through the wedge pipeline (flat omega, constant data)."""
    from .geometry import Background, adjoint_form

    r = next(iter(F_point.values())).shape[-1]
    bg = Background(n, 2, r)
    iF = curvature_from_components(n, F_point) * 1j
    xi = EndForm(n, 0, 1, {((), (b,)): np.asarray(x, complex) for b, x in enumerate(xi_point)})
    xs = adjoint_form(xi, np.asarray(h_point, complex))
    om = bg.omega_power(n - 2)
    one = wedge(wedge(wedge(iF, xs), xi), om)
    two = wedge(wedge(wedge(xs, iF), xi), om)
    val = lambda f: complex(1j * np.trace(f.top()) / bg.volume_density)
    return val(one), val(two)


# ----------------------------------------------------------------------------
# cone reports


CONES = ("sigma_k", "strongly_sigma2", "nakano", "dual_nakano")


@dataclass
class PositivityReport:
    cone: str
    k: int
    point_index: np.ndarray
    min_eig: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def global_min(self):
        return float(np.min(self.min_eig))

    @property
    def positive(self):
        return self.global_min > 0

    def csv_rows(self):
        return [(self.cone, int(i), repr(float(v))) for i, v in zip(self.point_index, self.min_eig)]

    def summary(self):
        return {
            "cone": self.cone,
            "k": self.k,
            "points": int(len(self.point_index)),
            "global_min_eig": self.global_min,
            "positive": self.positive,
            **self.extra,
        }


def sample_points(bg, max_points=4096, seed=0, full_threshold=16):
    """Grid sample for cone certification: every point for N <= 16, else stratified."""
    total = bg.N ** (2 * bg.n)
    if bg.N <= full_threshold or total <= max_points:
        return np.arange(total)
    rng = np.random.default_rng(seed)
    strata = np.array_split(np.arange(total), max_points)
    return np.array([rng.choice(s) for s in strata])


def _chunked_margins(H, points, terms, omega_deg, chunk):
    out = []
    for start in range(0, len(points), chunk):
        idx = points[start : start + chunk]
        iF_pts, h_pts = _point_data(H, idx)
        A, G = form_matrices(H.bg, iF_pts, h_pts, terms, omega_deg)
        out.append(_reduce(A, G)[:, 0])
    return np.concatenate(out)


def sigma_k_report(H: Metric, k: int, points=None, chunk=512) -> PositivityReport:
    points = sample_points(H.bg) if points is None else np.asarray(points)
    m = _chunked_margins(H, points, _sigma_terms(k), H.bg.n - k, chunk)
    return PositivityReport("sigma_k", k, points, m)


def strongly_sigma2_report(H: Metric, points=None, chunk=512) -> PositivityReport:
    points = sample_points(H.bg) if points is None else np.asarray(points)
    m1 = _chunked_margins(H, points, [(1, 0)], H.bg.n - 2, chunk)
    m2 = _chunked_margins(H, points, [(0, 1)], H.bg.n - 2, chunk)
    return PositivityReport(
        "strongly_sigma2", 2, points, np.minimum(m1, m2),
        extra={"first_min_eig": float(m1.min()), "second_min_eig": float(m2.min())},
    )


def _nakano_report(H: Metric, points, dual):
    points = sample_points(H.bg) if points is None else np.asarray(points)
    F = H.curvature
    h = H.h.reshape((-1,) + H.h.shape[-2:])
    mins = np.empty(len(points))
    flat = {}
    for (I, J), v in F.comps.items():
        flat[(I[0], J[0])] = v.reshape((-1,) + v.shape[-2:]) if v.ndim > 2 else np.broadcast_to(v, (1,) + v.shape)
    for row, p in enumerate(points):
        Fp = {key: (v[p] if v.shape[0] > 1 else v[0]) for key, v in flat.items()}
        M = dual_nakano_form(Fp, h[p]) if dual else nakano_form(Fp, h[p])
        mins[row] = np.linalg.eigvalsh(hm.hermitian_part(M))[0]
    return PositivityReport("dual_nakano" if dual else "nakano", 0, points, mins)


def nakano_report(H: Metric, points=None):
    return _nakano_report(H, points, dual=False)


def dual_nakano_report(H: Metric, points=None):
    return _nakano_report(H, points, dual=True)


def all_cone_reports(H: Metric, k: int, points=None):
    reports = [sigma_k_report(H, k, points)]
    if H.bg.n >= 2:
        reports.append(strongly_sigma2_report(H, points))
    reports.append(nakano_report(H, points))
    reports.append(dual_nakano_report(H, points))
    return reports


def write_positivity(reports, csv_path, json_path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("cone", "point_index", "min_eig"))
    for rep in reports:
        w.writerows(rep.csv_rows())
    with open(csv_path, "w", newline="") as fh:
        fh.write(buf.getvalue())
    with open(json_path, "w") as fh:
        json.dump({"reports": [r.summary() for r in reports]}, fh, indent=2, sort_keys=True)
        fh.write("\n")
