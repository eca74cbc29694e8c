"""Pointwise functions of Hermitian matrix fields.

All routines act on arrays of shape ``(..., r, r)``. For ``r <= 2`` a closed
form is used (one LAPACK call per grid point is the dominant cost otherwise);
larger ranks go through a batched ``numpy.linalg.eigh``.
"""

from __future__ import annotations

import numba
import numpy as np

from .errors import DegenerateMetricError

EPS_PD = 1e-10


@numba.njit(cache=True)
def _mm2_kernel(a, b, out):
    for p in range(a.shape[0]):
        a00, a01, a10, a11 = a[p, 0, 0], a[p, 0, 1], a[p, 1, 0], a[p, 1, 1]
        b00, b01, b10, b11 = b[p, 0, 0], b[p, 0, 1], b[p, 1, 0], b[p, 1, 1]
        out[p, 0, 0] = a00 * b00 + a01 * b10
        out[p, 0, 1] = a00 * b01 + a01 * b11
        out[p, 1, 0] = a10 * b00 + a11 * b10
        out[p, 1, 1] = a10 * b01 + a11 * b11


def mm(a, b):
    """Batched matrix product with fast paths for 2x2 blocks."""
    if a.shape[-1] == 2 and b.shape[-2] == 2 and b.shape[-1] == 2 and a.shape[-2] == 2:
        if a.shape == b.shape and a.ndim > 3:
            a2 = np.ascontiguousarray(a, dtype=complex).reshape(-1, 2, 2)
            b2 = np.ascontiguousarray(b, dtype=complex).reshape(-1, 2, 2)
            out = np.empty(a2.shape, dtype=complex)
            _mm2_kernel(a2, b2, out)
            return out.reshape(a.shape)
        a00, a01, a10, a11 = a[..., 0, 0], a[..., 0, 1], a[..., 1, 0], a[..., 1, 1]
        b00, b01, b10, b11 = b[..., 0, 0], b[..., 0, 1], b[..., 1, 0], b[..., 1, 1]
        shape = np.broadcast_shapes(a.shape, b.shape)
        out = np.empty(shape, dtype=np.result_type(a, b))
        out[..., 0, 0] = a00 * b00 + a01 * b10
        out[..., 0, 1] = a00 * b01 + a01 * b11
        out[..., 1, 0] = a10 * b00 + a11 * b10
        out[..., 1, 1] = a10 * b01 + a11 * b11
        return out
    return a @ b


def mm3(a, b, c):
    return mm(mm(a, b), c)


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_part(a):
    return 0.5 * (a + dagger(a))


# scalar function, first derivative, third derivative
def _exp():
    return np.exp, np.exp, np.exp


def _log():
    return np.log, lambda x: 1.0 / x, lambda x: 2.0 / x**3


def _power(p):
    return (
        lambda x: x**p,
        lambda x: p * x ** (p - 1),
        lambda x: p * (p - 1) * (p - 2) * x ** (p - 3),
    )


_NEEDS_PD = {"log", "sqrt", "invsqrt", "power"}


def _resolve(func, p):
    if func == "exp":
        return _exp()
    if func == "log":
        return _log()
    if func == "sqrt":
        return _power(0.5)
    if func == "invsqrt":
        return _power(-0.5)
    if func == "power":
        return _power(p)
    raise ValueError(f"unknown matrix function {func!r}")


def eigvalsh(a):
    """Eigenvalues (ascending) of a Hermitian field."""
    r = a.shape[-1]
    if r == 1:
        return a.real.copy()[..., 0]
    if r == 2:
        t = 0.5 * (a[..., 0, 0].real + a[..., 1, 1].real)
        d = _half_gap(a)
        return np.stack([t - d, t + d], axis=-1)
    return np.linalg.eigvalsh(a)


def _half_gap(a):
    dd = 0.5 * (a[..., 0, 0].real - a[..., 1, 1].real)
    c = 0.5 * (a[..., 0, 1] + np.conj(a[..., 1, 0]))
    return np.sqrt(dd * dd + (c * np.conj(c)).real)


def herm_apply(a, func, p=None, floor=EPS_PD):
    """Apply ``func`` (exp, log, sqrt, invsqrt, power) to a Hermitian field.

    Functions that need a positive spectrum raise
    :class:`DegenerateMetricError` when an eigenvalue falls below ``floor``.
    """
    f, f1, f3 = _resolve(func, p)
    needs_pd = func in _NEEDS_PD
    r = a.shape[-1]
    if r == 1:
        x = a[..., 0, 0].real
        if needs_pd and np.any(x < floor):
            raise DegenerateMetricError(f"eigenvalue {x.min():.3e} below floor {floor:g}")
        return f(x)[..., None, None].astype(complex)
    if r == 2:
        return _apply_2x2(a, f, f1, f3, needs_pd, floor)
    w, v = np.linalg.eigh(a)
    if needs_pd and np.any(w[..., 0] < floor):
        raise DegenerateMetricError(f"eigenvalue {w[..., 0].min():.3e} below floor {floor:g}")
    return mm(v * f(w)[..., None, :], dagger(v))


def _apply_2x2(a, f, f1, f3, needs_pd, floor):
    a = hermitian_part(a)
    t = 0.5 * (a[..., 0, 0].real + a[..., 1, 1].real)
    d = _half_gap(a)
    lo, hi = t - d, t + d
    if needs_pd and np.any(lo < floor):
        raise DegenerateMetricError(f"eigenvalue {lo.min():.3e} below floor {floor:g}")
    fp, fm = f(hi), f(lo)
    small = d < 1e-4 * np.maximum(np.abs(t), 1e-300) + 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(small, f1(t) + f3(t) * d * d / 6.0, (fp - fm) / np.where(small, 1.0, 2.0 * d))
    mean = 0.5 * (fp + fm)
    out = slope[..., None, None] * a
    shift = mean - slope * t
    out[..., 0, 0] += shift
    out[..., 1, 1] += shift
    return out


def expm(a):
    return herm_apply(a, "exp")


def logm(a, floor=EPS_PD):
    return herm_apply(a, "log", floor=floor)


def sqrtm(a, floor=EPS_PD):
    return herm_apply(a, "sqrt", floor=floor)


def invsqrtm(a, floor=EPS_PD):
    return herm_apply(a, "invsqrt", floor=floor)


def powm(a, p, floor=EPS_PD):
    return herm_apply(a, "power", p=p, floor=floor)


def inv(a):
    """Batched inverse with a closed form for 2x2 blocks."""
    r = a.shape[-1]
    if r == 1:
        return 1.0 / a
    if r == 2:
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        out = np.empty_like(a)
        out[..., 0, 0] = a[..., 1, 1]
        out[..., 1, 1] = a[..., 0, 0]
        out[..., 0, 1] = -a[..., 0, 1]
        out[..., 1, 0] = -a[..., 1, 0]
        return out / det[..., None, None]
    return np.linalg.inv(a)


def logdet(a):
    """Real log-determinant of a Hermitian positive-definite field."""
    return np.sum(np.log(eigvalsh(a)), axis=-1)


def exp_log_derivative(x, dx):
    """``exp(-x) D exp(x)[dx]`` for a Hermitian field ``x`` and any direction ``dx``.

    Evaluated in the eigenbasis of ``x`` with divided differences of ``exp``.
    """
    w, v = np.linalg.eigh(x)
    li = w[..., :, None]
    lj = w[..., None, :]
    gap = lj - li
    close = np.abs(gap) < 1e-8
    with np.errstate(divide="ignore", invalid="ignore"):
        # exp(-li) (exp(lj) - exp(li)) / (lj - li) = expm1(gap) / gap
        phi = np.where(close, 1.0 + 0.5 * gap, np.expm1(gap) / np.where(close, 1.0, gap))
    inner = mm(mm(dagger(v), dx), v) * phi
    return mm(mm(v, inner), dagger(v))
