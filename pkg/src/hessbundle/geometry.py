"""Flat complex tori and the exterior algebra of End(E)-valued (p, q)-forms.

Conventions
-----------
The torus is ``C^n / (Z + iZ)^n`` with real coordinates ``(x1, y1, ..., xn, yn)``,
each of period 1, sampled on an ``N``-point grid per real direction. Holomorphic
coordinates are ``z = x + i y``, so

    d/dz = (d/dx - i d/dy) / 2,   d/dzbar = (d/dx + i d/dy) / 2,
    dz ^ dzbar = -2i dx ^ dy,      i dz ^ dzbar = 2 dx ^ dy.

A form of bidegree (p, q) is stored as a dict mapping ordered index pairs
``(I, J)`` (``I`` of length p, ``J`` of length q, both strictly increasing,
0-based) to the coefficient of ``dz^I ^ dzbar^J``. Coefficients are arrays of
shape ``batch + (r, r)``; the batch is either the full grid ``(N,) * 2n`` or any
shape that broadcasts (constants use ``()``). Scalar forms use ``r = 1``.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, DegenerateMetricError
from . import hermitian as hm


def _workers():
    try:
        return max(1, int(os.environ.get("HBL_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class Background:
    """Torus, constant Kaehler form and the model bundle ``E = L^m (x) O^r``.

    ``m`` may be an int (central background curvature) or a sequence of r
    levels for a split bundle ``L_{m_1} + ... + L_{m_r}``.
    """

    n: int
    N: int
    r: int = 1
    m: int | tuple = 0
    kaehler: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 1 <= self.n <= 3:
            raise ConfigurationError(f"complex dimension n={self.n} outside 1..3")
        if self.N < 2 or self.N & (self.N - 1):
            raise ConfigurationError(f"grid size N={self.N} is not a power of two")
        if self.r < 1:
            raise ConfigurationError(f"rank r={self.r} < 1")
        g = np.eye(self.n, dtype=complex) if self.kaehler is None else np.asarray(self.kaehler, complex)
        if g.shape != (self.n, self.n):
            raise ConfigurationError(f"Kaehler matrix must be {self.n}x{self.n}")
        if not np.allclose(g, hm.dagger(g), atol=1e-14):
            raise ConfigurationError("Kaehler matrix is not Hermitian")
        if np.linalg.eigvalsh(g)[0] <= 0:
            raise ConfigurationError("Kaehler matrix is not positive definite")
        object.__setattr__(self, "kaehler", g)
        levels = (self.m,) * self.r if np.isscalar(self.m) else tuple(int(v) for v in self.m)
        if len(levels) != self.r:
            raise ConfigurationError(f"{len(levels)} split levels for rank {self.r}")
        object.__setattr__(self, "m", int(self.m) if np.isscalar(self.m) else levels)

    @property
    def levels(self):
        return (self.m,) * self.r if isinstance(self.m, int) else self.m

    @property
    def central(self):
        return len(set(self.levels)) == 1

    @property
    def grid_shape(self):
        return (self.N,) * (2 * self.n)

    @property
    def field_shape(self):
        return self.grid_shape + (self.r, self.r)

    @cached_property
    def coords(self):
        """Real coordinate arrays ``(x1, y1, ..., xn, yn)`` on the grid."""
        t = np.arange(self.N) / self.N
        return np.meshgrid(*([t] * (2 * self.n)), indexing="ij")

    @cached_property
    def _symbols(self):
        k = sfft.fftfreq(self.N, 1.0 / self.N)
        k[np.abs(k) == self.N // 2] = 0.0  # Nyquist mode carries no derivative
        dz, dzbar = [], []
        for a in range(self.n):
            shape_x = [1] * (2 * self.n)
            shape_y = [1] * (2 * self.n)
            shape_x[2 * a] = self.N
            shape_y[2 * a + 1] = self.N
            kx = k.reshape(shape_x)
            ky = k.reshape(shape_y)
            dz.append(np.pi * 1j * kx + np.pi * ky)
            dzbar.append(np.pi * 1j * kx - np.pi * ky)
        return dz, dzbar

    def identity(self):
        return np.broadcast_to(np.eye(self.r, dtype=complex), self.field_shape).copy()

    def omega(self):
        """Kaehler form ``i g_{ab} dz^a ^ dzbar^b`` as a constant scalar (1,1)-form."""
        comps = {}
        for a in range(self.n):
            for b in range(self.n):
                comps[((a,), (b,))] = np.array([[1j * self.kaehler[a, b]]])
        return EndForm(self.n, 1, 1, comps)

    def omega_power(self, j):
        """``omega^j / j!`` as a constant scalar (j, j)-form."""
        return _omega_power_cached(self, j)

    @cached_property
    def volume_density(self):
        """Top coefficient of ``omega^n / n!`` (a constant)."""
        return complex(self.omega_power(self.n).top()[..., 0, 0])

    @property
    def volume(self):
        """``vol(M, omega) = int omega^n / n!``."""
        return (self.volume_density * _top_to_real(self.n)).real

    def model_curvature(self):
        """Background curvature with ``i F_{H0} = pi m * sum_a i dz^a ^ dzbar^a``.

        Diagonal (split) levels give ``pi * diag(m_i)`` in place of ``pi m Id``.
        """
        diag = np.diag(np.asarray(self.levels, dtype=float)).astype(complex)
        comps = {}
        for a in range(self.n):
            for b in range(self.n):
                comps[((a,), (b,))] = (np.pi * diag) if a == b else np.zeros((self.r, self.r), complex)
        return EndForm(self.n, 1, 1, comps)


_OMEGA_CACHE: dict = {}


def _omega_power_cached(bg, j):
    key = (bg.n, bg.kaehler.tobytes(), j)
    if key not in _OMEGA_CACHE:
        if j == 0:
            form = EndForm.scalar(bg.n, np.array([[1.0 + 0j]]))
        else:
            form = bg.omega()
            for _ in range(j - 1):
                form = wedge(form, bg.omega())
            form = form * (1.0 / math.factorial(j))
        _OMEGA_CACHE[key] = form
    return _OMEGA_CACHE[key]


def _top_to_real(n):
    """Factor c with ``dz^1..dz^n ^ dzbar^1..dzbar^n = c dx1 dy1 ... dxn dyn``."""
    return (-1) ** (n * (n - 1) // 2) * (-2j) ** n


# ----------------------------------------------------------------------------
# multi-index bookkeeping


def _indices(n, p):
    return list(itertools.combinations(range(n), p))


def _sort_sign(seq):
    """Sign of the permutation sorting ``seq``; 0 if an index repeats."""
    if len(set(seq)) != len(seq):
        return 0, None
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(len(seq) - 1 - i):
            if seq[j] > seq[j + 1]:
                seq[j], seq[j + 1] = seq[j + 1], seq[j]
                sign = -sign
    return sign, tuple(seq)


def _mul(a, b):
    if a.shape[-2:] == (1, 1) or b.shape[-2:] == (1, 1):
        return a * b
    return hm.mm(a, b)


class EndForm:
    """An End(E)-valued (p, q)-form (see module docstring for layout)."""

    __slots__ = ("n", "p", "q", "comps")

    def __init__(self, n, p, q, comps):
        if not (0 <= p <= n and 0 <= q <= n):
            raise ConfigurationError(f"bidegree ({p},{q}) invalid for n={n}")
        self.n, self.p, self.q = n, p, q
        self.comps = comps
        expected = math.comb(n, p) * math.comb(n, q)
        if len(comps) != expected:
            raise ConfigurationError(f"({p},{q})-form needs {expected} components, got {len(comps)}")

    @classmethod
    def zeros(cls, n, p, q, shape):
        return cls(n, p, q, {(I, J): np.zeros(shape, complex) for I in _indices(n, p) for J in _indices(n, q)})

    @classmethod
    def scalar(cls, n, value):
        """A (0,0)-form from an array of shape ``batch + (r, r)``."""
        return cls(n, 0, 0, {((), ()): np.asarray(value, complex)})

    @property
    def degree(self):
        return self.p + self.q

    @property
    def rank(self):
        return next(iter(self.comps.values())).shape[-1]

    def __getitem__(self, key):
        """Coefficient for any index pair, resolving order through the permutation sign."""
        I, J = key
        si, I_sorted = _sort_sign(I)
        sj, J_sorted = _sort_sign(J)
        if si == 0 or sj == 0:
            return 0.0 * next(iter(self.comps.values()))
        return (si * sj) * self.comps[(I_sorted, J_sorted)]

    def top(self):
        if self.p != self.n or self.q != self.n:
            raise ConfigurationError(f"({self.p},{self.q}) is not a top form for n={self.n}")
        return self.comps[(tuple(range(self.n)), tuple(range(self.n)))]

    def _map(self, fn):
        return EndForm(self.n, self.p, self.q, {k: fn(v) for k, v in self.comps.items()})

    def __mul__(self, c):
        return self._map(lambda v: v * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self._map(lambda v: v / c)

    def __neg__(self):
        return self._map(lambda v: -v)

    def _check_same(self, other):
        if (self.n, self.p, self.q) != (other.n, other.p, other.q):
            raise ConfigurationError(
                f"cannot combine ({self.p},{self.q}) and ({other.p},{other.q}) forms"
            )

    def __add__(self, other):
        self._check_same(other)
        return EndForm(self.n, self.p, self.q, {k: v + other.comps[k] for k, v in self.comps.items()})

    def __sub__(self, other):
        self._check_same(other)
        return EndForm(self.n, self.p, self.q, {k: v - other.comps[k] for k, v in self.comps.items()})

    def left(self, a):
        """Pointwise ``a . f`` for a matrix field ``a``."""
        return self._map(lambda v: _mul(a, v))

    def right(self, a):
        """Pointwise ``f . a`` for a matrix field ``a``."""
        return self._map(lambda v: _mul(v, a))

    def max_abs(self):
        return max(float(np.max(np.abs(v))) for v in self.comps.values())

    def __repr__(self):
        return f"EndForm(n={self.n}, p={self.p}, q={self.q}, r={self.rank})"


def zero_form(n, p, q, like):
    """Zero form of bidegree (p, q), or ``None`` when a degree exceeds n."""
    if p > n or q > n:
        return None
    shape = np.broadcast_shapes(*(v.shape for v in like.comps.values()))
    return EndForm.zeros(n, p, q, shape)


# ----------------------------------------------------------------------------
# spectral derivatives


def _grid_ndim(bg):
    return 2 * bg.n


def _spectral(bg, arr, symbols):
    axes = tuple(range(_grid_ndim(bg)))
    if arr.ndim < len(axes) + 2 or arr.shape[: len(axes)] != bg.grid_shape:
        if arr.ndim == 2:
            return [np.zeros_like(arr) for _ in symbols]
        raise ConfigurationError(f"array of shape {arr.shape} does not live on the {bg.grid_shape} grid")
    w = _workers()
    spec = sfft.fftn(arr, axes=axes, workers=w)
    out = []
    for sym in symbols:
        out.append(sfft.ifftn(spec * sym[(...,) + (None,) * (arr.ndim - len(axes))], axes=axes, workers=w))
    return out


def field_del(bg, arr):
    """List of d/dz^a of a matrix field, one per holomorphic direction."""
    return _spectral(bg, arr, bg._symbols[0])


def field_dbar(bg, arr):
    return _spectral(bg, arr, bg._symbols[1])


def _exterior(bg, f, holo):
    n = f.n
    if (holo and f.p >= n) or (not holo and f.q >= n):
        # degree overflow: the zero form of the next bidegree does not exist
        return None
    p2, q2 = (f.p + 1, f.q) if holo else (f.p, f.q + 1)
    shape = np.broadcast_shapes(*(v.shape for v in f.comps.values()))
    if len(shape) == 2:
        shape = bg.field_shape[:-2] + shape
    out = EndForm.zeros(n, p2, q2, shape)
    for (I, J), coeff in f.comps.items():
        derivs = field_del(bg, coeff) if holo else field_dbar(bg, coeff)
        for a, d in enumerate(derivs):
            if holo:
                s, I2 = _sort_sign((a,) + I)
                key = (I2, J)
            else:
                # dzbar^a moved past dz^I
                s, J2 = _sort_sign((a,) + J)
                s *= (-1) ** f.p
                key = (I, J2)
            if s:
                out.comps[key] = out.comps[key] + s * d
    return out


def del_(bg, f):
    """Holomorphic exterior derivative; returns ``None`` when p = n."""
    return _exterior(bg, f, True)


def dbar(bg, f):
    """Anti-holomorphic exterior derivative; returns ``None`` when q = n."""
    return _exterior(bg, f, False)


# ----------------------------------------------------------------------------
# algebra


def wedge(a, b):
    """Matrix-product wedge; the zero form's absence is signalled by ``None``."""
    if a is None or b is None:
        return None
    if a.n != b.n:
        raise ConfigurationError("forms live on different dimensions")
    n = a.n
    p, q = a.p + b.p, a.q + b.q
    if p > n or q > n:
        return None
    acc = {}
    for (I, J), x in a.comps.items():
        for (K, L), y in b.comps.items():
            si, IK = _sort_sign(I + K)
            if not si:
                continue
            sj, JL = _sort_sign(J + L)
            if not sj:
                continue
            sign = si * sj * (-1) ** (len(J) * len(K))
            try:
                term = _mul(x, y)
            except ValueError as exc:
                raise ConfigurationError(f"rank/grid mismatch in wedge: {x.shape} vs {y.shape}") from exc
            key = (IK, JL)
            acc[key] = acc[key] + sign * term if key in acc else sign * term
    shape = np.broadcast_shapes(*(v.shape for v in acc.values())) if acc else None
    comps = {}
    for I in _indices(n, p):
        for J in _indices(n, q):
            comps[(I, J)] = acc[(I, J)] if (I, J) in acc else np.zeros(shape, complex)
    return EndForm(n, p, q, comps)


def wedge_all(*forms):
    out = forms[0]
    for f in forms[1:]:
        out = wedge(out, f)
    return out


def power(f, k):
    """``f ^ f ^ ... ^ f`` (k factors); k = 0 gives the identity (0,0)-form."""
    if k == 0:
        return EndForm.scalar(f.n, np.eye(f.rank, dtype=complex))
    out = f
    for _ in range(k - 1):
        out = wedge(out, f)
    return out


def trace(f):
    """Pointwise matrix trace; the result is a scalar form (r = 1)."""
    return f._map(lambda v: np.trace(v, axis1=-2, axis2=-1)[..., None, None])


def contract_top(bg, f, j=None):
    """``[f ^ omega^(n-k)/(n-k)!] / [omega^n / n!]`` for a (k, k)-form ``f``.

    Returns the matrix-valued function (shape ``batch + (r, r)``).
    """
    if f.p != f.q:
        raise ConfigurationError(f"contract_top needs a (k,k)-form, got ({f.p},{f.q})")
    k = f.p
    if j is None:
        j = bg.n - k
    if k + j != bg.n:
        raise ConfigurationError(f"k + j = {k + j} != n = {bg.n}")
    top = wedge(f, bg.omega_power(j)).top()
    return top / bg.volume_density


def integrate(bg, f):
    """Integral of a scalar top form over the torus (pairwise summation)."""
    top = f.top()
    if top.shape[-2:] != (1, 1):
        raise ConfigurationError("integrate needs a scalar (trace) form")
    vals = top[..., 0, 0]
    if vals.ndim == 0:
        mean = complex(vals)
    else:
        mean = np.sum(np.ascontiguousarray(vals).reshape(-1)) / vals.size
    return complex(mean * _top_to_real(bg.n))


def integrate_function(bg, fn):
    """``int fn * omega^n/n!`` for a scalar function sampled on the grid."""
    fn = np.asarray(fn)
    mean = np.sum(np.ascontiguousarray(fn).reshape(-1)) / fn.size if fn.ndim else fn
    return mean * bg.volume


def adjoint_matrix(a, h, hinv=None):
    """Pointwise H-adjoint ``h^{-1} a^dagger h`` (h Hermitian, relative to the model)."""
    if hinv is None:
        hinv = hm.inv(h)
    return _mul(_mul(hinv, hm.dagger(a)), h)


def adjoint_form(xi, h):
    """H-adjoint of a (0,1)-form: ``xi_b dzbar^b -> (xi_b)^{*H} dz^b``."""
    if (xi.p, xi.q) != (0, 1):
        raise ConfigurationError(f"adjoint_form needs a (0,1)-form, got ({xi.p},{xi.q})")
    if h is not None and h.shape[-1] > 1:
        ev = hm.eigvalsh(h)
        if np.any(ev[..., 0] <= hm.EPS_PD):
            raise DegenerateMetricError("metric is not positive definite")
    hinv = None if h is None else hm.inv(h)
    comps = {}
    for (_, J), v in xi.comps.items():
        comps[(J, ())] = hm.dagger(v) if h is None else adjoint_matrix(v, h, hinv)
    return EndForm(xi.n, 1, 0, comps)


def norm_sq(bg, f, h=None):
    """Pointwise squared norm ``|f|^2_{omega,H}`` of a form of bidegree <= (1,1).

    Uses the Frobenius norm ``tr(a a^{*H})`` on End(E) and the inverse Kaehler
    matrix on form indices.
    """
    hinv = None if h is None else hm.inv(h)

    def pair(a, b):
        bstar = hm.dagger(b) if h is None else adjoint_matrix(b, h, hinv)
        return np.trace(_mul(a, bstar), axis1=-2, axis2=-1)

    ginv = np.linalg.inv(bg.kaehler)
    p, q = f.p, f.q
    if p > 1 or q > 1:
        raise ConfigurationError("norm_sq supports bidegrees up to (1,1)")
    keys = list(f.comps)
    total = 0.0
    for K1 in keys:
        for K2 in keys:
            w = 1.0
            if p:
                w = w * ginv[K2[0][0], K1[0][0]]
            if q:
                w = w * ginv[K1[1][0], K2[1][0]]
            if w == 0:
                continue
            total = total + w * pair(f.comps[K1], f.comps[K2])
    return np.real(total)


def band_limit_mask(bg, band):
    """Boolean mask of Fourier modes with |k| <= band in every real direction."""
    k = np.abs(sfft.fftfreq(bg.N, 1.0 / bg.N))
    masks = np.meshgrid(*([k <= band] * (2 * bg.n)), indexing="ij")
    out = masks[0]
    for m in masks[1:]:
        out = out & m
    return out


def random_field(bg, rng, band, hermitian=True, rank=None, zero_mean=False):
    """Band-limited random matrix field normalised to unit sup Frobenius norm."""
    r = bg.r if rank is None else rank
    shape = bg.grid_shape + (r, r)
    spec = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = band_limit_mask(bg, band)
    if zero_mean:
        mask = mask.copy()
        mask[(0,) * (2 * bg.n)] = False
    spec *= mask[(...,) + (None, None)]
    arr = sfft.ifftn(spec, axes=tuple(range(2 * bg.n)), workers=_workers())
    if hermitian:
        arr = hm.hermitian_part(arr)
    scale = np.sqrt(np.max(np.sum(np.abs(arr) ** 2, axis=(-2, -1))))
    return arr / scale
