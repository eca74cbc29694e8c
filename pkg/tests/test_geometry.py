import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hessbundle.errors import ConfigurationError
from hessbundle.geometry import (
    Background,
    EndForm,
    contract_top,
    dbar,
    del_,
    field_dbar,
    field_del,
    integrate,
    integrate_function,
    norm_sq,
    power,
    random_field,
    trace,
    wedge,
)


def _scalar(bg, arr):
    return EndForm.scalar(bg.n, np.asarray(arr, complex)[..., None, None])


def _one_form(bg, rng, p, q, band=1):
    from hessbundle.geometry import _indices

    comps = {(I, J): random_field(bg, rng, band, hermitian=False, rank=1) for I in _indices(bg.n, p) for J in _indices(bg.n, q)}
    return EndForm(bg.n, p, q, comps)


@pytest.mark.parametrize("n", [1, 2])
def test_volume(n):
    assert Background(n, 8).volume == pytest.approx(2.0**n, rel=1e-15)


def test_volume_scales_with_kaehler_determinant():
    g = np.array([[2.0, 0.5j], [-0.5j, 1.0]])
    bg = Background(2, 8, 1, 0, g)
    assert bg.volume == pytest.approx(4.0 * np.linalg.det(g).real, rel=1e-14)


def test_plane_wave_derivatives():
    bg = Background(1, 8)
    x, y = bg.coords
    f = np.exp(2j * np.pi * (x + 2 * y))[..., None, None]
    (dz,) = field_del(bg, f)
    (dzb,) = field_dbar(bg, f)
    # d/dz = (d/dx - i d/dy)/2, d/dzbar = (d/dx + i d/dy)/2
    np.testing.assert_allclose(dz, 0.5 * (2j * np.pi - 1j * 4j * np.pi) * f, atol=1e-12)
    np.testing.assert_allclose(dzb, 0.5 * (2j * np.pi + 1j * 4j * np.pi) * f, atol=1e-12)


def test_laplacian_oracle():
    # i del dbar phi for phi = cos(2 pi x1) equals (1/4) Laplacian phi times i dz1 ^ dzbar1
    bg = Background(2, 8)
    x1 = bg.coords[0]
    phi = _scalar(bg, np.cos(2 * np.pi * x1))
    ddb = del_(bg, dbar(bg, phi))
    lap = -4 * np.pi**2 * np.cos(2 * np.pi * x1)
    np.testing.assert_allclose(ddb[((0,), (0,))][..., 0, 0], 0.25 * lap, atol=1e-11)
    assert np.max(np.abs(ddb[((1,), (1,))])) < 1e-12


def test_nyquist_mode_has_no_derivative():
    bg = Background(1, 8)
    x = bg.coords[0]
    f = np.cos(8 * np.pi * x)[..., None, None] + 0j
    assert np.max(np.abs(field_del(bg, f)[0])) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3])
def test_nilpotent_and_anticommuting(n, rng):
    bg = Background(n, 8)
    f = _scalar(bg, random_field(bg, rng, 1, hermitian=False, rank=1)[..., 0, 0])
    if n >= 2:
        assert dbar(bg, dbar(bg, f)).max_abs() < 1e-11
        assert del_(bg, del_(bg, f)).max_abs() < 1e-11
    anti = dbar(bg, del_(bg, f)) + del_(bg, dbar(bg, f))
    assert anti.max_abs() < 1e-11


def test_top_degree_returns_none():
    bg = Background(1, 8)
    f = EndForm(1, 0, 1, {((), (0,)): np.zeros(bg.grid_shape + (1, 1), complex)})
    assert dbar(bg, f) is None
    assert wedge(f, f) is None


def test_wedge_graded_commutativity(rng):
    bg = Background(2, 8)
    a = _one_form(bg, rng, 1, 0)
    b = _one_form(bg, rng, 0, 1)
    c = _one_form(bg, rng, 1, 1)
    # odd ^ odd anticommutes, even forms commute (scalar coefficients)
    assert (wedge(a, b) + wedge(b, a)).max_abs() < 1e-14
    assert (wedge(a, c) - wedge(c, a)).max_abs() < 1e-14
    assert (wedge(wedge(a, b), c) - wedge(a, wedge(b, c))).max_abs() < 1e-14


def test_leibniz(rng):
    bg = Background(2, 8)
    a = _one_form(bg, rng, 1, 0)
    b = _one_form(bg, rng, 0, 0)
    lhs = dbar(bg, wedge(a, b))
    rhs = wedge(dbar(bg, a), b) - wedge(a, dbar(bg, b))
    assert (lhs - rhs).max_abs() < 1e-10


def test_permuted_index_lookup():
    comps = {((0, 1), ()): np.array([[2.0 + 0j]])}
    f = EndForm(2, 2, 0, comps)
    assert f[((1, 0), ())][0, 0] == -2.0
    assert np.all(f[((1, 1), ())] == 0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_omega_power_contractions(n):
    bg = Background(n, 2)
    for k in range(n + 1):
        c = contract_top(bg, bg.omega_power(k))
        assert c[0, 0] == pytest.approx(math.comb(n, k), abs=1e-14)


def test_omega_power_is_normalised_power():
    bg = Background(3, 2)
    np.testing.assert_allclose((power(bg.omega(), 3) * (1 / 6)).top(), bg.omega_power(3).top(), atol=1e-15)


def test_stokes(rng):
    bg = Background(2, 8)
    g = _one_form(bg, rng, 2, 1)
    assert abs(integrate(bg, dbar(bg, g))) < 1e-12


def test_integrate_constant():
    bg = Background(2, 8)
    assert integrate_function(bg, np.ones(bg.grid_shape)) == pytest.approx(4.0)
    assert integrate(bg, bg.omega_power(2)) == pytest.approx(4.0)


def test_norm_sq_of_dzbar():
    bg = Background(1, 4, 2)
    xi = EndForm(1, 0, 1, {((), (0,)): np.broadcast_to(np.eye(2, dtype=complex), bg.field_shape)})
    np.testing.assert_allclose(norm_sq(bg, xi), 2.0)


def test_trace_and_power_zero():
    f = EndForm.scalar(2, np.eye(3, dtype=complex))
    assert trace(f).comps[((), ())][0, 0] == 3
    assert power(f, 0).rank == 3


def test_form_arithmetic_errors():
    a = EndForm.zeros(2, 1, 0, (1, 1))
    b = EndForm.zeros(2, 0, 1, (1, 1))
    with pytest.raises(ConfigurationError):
        a + b
    with pytest.raises(ConfigurationError):
        EndForm(2, 1, 0, {})
    with pytest.raises(ConfigurationError):
        EndForm(2, 3, 0, {})


@pytest.mark.parametrize("kwargs", [dict(n=4, N=8), dict(n=2, N=12), dict(n=2, N=8, r=0), dict(n=2, N=8, r=2, m=(1, 2, 3))])
def test_background_validation(kwargs):
    with pytest.raises(ConfigurationError):
        Background(**kwargs)


def test_kaehler_must_be_positive():
    with pytest.raises(ConfigurationError):
        Background(2, 8, 1, 0, np.diag([1.0, -1.0]))


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3), st.integers(0, 1000))
def test_random_field_band_limited(band, seed):
    bg = Background(2, 8, 2)
    f = random_field(bg, np.random.default_rng(seed), band)
    spec = np.fft.fftn(f, axes=range(4))
    k = np.abs(np.fft.fftfreq(8, 1 / 8))
    outside = np.zeros((8,) * 4, bool)
    for ax in range(4):
        shape = [1] * 4
        shape[ax] = 8
        outside |= (k > band).reshape(shape)
    assert np.max(np.abs(spec[outside])) < 1e-10
    np.testing.assert_allclose(f, np.swapaxes(f.conj(), -1, -2), atol=1e-15)


def test_threads_do_not_change_results(monkeypatch, rng):
    bg = Background(2, 8, 2)
    f = random_field(bg, rng, 2, hermitian=False)
    one = field_del(bg, f)[1]
    monkeypatch.setenv("HBL_THREADS", "2")
    two = field_del(bg, f)[1]
    np.testing.assert_allclose(one, two, atol=1e-15)
