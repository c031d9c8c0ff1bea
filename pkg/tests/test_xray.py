import math

import numpy as np
import pytest

from src.errors import GeometryError, SamplingError
from src.fields import ComplexField, make_grid
from src.profiles import bump, profile_eval
from src.xray import (
    Sinogram,
    composite_gauss_legendre,
    fbp_invert_2d,
    forward_sinogram,
    load_sinogram,
    pray_transform,
    reconstruction_error,
    recover_alpha_1d,
    save_sinogram,
    uniform_thetas,
    xray_transform,
)

ALPHA_1D = bump([0.0], 1.0, amplitude=0.5)
ALPHA_2D = bump([0.0, 0.0], 1.0, amplitude=0.5)


def _line_integral_1d(p, n=1 << 16):
    """Trapezoid over a wide interval; spectrally accurate for a compact smooth bump."""
    x = np.linspace(-2.0, 2.0, n + 1)
    return float(np.sum(profile_eval(p, x)) * (x[1] - x[0]))


def test__composite_gauss_legendre__integrates_polynomials():
    s, w = composite_gauss_legendre(4, 8)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.dot(w, s ** 9) == pytest.approx(0.1, abs=1e-15)
    assert np.all((s > 0.0) & (s < 1.0))


def test__xray__direction_must_be_unit():
    with pytest.raises(GeometryError):
        xray_transform(ALPHA_2D, [0.0, 0.0], [1.0, 1.0])
    with pytest.raises(GeometryError):
        xray_transform(ALPHA_1D, 0.0, [1.0 + 1e-10])


def test__xray__zero_when_ray_leaves_support():
    assert xray_transform(ALPHA_1D, 2.0, [1.0], support_radius=1.0) == 0.0
    assert xray_transform(ALPHA_2D, [1.5, 0.0], [1.0, 0.0], support_radius=1.0) == 0.0
    assert xray_transform(ALPHA_2D, [0.0, 1.2], [1.0, 0.0], support_radius=1.0) == 0.0


def test__xray__full_line_in_1d_is_half_the_integral():
    total = _line_integral_1d(ALPHA_1D)
    got = xray_transform(ALPHA_1D, -2.0, [1.0], support_radius=1.0)
    assert got == pytest.approx(0.5 * total, abs=1e-12)


def test__xray__opposite_directions_add_up():
    total = _line_integral_1d(ALPHA_1D)
    x0 = np.linspace(-1.5, 1.5, 31)[:, None]
    forward = xray_transform(ALPHA_1D, x0, [1.0], support_radius=1.0)
    backward = xray_transform(ALPHA_1D, x0, [-1.0], support_radius=1.0)
    assert np.max(np.abs(forward + backward - 0.5 * total)) < 1e-12
    assert np.max(np.abs(pray_transform(ALPHA_1D, x0, [1.0], 1.0) - total)) < 1e-12


def test__xray__nonnegative_and_decreasing_along_the_ray():
    x0 = np.linspace(-2.0, 2.0, 81)[:, None]
    values = xray_transform(ALPHA_1D, x0, [1.0], support_radius=1.0)
    assert np.all(values >= 0.0)
    assert np.all(np.diff(values) <= 1e-12)


def test__pray__rotation_invariant_for_centred_bump():
    offsets = np.array([0.0, 0.3, 0.8])
    sino = forward_sinogram(ALPHA_2D, uniform_thetas(12), offsets, support_radius=1.0)
    assert np.max(np.abs(sino.values - sino.values[0])) < 1e-12


def test__recover_alpha_1d__exact_for_quartics():
    x = np.linspace(-1.0, 1.0, 21)
    f = 0.3 * x ** 4 - x ** 3 + 2.0 * x + 1.0
    expected = -2.0 * (1.2 * x ** 3 - 3.0 * x ** 2 + 2.0)
    assert np.max(np.abs(recover_alpha_1d(f, x[1] - x[0]) - expected)) < 1e-11


def test__recover_alpha_1d__affine_gives_constant():
    x = np.linspace(0.0, 1.0, 11)
    alpha = recover_alpha_1d(3.0 * x + 1.0, 0.1)
    assert np.max(np.abs(alpha + 6.0)) < 1e-12


def test__recover_alpha_1d__needs_five_samples():
    with pytest.raises(SamplingError):
        recover_alpha_1d([0.0, 1.0, 2.0, 3.0], 0.1)


def test__recover_alpha_1d__synthetic_bump():
    dx = 0.01
    x0 = np.arange(-200, 201) * dx
    samples = xray_transform(ALPHA_1D, x0[:, None], [1.0], support_radius=1.0)
    alpha = recover_alpha_1d(samples, dx)
    assert np.max(np.abs(alpha - profile_eval(ALPHA_1D, x0))) < 1e-5


def test__fbp__reconstructs_bump_within_five_percent():
    offsets = np.linspace(-2.0, 2.0, 401)
    sino = forward_sinogram(ALPHA_2D, uniform_thetas(90), offsets, support_radius=1.0)
    grid = make_grid(2, [(-2.0, 2.0)] * 2, [128, 128])
    recon = fbp_invert_2d(sino, grid)
    assert np.all(np.imag(recon.values) == 0.0)
    errors = reconstruction_error(recon, ALPHA_2D, 1.5)
    assert errors["relative_l2"] < 0.05


def test__fbp__rejects_non_uniform_angles():
    offsets = np.linspace(-1.0, 1.0, 21)
    thetas = np.array([0.0, 0.1, 0.5, 1.0, 2.0, 2.5, 2.8, 3.0])
    sino = Sinogram(thetas, offsets, np.zeros((len(thetas), len(offsets))))
    with pytest.raises(SamplingError):
        fbp_invert_2d(sino, make_grid(2, [(-1.0, 1.0)] * 2, [16, 16]))


def test__fbp__rejects_partial_angular_cover():
    offsets = np.linspace(-1.0, 1.0, 21)
    thetas = 0.5 * uniform_thetas(16)
    sino = Sinogram(thetas, offsets, np.zeros((16, len(offsets))))
    with pytest.raises(SamplingError):
        fbp_invert_2d(sino, make_grid(2, [(-1.0, 1.0)] * 2, [16, 16]))


def test__fbp__linear_in_the_sinogram():
    offsets = np.linspace(-2.0, 2.0, 65)
    thetas = uniform_thetas(16)
    a = forward_sinogram(ALPHA_2D, thetas, offsets, support_radius=1.0)
    b = forward_sinogram(bump([0.4, 0.2], 0.5, 1.0), thetas, offsets, support_radius=1.0)
    grid = make_grid(2, [(-2.0, 2.0)] * 2, [32, 32])
    summed = fbp_invert_2d(a + b, grid).values
    separate = fbp_invert_2d(a, grid).values + fbp_invert_2d(b, grid).values
    assert np.max(np.abs(summed - separate)) < 1e-10 * max(1.0, np.max(np.abs(summed)))


def test__sinogram_csv__keeps_values(tmp_path):
    offsets = np.linspace(-1.0, 1.0, 9)
    sino = forward_sinogram(ALPHA_2D, uniform_thetas(4), offsets, support_radius=1.0)
    path = tmp_path / "sinogram.csv"
    save_sinogram(sino, path)
    back = load_sinogram(path)
    assert np.array_equal(back.thetas, sino.thetas)
    assert np.array_equal(back.offsets, sino.offsets)
    assert np.array_equal(back.values, sino.values)


def test__reconstruction_error__zero_for_exact_field():
    grid = make_grid(2, [(-2.0, 2.0)] * 2, [32, 32])
    exact = profile_eval(ALPHA_2D, grid.mesh())
    errors = reconstruction_error(ComplexField(grid, exact), ALPHA_2D, 1.5)
    assert errors == {"relative_l2": 0.0, "sup": 0.0}


def test__uniform_thetas__cover_half_turn():
    thetas = uniform_thetas(90)
    assert thetas[0] == 0.0
    assert thetas[-1] == pytest.approx(math.pi * 89 / 90)


def test__xray__panel_doubling_changes_nothing():
    x0 = np.array([[0.3, -0.2], [-0.9, 0.4], [0.0, 0.0]])
    xi = [math.cos(0.4), math.sin(0.4)]
    base = xray_transform(ALPHA_2D, x0, xi, support_radius=1.0)
    doubled = xray_transform(ALPHA_2D, x0, xi, support_radius=1.0, panels=128)
    assert np.max(np.abs(base - doubled)) < 1e-12


@pytest.mark.parametrize("x0", [[0.3, -0.2], [-0.9, 0.4], [0.0, 0.5]])
def test__xray__matches_fine_midpoint_sum(x0):
    xi = np.array([math.cos(1.1), math.sin(1.1)])
    length = np.linalg.norm(x0) + 1.0
    n = 10 ** 6
    s = (np.arange(n) + 0.5) * (length / n)
    values = profile_eval(ALPHA_2D, np.asarray(x0)[None, :] + s[:, None] * xi)
    expected = 0.5 * float(np.sum(values)) * (length / n)
    assert xray_transform(ALPHA_2D, x0, xi, support_radius=1.0) == pytest.approx(expected, abs=1e-9)


def test__fbp__commutes_with_translation():
    offsets = np.linspace(-2.0, 2.0, 401)
    thetas = uniform_thetas(90)
    grid = make_grid(2, [(-2.0, 2.0)] * 2, [64, 64])
    centred = fbp_invert_2d(forward_sinogram(ALPHA_2D, thetas, offsets, support_radius=1.0), grid)
    # four cells along x
    moved = bump([0.25, 0.0], 1.0, amplitude=0.5)
    shifted = fbp_invert_2d(forward_sinogram(moved, thetas, offsets, support_radius=1.25), grid)
    gap = np.abs(shifted.values[4:, :] - centred.values[:-4, :])
    assert np.max(gap) < 2e-2
