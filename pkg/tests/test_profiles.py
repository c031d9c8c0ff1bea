import math

import numpy as np
import pytest

from src.errors import ProfileError
from src.profiles import (
    bump,
    plateau,
    profile_derivatives,
    profile_eval,
    profile_gradient,
    profile_laplacian,
)


def _bump_exact(x):
    """Value, first and second derivative of exp(1 - 1/(1 - x^2)) on (-1, 1)."""
    q = 1.0 - x * x
    f = math.exp(1.0 - 1.0 / q)
    g1 = -2.0 * x / q ** 2
    g2 = -2.0 / q ** 2 - 8.0 * x * x / q ** 3
    return f, f * g1, f * (g1 * g1 + g2)


def test__bump__peak_and_exact_support():
    p = bump([0.0], 1.0, amplitude=0.5)
    assert profile_eval(p, 0.0) == 0.5
    x = np.linspace(1.0, 3.0, 101)
    assert np.all(profile_eval(p, x) == 0.0)
    assert np.all(profile_eval(p, -x) == 0.0)


def test__plateau__constant_inside_and_zero_outside():
    p = plateau([0.0, 0.0], 2.5, 4.0, amplitude=1.0)
    theta = np.linspace(0.0, 2.0 * math.pi, 37)
    for r in (0.0, 1.0, 2.5):
        pts = r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        assert np.all(profile_eval(p, pts) == 1.0)
    for r in (4.0, 4.5, 10.0):
        pts = r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        assert np.all(profile_eval(p, pts) == 0.0)


def test__plateau__decreases_across_transition():
    p = plateau([0.0], 2.5, 4.0)
    values = profile_eval(p, np.linspace(2.5, 4.0, 200))
    assert np.all(np.diff(values) <= 0.0)
    assert np.all((values >= 0.0) & (values <= 1.0))


def test__bump__radially_symmetric_in_2d():
    p = bump([0.3, -0.2], 0.7)
    angles = np.linspace(0.0, 2.0 * math.pi, 25)
    for r in (0.1, 0.35, 0.69):
        pts = np.array([0.3, -0.2]) + r * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        values = profile_eval(p, pts)
        assert np.max(np.abs(values - values[0])) < 1e-14


@pytest.mark.parametrize("x", [0.0, 0.25, 0.5, -0.7])
def test__bump__derivatives_match_closed_form(x):
    p = bump([0.0], 1.0)
    _, d1, d2 = _bump_exact(x)
    assert profile_gradient(p, x)[..., 0] == pytest.approx(d1, rel=1e-7, abs=1e-9)
    assert profile_laplacian(p, x) == pytest.approx(d2, rel=1e-6, abs=1e-7)


def test__profile_derivatives__agree_bit_for_bit():
    p = plateau([0.0, 0.0], 2.5, 4.0)
    pts = np.random.default_rng(3).uniform(-4.5, 4.5, size=(200, 2))
    values, grads, laps = profile_derivatives(p, pts)
    assert np.array_equal(values, profile_eval(p, pts))
    assert np.array_equal(grads, profile_gradient(p, pts))
    assert np.array_equal(laps, profile_laplacian(p, pts))


def test__derivatives__vanish_outside_support():
    p = bump([0.0], 1.0)
    x = np.linspace(1.01, 2.0, 50)
    assert np.all(profile_gradient(p, x) == 0.0)
    assert np.all(profile_laplacian(p, x) == 0.0)


@pytest.mark.parametrize("build", [
    lambda: bump([0.0], 0.0),
    lambda: bump([0.0], -1.0),
    lambda: plateau([0.0], 3.0, 2.0),
    lambda: plateau([0.0], 0.0, 2.0),
])
def test__profile__rejects_bad_radii(build):
    with pytest.raises(ProfileError):
        build()


def test__profile__rejects_wrong_point_dimension():
    p = bump([0.0, 0.0], 1.0)
    with pytest.raises(ProfileError):
        profile_eval(p, np.zeros((4, 3)))


def test__zero_amplitude_is_identically_zero():
    p = bump([0.0], 1.0, amplitude=0.0)
    assert np.all(profile_eval(p, np.linspace(-2.0, 2.0, 41)) == 0.0)


@pytest.mark.parametrize("edge", [2.5, 4.0])
def test__plateau__flat_to_all_orders_at_the_joins(edge):
    p = plateau([0.0], 2.5, 4.0)
    steps = 0.1 / 2.0 ** np.arange(5)
    f0 = float(profile_eval(p, edge))
    second = [abs(float(profile_eval(p, edge + eta) - 2.0 * f0 + profile_eval(p, edge - eta))) / eta ** 2
              for eta in steps]
    assert np.all(np.diff(second) <= 0.0)
    assert second[-1] < 1e-6


def test__bump__richardson_second_derivative():
    p = bump([0.0], 1.0)
    x = 0.5

    def centred(eta):
        return float(profile_eval(p, x + eta) - 2.0 * profile_eval(p, x) + profile_eval(p, x - eta)) / eta ** 2

    eta = 1e-3
    extrapolated = (4.0 * centred(0.5 * eta) - centred(eta)) / 3.0
    assert extrapolated == pytest.approx(_bump_exact(x)[2], abs=1e-7)
    assert profile_laplacian(p, x) == pytest.approx(extrapolated, abs=1e-6)
