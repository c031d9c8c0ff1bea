import math
from dataclasses import replace

import numpy as np
import pytest

from src.ansatz import assemble_v
from src.errors import MeasurementError, SamplingError, SignalLostError
from src.experiment_config import apply_overrides, replace_config, validate_config
from src.fields import ComplexField
from src.recovery import (
    MeasurementLine,
    anchor_point,
    line_normal,
    measure_ansatz,
    measure_packet,
    measurement_paths,
    path_spacing,
    reconstruct_alpha,
    recover_direction,
    recover_sinogram,
    recover_xalpha,
    unwrap_phase,
    wrap_phase,
)
from src.solver import derive_grid
from src.xray import uniform_thetas, xray_transform


def _line(phase, spacing=0.1):
    points = (np.arange(len(phase)) * spacing)[:, None]
    return MeasurementLine(xi=np.array([1.0]), points=points, values=np.exp(-1j * np.asarray(phase)))


@pytest.fixture
def config_2d(canonical_raw):
    raw = apply_overrides(canonical_raw, dim=2)
    raw["recovery.mode"] = "synthetic"
    return validate_config(raw)


def test__wrap_phase__principal_value():
    phase = np.array([0.0, math.pi, 3.5, -3.5, 10.0])
    wrapped = wrap_phase(phase)
    assert np.all((wrapped > -math.pi - 1e-15) & (wrapped <= math.pi + 1e-15))
    assert np.allclose(np.exp(1j * wrapped), np.exp(1j * phase), atol=1e-14)


def test__unwrap__zero_phase_gives_zero_branches():
    result = unwrap_phase(_line(np.zeros(20)), 0)
    assert np.all(result.g == 0)
    assert np.all(result.xalpha == 0.0)


def test__unwrap__wrapped_ramp():
    m = np.arange(60)
    result = unwrap_phase(_line(0.3 * m), 0)
    assert np.max(np.abs(result.xalpha - 0.3 * m)) < 1e-12
    assert result.g.max() > 0


def test__unwrap__anchor_in_the_middle():
    m = np.arange(-30, 31)
    result = unwrap_phase(_line(0.2 * m), 30)
    assert np.max(np.abs(result.xalpha - 0.2 * m)) < 1e-12
    assert result.anchor_index == 30


def test__unwrap__coarse_sampling_aborts():
    with pytest.raises(SamplingError, match="sampling too coarse"):
        unwrap_phase(_line(3.0 * np.arange(10)), 0)


def test__unwrap__scales_by_plateau_value():
    result = unwrap_phase(_line(0.4 * np.arange(10)), 0, K=2.0)
    assert np.max(np.abs(result.xalpha - 0.1 * np.arange(10))) < 1e-12


def test__anchor__ray_misses_support(canonical):
    anchor = anchor_point(canonical, canonical.xi_array)
    assert xray_transform(canonical.alpha, anchor, canonical.xi_array, support_radius=canonical.T0) == 0.0


def test__path_spacing__respects_phase_bound(canonical):
    assert path_spacing(canonical) == canonical.measure.spacing
    strong = replace_config(canonical, alpha=canonical.alpha.with_amplitude(50.0))
    assert path_spacing(strong) == pytest.approx(math.pi / (4.0 * 50.0 * 3.0))


def test__measurement_paths__uniform_line_through_anchor(canonical):
    (points, anchor), = measurement_paths(canonical, canonical.xi_array)
    x = points[:, 0]
    assert x[anchor] == pytest.approx(1.5 * canonical.T0)
    assert x[0] <= canonical.measure.x0_min + 1e-12
    assert x[-1] >= canonical.measure.x0_max - 1e-9
    assert np.allclose(np.diff(x), canonical.measure.spacing, rtol=1e-12)


def test__measurement_paths__2d_feet_shared_by_both_directions(config_2d):
    xi = np.array([math.cos(0.7), math.sin(0.7)])
    plus = measurement_paths(config_2d, xi)
    minus = measurement_paths(config_2d, -xi)
    feet_plus = np.array([p[-1] for p, _ in plus])
    feet_minus = np.array([p[-1] for p, _ in minus])
    assert np.allclose(feet_plus, feet_minus, atol=1e-14)
    assert np.allclose(line_normal(xi), line_normal(-xi))
    for points, anchor in plus:
        assert xray_transform(config_2d.alpha, points[anchor], xi, support_radius=config_2d.T0) == 0.0


def test__measure_ansatz__unit_modulus_on_plateau(canonical):
    x0 = np.linspace(-2.0, 2.0, 81)[:, None]
    line = measure_ansatz(canonical, x0)
    assert np.max(np.abs(np.abs(line.values) - 1.0)) < 1e-10
    truth = xray_transform(canonical.alpha, x0, canonical.xi_array, support_radius=canonical.T0)
    assert np.max(np.abs(np.angle(line.values * np.exp(1j * truth)))) < 1e-10


def test__measure_packet__ansatz_field_on_grid(canonical):
    grid = derive_grid(canonical)
    v = assemble_v(canonical, canonical.window, grid)
    x0 = np.linspace(-2.0, 2.0, 41)[:, None]
    line = measure_packet(v, canonical, x0)
    assert np.max(np.abs(np.abs(line.values) - 1.0)) < 1e-6
    truth = xray_transform(canonical.alpha, x0, canonical.xi_array, support_radius=canonical.T0)
    assert np.max(np.abs(np.angle(line.values * np.exp(1j * truth)))) < 1e-6


def test__measure_packet__free_field_has_no_phase(canonical):
    config = replace_config(canonical, alpha=canonical.alpha.with_amplitude(0.0))
    x0 = np.linspace(-2.0, 2.0, 41)[:, None]
    line = measure_ansatz(config, x0)
    assert np.max(np.abs(line.theta)) < 1e-12


def test__measure_packet__outside_box(canonical):
    grid = derive_grid(canonical)
    with pytest.raises(MeasurementError, match="outside the box"):
        measure_packet(ComplexField.zeros(grid), canonical, np.array([[100.0]]))


def test__measure_packet__lost_signal(canonical):
    grid = derive_grid(canonical)
    with pytest.raises(SignalLostError):
        measure_packet(ComplexField.zeros(grid), canonical, np.array([[0.0]]))


def test__recover__ansatz_mode_is_exact(canonical):
    result = recover_xalpha(canonical, mode="ansatz")
    assert result.sup_error < 1e-8
    assert result.xalpha[result.anchor_index] == pytest.approx(0.0, abs=1e-12)
    assert np.all(result.xalpha >= -1e-10)


def test__recover__denser_sampling_changes_nothing(canonical):
    coarse = recover_direction(canonical, mode="ansatz", spacing=0.05)
    fine = recover_direction(canonical, mode="ansatz", spacing=0.025)
    shared = np.isin(np.round(fine.points[:, 0], 9), np.round(coarse.points[:, 0], 9))
    assert shared.sum() == len(coarse.points)
    assert np.max(np.abs(fine.xalpha[shared] - coarse.xalpha)) < 1e-6


def test__recover__global_phase_shifts_by_constant(canonical):
    grid = derive_grid(canonical)
    v = assemble_v(canonical, canonical.window, grid)
    plain = recover_xalpha(canonical, mode="solver", u_final=v)
    rotated = recover_xalpha(canonical, mode="solver", u_final=v.scaled(np.exp(0.3j)))
    shift = rotated.xalpha - plain.xalpha
    assert np.max(np.abs(shift - shift[0])) < 1e-12
    assert abs(shift[0]) <= 0.3 + 1e-12


def test__recover__directions_sum_to_half_the_integral(canonical):
    forward = recover_direction(canonical, canonical.xi_array, mode="ansatz")
    backward = recover_direction(canonical, -canonical.xi_array, mode="ansatz")
    x = np.linspace(-1.0, 1.0, 9)[:, None]
    total = 2.0 * xray_transform(canonical.alpha, np.array([[-2.0]]), canonical.xi_array, canonical.T0)[0]
    f = np.interp(x[:, 0], forward.points[:, 0], forward.xalpha)
    order = np.argsort(backward.points[:, 0])
    b = np.interp(x[:, 0], backward.points[order, 0], backward.xalpha[order])
    assert np.max(np.abs(f + b - 0.5 * total)) < 1e-3


def test__recover__solver_mode_on_canonical(canonical):
    result = recover_xalpha(canonical, mode="solver")
    assert result.sup_error < 0.2
    assert np.all(result.g == 0)


def test__reconstruct_alpha__1d_synthetic(canonical):
    result = recover_xalpha(canonical, mode="synthetic")
    recon = reconstruct_alpha([result], 1, canonical)
    assert recon.sup < 1e-5
    frame = recon.to_frame()
    assert list(frame.columns) == ["x", "alpha_recovered", "alpha_true", "abs_err"]


def test__reconstruct_alpha__zero_nonlinearity(canonical):
    config = replace_config(canonical, alpha=canonical.alpha.with_amplitude(0.0))
    result = recover_xalpha(config, mode="synthetic")
    recon = reconstruct_alpha([result], 1, config)
    assert recon.sup == 0.0


def test__reconstruct_alpha__2d_needs_angles(config_2d):
    config = replace_config(config_2d, measure=replace(config_2d.measure, angles=4))
    results = recover_sinogram(config, mode="synthetic")
    with pytest.raises(SamplingError, match="insufficient angular coverage"):
        reconstruct_alpha(results, 2, config)


def test__reconstruct_alpha__2d_angles_stay_uniform(config_2d):
    measure = replace(config_2d.measure, angles=32, offsets=101)
    config = replace_config(config_2d, measure=measure)
    recon = reconstruct_alpha(recover_sinogram(config, mode="synthetic"), 2, config)
    assert np.allclose(recon.sinogram.thetas, uniform_thetas(32), rtol=0.0, atol=1e-14)
    assert recon.sinogram.values.shape == (32, 101)
    assert np.isfinite(recon.sup)


def test__recover__zero_nonlinearity_ansatz_mode(canonical):
    config = replace_config(canonical, alpha=canonical.alpha.with_amplitude(0.0))
    result = recover_xalpha(config, mode="ansatz")
    assert np.max(np.abs(result.xalpha)) < 1e-10
    assert np.all(result.g == 0)


def test__recover__zero_nonlinearity_solver_mode(coarse_free):
    result = recover_xalpha(coarse_free, mode="solver")
    assert np.all(result.g == 0)
    assert result.sup_error < 0.2


@pytest.mark.slow
def test__reconstruct_alpha__2d_synthetic_within_five_percent(config_2d):
    results = recover_sinogram(config_2d, mode="synthetic")
    recon = reconstruct_alpha(results, 2, config_2d)
    assert recon.relative_l2 < 0.05
