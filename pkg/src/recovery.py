"""Measure the packet at (Th, 4 xi T + x0), unwrap the phase, recover X alpha and alpha."""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .ansatz import a0_values
from .config import LOST_SIGNAL_THRESHOLD, MIN_FBP_ANGLES, UNWRAP_AMBIGUITY_FRACTION
from .errors import GeometryError, MeasurementError, SamplingError, SignalLostError
from .experiment_config import ExperimentConfig, replace_config
from .fields import ComplexField, fourier_interpolate, make_grid
from .profiles import profile_eval
from .solver import evolve, wave_carrier
from .xray import Sinogram, fbp_invert_2d, reconstruction_error, recover_alpha_1d, uniform_thetas, xray_transform


@dataclass(frozen=True)
class MeasurementLine:
    """Normalised packet values w_m along one path and their principal phases."""

    xi: np.ndarray
    points: np.ndarray
    values: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        """theta_m = -Im Log w_m."""
        return -np.angle(self.values)


@dataclass
class RecoveryResult:
    """Recovered X alpha on sample points of one direction, with the branch integers."""

    xi: np.ndarray
    points: np.ndarray
    theta: np.ndarray
    g: np.ndarray
    xalpha: np.ndarray
    xalpha_true: Optional[np.ndarray] = None
    anchor_index: int = 0
    feet: Optional[np.ndarray] = None

    @property
    def abs_err(self) -> np.ndarray:
        if self.xalpha_true is None:
            return np.full(len(self.xalpha), np.nan)
        return np.abs(self.xalpha - self.xalpha_true)

    @property
    def sup_error(self) -> float:
        return float(np.nanmax(self.abs_err)) if len(self.xalpha) else 0.0

    def to_frame(self) -> pd.DataFrame:
        data = {f"x0_{i + 1}": self.points[:, i] for i in range(self.points.shape[1])}
        data.update({
            "theta": self.theta,
            "g": self.g.astype(int),
            "xalpha_recovered": self.xalpha,
            "xalpha_true": self.xalpha_true if self.xalpha_true is not None else np.nan,
            "abs_err": self.abs_err,
        })
        return pd.DataFrame(data)


def concat_results(parts: Sequence[RecoveryResult]) -> RecoveryResult:
    """Stack per-path results of one direction; feet become indices into the stack."""
    offsets = np.cumsum([0] + [len(p.points) for p in parts[:-1]])
    feet = np.array([off + (len(p.points) - 1 if p.feet is None else int(p.feet[0]))
                     for off, p in zip(offsets, parts)])
    truths = [p.xalpha_true for p in parts]
    return RecoveryResult(
        xi=parts[0].xi,
        points=np.concatenate([p.points for p in parts]),
        theta=np.concatenate([p.theta for p in parts]),
        g=np.concatenate([p.g for p in parts]),
        xalpha=np.concatenate([p.xalpha for p in parts]),
        xalpha_true=None if any(t is None for t in truths) else np.concatenate(truths),
        anchor_index=int(offsets[0] + parts[0].anchor_index),
        feet=feet,
    )


def path_spacing(config: ExperimentConfig) -> float:
    """Sample spacing small enough that true phase increments stay well below pi."""
    amplitude = config.K ** 2 * config.alpha.sup_value * 3.0 * config.T0
    bound = math.pi / (4.0 * amplitude) if amplitude > 0 else math.inf
    return min(config.measure.spacing, bound)


def anchor_point(config: ExperimentConfig, xi, offset: float = 0.0) -> np.ndarray:
    """
    A point with X alpha = 0 by geometry on the line through offset * line_normal(xi).

    Lines that can meet B(0, T0) anchor at (3T0/2) along xi from the foot, so
    the forward ray stays at distance >= 3T0/2 from the origin; other lines
    anchor at their foot.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if config.dim == 1:
        return 1.5 * config.T0 * xi
    foot = offset * line_normal(xi)
    if abs(offset) <= config.T0:
        return foot + 1.5 * config.T0 * xi
    return foot


def line_normal(xi) -> np.ndarray:
    """Unit normal (-sin, cos) of the line angle in [0, pi); shared by xi and -xi."""
    angle, _ = _angle_key(np.asarray(xi, dtype=float))
    return np.array([-math.sin(angle), math.cos(angle)])


def measurement_paths(config: ExperimentConfig, xi, spacing: Optional[float] = None) -> List[Tuple[np.ndarray, int]]:
    """
    Sample paths for one direction as (points (M, dim), anchor index).

    d=1: one uniform line through the anchor covering [x0_min, x0_max].
    d=2: per offset t, a segment from the anchor back to the foot t * line_normal(xi)
    (foot last); lines missing supp alpha are a single foot sample.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    s = path_spacing(config) if spacing is None else spacing
    m = config.measure

    if config.dim == 1:
        anchor = float(anchor_point(config, xi)[0])
        lo = min(m.x0_min, anchor)
        hi = max(m.x0_max, anchor)
        k = np.arange(math.ceil((lo - anchor) / s - 1e-9), math.floor((hi - anchor) / s + 1e-9) + 1)
        points = (anchor + k * s)[:, None]
        return [(points, int(np.flatnonzero(k == 0)[0]))]

    if config.dim != 2:
        raise GeometryError("measurement paths are defined for d = 1 and d = 2")
    paths = []
    for t in np.linspace(-m.offset_max, m.offset_max, m.offsets):
        anchor = anchor_point(config, xi, t)
        foot = t * line_normal(xi)
        span = float(np.linalg.norm(anchor - foot))
        n = math.ceil(span / s - 1e-9) if span > 0 else 0
        fractions = np.arange(n + 1) / n if n else np.zeros(1)
        points = anchor[None, :] + fractions[:, None] * (foot - anchor)[None, :]
        paths.append((points, 0))
    return paths


def measure_packet(u_final: ComplexField, config: ExperimentConfig, x0_samples,
                   xi=None) -> MeasurementLine:
    """
    w_m = K^{-1} exp(-i(3T + x0.xi)/h) h^{1/2} u(Th, 4 xi T + x0_m).

    Args:
        u_final: Field at t = Th
        config: Validated experiment
        x0_samples: Points (M, dim)
        xi: Direction; defaults to config.xi

    Raises:
        MeasurementError: If a measurement point lies outside the box
        SignalLostError: If some |w_m| < 0.1
    """
    xi = config.xi_array if xi is None else np.atleast_1d(np.asarray(xi, dtype=float))
    x0 = np.asarray(x0_samples, dtype=float).reshape(-1, config.dim)
    targets = x0 + 4.0 * config.T * xi
    inside = u_final.grid.contains(targets)
    if not np.all(inside):
        raise MeasurementError(f"measurement point {targets[~inside][0].tolist()} lies outside the box")
    return _normalise(config, xi, x0, fourier_interpolate(u_final, targets))


def _normalise(config: ExperimentConfig, xi: np.ndarray, x0: np.ndarray, u_values: np.ndarray) -> MeasurementLine:
    h = config.h
    if config.measure.normalize == "profile":
        scale = profile_eval(config.psi, x0)
    else:
        scale = np.full(len(x0), config.K)
    w = np.exp(-1j * (3.0 * config.T + x0 @ xi) / h) * math.sqrt(h) * u_values / scale
    lost = np.abs(w) < LOST_SIGNAL_THRESHOLD
    if np.any(lost):
        raise SignalLostError(f"signal lost: |w| = {np.abs(w[lost]).min():.3g} at x0 = {x0[lost][0].tolist()}")
    return MeasurementLine(xi=xi, points=x0, values=w)


def measure_ansatz(config: ExperimentConfig, x0_samples, xi=None) -> MeasurementLine:
    """Measurement of v(Th, .) evaluated pointwise instead of through a grid."""
    xi = config.xi_array if xi is None else np.atleast_1d(np.asarray(xi, dtype=float))
    cfg = replace_config(config, xi=tuple(float(v) for v in xi))
    x0 = np.asarray(x0_samples, dtype=float).reshape(-1, config.dim)
    targets = x0 + 4.0 * config.T * xi
    values = wave_carrier(targets, cfg, config.T) * a0_values(cfg, targets, config.T)
    return _normalise(cfg, xi, x0, values)


def unwrap_phase(line: MeasurementLine, anchor, K: float = 1.0) -> RecoveryResult:
    """
    Resolve the branch integers g by continuity from the anchor outward.

    Args:
        line: Ordered samples along one path
        anchor: Anchor point (X alpha = 0 there) or the index of the anchor sample
        K: Plateau value; X alpha = (theta + 2 pi g) / K^2

    Returns:
        RecoveryResult without ground truth

    Raises:
        SamplingError: "sampling too coarse" when an increment is ambiguous
    """
    theta = line.theta
    if isinstance(anchor, (int, np.integer)):
        a = int(anchor)
    else:
        gaps = np.linalg.norm(line.points - np.atleast_1d(np.asarray(anchor, dtype=float)), axis=-1)
        a = int(np.argmin(gaps))
        if gaps[a] > 1e-9 * max(1.0, float(np.max(np.abs(line.points)))):
            raise GeometryError("anchor is not one of the samples")

    two_pi = 2.0 * math.pi
    limit = UNWRAP_AMBIGUITY_FRACTION * math.pi
    g = np.zeros(len(theta), dtype=np.int64)
    g[a] = int(round(-theta[a] / two_pi))

    for order in (range(a + 1, len(theta)), range(a - 1, -1, -1)):
        prev = a
        for m in order:
            g[m] = g[prev] + int(round((theta[prev] - theta[m]) / two_pi))
            residual = (theta[m] + two_pi * g[m]) - (theta[prev] + two_pi * g[prev])
            if abs(residual) > limit:
                raise SamplingError(f"sampling too coarse: phase increment {residual:.3f} between samples {prev} and {m}")
            prev = m

    xalpha = (theta + two_pi * g) / K ** 2
    return RecoveryResult(xi=line.xi, points=line.points, theta=theta, g=g, xalpha=xalpha, anchor_index=a)


def wrap_phase(phase: np.ndarray) -> np.ndarray:
    """Principal value in [-pi, pi)."""
    return -np.angle(np.exp(-1j * np.asarray(phase)))


def _true_xalpha(config: ExperimentConfig, points: np.ndarray, xi: np.ndarray) -> np.ndarray:
    return np.atleast_1d(xray_transform(config.alpha, points, xi, support_radius=config.T0))


def _synthetic_direct(config: ExperimentConfig, xi: np.ndarray, points: np.ndarray) -> RecoveryResult:
    truth = _true_xalpha(config, points, xi)
    phase = config.K ** 2 * truth
    theta = wrap_phase(phase)
    g = np.rint((phase - theta) / (2.0 * math.pi)).astype(np.int64)
    return RecoveryResult(xi=xi, points=points, theta=theta, g=g, xalpha=truth.copy(),
                          xalpha_true=truth, feet=np.arange(len(points)))


def recover_direction(config: ExperimentConfig, xi=None, mode: Optional[str] = None,
                      u_final: Optional[ComplexField] = None, spacing: Optional[float] = None,
                      verbose: bool = False) -> RecoveryResult:
    """
    Recover X alpha(., xi) on every measurement path of one direction.

    Args:
        config: Validated experiment
        xi: Direction; defaults to config.xi
        mode: "solver", "ansatz" or "synthetic"; defaults to recovery.mode
        u_final: Precomputed field at t = Th (solver mode), reused when given
        spacing: Override of the path spacing

    Returns:
        RecoveryResult stacked over the paths
    """
    xi = config.xi_array if xi is None else np.atleast_1d(np.asarray(xi, dtype=float))
    mode = mode or config.recovery_mode
    cfg = replace_config(config, xi=tuple(float(v) for v in xi))

    if mode == "synthetic" and config.dim == 2:
        m = config.measure
        offsets = np.linspace(-m.offset_max, m.offset_max, m.offsets)
        feet = offsets[:, None] * line_normal(xi)[None, :]
        return _synthetic_direct(cfg, xi, feet)

    if mode == "solver" and u_final is None:
        u_final = evolve(cfg, verbose=verbose).final

    parts = []
    for points, anchor in measurement_paths(cfg, xi, spacing):
        if mode == "synthetic":
            phase = config.K ** 2 * _true_xalpha(cfg, points, xi)
            line = MeasurementLine(xi=xi, points=points, values=np.exp(-1j * phase))
        elif u_final is not None:
            line = measure_packet(u_final, cfg, points, xi)
        else:
            line = measure_ansatz(cfg, points, xi)
        result = unwrap_phase(line, anchor, config.K)
        result.xalpha_true = _true_xalpha(cfg, points, xi)
        result.feet = np.array([len(points) - 1])
        parts.append(result)
    return concat_results(parts)


def recover_xalpha(config: ExperimentConfig, mode: Optional[str] = None,
                   u_final: Optional[ComplexField] = None, verbose: bool = False) -> RecoveryResult:
    """End-to-end recovery of X alpha(., xi) for the configured direction."""
    mode = mode or config.recovery_mode
    if verbose:
        print(f"Recovering X alpha along xi={list(config.xi)} ({mode} mode)")
    result = recover_direction(config, mode=mode, u_final=u_final, verbose=verbose)
    if verbose:
        print(f"  {len(result.points)} samples, sup error {result.sup_error:.3e}, "
              f"branch range [{int(result.g.min())}, {int(result.g.max())}]")
    return result


def sinogram_directions(config: ExperimentConfig) -> np.ndarray:
    """Angles uniformly covering [0, pi); both +xi and -xi are measured per angle."""
    return uniform_thetas(config.measure.angles)


def recover_sinogram(config: ExperimentConfig, mode: Optional[str] = None,
                     verbose: bool = False) -> List[RecoveryResult]:
    """Per-direction recoveries for +xi_j and -xi_j over all configured angles (d=2)."""
    if config.dim != 2:
        raise GeometryError("sinogram recovery needs d = 2")
    results = []
    for theta in tqdm(sinogram_directions(config), desc="angles", disable=not verbose):
        xi = np.array([math.cos(theta), math.sin(theta)])
        for sign in (1.0, -1.0):
            results.append(recover_direction(config, sign * xi, mode=mode))
    return results


@dataclass
class AlphaReconstruction:
    """Recovered alpha (samples in 1D, a real field in 2D) with errors against the truth."""

    dim: int
    relative_l2: float
    sup: float
    points: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None
    field: Optional[ComplexField] = None
    sinogram: Optional[Sinogram] = None

    def to_frame(self) -> pd.DataFrame:
        if self.dim != 1:
            raise ValueError("sample table only exists for d = 1")
        return pd.DataFrame({
            "x": self.points[:, 0],
            "alpha_recovered": self.values,
            "alpha_true": self.truth,
            "abs_err": np.abs(self.values - self.truth),
        })


def _angle_key(xi: np.ndarray) -> Tuple[float, float]:
    """Angle in [0, pi) and the sign that maps xi onto it."""
    angle = math.atan2(xi[1], xi[0])
    if angle < 0 or angle >= math.pi - 1e-12:
        return (angle + math.pi) % math.pi, -1.0
    return angle, 1.0


def reconstruct_alpha(results: Sequence[RecoveryResult], dim: int, config: ExperimentConfig) -> AlphaReconstruction:
    """
    Reconstruct alpha from recovered transforms.

    d=1: differentiate X alpha(x0, xi) along the uniform path, alpha = -2 xi dX/dx0.
    d=2: P alpha = 2 (X alpha(., xi) + X alpha(., -xi)) at the feet of each angle,
    then filtered backprojection.

    Raises:
        SamplingError: Fewer than 8 angles in d=2, or a non-uniform 1D path
    """
    if dim == 1:
        result = results[0]
        x = result.points[:, 0]
        steps = np.diff(x)
        if len(x) < 2 or not np.allclose(steps, steps[0], rtol=1e-9):
            raise SamplingError("1D recovery path must be uniformly spaced")
        alpha = float(np.sign(result.xi[0])) * recover_alpha_1d(result.xalpha, steps[0])
        truth = profile_eval(config.alpha, result.points)
        diff = alpha - truth
        norm = float(np.sqrt(np.sum(truth ** 2)))
        rel = float(np.sqrt(np.sum(diff ** 2)) / norm) if norm > 0 else float(np.sqrt(np.sum(diff ** 2)))
        return AlphaReconstruction(dim=1, relative_l2=rel, sup=float(np.max(np.abs(diff))),
                                   points=result.points, values=alpha, truth=truth)

    if dim != 2:
        raise GeometryError("reconstruction is implemented for d = 1 and d = 2")

    # Group on a rounded key, but keep the angle computed from the +xi direction
    by_angle = {}
    for result in results:
        angle, sign = _angle_key(result.xi)
        entry = by_angle.setdefault(round(angle, 9), {})
        entry[sign] = result
        if sign > 0:
            entry["angle"] = angle
    complete = sorted(k for k, v in by_angle.items() if 1.0 in v and -1.0 in v)
    if len(complete) < MIN_FBP_ANGLES:
        raise SamplingError(f"insufficient angular coverage: {len(complete)} angles, need {MIN_FBP_ANGLES}")

    m = config.measure
    offsets = np.linspace(-m.offset_max, m.offset_max, m.offsets)
    values = np.empty((len(complete), len(offsets)))
    for j, key in enumerate(complete):
        plus, minus = by_angle[key][1.0], by_angle[key][-1.0]
        values[j] = 2.0 * (plus.xalpha[plus.feet] + minus.xalpha[minus.feet])
    thetas = np.array([by_angle[key]["angle"] for key in complete])
    sino = Sinogram(thetas, offsets, values)

    n = 1 << int(math.ceil(math.log2(len(offsets))))
    grid = make_grid(2, [(-m.offset_max, m.offset_max)] * 2, [n, n])
    recon = fbp_invert_2d(sino, grid)
    errors = reconstruction_error(recon, config.alpha, 1.5 * config.alpha.support_radius)
    return AlphaReconstruction(dim=2, relative_l2=errors["relative_l2"], sup=errors["sup"],
                               field=recon, sinogram=sino)
