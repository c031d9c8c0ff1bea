"""Strang-split spectral solver for i u_t + Lap u = alpha |u|^2 u on [-Th, Th]."""

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .config import (
    BOUNDARY_BAND_FRACTION,
    BOUNDARY_LEAK_TOLERANCE,
    DEFAULT_DIAGNOSTIC_STRIDE,
)
from .errors import GridError, ResolutionError, SolverError
from .experiment_config import ExperimentConfig
from .fields import (
    ComplexField, FieldGrid, dump_field, gradient, l2_norm, make_grid, sample_function,
)
from .profiles import Profile, profile_eval

DIAGNOSTIC_COLUMNS = ["step", "t", "mass", "energy", "max_abs", "boundary_leak"]

# Check times -Th, 0, Th/2, Th land on steps when n_steps is a multiple of 4
STEP_MULTIPLE = 4


def rescaled_time(config: ExperimentConfig, t: float) -> float:
    """t' = t/h, snapped to exactly -T at the start of the window."""
    t_prime = t / config.h
    if abs(t_prime + config.T) <= 1e-12 * config.T:
        return -config.T
    return t_prime


def wave_carrier(points: np.ndarray, config: ExperimentConfig, t_prime: float) -> np.ndarray:
    """h^{-1/2} exp(i (x.xi/h - t'|xi|^2/h)) at points of shape (..., dim)."""
    xi = config.xi_array
    phase = (points @ xi) / config.h - t_prime * float(xi @ xi) / config.h
    return config.h ** -0.5 * np.exp(1j * phase)


def _next_pow2(n: float) -> int:
    return 1 << max(3, int(math.ceil(math.log2(max(n, 1.0)))))


def derive_grid(config: ExperimentConfig) -> FieldGrid:
    """
    Box and node counts for a config.

    The box is the explicit grid.box, or the hull of B(0,R) and B(4 xi T, R + 2T0)
    padded by grid.padding on every side. Counts are the smallest powers of two
    with dx <= dx_factor * pi * h.
    """
    if config.box is not None:
        extents = list(config.box)
    else:
        xi = config.xi_array
        end = 4.0 * config.T * xi
        reach = config.R + 2.0 * config.T0
        extents = []
        for axis in range(config.dim):
            lo = min(-config.R, end[axis] - reach) - config.padding
            hi = max(config.R, end[axis] + reach) + config.padding
            extents.append((lo, hi))

    max_dx = config.dx_factor * math.pi * config.h
    counts = [_next_pow2((hi - lo) / max_dx) for lo, hi in extents]
    return make_grid(config.dim, extents, counts)


def check_resolution(config: ExperimentConfig, grid: FieldGrid) -> None:
    """
    Raises:
        ResolutionError: If max dx exceeds pi*h/8
        GridError: If B(0,R) does not sit inside the box with margin 2R
    """
    limit = math.pi * config.h / 8.0
    if max(grid.dx) > limit * (1.0 + 1e-12):
        raise ResolutionError(f"carrier under-resolved: max dx {max(grid.dx):.4g} > pi*h/8 = {limit:.4g}")
    margin = 3.0 * config.R * (1.0 - 1e-12)
    for lo, hi in zip(grid.x_min, grid.x_max):
        if lo > -margin or hi < margin:
            raise GridError(f"box [{lo}, {hi}] leaves less than 2R around supp psi")


def initial_data(config: ExperimentConfig, grid: FieldGrid) -> ComplexField:
    """u(-Th, x) = h^{-1/2} exp(i x.xi/h + i T|xi|^2/h) psi(x)."""
    check_resolution(config, grid)
    return sample_function(
        grid, lambda mesh: wave_carrier(mesh, config, -config.T) * profile_eval(config.psi, mesh))


@dataclass(frozen=True)
class StepPolicy:
    """Fixed Strang steps: n_steps * dt = 2Th."""

    dt: float
    n_steps: int
    scheme: str = "strang"


def step_policy(config: ExperimentConfig) -> StepPolicy:
    span = 2.0 * config.window
    n_steps = math.ceil(span / (config.h * config.dt_factor) - 1e-9)
    n_steps += (-n_steps) % STEP_MULTIPLE
    return StepPolicy(dt=span / n_steps, n_steps=n_steps)


class StrangPropagator:
    """
    One Strang step: half nonlinear rotation, exact linear flow, half rotation.

    The nonlinear sub-flow keeps |u| pointwise, so exp(-i dt/2 alpha |u|^2) is exact.
    """

    def __init__(self, grid: FieldGrid, alpha_values: np.ndarray, dt: float):
        self.grid = grid
        self.dt = dt
        self.half_rate = -0.5 * dt * np.asarray(alpha_values, dtype=float).reshape(grid.shape)
        self.linear = np.exp(-1j * dt * grid.k_squared())

    def step(self, u: np.ndarray) -> np.ndarray:
        u = u * np.exp(1j * self.half_rate * (u.real ** 2 + u.imag ** 2))
        u = np.fft.ifftn(self.linear * np.fft.fftn(u))
        return u * np.exp(1j * self.half_rate * (u.real ** 2 + u.imag ** 2))


@lru_cache(maxsize=8)
def propagator_for(grid: FieldGrid, alpha: Profile, dt: float) -> StrangPropagator:
    return StrangPropagator(grid, profile_eval(alpha, grid.mesh()), dt)


@dataclass
class SolverState:
    """Current time, field and step counter of one evolution."""

    t: float
    u: ComplexField
    config: Optional[ExperimentConfig] = None
    step: int = 0


def strang_step(state: SolverState, dt: float,
                propagator: Optional[StrangPropagator] = None) -> SolverState:
    """
    Advance one Strang step.

    Args:
        state: Current state
        dt: Time step
        propagator: Prebuilt propagator (for instance with constant alpha);
            built from state.config when omitted

    Raises:
        SolverError: If the new field is not finite
    """
    if propagator is None:
        if state.config is None:
            raise SolverError("strang_step needs a config or a propagator")
        propagator = propagator_for(state.u.grid, state.config.alpha, dt)
    values = propagator.step(state.u.values)
    if not np.all(np.isfinite(values)):
        raise SolverError(f"non-finite values after step {state.step + 1} at t={state.t + dt:.6g}")
    return SolverState(t=state.t + dt, u=ComplexField(state.u.grid, values),
                       config=state.config, step=state.step + 1)


def linear_propagate(f: ComplexField, duration: float) -> ComplexField:
    """Exact free Schrodinger flow exp(i duration Lap) applied spectrally."""
    spectrum = np.fft.fftn(f.values)
    return ComplexField(f.grid, np.fft.ifftn(np.exp(-1j * duration * f.grid.k_squared()) * spectrum))


def mass(u: ComplexField) -> float:
    """Sum |u|^2 dV."""
    return l2_norm(u) ** 2


def energy(u: ComplexField, alpha: Union[Profile, np.ndarray]) -> float:
    """1/2 sum |grad u|^2 dV + 1/4 sum alpha |u|^4 dV, gradient spectral."""
    if isinstance(alpha, Profile):
        alpha_values = profile_eval(alpha, u.grid.mesh())
    else:
        alpha_values = np.broadcast_to(np.asarray(alpha, dtype=float), u.grid.shape)
    kinetic = sum(np.sum(np.abs(g.values) ** 2) for g in gradient(u))
    density = np.abs(u.values) ** 2
    potential = np.sum(alpha_values * density ** 2)
    return float((0.5 * kinetic + 0.25 * potential) * u.grid.cell_volume)


def _band_mask(grid: FieldGrid) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for axis, n in enumerate(grid.counts):
        width = max(1, int(round(BOUNDARY_BAND_FRACTION * n)))
        index = [slice(None)] * grid.dim
        index[axis] = slice(0, width)
        mask[tuple(index)] = True
        index[axis] = slice(n - width, n)
        mask[tuple(index)] = True
    return mask


def boundary_leak(u: ComplexField, band: Optional[np.ndarray] = None) -> float:
    """max |u| in the outer 5% band of each axis, relative to max |u|."""
    band = _band_mask(u.grid) if band is None else band
    modulus = np.abs(u.values)
    peak = modulus.max()
    return float(modulus[band].max() / peak) if peak > 0 else 0.0


def _relative(value: float, reference: float) -> float:
    return abs(value - reference) / abs(reference) if reference != 0 else abs(value - reference)


@dataclass
class EvolutionResult:
    """Final field, requested snapshots (keyed by actual step time) and drift diagnostics."""

    final: ComplexField
    snapshots: Dict[float, ComplexField]
    diagnostics: pd.DataFrame
    mass_drift: float
    energy_drift: float
    leak: float
    policy: StepPolicy
    snapshot_files: list = field(default_factory=list)


def evolve(
    config: ExperimentConfig,
    initial: Optional[ComplexField] = None,
    snapshot_times: Sequence[float] = (),
    snapshot_dir: Optional[Union[str, Path]] = None,
    verbose: bool = False,
) -> EvolutionResult:
    """
    Integrate from t = -Th to t = Th with fixed Strang steps.

    Args:
        config: Validated experiment
        initial: Data at -Th; defaults to initial_data on derive_grid(config)
        snapshot_times: Lab times to keep in memory (rounded to the nearest step)
        snapshot_dir: When set and solver.snapshot_stride > 0, NLSF dumps every stride steps
        verbose: Print progress

    Returns:
        EvolutionResult

    Raises:
        SolverError: On non-finite values or mass drift beyond solver.mass_tolerance
    """
    if initial is None:
        initial = initial_data(config, derive_grid(config))
    grid = initial.grid
    policy = step_policy(config)
    propagator = propagator_for(grid, config.alpha, policy.dt)
    alpha_values = profile_eval(config.alpha, grid.mesh())
    band = _band_mask(grid)
    start = -config.window

    wanted: Dict[int, float] = {}
    for t in snapshot_times:
        index = int(round((t - start) / policy.dt))
        wanted[min(max(index, 0), policy.n_steps)] = t

    if verbose:
        print(f"Evolving on {grid.counts} nodes, {policy.n_steps} steps of dt={policy.dt:.3e}")

    u = initial.values
    mass0 = mass(initial)
    energy0 = energy(initial, alpha_values)
    rows = []
    snapshots: Dict[float, ComplexField] = {}
    files = []

    def record(step: int, field_: ComplexField) -> None:
        m = mass(field_)
        drift = _relative(m, mass0)
        if drift > config.mass_tolerance:
            raise SolverError(f"mass drift {drift:.3e} exceeds tolerance at step {step}")
        rows.append({
            "step": step,
            "t": start + step * policy.dt,
            "mass": m,
            "energy": energy(field_, alpha_values),
            "max_abs": float(np.abs(field_.values).max()),
            "boundary_leak": boundary_leak(field_, band),
        })

    def keep(step: int, field_: ComplexField) -> None:
        if step in wanted:
            snapshots[start + step * policy.dt] = field_
        if snapshot_dir is not None and config.snapshot_stride > 0 and step % config.snapshot_stride == 0:
            path = Path(snapshot_dir) / f"u_{step:06d}.nlsf"
            dump_field(field_, path)
            files.append(path)

    record(0, initial)
    keep(0, initial)

    steps = range(1, policy.n_steps + 1)
    for step in tqdm(steps, desc="strang", disable=not verbose):
        u = propagator.step(u)
        if not np.all(np.isfinite(u)):
            raise SolverError(f"non-finite values at step {step}, t={start + step * policy.dt:.6g}")
        if step % DEFAULT_DIAGNOSTIC_STRIDE == 0 or step == policy.n_steps or step in wanted:
            current = ComplexField(grid, u)
            if step % DEFAULT_DIAGNOSTIC_STRIDE == 0 or step == policy.n_steps:
                record(step, current)
            keep(step, current)
        elif snapshot_dir is not None and config.snapshot_stride > 0 and step % config.snapshot_stride == 0:
            keep(step, ComplexField(grid, u))

    final = ComplexField(grid, u)
    diagnostics = pd.DataFrame(rows, columns=DIAGNOSTIC_COLUMNS)
    leak = float(diagnostics["boundary_leak"].max())
    if leak > BOUNDARY_LEAK_TOLERANCE:
        warnings.warn(f"boundary leak {leak:.2e} exceeds {BOUNDARY_LEAK_TOLERANCE:g} of max|u|; enlarge the box")

    result = EvolutionResult(
        final=final,
        snapshots=snapshots,
        diagnostics=diagnostics,
        mass_drift=_relative(diagnostics["mass"].iloc[-1], mass0),
        energy_drift=_relative(diagnostics["energy"].iloc[-1], energy0),
        leak=leak,
        policy=policy,
        snapshot_files=files,
    )
    if verbose:
        print(f"Done: mass drift {result.mass_drift:.2e}, energy drift {result.energy_drift:.2e}")
    return result


def save_diagnostics(result: EvolutionResult, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    result.diagnostics.to_csv(path, index=False, float_format="%.17g")
