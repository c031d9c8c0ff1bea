"""Leading amplitude a0, first correction a1 along characteristics, and v / u_N assembly."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .config import A1_HALVED_STEP_TOLERANCE, PHASE_NODES, PHASE_PANELS
from .errors import StabilityError
from .experiment_config import ExperimentConfig
from .fields import ComplexField, FieldGrid, gradient, laplacian
from .profiles import Profile, profile_derivatives, profile_eval
from .solver import rescaled_time, wave_carrier
from .xray import composite_gauss_legendre

A1_DIAGNOSTIC_COLUMNS = ["t_prime", "sup_abs_a1", "residual_sup"]

# First-derivative weights on the RK4 trajectory (step ds): centred and forward, 6th order
_CENTRED_WEIGHTS = (np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0, -3)
_FORWARD_WEIGHTS = (np.array([-147.0, 360.0, -450.0, 400.0, -225.0, 72.0, -10.0]) / 60.0, 0)


def _chords(alpha: Profile, labels: np.ndarray, xi: np.ndarray, lower: float, upper: float):
    """Parameter interval [lo, hi] where labels + 2 xi s stays in supp alpha, clipped to [lower, upper]."""
    w = labels - np.asarray(alpha.center)
    b = w @ xi
    disc = b * b - (np.sum(w * w, axis=-1) - alpha.support_radius ** 2)
    root = np.sqrt(np.maximum(disc, 0.0))
    lo = np.maximum(0.5 * (-b - root), lower)
    hi = np.minimum(0.5 * (-b + root), upper)
    active = (disc > 0.0) & (hi > lo)
    return lo, hi, active


def phase_integrals(
    alpha: Profile,
    labels: np.ndarray,
    xi,
    T: float,
    t_prime: float,
    derivatives: bool = False,
    panels: int = PHASE_PANELS,
    nodes: int = PHASE_NODES,
    chunk: int = 2048,
):
    """
    Phi(t', y) = int_{-T}^{t'} alpha(y + 2 xi s) ds for characteristic labels y = x - 2 xi t'.

    The quadrature runs over the chord where the line meets supp alpha, so it is
    exact to Gauss-Legendre accuracy however long the window is.

    Args:
        alpha: Nonlinearity profile
        labels: Points y, shape (M, dim)
        xi: Unit direction
        T: Start of the rescaled window is -T
        t_prime: Upper limit
        derivatives: Also return grad Phi and Lap Phi (x-derivatives at fixed t')

    Returns:
        Phi (M,), or (Phi, grad Phi (M, dim), Lap Phi (M,)) when derivatives is set
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    y = np.asarray(labels, dtype=float).reshape(-1, alpha.dim)
    ref_s, ref_w = composite_gauss_legendre(panels, nodes)

    phi = np.zeros(len(y))
    grad = np.zeros((len(y), alpha.dim))
    lap = np.zeros(len(y))
    lo, hi, active = _chords(alpha, y, xi, -T, t_prime)
    index = np.flatnonzero(active)

    for start in range(0, len(index), chunk):
        sel = index[start:start + chunk]
        length = hi[sel] - lo[sel]
        s = lo[sel, None] + length[:, None] * ref_s[None, :]
        pts = y[sel, None, :] + 2.0 * s[..., None] * xi
        weights = length[:, None] * ref_w[None, :]
        if derivatives:
            value, g, l = profile_derivatives(alpha, pts)
            grad[sel] = np.einsum("mp,mpd->md", weights, g)
            lap[sel] = np.sum(weights * l, axis=1)
        else:
            value = profile_eval(alpha, pts)
        phi[sel] = np.sum(weights * value, axis=1)

    if derivatives:
        return phi, grad, lap
    return phi


class PhaseIntegralCache:
    """Phi (and its x-derivatives) on every node of one grid, memoised per rescaled time."""

    def __init__(self, config: ExperimentConfig, grid: FieldGrid):
        self.config = config
        self.grid = grid
        self._mesh = grid.mesh().reshape(-1, grid.dim)
        self._values: Dict[float, np.ndarray] = {}
        self._derivs: Dict[float, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _labels(self, t_prime: float) -> np.ndarray:
        return self._mesh - 2.0 * t_prime * self.config.xi_array

    def phi(self, t_prime: float) -> np.ndarray:
        if t_prime in self._derivs:
            return self._derivs[t_prime][0]
        if t_prime not in self._values:
            cfg = self.config
            self._values[t_prime] = phase_integrals(cfg.alpha, self._labels(t_prime), cfg.xi_array,
                                                    cfg.T, t_prime)
        return self._values[t_prime]

    def with_derivatives(self, t_prime: float):
        if t_prime not in self._derivs:
            cfg = self.config
            self._derivs[t_prime] = phase_integrals(cfg.alpha, self._labels(t_prime), cfg.xi_array,
                                                    cfg.T, t_prime, derivatives=True)
        return self._derivs[t_prime]


def transported_argument(config: ExperimentConfig, points: np.ndarray, t_prime: float) -> np.ndarray:
    """x - 2 xi (t' + T): the point the packet at x started from."""
    return points - 2.0 * (t_prime + config.T) * config.xi_array


def a0_values(config: ExperimentConfig, points: np.ndarray, t_prime: float,
              phi: Optional[np.ndarray] = None) -> np.ndarray:
    """A0(t', x) = psi(x - 2 xi (t'+T)) exp(-i psi^2 Phi(t', x)) at points (M, dim)."""
    pts = np.asarray(points, dtype=float).reshape(-1, config.dim)
    base = profile_eval(config.psi, transported_argument(config, pts, t_prime))
    if phi is None:
        phi = phase_integrals(config.alpha, pts - 2.0 * t_prime * config.xi_array,
                              config.xi_array, config.T, t_prime)
    return base * np.exp(-1j * base * base * phi)


def eval_a0(config: ExperimentConfig, t: float, grid: FieldGrid,
            cache: Optional[PhaseIntegralCache] = None) -> ComplexField:
    """
    Leading amplitude a0 on grid at lab time t.

    Args:
        config: Validated experiment
        t: Lab time in [-Th, Th]
        grid: Output grid
        cache: Optional Phi cache for this grid

    Returns:
        ComplexField of a0(t, x)
    """
    t_prime = rescaled_time(config, t)
    mesh = grid.mesh().reshape(-1, grid.dim)
    phi = cache.phi(t_prime) if cache is not None else None
    return ComplexField(grid, a0_values(config, mesh, t_prime, phi))


def _a0_laplacian_parts(phi_psi, grad_psi, lap_psi, Phi, grad_Phi, lap_Phi):
    """Closed-form A0 and Lap A0 from psi and Phi derivatives (product and chain rule)."""
    chi = phi_psi * phi_psi * Phi
    grad_chi = 2.0 * (phi_psi * Phi)[:, None] * grad_psi + (phi_psi * phi_psi)[:, None] * grad_Phi
    gpsi_sq = np.sum(grad_psi * grad_psi, axis=-1)
    gpsi_dot_gPhi = np.sum(grad_psi * grad_Phi, axis=-1)
    lap_chi = 2.0 * Phi * (gpsi_sq + phi_psi * lap_psi) + 4.0 * phi_psi * gpsi_dot_gPhi \
        + phi_psi * phi_psi * lap_Phi
    rotation = np.exp(-1j * chi)
    a0 = phi_psi * rotation
    lap_a0 = rotation * (
        lap_psi
        - 2j * np.sum(grad_psi * grad_chi, axis=-1)
        - 1j * phi_psi * lap_chi
        - phi_psi * np.sum(grad_chi * grad_chi, axis=-1)
    )
    return a0, lap_a0


def a0_laplacian(config: ExperimentConfig, t: float, grid: FieldGrid,
                 cache: Optional[PhaseIntegralCache] = None) -> ComplexField:
    """Lap a0 on grid from the closed form, profile derivatives by finite differences."""
    t_prime = rescaled_time(config, t)
    mesh = grid.mesh().reshape(-1, grid.dim)
    cache = cache or PhaseIntegralCache(config, grid)
    Phi, grad_Phi, lap_Phi = cache.with_derivatives(t_prime)
    values, grads, laps = profile_derivatives(config.psi, transported_argument(config, mesh, t_prime))
    _, lap_a0 = _a0_laplacian_parts(values, grads, laps, Phi, grad_Phi, lap_Phi)
    return ComplexField(grid, lap_a0)


def a0_residual(config: ExperimentConfig, t: float, grid: FieldGrid, dt_prime: float) -> float:
    """
    Sup of d_t' a0 + 2 xi . grad a0 + i alpha |a0|^2 a0 on grid.

    d_t' by central differences with step dt_prime, grad spectrally.
    """
    t_prime = rescaled_time(config, t)
    mesh = grid.mesh().reshape(-1, grid.dim)
    xi = config.xi_array
    forward = a0_values(config, mesh, t_prime + dt_prime)
    backward = a0_values(config, mesh, t_prime - dt_prime)
    center = ComplexField(grid, a0_values(config, mesh, t_prime))

    dt_a0 = (forward - backward).reshape(grid.shape) / (2.0 * dt_prime)
    transport = sum(2.0 * xi[axis] * g.values for axis, g in enumerate(gradient(center)))
    alpha = profile_eval(config.alpha, grid.mesh())
    nonlinear = 1j * alpha * np.abs(center.values) ** 2 * center.values
    return float(np.max(np.abs(dt_a0 + transport + nonlinear)))


@dataclass(frozen=True)
class CorrectionField:
    """A1 sampled on one grid at a list of rescaled times."""

    grid: FieldGrid
    times_prime: Tuple[float, ...]
    fields: Tuple[ComplexField, ...]

    def at(self, t_prime: float) -> ComplexField:
        for tp, f in zip(self.times_prime, self.fields):
            if abs(tp - t_prime) <= 1e-12 * max(1.0, abs(tp)):
                return f
        raise KeyError(f"no correction stored at t'={t_prime}")


def cubic_linearisation(a0: np.ndarray, a1: np.ndarray) -> np.ndarray:
    """Coefficient of h in (a0 + h a1)|a0 + h a1|^2, i.e. 2|a0|^2 a1 + a0^2 conj(a1)."""
    return 2.0 * np.abs(a0) ** 2 * a1 + a0 * a0 * np.conj(a1)


def _a1_trajectory(config: ExperimentConfig, labels: np.ndarray, ds: float, steps: int,
                   keep_from: Optional[int] = None) -> np.ndarray:
    """
    Classical RK4 for A1 along x(s) = y + 2 xi s, from s = -T in steps of ds.

    Phi, grad Phi and Lap Phi ride along as extra state so the forcing Lap A0 is
    available in closed form at every stage.

    Returns:
        A1 after steps keep_from..steps (keep_from defaults to steps), shape (K, M)
    """
    xi = config.xi_array
    T = config.T
    keep_from = steps if keep_from is None else keep_from
    psi_v, psi_g, psi_l = profile_derivatives(config.psi, labels - 2.0 * T * xi)

    def alpha_parts(s):
        return profile_derivatives(config.alpha, labels + 2.0 * s * xi)

    def rhs(a1, Phi, gPhi, lPhi, parts):
        alpha_v, alpha_g, alpha_l = parts
        a0, lap_a0 = _a0_laplacian_parts(psi_v, psi_g, psi_l, Phi, gPhi, lPhi)
        return 1j * lap_a0 - 1j * alpha_v * cubic_linearisation(a0, a1), alpha_v, alpha_g, alpha_l

    a1 = np.zeros(len(labels), dtype=np.complex128)
    Phi = np.zeros(len(labels))
    gPhi = np.zeros((len(labels), config.dim))
    lPhi = np.zeros(len(labels))
    kept = [a1] if keep_from == 0 else []

    here = alpha_parts(-T)
    for k in range(steps):
        s = -T + k * ds
        mid = alpha_parts(s + 0.5 * ds)
        end = alpha_parts(-T + (k + 1) * ds)
        k1 = rhs(a1, Phi, gPhi, lPhi, here)
        k2 = rhs(a1 + 0.5 * ds * k1[0], Phi + 0.5 * ds * k1[1], gPhi + 0.5 * ds * k1[2],
                 lPhi + 0.5 * ds * k1[3], mid)
        k3 = rhs(a1 + 0.5 * ds * k2[0], Phi + 0.5 * ds * k2[1], gPhi + 0.5 * ds * k2[2],
                 lPhi + 0.5 * ds * k2[3], mid)
        k4 = rhs(a1 + ds * k3[0], Phi + ds * k3[1], gPhi + ds * k3[2], lPhi + ds * k3[3], end)
        a1 = a1 + ds / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        Phi = Phi + ds / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        gPhi = gPhi + ds / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        lPhi = lPhi + ds / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        here = end
        if k + 1 >= keep_from:
            kept.append(a1)
    return np.array(kept)


def _integrate_a1(config: ExperimentConfig, labels: np.ndarray, t_prime: float, steps: int) -> np.ndarray:
    """A1 at (t_prime, labels + 2 xi t_prime) after `steps` RK4 steps from -T."""
    if steps <= 0:
        return np.zeros(len(labels), dtype=np.complex128)
    return _a1_trajectory(config, labels, (t_prime + config.T) / steps, steps)[-1]


def _active_characteristics(config: ExperimentConfig, labels: np.ndarray) -> np.ndarray:
    """Labels whose characteristic starts inside supp psi (plus the stencil reach)."""
    reach = config.psi.support_radius + 3.0 * config.psi.fd_step
    origin = labels - 2.0 * config.T * config.xi_array
    return np.linalg.norm(origin - np.asarray(config.psi.center), axis=-1) <= reach


def _steps_for(config: ExperimentConfig, t_prime: float, n_steps: int) -> int:
    fraction = (t_prime + config.T) / (2.0 * config.T)
    if fraction <= 0.0:
        return 0
    return max(1, int(round(n_steps * fraction)))


def solve_a1(
    config: ExperimentConfig,
    grid: FieldGrid,
    times: Sequence[float],
    n_steps: Optional[int] = None,
    check_stability: bool = True,
    rescaled: bool = False,
    verbose: bool = False,
) -> CorrectionField:
    """
    First correction A1 on grid at the requested times.

    Each node is an independent characteristic: its label y = x - 2 xi t' fixes
    the line along which the ODE is integrated from A1(-T) = 0.

    Args:
        config: Validated experiment
        grid: Output grid
        times: Lab times (or rescaled times when rescaled is set)
        n_steps: RK4 steps over the full window [-T, T]; defaults to ansatz.a1_steps
        check_stability: Compare against a run with half the step size
        rescaled: Interpret times as t' = t/h
        verbose: Print progress

    Returns:
        CorrectionField

    Raises:
        StabilityError: If the halved-step run disagrees by more than 1e-6
    """
    n_steps = config.a1_steps if n_steps is None else n_steps
    xi = config.xi_array
    mesh = grid.mesh().reshape(-1, grid.dim)

    times_prime: List[float] = []
    fields: List[ComplexField] = []
    for t in tqdm(times, desc="a1", disable=not verbose):
        t_prime = float(t) if rescaled else rescaled_time(config, t)
        labels = mesh - 2.0 * t_prime * xi
        active = _active_characteristics(config, labels)

        steps = _steps_for(config, t_prime, n_steps)
        values = np.zeros(len(mesh), dtype=np.complex128)
        values[active] = _integrate_a1(config, labels[active], t_prime, steps)

        if check_stability and steps > 0:
            finer = _integrate_a1(config, labels[active], t_prime, 2 * steps)
            gap = float(np.max(np.abs(finer - values[active]), initial=0.0))
            scale = max(1.0, float(np.max(np.abs(finer), initial=0.0)))
            if gap > A1_HALVED_STEP_TOLERANCE * scale:
                raise StabilityError(f"a1 halved-step disagreement {gap:.2e} at t'={t_prime:.6g}")
        if verbose:
            print(f"  a1 at t'={t_prime:+.4f}: {int(active.sum())} characteristics, {steps} steps")

        times_prime.append(t_prime)
        fields.append(ComplexField(grid, values))
    return CorrectionField(grid, tuple(times_prime), tuple(fields))


def a1_residual(config: ExperimentConfig, grid: FieldGrid, t_prime: float,
                n_steps: Optional[int] = None) -> Tuple[float, float]:
    """
    Sup of the order-h^{-1/2} equation i D A1 + Lap A0 - alpha (2|A0|^2 A1 + A0^2 conj A1)
    at rescaled time t_prime, with D = d_t' + 2 xi . grad.

    D A1 is the derivative along each characteristic, taken by 7-point differences
    on the RK4 trajectory itself (forward near -T), so the check measures the ODE
    solve and not the grid's resolution of A1.

    Returns:
        (sup |A1|, residual sup)
    """
    n_steps = config.a1_steps if n_steps is None else n_steps
    T = config.T
    mesh = grid.mesh().reshape(-1, grid.dim)
    labels = mesh - 2.0 * t_prime * config.xi_array
    active = _active_characteristics(config, labels)
    if not np.any(active):
        return 0.0, 0.0

    steps = _steps_for(config, t_prime, n_steps)
    ds = (t_prime + T) / steps if steps > 0 else 2.0 * T / n_steps
    weights, first = _CENTRED_WEIGHTS if steps >= 3 else _FORWARD_WEIGHTS
    start = steps + first
    trajectory = _a1_trajectory(config, labels[active], ds, start + len(weights) - 1, keep_from=start)
    d_a1 = np.tensordot(weights, trajectory, axes=1) / ds
    a1 = trajectory[-first]

    points = mesh[active]
    Phi, grad_Phi, lap_Phi = phase_integrals(config.alpha, labels[active], config.xi_array, T, t_prime,
                                             derivatives=True)
    values, grads, laps = profile_derivatives(config.psi, transported_argument(config, points, t_prime))
    a0, lap_a0 = _a0_laplacian_parts(values, grads, laps, Phi, grad_Phi, lap_Phi)
    alpha = profile_eval(config.alpha, points)

    residual = 1j * d_a1 + lap_a0 - alpha * cubic_linearisation(a0, a1)
    return float(np.max(np.abs(a1))), float(np.max(np.abs(residual)))


def a1_diagnostics(config: ExperimentConfig, grid: FieldGrid, times_prime: Sequence[float],
                   n_steps: Optional[int] = None) -> pd.DataFrame:
    rows = []
    for tp in times_prime:
        sup_a1, residual = a1_residual(config, grid, float(tp), n_steps=n_steps)
        rows.append({"t_prime": float(tp), "sup_abs_a1": sup_a1, "residual_sup": residual})
    return pd.DataFrame(rows, columns=A1_DIAGNOSTIC_COLUMNS)


def assemble_v(config: ExperimentConfig, t: float, grid: FieldGrid,
               cache: Optional[PhaseIntegralCache] = None) -> ComplexField:
    """v(t, x) = h^{-1/2} exp(i(x.xi/h - t|xi|^2/h^2)) a0(t, x)."""
    t_prime = rescaled_time(config, t)
    carrier = wave_carrier(grid.mesh(), config, t_prime)
    return ComplexField(grid, carrier * eval_a0(config, t, grid, cache).values)


def assemble_uN(config: ExperimentConfig, t: float, grid: FieldGrid, N: int = 1,
                correction: Optional[CorrectionField] = None,
                cache: Optional[PhaseIntegralCache] = None) -> ComplexField:
    """
    u_N = carrier * (a0 + h a1) for N = 1, v for N = 0.

    Args:
        correction: Precomputed A1 containing t/h; solved on demand otherwise

    Raises:
        ValueError: If N is not 0 or 1
    """
    if N not in (0, 1):
        raise ValueError("only N = 0 and N = 1 are implemented")
    v = assemble_v(config, t, grid, cache)
    if N == 0:
        return v
    t_prime = rescaled_time(config, t)
    if correction is None:
        correction = solve_a1(config, grid, [t])
    a1 = correction.at(t_prime)
    carrier = wave_carrier(grid.mesh(), config, t_prime)
    return ComplexField(grid, v.values + config.h * carrier * a1.values)


def laplacian_consistency(config: ExperimentConfig, t: float, grid: FieldGrid) -> float:
    """Sup gap between the closed-form Lap a0 and the spectral Laplacian of sampled a0."""
    closed = a0_laplacian(config, t, grid)
    spectral = laplacian(eval_a0(config, t, grid))
    return float(np.max(np.abs(closed.values - spectral.values)))
