"""Compactly supported smooth profiles (bump and plateau) used for alpha and psi."""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import PROFILE_FD_RELATIVE_STEP
from .errors import ProfileError

BUMP = "bump"
PLATEAU = "plateau"
PROFILE_KINDS = (BUMP, PLATEAU)


@dataclass(frozen=True)
class Profile:
    """
    Radial C-infinity profile with exact ball support.

    Bump:    A * exp(1 - 1/(1 - (|x-c|/r)^2)) for |x-c| < r, else 0.
    Plateau: A on B(c, rho1), 0 outside B(c, rho2), smoothstep in between.
    """

    kind: str
    center: Tuple[float, ...]
    amplitude: float
    radius: Optional[float] = None
    inner_radius: Optional[float] = None
    outer_radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ProfileError(f"unknown profile kind '{self.kind}'")
        if self.kind == BUMP:
            if self.radius is None or not self.radius > 0:
                raise ProfileError("bump requires radius > 0")
        else:
            if self.inner_radius is None or self.outer_radius is None:
                raise ProfileError("plateau requires inner_radius and outer_radius")
            if not (0 < self.inner_radius < self.outer_radius):
                raise ProfileError("plateau requires 0 < inner_radius < outer_radius")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def support_radius(self) -> float:
        """Radius of the closed support ball around the center."""
        return self.radius if self.kind == BUMP else self.outer_radius

    @property
    def support_extent(self) -> float:
        """Radius of the smallest origin-centred ball containing the support."""
        return float(np.linalg.norm(self.center)) + self.support_radius

    @property
    def fd_step(self) -> float:
        return PROFILE_FD_RELATIVE_STEP * self.support_radius

    @property
    def sup_value(self) -> float:
        return abs(self.amplitude)

    def with_amplitude(self, amplitude: float) -> "Profile":
        return Profile(self.kind, self.center, amplitude, self.radius,
                       self.inner_radius, self.outer_radius)


def bump(center: Sequence[float], radius: float, amplitude: float = 1.0) -> Profile:
    return Profile(BUMP, tuple(float(c) for c in center), float(amplitude), radius=float(radius))


def plateau(center: Sequence[float], inner_radius: float, outer_radius: float,
            amplitude: float = 1.0) -> Profile:
    return Profile(PLATEAU, tuple(float(c) for c in center), float(amplitude),
                   inner_radius=float(inner_radius), outer_radius=float(outer_radius))


def _as_points(p: Profile, x) -> np.ndarray:
    """Coerce x to shape (..., dim); scalars allowed in 1D."""
    arr = np.asarray(x, dtype=float)
    if p.dim == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != p.dim:
        raise ProfileError(f"points have dimension {arr.shape[-1]}, profile has {p.dim}")
    return arr


def _smoothstep(t: np.ndarray) -> np.ndarray:
    """S(t) = e(t) / (e(t) + e(1-t)) with e(t) = exp(-1/t) for t > 0."""
    out = np.where(t >= 1.0, 1.0, 0.0)
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    e0 = np.exp(-1.0 / tm)
    e1 = np.exp(-1.0 / (1.0 - tm))
    out[mid] = e0 / (e0 + e1)
    return out


def _radial_values(p: Profile, dist: np.ndarray) -> np.ndarray:
    out = np.zeros_like(dist)
    if p.kind == BUMP:
        q = 1.0 - (dist / p.radius) ** 2
        inside = q > 0.0
        out[inside] = p.amplitude * np.exp(1.0 - 1.0 / q[inside])
        return out

    inside = dist < p.outer_radius
    t = (p.outer_radius - dist[inside]) / (p.outer_radius - p.inner_radius)
    out[inside] = p.amplitude * _smoothstep(t)
    out[dist <= p.inner_radius] = p.amplitude
    return out


def profile_eval(p: Profile, x) -> np.ndarray:
    """
    Evaluate a profile at one or many points.

    Args:
        p: Profile
        x: Point(s), shape (..., dim); plain scalars/arrays are accepted in 1D

    Returns:
        Real values, shape (...); exactly 0 outside the support
    """
    pts = _as_points(p, x)
    dist = np.linalg.norm(pts - np.asarray(p.center), axis=-1)
    return _radial_values(p, np.asarray(dist, dtype=float))


def _shifted(p: Profile, pts: np.ndarray, axis: int, step: float) -> np.ndarray:
    shifted = pts.copy()
    shifted[..., axis] += step
    return profile_eval(p, shifted)


def profile_gradient(p: Profile, x) -> np.ndarray:
    """Gradient by 4th-order centred differences with step eta; shape (..., dim)."""
    return profile_derivatives(p, x)[1]


def profile_laplacian(p: Profile, x) -> np.ndarray:
    """Laplacian by 4th-order centred differences with step eta, summed over axes."""
    return profile_derivatives(p, x)[2]


def profile_derivatives(p: Profile, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Value, gradient and Laplacian from one shared set of stencil evaluations.

    profile_gradient and profile_laplacian are slices of this result.

    Returns:
        (values (...), gradient (..., dim), laplacian (...))
    """
    pts = _as_points(p, x)
    eta = p.fd_step
    center = profile_eval(p, pts)
    lap = np.zeros_like(center)
    grads = []
    for axis in range(p.dim):
        fp1 = _shifted(p, pts, axis, eta)
        fm1 = _shifted(p, pts, axis, -eta)
        fp2 = _shifted(p, pts, axis, 2 * eta)
        fm2 = _shifted(p, pts, axis, -2 * eta)
        grads.append((-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * eta))
        lap += (-fp2 + 16.0 * fp1 - 30.0 * center + 16.0 * fm1 - fm2) / (12.0 * eta ** 2)
    return center, np.stack(grads, axis=-1), lap
