"""Uniform periodic grids, complex fields, spectral operators and the NLSF format."""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from .config import FIELD_MAGIC, FIELD_VERSION, MIN_GRID_POINTS
from .errors import FieldFormatError, GridError

_HEADER = struct.Struct("<4sII")
_AXIS = struct.Struct("<Qdd")


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class FieldGrid:
    """Uniform periodic rectangular grid; index n_i wraps to index 0."""

    dim: int
    counts: Tuple[int, ...]
    x_min: Tuple[float, ...]
    dx: Tuple[float, ...]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def lengths(self) -> Tuple[float, ...]:
        return tuple(n * d for n, d in zip(self.counts, self.dx))

    @property
    def x_max(self) -> Tuple[float, ...]:
        return tuple(lo + length for lo, length in zip(self.x_min, self.lengths))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    def axes(self) -> List[np.ndarray]:
        """Node coordinates along each axis."""
        return [lo + d * np.arange(n) for n, lo, d in zip(self.counts, self.x_min, self.dx)]

    def mesh(self) -> np.ndarray:
        """All node coordinates, shape counts + (dim,)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def wavenumbers(self) -> List[np.ndarray]:
        """Angular wavenumbers 2*pi*m/L in FFT order, Nyquist mode at -n/2."""
        return [2.0 * np.pi * np.fft.fftfreq(n, d=d) for n, d in zip(self.counts, self.dx)]

    def k_squared(self) -> np.ndarray:
        """|k|^2 on the FFT layout."""
        ks = np.meshgrid(*self.wavenumbers(), indexing="ij")
        return sum(k * k for k in ks)

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the box shrunk by margin."""
        pts = np.atleast_2d(points)
        lo = np.asarray(self.x_min) + margin
        hi = np.asarray(self.x_max) - margin
        return np.all((pts >= lo) & (pts <= hi), axis=-1)


def make_grid(dim: int, extents: Sequence[Tuple[float, float]], counts: Sequence[int]) -> FieldGrid:
    """
    Build a uniform periodic grid.

    Args:
        dim: Spatial dimension, 1, 2 or 3
        extents: Per-axis (x_min, x_max)
        counts: Per-axis node counts, powers of two >= 8

    Returns:
        FieldGrid with dx_i = (x_max_i - x_min_i) / n_i

    Raises:
        GridError: If the dimension, extents or counts are invalid
    """
    if dim not in (1, 2, 3):
        raise GridError(f"dim must be 1, 2 or 3, got {dim}")
    if len(extents) != dim or len(counts) != dim:
        raise GridError(f"expected {dim} extents and counts, got {len(extents)} and {len(counts)}")

    x_min, dx = [], []
    for (lo, hi), n in zip(extents, counts):
        n = int(n)
        if not _is_power_of_two(n) or n < MIN_GRID_POINTS:
            raise GridError(f"grid count {n} is not a power of two >= {MIN_GRID_POINTS}")
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise GridError(f"degenerate extent ({lo}, {hi})")
        x_min.append(float(lo))
        dx.append((float(hi) - float(lo)) / n)

    return FieldGrid(dim=dim, counts=tuple(int(n) for n in counts), x_min=tuple(x_min), dx=tuple(dx))


class ComplexField:
    """Complex samples on a FieldGrid; read-only once constructed."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: FieldGrid, values: np.ndarray):
        arr = np.array(values, dtype=np.complex128, order="C")
        if arr.size != grid.size:
            raise GridError(f"field has {arr.size} values, grid has {grid.size} nodes")
        arr = arr.reshape(grid.shape)
        if not np.all(np.isfinite(arr)):
            raise GridError("field contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ComplexField is immutable")

    def __repr__(self) -> str:
        return f"ComplexField(grid={self.grid!r})"

    @classmethod
    def zeros(cls, grid: FieldGrid) -> "ComplexField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    def conj(self) -> "ComplexField":
        return ComplexField(self.grid, np.conj(self.values))

    def scaled(self, factor: complex) -> "ComplexField":
        return ComplexField(self.grid, factor * self.values)

    def __add__(self, other: "ComplexField") -> "ComplexField":
        _require_same_grid(self, other)
        return ComplexField(self.grid, self.values + other.values)

    def __sub__(self, other: "ComplexField") -> "ComplexField":
        _require_same_grid(self, other)
        return ComplexField(self.grid, self.values - other.values)


def _require_same_grid(a: ComplexField, b: ComplexField) -> None:
    if a.grid != b.grid:
        raise GridError("fields live on different grids")


def laplacian(f: ComplexField) -> ComplexField:
    """Spectral Laplacian: multiply mode k by -|k|^2."""
    spectrum = np.fft.fftn(f.values)
    return ComplexField(f.grid, np.fft.ifftn(-f.grid.k_squared() * spectrum))


def gradient(f: ComplexField) -> List[ComplexField]:
    """Spectral gradient, one field per axis."""
    spectrum = np.fft.fftn(f.values)
    ks = np.meshgrid(*f.grid.wavenumbers(), indexing="ij")
    return [ComplexField(f.grid, np.fft.ifftn(1j * k * spectrum)) for k in ks]


def sup_norm_diff(a: ComplexField, b: ComplexField) -> float:
    """Max over nodes of |a - b|."""
    _require_same_grid(a, b)
    return float(np.max(np.abs(a.values - b.values)))


def l2_norm(f: ComplexField) -> float:
    """Discrete L2 norm sqrt(sum |f|^2 * cell volume)."""
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * f.grid.cell_volume))


def fourier_interpolate(f: ComplexField, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """
    Evaluate the trigonometric interpolant of f at arbitrary points.

    Args:
        f: Field to interpolate
        points: Array of shape (M, dim) (or (M,) in 1D)
        chunk: Points processed per batch

    Returns:
        Complex array of shape (M,)
    """
    grid = f.grid
    pts = np.asarray(points, dtype=float).reshape(-1, grid.dim)
    spectrum = np.fft.fftn(f.values) / grid.size
    ks = grid.wavenumbers()

    out = np.empty(len(pts), dtype=np.complex128)
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk]
        # Contract one axis at a time: (m, k1, k2, ...) -> (m, k2, ...) -> ... -> (m,)
        phase = np.exp(1j * np.outer(block[:, 0] - grid.x_min[0], ks[0]))
        acc = np.tensordot(phase, spectrum, axes=([1], [0]))
        for axis in range(1, grid.dim):
            phase = np.exp(1j * np.outer(block[:, axis] - grid.x_min[axis], ks[axis]))
            acc = np.einsum("mk,mk...->m...", phase, acc)
        out[start:start + chunk] = acc
    return out


def sample_function(grid: FieldGrid, func) -> ComplexField:
    """Sample a vectorised function of points (shape (..., dim)) on every node."""
    return ComplexField(grid, func(grid.mesh()))


def dump_field(f: ComplexField, path: Union[str, Path]) -> None:
    """
    Write a field in NLSF format.

    Layout: magic "NLSF", u32 version, u32 dim, per axis (u64 n, f64 x_min, f64 dx),
    then little-endian interleaved (re, im) f64 samples, last axis fastest.

    Args:
        f: Field to write
        path: Destination path
    """
    grid = f.grid
    parts = [_HEADER.pack(FIELD_MAGIC, FIELD_VERSION, grid.dim)]
    for n, lo, d in zip(grid.counts, grid.x_min, grid.dx):
        parts.append(_AXIS.pack(n, lo, d))
    parts.append(np.ascontiguousarray(f.values).astype("<c16").tobytes())

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_field(path: Union[str, Path]) -> ComplexField:
    """
    Read a field written by dump_field.

    Args:
        path: Source path

    Returns:
        The stored ComplexField, bit-exact

    Raises:
        FieldFormatError: On magic, version or size mismatch
        OSError: If the file cannot be read
    """
    with open(path, "rb") as fh:
        raw = fh.read()

    if len(raw) < _HEADER.size:
        raise FieldFormatError(f"{path}: size mismatch, file shorter than header")
    magic, version, dim = _HEADER.unpack_from(raw, 0)
    if magic != FIELD_MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    if version != FIELD_VERSION:
        raise FieldFormatError(f"{path}: unsupported version {version}")
    if dim not in (1, 2, 3):
        raise FieldFormatError(f"{path}: invalid dim {dim}")

    offset = _HEADER.size
    if len(raw) < offset + dim * _AXIS.size:
        raise FieldFormatError(f"{path}: size mismatch, truncated axis table")
    counts, x_min, dx = [], [], []
    for _ in range(dim):
        n, lo, d = _AXIS.unpack_from(raw, offset)
        offset += _AXIS.size
        counts.append(int(n))
        x_min.append(lo)
        dx.append(d)

    expected = int(np.prod(counts)) * 16
    if len(raw) - offset != expected:
        raise FieldFormatError(
            f"{path}: size mismatch, header promises {expected} payload bytes, found {len(raw) - offset}"
        )

    grid = FieldGrid(dim=dim, counts=tuple(counts), x_min=tuple(x_min), dx=tuple(dx))
    values = np.frombuffer(raw, dtype="<c16", offset=offset).reshape(grid.shape)
    return ComplexField(grid, values.astype(np.complex128))
