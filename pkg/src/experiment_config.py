"""Experiment config files: parse, validate against the model hypotheses, emit."""

import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .config import (
    DEFAULT_A1_STEPS,
    DEFAULT_DT_FACTOR,
    DEFAULT_DX_FACTOR,
    DEFAULT_MASS_TOLERANCE,
    DEFAULT_MEASURE_SPACING,
    DEFAULT_WORKERS,
    OUTPUT_DIR,
)
from .errors import ConfigError, ProfileError
from .profiles import BUMP, PLATEAU, Profile

RECOVERY_MODES = ("solver", "ansatz", "synthetic")
NORMALIZE_MODES = ("constant", "profile")

REQUIRED_KEYS = ("dim", "h", "T", "T0", "R", "xi", "K", "alpha.kind", "alpha.center",
                 "alpha.amplitude", "psi.kind", "psi.center", "psi.amplitude")

# Optional keys and their defaults; None means "derive"
OPTIONAL_DEFAULTS = {
    "alpha.radius": None,
    "alpha.inner_radius": None,
    "alpha.outer_radius": None,
    "psi.radius": None,
    "psi.inner_radius": None,
    "psi.outer_radius": None,
    "grid.box": None,
    "grid.dx_factor": repr(DEFAULT_DX_FACTOR),
    "grid.padding": None,
    "solver.dt_factor": repr(DEFAULT_DT_FACTOR),
    "solver.mass_tolerance": repr(DEFAULT_MASS_TOLERANCE),
    "solver.snapshot_stride": "0",
    "ansatz.a1_steps": str(DEFAULT_A1_STEPS),
    "measure.x0_min": None,
    "measure.x0_max": None,
    "measure.spacing": repr(DEFAULT_MEASURE_SPACING),
    "measure.angles": "90",
    "measure.offsets": "401",
    "measure.offset_max": None,
    "measure.normalize": "constant",
    "recovery.mode": "solver",
    "sweep.h": None,
    "sweep.workers": str(DEFAULT_WORKERS),
    "output.dir": str(OUTPUT_DIR / "experiment"),
    "output.wall_time": "false",
}

VECTOR_KEYS = ("xi", "alpha.center", "psi.center")

_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


@dataclass(frozen=True)
class MeasureSpec:
    """Where the packet is measured: 1D x0 range, 2D angle/offset lattice."""

    x0_min: float
    x0_max: float
    spacing: float
    angles: int
    offsets: int
    offset_max: float
    normalize: str = "constant"


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment; every field is immutable and hashable."""

    dim: int
    h: float
    T: float
    T0: float
    R: float
    xi: Tuple[float, ...]
    K: float
    alpha: Profile
    psi: Profile
    box: Optional[Tuple[Tuple[float, float], ...]]
    dx_factor: float
    padding: float
    dt_factor: float
    mass_tolerance: float
    snapshot_stride: int
    a1_steps: int
    measure: MeasureSpec
    recovery_mode: str
    sweep_h: Tuple[float, ...]
    sweep_workers: int
    output_dir: str
    wall_time: bool

    @property
    def xi_array(self) -> np.ndarray:
        return np.asarray(self.xi, dtype=float)

    @property
    def window(self) -> float:
        """Half-length T*h of the lab time window."""
        return self.T * self.h

    def with_h(self, h: float) -> "ExperimentConfig":
        return validate_config(apply_overrides(config_to_raw(self), h=h), warn=False)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    Parse flat `key = value` text; `#` starts a comment.

    Raises:
        ConfigError: On malformed or duplicate lines
    """
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        raw[key] = value
    return raw


def load_config(path: Union[str, Path]) -> Dict[str, str]:
    """Read a config file into a raw mapping (OSError propagates when missing)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def _float(raw: Dict[str, str], key: str) -> float:
    try:
        value = float(raw[key])
    except ValueError:
        raise ConfigError(f"'{key}' must be a number, got '{raw[key]}'") from None
    if not np.isfinite(value):
        raise ConfigError(f"'{key}' must be finite")
    return value


def _int(raw: Dict[str, str], key: str) -> int:
    try:
        return int(raw[key])
    except ValueError:
        raise ConfigError(f"'{key}' must be an integer, got '{raw[key]}'") from None


def _vector(raw: Dict[str, str], key: str, dim: int) -> Tuple[float, ...]:
    try:
        values = tuple(float(v) for v in raw[key].split(","))
    except ValueError:
        raise ConfigError(f"'{key}' must be comma separated numbers") from None
    if len(values) != dim:
        raise ConfigError(f"'{key}' has {len(values)} components, dim is {dim}")
    return values


def _bool(raw: Dict[str, str], key: str) -> bool:
    value = raw[key].lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ConfigError(f"'{key}' must be true or false")


def _box(text: str, dim: int) -> Tuple[Tuple[float, float], ...]:
    axes = []
    for part in text.split(","):
        try:
            lo, hi = (float(v) for v in part.split(":"))
        except ValueError:
            raise ConfigError(f"grid.box axis '{part.strip()}' must be 'lo:hi'") from None
        if not lo < hi:
            raise ConfigError(f"grid.box axis '{part.strip()}' requires lo < hi")
        axes.append((lo, hi))
    if len(axes) != dim:
        raise ConfigError(f"grid.box has {len(axes)} axes, dim is {dim}")
    return tuple(axes)


def _profile(raw: Dict[str, str], prefix: str, dim: int) -> Profile:
    kind = raw[f"{prefix}.kind"].lower()
    center = _vector(raw, f"{prefix}.center", dim)
    amplitude = _float(raw, f"{prefix}.amplitude")

    def opt(name):
        key = f"{prefix}.{name}"
        return _float(raw, key) if raw.get(key) else None

    try:
        if kind == BUMP:
            return Profile(BUMP, center, amplitude, radius=opt("radius"))
        if kind == PLATEAU:
            return Profile(PLATEAU, center, amplitude, inner_radius=opt("inner_radius"),
                           outer_radius=opt("outer_radius"))
        return Profile(kind, center, amplitude)
    except ProfileError as e:
        raise ConfigError(f"{prefix}: {e}") from None


def _check_hypotheses(dim, h, T, T0, R, xi, K, alpha: Profile, psi: Profile) -> None:
    if not 0.0 < h < 1.0:
        raise ConfigError("requires 0 < h < 1")
    if abs(np.linalg.norm(xi) - 1.0) > 1e-12:
        raise ConfigError("requires |xi| = 1")
    if not T0 > 0.0 or not R > 0.0:
        raise ConfigError("requires T0 > 0 and R > 0")
    if not T > T0 / 2.0:
        raise ConfigError("requires T > T0/2")
    if K == 0.0:
        raise ConfigError("requires K != 0")
    if alpha.amplitude < 0.0:
        raise ConfigError("requires alpha >= 0")
    if alpha.support_extent > T0 * (1.0 + 1e-12):
        raise ConfigError("supp alpha must lie in B(0,T0)")
    if psi.kind != PLATEAU:
        raise ConfigError("psi must be a plateau profile")
    if psi.support_extent > R * (1.0 + 1e-12):
        raise ConfigError("supp psi must lie in B(0,R)")
    offset = float(np.linalg.norm(psi.center))
    if psi.amplitude == 0.0 or offset + T0 >= psi.outer_radius:
        raise ConfigError("psi must be nonzero on B(0,T0)")
    if offset + 2.0 * T0 > psi.inner_radius * (1.0 + 1e-12):
        raise ConfigError("psi must be constant on B(0,2T0)")
    if psi.amplitude != K:
        raise ConfigError("psi amplitude must equal K")


def validate_config(raw: Dict[str, str], warn: bool = True) -> ExperimentConfig:
    """
    Check a raw mapping against every hypothesis and build an ExperimentConfig.

    Args:
        raw: Mapping from load_config / parse_config_text
        warn: Emit the short-window warning when 4T < 3T0

    Returns:
        Frozen ExperimentConfig

    Raises:
        ConfigError: Naming the first violated condition
    """
    unknown = sorted(set(raw) - set(REQUIRED_KEYS) - set(OPTIONAL_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in REQUIRED_KEYS if not raw.get(k)]
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}")

    merged = {k: v for k, v in OPTIONAL_DEFAULTS.items() if v is not None}
    merged.update({k: v for k, v in raw.items() if v != ""})

    dim = _int(merged, "dim")
    if dim not in (1, 2, 3):
        raise ConfigError("requires dim in {1, 2, 3}")
    h, T, T0, R, K = (_float(merged, k) for k in ("h", "T", "T0", "R", "K"))
    xi = _vector(merged, "xi", dim)
    alpha = _profile(merged, "alpha", dim)
    psi = _profile(merged, "psi", dim)
    _check_hypotheses(dim, h, T, T0, R, np.asarray(xi), K, alpha, psi)

    box = _box(merged["grid.box"], dim) if merged.get("grid.box") else None
    dx_factor = _float(merged, "grid.dx_factor")
    padding = _float(merged, "grid.padding") if "grid.padding" in merged else 4.0 * R
    dt_factor = _float(merged, "solver.dt_factor")
    mass_tolerance = _float(merged, "solver.mass_tolerance")
    snapshot_stride = _int(merged, "solver.snapshot_stride")
    a1_steps = _int(merged, "ansatz.a1_steps")
    if not (dx_factor > 0 and dt_factor > 0 and mass_tolerance > 0 and padding >= 0):
        raise ConfigError("grid/solver factors must be positive")
    if snapshot_stride < 0 or a1_steps < 2:
        raise ConfigError("requires snapshot_stride >= 0 and a1_steps >= 2")

    measure = MeasureSpec(
        x0_min=_float(merged, "measure.x0_min") if "measure.x0_min" in merged else -2.0 * T0,
        x0_max=_float(merged, "measure.x0_max") if "measure.x0_max" in merged else 2.0 * T0,
        spacing=_float(merged, "measure.spacing"),
        angles=_int(merged, "measure.angles"),
        offsets=_int(merged, "measure.offsets"),
        offset_max=_float(merged, "measure.offset_max") if "measure.offset_max" in merged else 2.0 * T0,
        normalize=merged["measure.normalize"].lower(),
    )
    if not (measure.x0_min < measure.x0_max and measure.spacing > 0):
        raise ConfigError("measure requires x0_min < x0_max and spacing > 0")
    if measure.angles < 1 or measure.offsets < 2 or not measure.offset_max > 0:
        raise ConfigError("measure requires angles >= 1, offsets >= 2, offset_max > 0")
    if measure.normalize not in NORMALIZE_MODES:
        raise ConfigError(f"measure.normalize must be one of {NORMALIZE_MODES}")

    mode = merged["recovery.mode"].lower()
    if mode not in RECOVERY_MODES:
        raise ConfigError(f"recovery.mode must be one of {RECOVERY_MODES}")

    sweep_h: Tuple[float, ...] = ()
    if merged.get("sweep.h"):
        try:
            sweep_h = tuple(float(v) for v in merged["sweep.h"].split(","))
        except ValueError:
            raise ConfigError("'sweep.h' must be comma separated numbers") from None
        if any(not 0.0 < v < 1.0 for v in sweep_h):
            raise ConfigError("requires 0 < h < 1 for every sweep entry")
        if any(b >= a for a, b in zip(sweep_h, sweep_h[1:])):
            raise ConfigError("sweep.h must be strictly decreasing")
    workers = _int(merged, "sweep.workers")
    if workers < 1:
        raise ConfigError("sweep.workers must be >= 1")

    if warn and 4.0 * T < 3.0 * T0:
        warnings.warn("4T < 3T0: the measured phase misses part of some rays through supp alpha")

    return ExperimentConfig(
        dim=dim, h=h, T=T, T0=T0, R=R, xi=xi, K=K, alpha=alpha, psi=psi,
        box=box, dx_factor=dx_factor, padding=padding, dt_factor=dt_factor,
        mass_tolerance=mass_tolerance, snapshot_stride=snapshot_stride, a1_steps=a1_steps,
        measure=measure, recovery_mode=mode, sweep_h=sweep_h, sweep_workers=workers,
        output_dir=merged["output.dir"], wall_time=_bool(merged, "output.wall_time"),
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def _fmt_vector(values) -> str:
    return ",".join(_fmt(v) for v in values)


def _profile_raw(p: Profile, prefix: str) -> Dict[str, str]:
    out = {
        f"{prefix}.kind": p.kind,
        f"{prefix}.center": _fmt_vector(p.center),
        f"{prefix}.amplitude": _fmt(p.amplitude),
    }
    if p.kind == BUMP:
        out[f"{prefix}.radius"] = _fmt(p.radius)
    else:
        out[f"{prefix}.inner_radius"] = _fmt(p.inner_radius)
        out[f"{prefix}.outer_radius"] = _fmt(p.outer_radius)
    return out


def config_to_raw(config: ExperimentConfig) -> Dict[str, str]:
    """Inverse of validate_config: every field as exact text."""
    raw = {
        "dim": str(config.dim),
        "h": _fmt(config.h),
        "T": _fmt(config.T),
        "T0": _fmt(config.T0),
        "R": _fmt(config.R),
        "xi": _fmt_vector(config.xi),
        "K": _fmt(config.K),
    }
    raw.update(_profile_raw(config.alpha, "alpha"))
    raw.update(_profile_raw(config.psi, "psi"))
    if config.box is not None:
        raw["grid.box"] = ",".join(f"{_fmt(lo)}:{_fmt(hi)}" for lo, hi in config.box)
    m = config.measure
    raw.update({
        "grid.dx_factor": _fmt(config.dx_factor),
        "grid.padding": _fmt(config.padding),
        "solver.dt_factor": _fmt(config.dt_factor),
        "solver.mass_tolerance": _fmt(config.mass_tolerance),
        "solver.snapshot_stride": str(config.snapshot_stride),
        "ansatz.a1_steps": str(config.a1_steps),
        "measure.x0_min": _fmt(m.x0_min),
        "measure.x0_max": _fmt(m.x0_max),
        "measure.spacing": _fmt(m.spacing),
        "measure.angles": str(m.angles),
        "measure.offsets": str(m.offsets),
        "measure.offset_max": _fmt(m.offset_max),
        "measure.normalize": m.normalize,
        "recovery.mode": config.recovery_mode,
        "sweep.workers": str(config.sweep_workers),
        "output.dir": config.output_dir,
        "output.wall_time": "true" if config.wall_time else "false",
    })
    if config.sweep_h:
        raw["sweep.h"] = _fmt_vector(config.sweep_h)
    return raw


def emit_config(config: ExperimentConfig) -> str:
    """Render a config as `key = value` text that validates back to an equal config."""
    return "".join(f"{key} = {value}\n" for key, value in config_to_raw(config).items())


def _resize_vector(text: str, dim: int) -> str:
    parts = [p.strip() for p in text.split(",")]
    parts = parts[:dim] + ["0.0"] * max(0, dim - len(parts))
    return ",".join(parts)


def apply_overrides(raw: Dict[str, str], h: Optional[float] = None,
                    dim: Optional[int] = None) -> Dict[str, str]:
    """
    Apply CLI overrides to a raw mapping (returns a new mapping).

    Changing dim pads vector keys with zeros or truncates them; an explicit box
    repeats its last axis.
    """
    out = dict(raw)
    if h is not None:
        out["h"] = _fmt(h)
    if dim is not None:
        out["dim"] = str(int(dim))
        for key in VECTOR_KEYS:
            if out.get(key):
                out[key] = _resize_vector(out[key], int(dim))
        if out.get("grid.box"):
            axes = [a.strip() for a in out["grid.box"].split(",")]
            axes = axes[:dim] + [axes[-1]] * max(0, dim - len(axes))
            out["grid.box"] = ",".join(axes)
    return out


def replace_config(config: ExperimentConfig, **changes) -> ExperimentConfig:
    """dataclasses.replace for derived runs (finer dt, zero alpha) without re-validation."""
    return replace(config, **changes)
