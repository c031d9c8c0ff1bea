"""Sweep tables, log-log slope fits and the text / gnuplot writers."""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .config import EXPECTED_MIN_SLOPES, MIN_SWEEP_ENTRIES, SLOPE_RESIDUAL_LIMIT

SWEEP_COLUMNS = ["h", "err_v", "err_u1", "err_xalpha", "slope_v_running",
                 "mass_drift", "energy_drift", "wall_s"]
ERROR_CURVES = ("err_v", "err_u1", "err_xalpha")

RATE_NOT_ESTABLISHED = "rate not established"
DEGENERATE = "degenerate"


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through (log h, log err)."""

    slope: float
    intercept: float
    residual: float
    points: int
    flag: str = ""

    @property
    def constant(self) -> float:
        """C in err ~ C h^slope."""
        return math.exp(self.intercept) if np.isfinite(self.intercept) else float("nan")


def fit_slope(h: Sequence[float], errors: Sequence[float], degenerate: bool = False) -> SlopeFit:
    """
    Fit log err = slope * log h + intercept.

    Args:
        h: Step values
        errors: Errors, NaN entries skipped
        degenerate: Force the "degenerate" tag (nothing to converge to)

    Returns:
        SlopeFit whose residual is the RMS of the log residuals; flagged
        "rate not established" above 0.3 and "degenerate" when any error is 0

    Raises:
        ValueError: With fewer than three usable points
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(errors, dtype=float)
    keep = np.isfinite(err)
    if keep.sum() < MIN_SWEEP_ENTRIES:
        raise ValueError(f"slope fit needs at least {MIN_SWEEP_ENTRIES} points")
    h, err = h[keep], err[keep]

    if degenerate or np.any(err <= 0.0):
        safe = np.maximum(err, np.finfo(float).tiny)
        slope, intercept = np.polyfit(np.log(h), np.log(safe), 1)
        return SlopeFit(float(slope), float(intercept), float("nan"), len(h), DEGENERATE)

    x, y = np.log(h), np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    flag = RATE_NOT_ESTABLISHED if residual > SLOPE_RESIDUAL_LIMIT else ""
    return SlopeFit(float(slope), float(intercept), residual, len(h), flag)


def running_slopes(h: Sequence[float], errors: Sequence[float]) -> np.ndarray:
    """Slope between consecutive sweep entries; first entry NaN."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(errors, dtype=float)
    out = np.full(len(h), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log(err[1:] / err[:-1]) / np.log(h[1:] / h[:-1])
    out[~np.isfinite(out)] = np.nan
    return out


@dataclass
class SweepReport:
    """Per-h rows plus fitted slopes for every error curve that has data."""

    table: pd.DataFrame
    fits: Dict[str, SlopeFit] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows: List[dict], degenerate: bool = False) -> "SweepReport":
        table = pd.DataFrame(rows)
        for column in SWEEP_COLUMNS:
            if column not in table.columns:
                table[column] = np.nan
        table = table.sort_values("h", ascending=False).reset_index(drop=True)
        table["slope_v_running"] = running_slopes(table["h"], table["err_v"])
        table = table[SWEEP_COLUMNS]

        fits, notes = {}, []
        for curve in ERROR_CURVES:
            if table[curve].notna().sum() < MIN_SWEEP_ENTRIES:
                continue
            fit = fit_slope(table["h"], table[curve], degenerate=degenerate)
            expected = EXPECTED_MIN_SLOPES.get(curve)
            if expected is not None and not fit.flag and fit.slope < expected:
                fit = replace(fit, flag=RATE_NOT_ESTABLISHED)
                notes.append(f"{curve} slope {fit.slope:.3f} is below {expected:g} over this h range")
            fits[curve] = fit
        return cls(table=table, fits=fits, notes=notes)

    def slope(self, curve: str) -> float:
        return self.fits[curve].slope

    def monotone(self, curve: str) -> bool:
        """Errors strictly decrease with h."""
        values = self.table[curve].to_numpy()
        return bool(np.all(np.diff(values) < 0))


def write_sweep_csv(report: SweepReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.table.to_csv(path, index=False, float_format="%.17g")
    return path


def summary_text(report: SweepReport, title: Optional[str] = None) -> str:
    lines = []
    if title:
        lines.append(title)
    lines.append(f"entries: {len(report.table)}")
    lines.append("h: " + ", ".join(repr(float(h)) for h in report.table["h"]))
    for curve, fit in report.fits.items():
        status = fit.flag or "ok"
        lines.append(
            f"slope_{curve[4:]} = {fit.slope:.6f}  constant = {fit.constant:.6g}  "
            f"residual = {fit.residual:.6f}  points = {fit.points}  [{status}]"
        )
    for curve in ERROR_CURVES:
        if curve in report.fits:
            continue
        lines.append(f"slope_{curve[4:]} = n/a")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def write_summary(report: SweepReport, path: Union[str, Path], title: Optional[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(summary_text(report, title), encoding="utf-8")
    return path


def write_gnuplot_curves(report: SweepReport, out_dir: Union[str, Path]) -> List[Path]:
    """One two-column file (h, error) per curve with data."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for curve in ERROR_CURVES:
        data = report.table[["h", curve]].dropna()
        if data.empty:
            continue
        path = out_dir / f"{curve}.dat"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# h {curve}\n")
            data.to_csv(fh, sep=" ", header=False, index=False, float_format="%.17g")
        written.append(path)
    return written
