import math

import numpy as np
import pandas as pd
import pytest

from src.report import (
    DEGENERATE,
    RATE_NOT_ESTABLISHED,
    SWEEP_COLUMNS,
    SweepReport,
    fit_slope,
    running_slopes,
    summary_text,
    write_gnuplot_curves,
    write_summary,
    write_sweep_csv,
)

H = [0.2, 0.1, 0.05, 0.025]


def _rows():
    # shuffled on purpose; err_u1 left out
    return [
        {"h": h, "err_v": 2.0 * math.sqrt(h), "err_xalpha": 0.5 * h, "mass_drift": 1e-14,
         "energy_drift": 1e-9, "wall_s": 0.0}
        for h in (0.05, 0.2, 0.025, 0.1)
    ]


def test__fit_slope__exact_power_law():
    errors = [3.0 * h ** 0.5 for h in H]
    fit = fit_slope(H, errors)
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    assert fit.constant == pytest.approx(3.0, rel=1e-12)
    assert fit.residual < 1e-12
    assert fit.points == 4
    assert fit.flag == ""


def test__fit_slope__zero_error_is_degenerate():
    fit = fit_slope(H[:3], [0.1, 0.0, 0.05])
    assert fit.flag == DEGENERATE
    assert math.isnan(fit.residual)


def test__fit_slope__forced_degenerate():
    assert fit_slope(H, [1e-3, 1e-3, 1e-3, 1e-3], degenerate=True).flag == DEGENERATE


def test__fit_slope__noisy_rate_not_established():
    fit = fit_slope([0.4, 0.2, 0.1], [1.0, 0.01, 1.0])
    assert fit.residual > 0.3
    assert fit.flag == RATE_NOT_ESTABLISHED


def test__fit_slope__needs_three_points():
    with pytest.raises(ValueError):
        fit_slope([0.2, 0.1], [1.0, 0.5])
    with pytest.raises(ValueError):
        fit_slope([0.2, 0.1, 0.05], [1.0, np.nan, 0.5])


def test__running_slopes__between_neighbours():
    slopes = running_slopes([0.2, 0.1, 0.05], [0.04, 0.01, 0.0025])
    assert math.isnan(slopes[0])
    assert np.allclose(slopes[1:], 2.0, atol=1e-12)


def test__sweep_report__sorts_and_fills_columns():
    report = SweepReport.from_rows(_rows())
    assert list(report.table.columns) == SWEEP_COLUMNS
    assert list(report.table["h"]) == H
    assert report.table["err_u1"].isna().all()
    assert set(report.fits) == {"err_v", "err_xalpha"}
    assert report.slope("err_v") == pytest.approx(0.5, abs=1e-12)
    assert report.slope("err_xalpha") == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(report.table["slope_v_running"].iloc[1:], 0.5, atol=1e-12)
    assert report.monotone("err_v")


def test__sweep_report__detects_non_monotone():
    rows = _rows()
    rows[0]["err_v"] = 10.0
    assert not SweepReport.from_rows(rows).monotone("err_v")


def test__write_sweep_csv__exact_values(tmp_path):
    report = SweepReport.from_rows(_rows())
    path = write_sweep_csv(report, tmp_path / "out" / "sweep.csv")
    back = pd.read_csv(path, float_precision="round_trip")
    assert list(back.columns) == SWEEP_COLUMNS
    assert np.array_equal(back["err_v"].to_numpy(), report.table["err_v"].to_numpy())


def test__summary__lists_slopes_and_notes(tmp_path):
    report = SweepReport.from_rows(_rows())
    report.notes.append("u1 does not improve on v at every h")
    text = summary_text(report, title="Convergence sweep")
    assert text.startswith("Convergence sweep\n")
    assert "slope_v = 0.500000" in text
    assert "slope_u1 = n/a" in text
    assert "note: u1 does not improve" in text
    path = write_summary(report, tmp_path / "summary.txt")
    assert path.read_text(encoding="utf-8") == summary_text(report)


def test__gnuplot_curves__one_file_per_curve(tmp_path):
    report = SweepReport.from_rows(_rows())
    paths = write_gnuplot_curves(report, tmp_path)
    assert [p.name for p in paths] == ["err_v.dat", "err_xalpha.dat"]
    lines = paths[0].read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# h err_v"
    assert len(lines) == 1 + len(H)
    h, err = (float(v) for v in lines[1].split())
    assert (h, err) == (0.2, 2.0 * math.sqrt(0.2))


def test__sweep_report__shallow_err_v_is_not_established():
    # plateau regime: err_v barely moves with h
    rows = _rows()
    for row in rows:
        row["err_v"] = 0.9 * row["h"] ** 0.08
    report = SweepReport.from_rows(rows)
    assert report.fits["err_v"].residual < 0.3
    assert report.fits["err_v"].flag == RATE_NOT_ESTABLISHED
    assert report.fits["err_xalpha"].flag == ""
    assert report.notes == ["err_v slope 0.080 is below 0.45 over this h range"]
    assert "[rate not established]" in summary_text(report)
