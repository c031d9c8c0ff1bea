"""Experiment orchestrator: per-h runs, convergence sweeps, recovery experiments and artifacts."""

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from itertools import repeat
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .ansatz import PhaseIntegralCache, a1_diagnostics, assemble_uN, assemble_v, solve_a1
from .config import CHECK_TIME_FRACTIONS, MIN_SWEEP_ENTRIES
from .errors import ConfigError
from .experiment_config import ExperimentConfig, emit_config
from .fields import dump_field, make_grid, sup_norm_diff
from .recovery import (
    AlphaReconstruction,
    RecoveryResult,
    measurement_paths,
    reconstruct_alpha,
    recover_sinogram,
    recover_xalpha,
)
from .report import SweepReport, write_gnuplot_curves, write_summary, write_sweep_csv
from .solver import EvolutionResult, derive_grid, evolve, save_diagnostics
from .xray import fbp_invert_2d, forward_sinogram, reconstruction_error, save_sinogram, uniform_thetas, xray_transform

COMPARE_COLUMNS = ["t", "t_prime", "err_v", "err_u1"]


def get_run_log(out_dir: Path) -> Path:
    """Get path to the run log of an output directory."""
    return Path(out_dir) / ".run_log.json"


def load_run_log(out_dir: Path) -> dict:
    """Load the log of written artifacts."""
    log_file = get_run_log(out_dir)
    if log_file.exists():
        try:
            with open(log_file, "r") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError):
            return {}
    return {}


def save_run_log(out_dir: Path, log: dict):
    """Save the log of written artifacts."""
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    with open(get_run_log(out_dir), "w") as f:
        json.dump(log, f, indent=2)


def get_file_info(file_path: Path, command: str) -> dict:
    """Get file modification time and size."""
    stat = file_path.stat()
    return {
        "command": command,
        "modified_time": stat.st_mtime,
        "size": stat.st_size,
        "written_time": datetime.now().isoformat(),
    }


def record_artifacts(out_dir: Path, command: str, paths: Sequence[Path]) -> None:
    """Add written artifacts to the run log of out_dir."""
    log = load_run_log(out_dir)
    for path in paths:
        log[str(path)] = get_file_info(Path(path), command)
    save_run_log(out_dir, log)


def check_times(config: ExperimentConfig) -> List[float]:
    """Lab times -Th, 0, Th/2, Th."""
    return [fraction * config.window for fraction in CHECK_TIME_FRACTIONS]


def compare_snapshots(config: ExperimentConfig, evolution: EvolutionResult,
                      with_u1: bool = True) -> pd.DataFrame:
    """sup |u - v| and sup |u - u1| at every stored snapshot."""
    times = sorted(evolution.snapshots)
    grid = evolution.final.grid
    cache = PhaseIntegralCache(config, grid)
    correction = solve_a1(config, grid, times) if with_u1 else None

    rows = []
    for t in times:
        u = evolution.snapshots[t]
        v = assemble_v(config, t, grid, cache)
        row = {"t": t, "t_prime": t / config.h, "err_v": sup_norm_diff(u, v), "err_u1": np.nan}
        if with_u1:
            u1 = assemble_uN(config, t, grid, N=1, correction=correction, cache=cache)
            row["err_u1"] = sup_norm_diff(u, u1)
        rows.append(row)
    return pd.DataFrame(rows, columns=COMPARE_COLUMNS)


def run_sweep_entry(config: ExperimentConfig, with_v: bool = True, with_u1: bool = True,
                    with_recovery: bool = True) -> Tuple[dict, Optional[RecoveryResult]]:
    """
    One h of a sweep: evolve, compare against the ansatz, recover X alpha.

    Returns:
        (row for the sweep table, recovery result or None)
    """
    start = time.perf_counter()
    evolution = evolve(config, snapshot_times=check_times(config) if with_v else ())
    row = {
        "h": config.h,
        "mass_drift": evolution.mass_drift,
        "energy_drift": evolution.energy_drift,
    }
    if with_v:
        compare = compare_snapshots(config, evolution, with_u1=with_u1)
        row["err_v"] = float(compare["err_v"].max())
        row["err_u1"] = float(compare["err_u1"].max()) if with_u1 else np.nan

    result = None
    if with_recovery:
        result = recover_xalpha(config, mode="solver", u_final=evolution.final)
        row["err_xalpha"] = result.sup_error

    row["wall_s"] = time.perf_counter() - start if config.wall_time else 0.0
    return row, result


def _check_h_list(h_list: Sequence[float]) -> List[float]:
    h_list = [float(h) for h in h_list]
    if len(h_list) < MIN_SWEEP_ENTRIES:
        raise ConfigError(f"sweep needs at least {MIN_SWEEP_ENTRIES} h values")
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ConfigError("sweep h values must be strictly decreasing")
    return h_list


def _run_entries(configs: List[ExperimentConfig], workers: int, verbose: bool, **flags):
    if workers > 1 and len(configs) > 1:
        if verbose:
            print(f"Running {len(configs)} entries on {workers} workers")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_sweep_entry, configs,
                                 repeat(flags.get("with_v", True)),
                                 repeat(flags.get("with_u1", True)),
                                 repeat(flags.get("with_recovery", True))))
    out = []
    for cfg in tqdm(configs, desc="sweep", disable=not verbose):
        out.append(run_sweep_entry(cfg, **flags))
        if verbose:
            row = out[-1][0]
            print(f"  h={cfg.h:g}: " + ", ".join(
                f"{k}={row[k]:.3e}" for k in ("err_v", "err_u1", "err_xalpha") if k in row))
    return out


def run_convergence_sweep(
    config: ExperimentConfig,
    h_list: Optional[Sequence[float]] = None,
    workers: Optional[int] = None,
    with_u1: bool = True,
    with_recovery: bool = True,
    verbose: bool = False,
) -> SweepReport:
    """
    Errors of v, u1 and the recovered X alpha over a decreasing list of h.

    Args:
        config: Validated experiment (h is replaced per entry)
        h_list: Strictly decreasing, at least three values; defaults to sweep.h
        workers: Processes; defaults to sweep.workers
        with_u1: Also assemble u1 = v + h^{1/2} (phase) a1
        with_recovery: Also run the end-to-end X alpha recovery
        verbose: Print progress

    Returns:
        SweepReport ordered by decreasing h

    Raises:
        ConfigError: If h_list is too short or not strictly decreasing
    """
    h_list = _check_h_list(h_list if h_list is not None else config.sweep_h)
    configs = [config.with_h(h) for h in h_list]
    entries = _run_entries(configs, workers or config.sweep_workers, verbose,
                           with_v=True, with_u1=with_u1, with_recovery=with_recovery)
    report = SweepReport.from_rows([row for row, _ in entries],
                                   degenerate=config.alpha.amplitude == 0.0)
    if not report.monotone("err_v"):
        report.notes.append("err_v is not monotone in h")
    if with_u1 and not bool(np.all(report.table["err_u1"] < report.table["err_v"])):
        report.notes.append("u1 does not improve on v at every h")
    return report


@dataclass
class RecoveryExperiment:
    """Artifacts of run_recovery_experiment."""

    results: List[RecoveryResult]
    reconstruction: Optional[AlphaReconstruction] = None
    report: Optional[SweepReport] = None
    results_by_h: Dict[float, RecoveryResult] = field(default_factory=dict)


def run_recovery_experiment(
    config: ExperimentConfig,
    h_list: Optional[Sequence[float]] = None,
    mode: Optional[str] = None,
    workers: Optional[int] = None,
    verbose: bool = False,
) -> RecoveryExperiment:
    """
    Recover X alpha (and alpha) end to end, optionally over an h-sweep.

    d=1 recovers along +xi and differentiates; d=2 recovers +-xi over the
    configured angles and inverts by FBP. With h_list (d=1, solver mode) every
    entry runs the solver and the sweep report fits the X alpha error slope.
    """
    mode = mode or config.recovery_mode

    if config.dim == 2:
        results = recover_sinogram(config, mode=mode, verbose=verbose)
        reconstruction = reconstruct_alpha(results, 2, config)
        if verbose:
            print(f"FBP reconstruction: relative L2 {reconstruction.relative_l2:.3%}, sup {reconstruction.sup:.3e}")
        return RecoveryExperiment(results=results, reconstruction=reconstruction)

    if h_list:
        h_list = _check_h_list(h_list)
        configs = [config.with_h(h) for h in h_list]
        if mode == "solver":
            entries = _run_entries(configs, workers or config.sweep_workers, verbose,
                                   with_v=False, with_u1=False, with_recovery=True)
        else:
            entries = []
            for cfg in configs:
                start = time.perf_counter()
                result = recover_xalpha(cfg, mode=mode)
                entries.append(({"h": cfg.h, "err_xalpha": result.sup_error,
                                 "wall_s": time.perf_counter() - start if cfg.wall_time else 0.0}, result))
        report = SweepReport.from_rows([row for row, _ in entries],
                                       degenerate=config.alpha.amplitude == 0.0)
        by_h = {row["h"]: result for row, result in entries}
        finest = by_h[min(by_h)]
        reconstruction = reconstruct_alpha([finest], 1, config)
        return RecoveryExperiment(results=[finest], reconstruction=reconstruction,
                                  report=report, results_by_h=by_h)

    result = recover_xalpha(config, mode=mode, verbose=verbose)
    reconstruction = reconstruct_alpha([result], 1, config)
    if verbose:
        print(f"alpha reconstruction: sup error {reconstruction.sup:.3e}")
    return RecoveryExperiment(results=[result], reconstruction=reconstruction,
                              results_by_h={config.h: result})


def _write_csv(df: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g")
    return path


def _write_config(config: ExperimentConfig, out_dir: Path) -> Path:
    path = out_dir / "config.cfg"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit_config(config), encoding="utf-8")
    return path


def solve_to_dir(config: ExperimentConfig, out_dir: Path, verbose: bool = False) -> List[Path]:
    """Final field, diagnostics and optional strided snapshots."""
    out_dir = Path(out_dir)
    evolution = evolve(config, snapshot_dir=out_dir / "snapshots", verbose=verbose)
    final = out_dir / "u_final.nlsf"
    dump_field(evolution.final, final)
    diagnostics = out_dir / "diagnostics.csv"
    save_diagnostics(evolution, diagnostics)
    return [_write_config(config, out_dir), final, diagnostics] + list(evolution.snapshot_files)


def ansatz_to_dir(config: ExperimentConfig, out_dir: Path, verbose: bool = False) -> List[Path]:
    """v and a1 at the check times plus the a1 residual table."""
    out_dir = Path(out_dir)
    grid = derive_grid(config)
    times = check_times(config)
    cache = PhaseIntegralCache(config, grid)
    correction = solve_a1(config, grid, times, verbose=verbose)
    paths = [_write_config(config, out_dir)]
    for k, t in enumerate(times):
        v_path = out_dir / f"v_{k}.nlsf"
        dump_field(assemble_v(config, t, grid, cache), v_path)
        a1_path = out_dir / f"a1_{k}.nlsf"
        dump_field(correction.fields[k], a1_path)
        paths += [v_path, a1_path]
    diag = a1_diagnostics(config, grid, correction.times_prime)
    paths.append(_write_csv(diag, out_dir / "a1_diagnostics.csv"))
    return paths


def compare_to_dir(config: ExperimentConfig, out_dir: Path, verbose: bool = False) -> List[Path]:
    """Solver against v and u1 at the check times."""
    out_dir = Path(out_dir)
    evolution = evolve(config, snapshot_times=check_times(config), verbose=verbose)
    compare = compare_snapshots(config, evolution)
    if verbose:
        print(compare.to_string(index=False))
    final = out_dir / "u_final.nlsf"
    dump_field(evolution.final, final)
    return [_write_config(config, out_dir), final,
            _write_csv(compare, out_dir / "compare.csv"),
            _write_csv(evolution.diagnostics, out_dir / "diagnostics.csv")]


def xray_to_dir(config: ExperimentConfig, out_dir: Path, verbose: bool = False) -> List[Path]:
    """
    Ground-truth transforms: X alpha along the measurement path (d=1), or the
    full-line sinogram with its FBP reconstruction (d=2).
    """
    out_dir = Path(out_dir)
    paths = [_write_config(config, out_dir)]
    if config.dim == 1:
        points, _ = measurement_paths(config, config.xi_array)[0]
        values = xray_transform(config.alpha, points, config.xi_array, support_radius=config.T0)
        frame = pd.DataFrame({"x0_1": points[:, 0], "xalpha": values})
        paths.append(_write_csv(frame, out_dir / "xray.csv"))
        return paths

    m = config.measure
    offsets = np.linspace(-m.offset_max, m.offset_max, m.offsets)
    sino = forward_sinogram(config.alpha, uniform_thetas(m.angles), offsets, support_radius=config.T0)
    sino_path = out_dir / "sinogram.csv"
    save_sinogram(sino, sino_path)
    n = 1 << int(np.ceil(np.log2(m.offsets)))
    recon = fbp_invert_2d(sino, make_grid(2, [(-m.offset_max, m.offset_max)] * 2, [n, n]))
    errors = reconstruction_error(recon, config.alpha, 1.5 * config.alpha.support_radius)
    if verbose:
        print(f"FBP of exact sinogram: relative L2 {errors['relative_l2']:.3%}")
    recon_path = out_dir / "alpha_fbp.nlsf"
    dump_field(recon, recon_path)
    error_path = _write_csv(pd.DataFrame([errors]), out_dir / "fbp_error.csv")
    return paths + [sino_path, recon_path, error_path]


def recover_to_dir(config: ExperimentConfig, out_dir: Path, h_list: Optional[Sequence[float]] = None,
                   verbose: bool = False) -> List[Path]:
    """Recovery tables, reconstructed alpha and (with h_list) the X alpha sweep."""
    out_dir = Path(out_dir)
    experiment = run_recovery_experiment(config, h_list=h_list, verbose=verbose)
    paths = [_write_config(config, out_dir)]

    frames = []
    for result in experiment.results:
        frame = result.to_frame()
        if config.dim == 2:
            for i, component in enumerate(result.xi):
                frame[f"xi_{i + 1}"] = component
        frames.append(frame)
    paths.append(_write_csv(pd.concat(frames, ignore_index=True), out_dir / "recovery.csv"))

    reconstruction = experiment.reconstruction
    if reconstruction is not None:
        if config.dim == 1:
            paths.append(_write_csv(reconstruction.to_frame(), out_dir / "alpha.csv"))
        else:
            alpha_path = out_dir / "alpha.nlsf"
            dump_field(reconstruction.field, alpha_path)
            paths.append(alpha_path)
            paths.append(_write_csv(pd.DataFrame([{"relative_l2": reconstruction.relative_l2,
                                                   "sup": reconstruction.sup}]),
                                    out_dir / "fbp_error.csv"))

    if experiment.report is not None:
        paths.append(write_sweep_csv(experiment.report, out_dir / "sweep.csv"))
        paths.append(write_summary(experiment.report, out_dir / "summary.txt", title="X alpha recovery sweep"))
        paths += write_gnuplot_curves(experiment.report, out_dir)
    return paths


def sweep_to_dir(config: ExperimentConfig, out_dir: Path, h_list: Optional[Sequence[float]] = None,
                 verbose: bool = False) -> List[Path]:
    """sweep.csv, summary.txt and one gnuplot data file per error curve."""
    out_dir = Path(out_dir)
    report = run_convergence_sweep(config, h_list=h_list, verbose=verbose)
    paths = [_write_config(config, out_dir),
             write_sweep_csv(report, out_dir / "sweep.csv"),
             write_summary(report, out_dir / "summary.txt", title="Convergence sweep")]
    return paths + write_gnuplot_curves(report, out_dir)
