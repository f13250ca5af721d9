"""Scenario runners behind the command line: spec in, metric rows and rasters out."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .config import ExperimentSpec, _centered_modes
from .simulation import (
    BerTask,
    EstimationTask,
    LinkScenario,
    PhaseMapCase,
    Row,
    SeTask,
    UccaScenario,
    _mean_ci,
    ber_rows,
    estimation_rows,
    estimation_sweep,
    parallel_map,
    run_ber_task,
    run_se_task,
    trial_seed,
)
from .synthesis import write_raster

COLUMNS = ("sweep", "x", "metric", "value", "ci_low", "ci_high")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return str(v)


def write_csv(rows, path) -> Path:
    """RFC-4180 CSV (CRLF line ends, minimal quoting) with the fixed column set."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _label(modes):
    return ",".join(str(m) for m in modes)


def _echo(echo, rows):
    if echo is None:
        return
    for r in rows:
        ci = "" if math.isnan(r.ci_low) else f" [{r.ci_low:.4g}, {r.ci_high:.4g}]"
        echo(f"{r.sweep} x={r.x} {r.metric}={r.value:.6g}{ci}")


# ---------------------------------------------------------------- estimator


def _estimation(spec: ExperimentSpec, workers, echo):
    pose, tx = spec.pose(), spec.array()
    scen = spec.scenario
    base = dict(pose=pose, tx=tx, rx=tx, prior=spec.distance_prior(), seed=None)
    points = []
    if scen in ("nmse_snr", "estimates"):
        sweep = "snr_db"
        tm, tk = tuple(spec.training_modes), spec.training_wavenumbers()
        for snr in spec.snr_db:
            points.append((snr, EstimationTask(modes=tm, wavenumbers=tk, snr_db=snr, **base)))
    elif scen == "nmse_modes":
        sweep = "training_modes"
        for u in spec.sweep_values:
            points.append((u, EstimationTask(modes=_centered_modes(u),
                                             wavenumbers=spec.training_wavenumbers(),
                                             snr_db=spec.snr_fixed_db, **base)))
    else:
        sweep = "training_subcarriers"
        for p in spec.sweep_values:
            points.append((p, EstimationTask(modes=tuple(spec.training_modes),
                                             wavenumbers=spec.training_wavenumbers(p),
                                             snr_db=spec.snr_fixed_db, **base)))
    results = estimation_sweep(points, spec.trials, spec.seed, 0, workers)
    rows = []
    for x, _ in points:
        pr = estimation_rows(sweep, x, results[x], pose, medians=scen == "estimates")
        _echo(echo, pr)
        rows += pr
    return rows


# ---------------------------------------------------------------- BER / SE


def _curves(spec: ExperimentSpec):
    """(data index, data modes, receiver, training modes, sweep label) per curve."""
    out = []
    for di, modes in enumerate(spec.data_mode_sets()):
        for rcv in spec.receivers:
            if rcv == "estimated":
                for tm in spec.training_mode_sets():
                    out.append((di, modes, rcv, tm, f"U{len(modes)}_estimated_Ut{len(tm)}"))
            else:
                out.append((di, modes, rcv, spec.training_mode_sets()[0],
                            f"U{len(modes)}_{rcv}"))
    return out


def _ber(spec: ExperimentSpec, workers, echo):
    tx, pose = spec.array(), spec.pose()
    curves = _curves(spec)
    tasks, index = [], []
    for di, modes, rcv, tm, label in curves:
        for si, snr in enumerate(spec.snr_db):
            sc = LinkScenario(tx, tx, pose, modes, spec.wavenumbers(), snr, rcv,
                              training_modes=tm, training_wavenumbers=spec.training_wavenumbers(),
                              prior=spec.distance_prior(), qam_order=spec.qam_order,
                              gain=spec.gain or "closed_form")
            for t in range(spec.trials):
                # shared across receivers: paired bits and noise
                tasks.append(BerTask(sc, spec.symbols, trial_seed(spec.seed, 1, di, si, t)))
            index.append((label, snr))
    counts = parallel_map(run_ber_task, tasks, workers)
    rows = []
    for i, (label, snr) in enumerate(index):
        pr = ber_rows(label, snr, counts[i * spec.trials:(i + 1) * spec.trials])
        _echo(echo, pr[:1])
        rows += pr
    return rows


def _se(spec: ExperimentSpec, workers, echo):
    ucca = spec.scenario == "se_ucca"
    pose = spec.pose()
    if ucca:
        arr = spec.ucca()
        gain = spec.gain or "model"
    else:
        arr = spec.array()
        gain = spec.gain or "closed_form"
    curves = _curves(spec)
    tasks, index = [], []
    for di, modes, rcv, tm, label in curves:
        # fixed receivers have no randomness: a single trial suffices
        trials = spec.trials if rcv == "estimated" else 1
        overhead = spec.overhead(tm)
        for si, snr in enumerate(spec.snr_db):
            kw = dict(training_modes=tm, training_wavenumbers=spec.training_wavenumbers(),
                      prior=spec.distance_prior(), gain=gain)
            if ucca:
                sc = UccaScenario(arr, arr, pose, modes, spec.wavenumbers(), snr, rcv, **kw)
            else:
                sc = LinkScenario(arr, arr, pose, modes, spec.wavenumbers(), snr, rcv, **kw)
            for t in range(trials):
                tasks.append(SeTask(sc, overhead, trial_seed(spec.seed, 2, di, si, t),
                                    spec.se_cap_db))
            index.append((label, snr, trials))
    values = parallel_map(run_se_task, tasks, workers)
    rows, pos = [], 0
    for label, snr, trials in index:
        chunk = values[pos:pos + trials]
        pos += trials
        if trials > 1:
            row = Row(label, snr, "se", *_mean_ci(chunk))
        else:
            row = Row(label, snr, "se", float(chunk[0]))
        _echo(echo, [row])
        rows.append(row)
    if ucca:
        pilots = spec.mimo_pilots or arr.element_count * arr.ring_count
        modes = spec.data_mode_sets()[0]
        for snr in spec.snr_db:
            # same misaligned channel and noise calibration as the OAM curves
            sc = UccaScenario(arr, arr, pose, modes, spec.wavenumbers(), snr, "true")
            row = Row("mimo_ofdm", snr, "se", sc.mimo_baseline(pilots, spec.coherence))
            _echo(echo, [row])
            rows.append(row)
    return rows


# ---------------------------------------------------------------- phase maps


def _phase_maps(spec: ExperimentSpec, out_dir, echo):
    lam = spec.wavelength
    rows = []
    for modes in spec.mode_sets:
        case = PhaseMapCase(tuple(modes), spec.element_count, spec.radius_wavelengths * lam,
                            2 * math.pi / lam, spec.plane_distance_wavelengths * lam,
                            spec.extent_wavelengths * lam, spec.resolution,
                            tuple(r * lam for r in spec.probe_radii_wavelengths))
        raster = case.raster()
        tag = "_".join(f"m{-m}" if m < 0 else f"p{m}" for m in modes)
        if out_dir is not None:
            for fmt in spec.raster_format:
                write_raster(raster, Path(out_dir) / f"{spec.name}_{tag}.{fmt}", fmt)
        winds, arms = case.analyse(raster)
        label = _label(modes)
        if len(modes) == 1:
            # one value per probe circle: median plus the min / max spread
            pr = [Row("phase_map", label, "winding", float(np.median(winds)),
                      float(min(winds)), float(max(winds))),
                  Row("phase_map", label, "expected_winding", float(modes[0]))]
        else:
            pr = [Row("phase_map", label, "arm_count", float(np.median(arms)),
                      float(min(arms)), float(max(arms)))]
            if len(modes) == 2:
                pr.append(Row("phase_map", label, "expected_arm_count",
                              float(abs(modes[0] - modes[1]))))
        _echo(echo, pr)
        rows += pr
    return rows


def run_spec(spec: ExperimentSpec, workers=1, out_dir=None, echo=None):
    """Run ``spec``; returns (rows, csv path or None)."""
    scen = spec.scenario
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    if scen in ("nmse_snr", "nmse_modes", "nmse_subcarriers", "estimates"):
        rows = _estimation(spec, workers, echo)
    elif scen == "ber":
        rows = _ber(spec, workers, echo)
    elif scen in ("se_uca", "se_ucca"):
        rows = _se(spec, workers, echo)
    elif scen == "phase_map":
        rows = _phase_maps(spec, out_dir, echo)
    else:  # pragma: no cover - rejected by validation
        raise ValueError(scen)
    path = None
    if out_dir is not None:
        path = write_csv(rows, Path(out_dir) / f"{spec.name}.csv")
    return rows, path
