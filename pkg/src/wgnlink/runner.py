"""Experiment orchestration: capture -> link -> pipeline -> metrics sweeps.

Produces a JSON manifest, CSV result tables, and SVG plots.  All outputs are
pure functions of the configuration and seeds; rows are sorted before
writing so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import svgplot
from .channel import run_link
from .config import ExperimentConfig
from .errors import WgnLinkError
from .estimation import estimate_channel, impulse_response_from_channel, \
    mdl_from_channel
from .metrics import (build_ring_constellation, estimate_mi,
                      estimate_mi_discrete, estimate_snr, qam16_constellation)
from .pipeline import PipelineConfig, run_pipeline
from .signals import ComplexSignal, MimoSignal, generate_wgn_mimo, resample

log = logging.getLogger(__name__)

MI_COLUMNS = ["signal", "sweep_axis", "sweep_value", "distance_km",
              "launch_power_dbm", "seed", "tributary", "bits_per_symbol",
              "assumed_baud", "snr_db"]


def _point_seed(seed: int, value) -> int:
    # stable per-(seed, sweep value) link seed
    return abs(hash((int(seed) * 1_000_003, float(value)))) % (2 ** 63)


def _decimate(sig: ComplexSignal, factor: int, limit: int) -> ComplexSignal:
    samples = sig.samples[::factor][:limit]
    return ComplexSignal(samples, sig.sample_rate / factor)


def _wgn_point(cfg: ExperimentConfig, value, seed: int,
               characterize: bool) -> dict:
    """One sweep point x seed: full WGN capture, link, pipeline, metrics."""
    link, n_rec = cfg.link_for(value)
    f_in = generate_wgn_mimo(link.n_modes, cfg.n_samples, cfg.capture_rate,
                             cfg.mean_power, seed)
    f_out = run_link(f_in, link, n_rec, _point_seed(seed, value))
    result = run_pipeline(f_in, f_out, link, cfg.pipeline,
                          n_recirculations=n_rec)
    osr = cfg.pipeline.oversampling
    rings = build_ring_constellation(cfg.n_rings, cfg.mean_power)
    rows = []
    for m, (ref, eq) in enumerate(zip(result.f_in.tributaries,
                                      result.f_eq.tributaries)):
        ref_d = _decimate(ref, osr, cfg.mi_max_symbols)
        eq_d = _decimate(eq, osr, cfg.mi_max_symbols)
        rows.append({
            "signal": "wgn", "sweep_axis": cfg.sweep_axis,
            "sweep_value": value,
            "distance_km": n_rec * link.span_length,
            "launch_power_dbm": link.launch_power_dbm,
            "seed": seed, "tributary": m,
            "bits_per_symbol": estimate_mi(ref_d, eq_d, rings),
            "assumed_baud": cfg.pipeline.assumed_baud,
            "snr_db": estimate_snr(ref_d, eq_d),
        })
    out = {"rows": rows}
    if characterize:
        channel = estimate_channel(f_in, f_out, cfg.pipeline)
        band = cfg.pipeline.filter_bw
        mdl = mdl_from_channel(channel, band_edge=band)
        ir = impulse_response_from_channel(channel, band_edge=band)
        out["mdl"] = (mdl.frequencies[mdl.valid], mdl.mdl_db[mdl.valid])
        out["impulse"] = (ir.delays, ir.taps, ir.dynamic_range_db)
    return out


def generate_qam16_mimo(n_modes: int, n_symbols: int, baud: float,
                        mean_power: float, seed: int, oversampling: int = 2,
                        rolloff: float = 0.1):
    """Nyquist (raised-cosine) shaped 16QAM, `oversampling` samples/symbol.

    Returns the waveform and the per-tributary symbol matrix.  The pulse is
    full raised cosine so the waveform at symbol instants equals the symbols
    exactly; matched filtering is subsumed by the data-aided equalizer.
    """
    rng = np.random.default_rng(seed)
    pts = qam16_constellation(mean_power)
    n = n_symbols * oversampling
    rate = baud * oversampling
    f = np.fft.fftfreq(n, d=1.0 / rate)
    beta = rolloff
    af = np.abs(f)
    h = np.zeros(n)
    h[af <= (1 - beta) * baud / 2] = 1.0
    ramp = (af > (1 - beta) * baud / 2) & (af <= (1 + beta) * baud / 2)
    h[ramp] = 0.5 * (1 + np.cos(np.pi / (beta * baud)
                                * (af[ramp] - (1 - beta) * baud / 2)))
    tribs = []
    symbols = np.empty((n_modes, n_symbols), dtype=complex)
    for m in range(n_modes):
        sym = pts[rng.integers(0, 16, n_symbols)]
        symbols[m] = sym
        stuffed = np.zeros(n, dtype=complex)
        stuffed[::oversampling] = sym
        wave = np.fft.ifft(np.fft.fft(stuffed) * h)
        tribs.append(ComplexSignal(wave, rate))
    return MimoSignal(tribs), symbols


def _qam_point(cfg: ExperimentConfig, value, seed: int) -> dict:
    """16QAM reference transmission through the same link and pipeline."""
    link, n_rec = cfg.link_for(value)
    pipe = dataclasses.replace(cfg.pipeline, filter_bw=None)
    osr = pipe.oversampling
    # capture length must round-trip exactly through the rate conversion
    ratio = pipe.target_rate / cfg.capture_rate
    n_hi = int(round(cfg.n_samples * ratio))
    n_hi -= n_hi % (osr * 3)
    n_sym = n_hi // osr
    wave, symbols = generate_qam16_mimo(link.n_modes, n_sym,
                                        pipe.assumed_baud, cfg.mean_power,
                                        seed, osr)
    f_in = wave.map(lambda t: resample(t, cfg.capture_rate))
    f_out = run_link(f_in, link, n_rec, _point_seed(seed, value))
    result = run_pipeline(f_in, f_out, link, pipe, n_recirculations=n_rec)
    start = result.trim_start_in
    n_avail = len(result.f_eq)
    k_first = -(-start // osr)
    k_last = (start + n_avail - 1) // osr
    ks = np.arange(k_first, min(k_last + 1, n_sym))[:cfg.mi_max_symbols]
    locs = ks * osr - start
    pts = qam16_constellation(cfg.mean_power)
    rows = []
    for m in range(link.n_modes):
        y = ComplexSignal(result.f_eq.tributaries[m].samples[locs],
                          pipe.assumed_baud)
        x = symbols[m][ks]
        rows.append({
            "signal": "qam16", "sweep_axis": cfg.sweep_axis,
            "sweep_value": value,
            "distance_km": n_rec * link.span_length,
            "launch_power_dbm": link.launch_power_dbm,
            "seed": seed, "tributary": m,
            "bits_per_symbol": estimate_mi_discrete(x, y, pts),
            "assumed_baud": pipe.assumed_baud,
            "snr_db": estimate_snr(ComplexSignal(x, pipe.assumed_baud), y),
        })
    return {"rows": rows}


def _run_sweep(cfg: ExperimentConfig, kind: str, jobs: int) -> int:
    """Run all (sweep value, seed) jobs; returns a process exit code."""
    out_dir = Path(cfg.outputs)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for value in cfg.sweep_values:
        for i, seed in enumerate(cfg.seeds):
            characterize = kind == "wgn" and i == 0
            tasks.append((value, seed, characterize))

    rows, errors, extras = [], [], {}

    def handle(task, outcome):
        value, seed, _ = task
        if isinstance(outcome, Exception):
            log.error("sweep point %s seed %s failed: %s", value, seed, outcome)
            errors.append({"sweep_value": value, "seed": seed,
                           "error": str(outcome)})
            return
        rows.extend(outcome["rows"])
        if "mdl" in outcome:
            extras[value] = outcome

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_task, cfg, kind, t) for t in tasks]
            for task, fut in zip(tasks, futures):
                try:
                    handle(task, fut.result())
                except (WgnLinkError, ValueError) as exc:
                    handle(task, exc)
    else:
        for task in tasks:
            try:
                handle(task, _run_task(cfg, kind, task))
            except (WgnLinkError, ValueError) as exc:
                handle(task, exc)

    suffix = "" if kind == "wgn" else f"_{kind}"
    _write_mi_csv(out_dir / f"mi_results{suffix}.csv", rows)
    written = [f"mi_results{suffix}.csv"]
    for value, extra in sorted(extras.items(), key=lambda kv: float(kv[0])):
        tag = _tag(value)
        freqs, mdl = extra["mdl"]
        _write_mdl_csv(out_dir / f"mdl_{tag}.csv", freqs, mdl)
        delays, taps, dyn = extra["impulse"]
        _write_impulse_csv(out_dir / f"impulse_{tag}.csv", delays, taps, dyn)
        written += [f"mdl_{tag}.csv", f"impulse_{tag}.csv"]
    manifest = {
        "kind": kind,
        "config": _config_dict(cfg),
        "files": sorted(written),
        "errors": sorted(errors, key=lambda e: (str(e["sweep_value"]),
                                                e["seed"])),
    }
    with open(out_dir / f"manifest{suffix}.json", "w") as f:
        json.dump(manifest, f, indent=2, default=str)
    if cfg.emit_plots:
        write_plots(out_dir)
    return 2 if errors else 0


def _run_task(cfg: ExperimentConfig, kind: str, task) -> dict:
    value, seed, characterize = task
    if kind == "wgn":
        return _wgn_point(cfg, value, seed, characterize)
    return _qam_point(cfg, value, seed)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> int:
    """WGN capacity/characterization sweep.  Returns the CLI exit code."""
    return _run_sweep(cfg, "wgn", jobs)


def run_reference_16qam(cfg: ExperimentConfig, jobs: int = 1) -> int:
    """Conventional 16QAM reference transmission over the same sweep."""
    return _run_sweep(cfg, "qam16", jobs)


def characterize_captures(f_in: MimoSignal, f_out: MimoSignal,
                          pipe: PipelineConfig, out_dir: str | Path,
                          emit_plots: bool = True) -> None:
    """Channel estimation only, from a stored capture pair."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    channel = estimate_channel(f_in, f_out, pipe)
    band = pipe.filter_bw
    mdl = mdl_from_channel(channel, band_edge=band)
    ir = impulse_response_from_channel(channel, band_edge=band)
    _write_mdl_csv(out_dir / "mdl_capture.csv",
                   mdl.frequencies[mdl.valid], mdl.mdl_db[mdl.valid])
    _write_impulse_csv(out_dir / "impulse_capture.csv", ir.delays, ir.taps,
                       ir.dynamic_range_db)
    if emit_plots:
        write_plots(out_dir)


def _tag(value) -> str:
    return f"{float(value):g}".replace("-", "m").replace(".", "p")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write_mi_csv(path: Path, rows: list[dict]) -> None:
    rows = sorted(rows, key=lambda r: (float(r["sweep_value"]), r["seed"],
                                       r["tributary"]))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MI_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(r[c]) for c in MI_COLUMNS])


def _write_mdl_csv(path: Path, freqs, mdl) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frequency_hz", "mdl_db"])
        for fr, m in zip(freqs, mdl):
            writer.writerow([_fmt(float(fr)), _fmt(float(m))])


def _write_impulse_csv(path: Path, delays, taps, dynamic_range_db) -> None:
    m = taps.shape[1]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["time_s"] + [f"power_db_{i}{j}" for i in range(m)
                               for j in range(m)]
        writer.writerow(header + [f"# dynamic_range_db={dynamic_range_db:.2f}"])
        power_db = 10.0 * np.log10(np.maximum(np.abs(taps) ** 2, 1e-30))
        for k, t in enumerate(delays):
            writer.writerow([_fmt(float(t))]
                            + [_fmt(float(power_db[k, i, j]))
                               for i in range(m) for j in range(m)])


def _read_mi_csv(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_plots(out_dir: str | Path) -> None:
    """Regenerate every SVG plot from the CSV files alone."""
    out_dir = Path(out_dir)
    rows = []
    for name in ("mi_results.csv", "mi_results_qam16.csv"):
        p = out_dir / name
        if p.exists():
            rows.extend(_read_mi_csv(p))
    if rows:
        _plot_mi(out_dir, rows)
    for p in sorted(out_dir.glob("mdl_*.csv")):
        _plot_mdl(out_dir, p)
    for p in sorted(out_dir.glob("impulse_*.csv")):
        _plot_impulse(out_dir, p)


def _mean_series(rows, x_key):
    """Mean bits/symbol over seeds and tributaries, per sweep point."""
    acc = {}
    for r in rows:
        x = float(r[x_key])
        acc.setdefault(x, []).append(float(r["bits_per_symbol"]))
    xs = sorted(acc)
    return xs, [float(np.mean(acc[x])) for x in xs]


def _plot_mi(out_dir: Path, rows: list[dict]) -> None:
    axis = rows[0]["sweep_axis"]
    by_signal = {}
    for r in rows:
        by_signal.setdefault(r["signal"], []).append(r)
    x_key, xlabel, fname = {
        "recirculations": ("distance_km", "distance (km)", "mi_vs_distance"),
        "launch_power_dbm": ("launch_power_dbm", "launch power (dBm)",
                             "mi_vs_power"),
        "snr_db": ("sweep_value", "span SNR (dB)", "mi_vs_span_snr"),
    }[axis]
    series = []
    for signal, sig_rows in sorted(by_signal.items()):
        xs, ys = _mean_series(sig_rows, x_key)
        series.append(svgplot.Series(xs, ys, label=signal.upper()))
    svgplot.line_plot(str(out_dir / f"{fname}.svg"), series,
                      "Mutual information", xlabel, "MI (bits/symbol)")

    # measured-SNR view with the Shannon curve overlaid
    snr_acc = {}
    for r in rows:
        if r["signal"] != "wgn":
            continue
        key = (float(r["sweep_value"]))
        snr_acc.setdefault(key, [[], []])
        snr_acc[key][0].append(float(r["snr_db"]))
        snr_acc[key][1].append(float(r["bits_per_symbol"]))
    if snr_acc:
        pts = sorted((np.mean(v[0]), np.mean(v[1])) for v in snr_acc.values())
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        lo, hi = min(xs), max(xs)
        ref_x = list(np.linspace(lo, hi, 50)) if hi > lo else [lo]
        ref_y = [float(np.log2(1 + 10 ** (s / 10))) for s in ref_x]
        svgplot.line_plot(
            str(out_dir / "mi_vs_snr.svg"),
            [svgplot.Series(xs, ys, label="WGN measurement"),
             svgplot.Series(ref_x, ref_y, label="log2(1+SNR)",
                            markers=False, dashed=True)],
            "Mutual information vs measured SNR", "measured SNR (dB)",
            "MI (bits/symbol)")


def _plot_mdl(out_dir: Path, csv_path: Path) -> None:
    freqs, mdl = [], []
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for row in reader:
            freqs.append(float(row[0]) / 1e9)
            mdl.append(float(row[1]))
    svgplot.line_plot(str(out_dir / (csv_path.stem + ".svg")),
                      [svgplot.Series(freqs, mdl, markers=False)],
                      "Mode-dependent loss", "frequency (GHz)", "MDL (dB)")


def _plot_impulse(out_dir: Path, csv_path: Path) -> None:
    times, total = [], []
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for row in reader:
            times.append(float(row[0]) * 1e9)
            powers = np.array([float(v) for v in row[1:]])
            total.append(float(10 * np.log10(np.sum(10 ** (powers / 10)))))
    svgplot.line_plot(str(out_dir / (csv_path.stem + ".svg")),
                      [svgplot.Series(times, total, markers=False)],
                      "Impulse response", "delay (ns)", "power (dB)")


def _config_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["link"] = dataclasses.asdict(cfg.link)
    d["pipeline"] = dataclasses.asdict(cfg.pipeline)
    return d
