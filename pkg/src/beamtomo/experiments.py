"""Verification campaigns and the end-to-end pipeline driver.

Artifacts are deterministic: CSVs carry a manifest hash of the config,
float cells use repr round-tripping, and wall-clock numbers go to a
separate timings.json so repeated runs stay byte-identical on the CSVs.
"""
from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np
import scipy

from . import csvio, plots
from .beams import BeamField, propagate_beam
from .config import (build_beam_config, build_difference_field, build_domain,
                     build_fan, build_grid, build_medium, build_trace_options,
                     config_fingerprint)
from .errors import BeamtomoError
from .invert import extract_ray_integrals, l2_error, solve_linear
from .measure import (add_noise, boundary_trace, sup_difference, synthesize,
                      write_dataset)
from .rays import trace_fan
from .residual import scan_residuals
from .transform import EnergyConvention, flow_transform

PKG_VERSION = "0.1.0"


def _write_json(path, payload):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_residual_scan(cfg: dict, out_dir=None) -> dict:
    """Residual-vs-lambda table with the fitted log-log slope.

    Non-monotone residuals flag the report (the CLI then exits nonzero).
    """
    dom = build_domain(cfg)
    opts = build_trace_options(cfg)
    scan = scan_residuals(cfg["residual_scan"]["lambda_list"], dom,
                          base=cfg["medium"]["base"],
                          alpha=cfg["beam"]["alpha"],
                          tube_exponent=cfg["beam"]["tube_exponent"],
                          opts=opts)
    report = {
        "slope": scan.slope,
        "monotone": scan.monotone,
        "flagged": not scan.monotone,
        "points": [{"lambda": p.lam, "residual_rel": p.residual_rel,
                    "residual_abs": p.residual_abs, "field_norm": p.field_norm,
                    "nx": p.nx, "ny": p.ny} for p in scan.points],
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        mh = config_fingerprint(cfg)
        rows = [(p.lam, p.residual_rel, p.residual_abs, p.field_norm, scan.slope)
                for p in scan.points]
        csvio.write_csv(out / "residual_scan.csv",
                        ["lambda", "residual_rel", "residual_abs",
                         "field_norm", "slope"], rows, mh)
        _write_json(out / "residual_report.json", report)
        plots.residual_scan_figure(scan, out / "residual_scan.png")
    return report


@dataclass
class StabilityReport:
    rows: list
    monotone_lambda: bool
    monotone_noise: bool
    monotone_eps_delta: bool
    timings: dict = field(default_factory=dict)
    out_dir: str | None = None

    def row(self, lam, eps, noise):
        for r in self.rows:
            if r["lam"] == lam and r["eps"] == eps and r["noise"] == noise:
                return r
        raise KeyError((lam, eps, noise))


def _series_ok(rows, keys, axis, values):
    """Fetch rows matching `keys` ordered along `axis`; None if any missing."""
    out = []
    for v in values:
        match = [r for r in rows
                 if r.get("ok") and all(r[k] == kv for k, kv in keys.items())
                 and r[axis] == v]
        if not match:
            return None
        out.append(match[0])
    return out


def run_stability_sweep(cfg: dict, out_dir=None, jobs=None) -> StabilityReport:
    """Full (lambda, eps, noise) grid: synthesize both media, measure the
    sup difference, extract, reconstruct, and record the relative error.

    Rows run sequentially; a failing row is recorded and the sweep
    continues.  Noise uses one fixed seed for every row, so levels are
    compared on the same realization.
    """
    jobs = int(cfg.get("jobs", 1) if jobs is None else jobs)
    dom = build_domain(cfg)
    opts = build_trace_options(cfg)
    fan = build_fan(cfg, dom)
    grid = build_grid(cfg, dom)
    ref_medium = build_medium(cfg, None, dom)
    rays_ref = trace_fan(fan, ref_medium, opts)
    reg = cfg["regularization"]
    lam_list = [float(v) for v in cfg["sweep"]["lambda_list"]]
    eps_list = [float(v) for v in cfg["sweep"]["eps_list"]]
    noise_list = [float(v) for v in cfg["sweep"]["noise_list"]]
    noise_seed = int(cfg["noise"]["seed"])

    truth = {eps: grid.sample_field(build_difference_field(cfg, eps, dom))
             for eps in eps_list}
    def _errstr(exc):
        return f"{type(exc).__name__}: {exc}"[:200]

    rows = []
    timings = {}
    t_start = time.perf_counter()
    for lam in lam_list:
        bc = build_beam_config(cfg, lam)
        t0 = time.perf_counter()
        ref_error = None
        try:
            d_ref = synthesize(ref_medium, fan, bc, opts, jobs=jobs,
                               config_extra={"role": "reference"})
        except BeamtomoError as exc:
            ref_error = _errstr(exc)
        timings[f"synth_ref_lam{lam:g}"] = round(time.perf_counter() - t0, 3)
        for eps in eps_list:
            synth_error = ref_error
            if synth_error is None:
                t0 = time.perf_counter()
                try:
                    meas_medium = build_medium(cfg, eps, dom)
                    d_meas = synthesize(meas_medium, fan, bc, opts, jobs=jobs,
                                        config_extra={"role": "measured",
                                                      "eps": eps})
                except BeamtomoError as exc:
                    synth_error = _errstr(exc)
                timings[f"synth_meas_lam{lam:g}_eps{eps:g}"] = \
                    round(time.perf_counter() - t0, 3)
            for noise in noise_list:
                row = {"lam": lam, "eps": eps, "noise": noise,
                       "warn_lambda_eps": lam * eps <= 1.0,
                       "delta": np.nan, "rel_l2": np.nan, "iterations": 0,
                       "reg_lambda": np.nan, "flagged_rays": 0,
                       "ok": False, "error": synth_error or ""}
                if synth_error is not None:
                    rows.append(row)
                    continue
                t0 = time.perf_counter()
                try:
                    d2 = add_noise(d_meas, noise, noise_seed) if noise > 0 \
                        else d_meas
                    row["delta"] = sup_difference(d_ref, d2)
                    ext = extract_ray_integrals(d_ref, d2)
                    rec = solve_linear(ext.sinogram, ref_medium, grid,
                                       reg_lambda_rel=reg["lam_rel"],
                                       max_iter=reg["max_iter"],
                                       tol=reg["tol"],
                                       rays=rays_ref, flagged=ext.flagged)
                    row["rel_l2"] = l2_error(rec.grid, truth[eps])
                    row["iterations"] = rec.iterations
                    row["reg_lambda"] = rec.reg_lambda
                    row["flagged_rays"] = int(np.count_nonzero(ext.flagged))
                    row["ok"] = True
                except Exception as exc:  # per-row failures recorded, sweep continues
                    row["error"] = _errstr(exc)
                timings[f"row_lam{lam:g}_eps{eps:g}_noise{noise:g}"] = \
                    round(time.perf_counter() - t0, 3)
                rows.append(row)
    timings["total"] = round(time.perf_counter() - t_start, 3)

    mono_lambda = True
    mono_eps = True
    for eps in eps_list:
        series = _series_ok(rows, {"eps": eps, "noise": noise_list[0]},
                            "lam", lam_list)
        if series is None or any(b["rel_l2"] >= a["rel_l2"]
                                 for a, b in zip(series, series[1:])):
            mono_lambda = False
    for lam in lam_list:
        series = _series_ok(rows, {"lam": lam, "noise": noise_list[0]},
                            "eps", eps_list)
        if series is None or any(b["delta"] <= a["delta"]
                                 for a, b in zip(series, series[1:])):
            mono_eps = False
    mono_noise = True
    for lam in lam_list:
        for eps in eps_list:
            series = _series_ok(rows, {"lam": lam, "eps": eps},
                                "noise", noise_list)
            if series is None or any(b["rel_l2"] <= a["rel_l2"]
                                     for a, b in zip(series, series[1:])):
                mono_noise = False

    report = StabilityReport(rows=rows, monotone_lambda=mono_lambda,
                             monotone_noise=mono_noise,
                             monotone_eps_delta=mono_eps,
                             timings=timings,
                             out_dir=None if out_dir is None else str(out_dir))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        mh = config_fingerprint(cfg)
        cols = ["lam", "eps", "noise", "delta", "rel_l2", "iterations",
                "reg_lambda", "flagged_rays", "warn_lambda_eps", "ok", "error"]
        csvio.write_csv(out / "sweep.csv", cols,
                        [tuple(r[c] for c in cols) for r in rows], mh)
        _write_json(out / "sweep_report.json",
                    {"monotone_lambda": mono_lambda,
                     "monotone_noise": mono_noise,
                     "monotone_eps_delta": mono_eps,
                     "config_hash": mh})
        _write_json(out / "timings.json", timings)
        plots.sweep_figure(rows, out / "sweep.png")
    return report


def _write_grid_csv(grid, path, manifest):
    cols = [f"c{j}" for j in range(grid.nx)]
    rows = [tuple(grid.values[i]) for i in range(grid.ny)]
    csvio.write_csv(path, cols, rows, manifest)
    sidecar = {"spacing": grid.h, "origin": [grid.ox, grid.oy],
               "nx": grid.nx, "ny": grid.ny,
               "mask": grid.mask.astype(int).tolist(), "manifest": manifest}
    _write_json(Path(path).with_suffix(".json"), sidecar)


def run_all(cfg: dict, out_dir, jobs=None) -> dict:
    """All unit pipelines plus both campaigns, under one manifest."""
    jobs = int(cfg.get("jobs", 1) if jobs is None else jobs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mh = config_fingerprint(cfg)
    _write_json(out / "manifest.json", {
        "config": cfg, "config_hash": mh, "seed": cfg["seed"],
        "versions": {"python": sys.version.split()[0],
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "matplotlib": matplotlib.__version__,
                     "beamtomo": PKG_VERSION}})
    timings = {}
    t_all = time.perf_counter()

    dom = build_domain(cfg)
    opts = build_trace_options(cfg)
    fan = build_fan(cfg, dom)
    grid = build_grid(cfg, dom)
    ref_medium = build_medium(cfg, None, dom)
    eps = float(cfg["medium"]["eps"])
    meas_medium = build_medium(cfg, eps, dom)
    diff_field = build_difference_field(cfg, eps, dom)
    bc = build_beam_config(cfg)

    t0 = time.perf_counter()
    rays = trace_fan(fan, ref_medium, opts)
    csvio.write_csv(out / "exit_table.csv", ["theta", "dir", "tau"],
                    [(s.theta, s.dir_index, r.tau) for s, r in zip(fan, rays)],
                    mh)
    r0 = rays[0]
    csvio.write_csv(out / "trace_ray0.csv", ["s", "x", "y", "px", "py"],
                    [(r0.s[k], r0.x[k, 0], r0.x[k, 1], r0.p[k, 0], r0.p[k, 1])
                     for k in range(len(r0))], mh)
    plots.ray_fan_figure(rays, dom, out / "fan.png")
    timings["trace"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    mid = len(rays) // 2
    beam = propagate_beam(rays[mid], bc, ref_medium)
    beam_rows = []
    for k in range(len(beam.ray)):
        M = beam.M[k]
        beam_rows.append((beam.ray.s[k], beam.ray.x[k, 0], beam.ray.x[k, 1],
                          M[0, 0].real, M[0, 0].imag, M[0, 1].real,
                          M[0, 1].imag, M[1, 1].real, M[1, 1].imag,
                          abs(beam.a0[k]), beam.S[k]))
    csvio.write_csv(out / "beam_mid.csv",
                    ["s", "x", "y", "ReM11", "ImM11", "ReM12", "ImM12",
                     "ReM22", "ImM22", "absA0", "S"], beam_rows, mh)
    rec_mid = boundary_trace(BeamField(beam), dom)
    csvio.write_csv(out / "beam_mid_boundary.csv", ["theta_b", "absU"],
                    list(zip(rec_mid.theta_b, rec_mid.absU)), mh)
    plots.boundary_trace_figure([rec_mid], out / "beam_mid_boundary.png")
    timings["beam"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    d_ref = synthesize(ref_medium, fan, bc, opts, jobs=jobs,
                       config_extra={"role": "reference"})
    d_meas = synthesize(meas_medium, fan, bc, opts, jobs=jobs,
                        config_extra={"role": "measured", "eps": eps})
    noise_level = float(cfg["noise"]["level"])
    if noise_level > 0:
        d_meas = add_noise(d_meas, noise_level, int(cfg["noise"]["seed"]))
    write_dataset(d_ref, out / "synth_ref")
    write_dataset(d_meas, out / "synth_meas")
    delta = sup_difference(d_ref, d_meas)
    plots.boundary_trace_figure(d_meas.records, out / "synth_meas.png")
    timings["synth"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    conv = EnergyConvention(form="beam")
    sino = flow_transform(diff_field, fan, ref_medium, conv, rays=rays)
    csvio.write_csv(out / "sinogram.csv", ["source_idx", "tau", "value"],
                    [(i, sino.taus[i], sino.values[i])
                     for i in range(len(rays))], mh)
    _write_json(out / "sinogram.json",
                {"convention": {"form": conv.form, "H0": conv.H0},
                 "fan_weighting": "uniform in boundary angle x direction",
                 "manifest": mh})
    plots.sinogram_figure(sino, out / "sinogram.png")
    timings["transform"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    ext = extract_ray_integrals(d_ref, d_meas)
    reg = cfg["regularization"]
    rec = solve_linear(ext.sinogram, ref_medium, grid,
                       reg_lambda_rel=reg["lam_rel"],
                       max_iter=reg["max_iter"], tol=reg["tol"],
                       rays=rays, flagged=ext.flagged)
    truth_grid = grid.sample_field(diff_field)
    rel = l2_error(rec.grid, truth_grid)
    _write_grid_csv(rec.grid, out / "recon.csv", mh)
    _write_json(out / "recon_report.json", {
        "rel_l2": rel, "iterations": rec.iterations,
        "reg_lambda": rec.reg_lambda,
        "final_residual": float(rec.residual_history[-1]),
        "flagged_rays": rec.flagged_rows, "delta": delta, "manifest": mh})
    plots.grid_figure(rec.grid, out / "recon.png", title="reconstruction",
                      truth=truth_grid)
    timings["invert"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    scan_report = run_residual_scan(cfg, out / "residual_scan")
    timings["residual_scan"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    sweep = run_stability_sweep(cfg, out / "stability", jobs=jobs)
    timings["stability"] = round(time.perf_counter() - t0, 3)
    timings["total"] = round(time.perf_counter() - t_all, 3)
    _write_json(out / "timings.json", timings)

    return {"out_dir": str(out), "config_hash": mh, "delta": delta,
            "recon_rel_l2": rel, "residual_scan": scan_report,
            "sweep_monotone": {"lambda": sweep.monotone_lambda,
                               "noise": sweep.monotone_noise,
                               "eps_delta": sweep.monotone_eps_delta},
            "ok": not scan_report["flagged"]}
