"""Command-line driver around the library pipelines.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import csvio, plots
from .beams import BeamField, propagate_beam
from .config import (build_beam_config, build_difference_field, build_domain,
                     build_fan, build_grid, build_medium, build_trace_options,
                     config_fingerprint, load_config, validate_config)
from .errors import BeamtomoError, ConfigError
from .experiments import (_write_grid_csv, _write_json, run_all,
                          run_residual_scan, run_stability_sweep)
from .invert import extract_ray_integrals, l2_error, solve_linear
from .measure import add_noise, boundary_trace, read_dataset, synthesize, write_dataset
from .rays import trace_fan
from .transform import EnergyConvention, flow_transform


def _out_dir(args) -> Path:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_trace(args, cfg) -> int:
    out = _out_dir(args)
    dom = build_domain(cfg)
    fan = build_fan(cfg, dom)
    rays = trace_fan(fan, build_medium(cfg, None, dom),
                     build_trace_options(cfg))
    mh = config_fingerprint(cfg)
    rows = []
    for ray in rays:
        rows.extend((ray.s[k], ray.x[k, 0], ray.x[k, 1],
                     ray.p[k, 0], ray.p[k, 1]) for k in range(len(ray)))
    csvio.write_csv(out / "rays.csv", ["s", "x", "y", "px", "py"], rows, mh)
    csvio.write_csv(out / "exit_table.csv", ["theta", "dir", "tau"],
                    [(s.theta, s.dir_index, r.tau) for s, r in zip(fan, rays)],
                    mh)
    plots.ray_fan_figure(rays, dom, out / "fan.png")
    print(f"traced {len(rays)} rays -> {out}")
    return 0


def _cmd_beam(args, cfg) -> int:
    out = _out_dir(args)
    dom = build_domain(cfg)
    medium = build_medium(cfg, None, dom)
    fan = build_fan(cfg, dom)
    idx = args.source if args.source is not None else len(fan) // 2
    if not 0 <= idx < len(fan):
        raise ConfigError(f"source index {idx} outside fan of {len(fan)}")
    ray = trace_fan([fan[idx]], medium, build_trace_options(cfg))[0]
    beam = propagate_beam(ray, build_beam_config(cfg), medium)
    mh = config_fingerprint(cfg)
    rows = []
    for k in range(len(beam.ray)):
        M = beam.M[k]
        rows.append((beam.ray.s[k], beam.ray.x[k, 0], beam.ray.x[k, 1],
                     M[0, 0].real, M[0, 0].imag, M[0, 1].real, M[0, 1].imag,
                     M[1, 1].real, M[1, 1].imag, abs(beam.a0[k]), beam.S[k]))
    csvio.write_csv(out / "beam.csv",
                    ["s", "x", "y", "ReM11", "ImM11", "ReM12", "ImM12",
                     "ReM22", "ImM22", "absA0", "S"], rows, mh)
    rec = boundary_trace(BeamField(beam), dom)
    csvio.write_csv(out / "boundary.csv", ["theta_b", "absU"],
                    list(zip(rec.theta_b, rec.absU)), mh)
    plots.boundary_trace_figure([rec], out / "boundary.png")
    print(f"beam for source {idx} -> {out}")
    return 0


def _apply_synth_overrides(args, cfg) -> dict:
    if args.medium is not None:
        spec = json.loads(Path(args.medium).read_text())
        for key in ("domain", "medium", "metric"):
            if key in spec:
                cfg[key] = spec[key]
    if args.fan is not None:
        try:
            npts, ndirs = (int(v) for v in args.fan.lower().split("x"))
        except ValueError as exc:
            raise ConfigError(f"--fan expects NxM, got {args.fan!r}") from exc
        cfg["fan"]["n_points"] = npts
        cfg["fan"]["n_dirs"] = ndirs
    if args.lam is not None:
        cfg["beam"]["lam"] = args.lam
    if args.alpha is not None:
        cfg["beam"]["alpha"] = args.alpha
    return validate_config(cfg)


def _cmd_synth(args, cfg) -> int:
    cfg = _apply_synth_overrides(args, cfg)
    out = _out_dir(args)
    dom = build_domain(cfg)
    eps = args.eps
    medium = build_medium(cfg, eps, dom)
    fan = build_fan(cfg, dom)
    extra = {"role": "reference" if eps is None else "measured"}
    if eps is not None:
        extra["eps"] = eps
    ds = synthesize(medium, fan, build_beam_config(cfg),
                    build_trace_options(cfg), jobs=cfg.get("jobs", 1),
                    config_extra=extra)
    if args.noise:
        ds = add_noise(ds, args.noise, int(cfg["noise"]["seed"]))
    write_dataset(ds, out)
    plots.boundary_trace_figure(ds.records, out / "traces.png")
    print(f"dataset of {len(ds)} records -> {out}")
    return 0


def _cmd_transform(args, cfg) -> int:
    out = _out_dir(args)
    dom = build_domain(cfg)
    medium = build_medium(cfg, None, dom)
    eps = args.eps if args.eps is not None else float(cfg["medium"]["eps"])
    f = build_difference_field(cfg, eps, dom)
    fan = build_fan(cfg, dom)
    conv = EnergyConvention(form=args.form)
    sino = flow_transform(f, fan, medium, conv,
                          opts=build_trace_options(cfg))
    mh = config_fingerprint(cfg)
    csvio.write_csv(out / "sinogram.csv", ["source_idx", "tau", "value"],
                    [(i, sino.taus[i], sino.values[i])
                     for i in range(len(sino.values))], mh)
    _write_json(out / "sinogram.json",
                {"convention": {"form": conv.form, "H0": conv.H0},
                 "fan_weighting": "uniform in boundary angle x direction",
                 "manifest": mh})
    plots.sinogram_figure(sino, out / "sinogram.png")
    print(f"sinogram of {len(sino.values)} rays -> {out}")
    return 0


def _cmd_invert(args, cfg) -> int:
    d_ref = read_dataset(args.ref)
    d_meas = read_dataset(args.meas)
    dom = build_domain(cfg)
    medium = build_medium(cfg, None, dom)
    if args.grid is not None:
        cfg["grid"]["n"] = args.grid
    grid = build_grid(cfg, dom)
    reg = cfg["regularization"]
    reg_rel = args.reg if args.reg is not None else reg["lam_rel"]
    ext = extract_ray_integrals(d_ref, d_meas)
    rec = solve_linear(ext.sinogram, medium, grid, reg_lambda_rel=reg_rel,
                       max_iter=reg["max_iter"], tol=reg["tol"],
                       flagged=ext.flagged,
                       opts=build_trace_options(cfg))
    out_csv = Path(args.out or "recon.csv")
    if out_csv.suffix != ".csv":
        out_csv.mkdir(parents=True, exist_ok=True)
        out_csv = out_csv / "recon.csv"
    mh = config_fingerprint(cfg)
    _write_grid_csv(rec.grid, out_csv, mh)
    report = {"iterations": rec.iterations, "reg_lambda": rec.reg_lambda,
              "final_residual": float(rec.residual_history[-1]),
              "flagged_rays": rec.flagged_rows, "manifest": mh}
    truth = None
    eps = d_meas.config.get("eps")
    if eps is not None:
        truth = grid.sample_field(build_difference_field(cfg, float(eps), dom))
        report["rel_l2"] = l2_error(rec.grid, truth)
    _write_json(out_csv.with_name(out_csv.stem + "_report.json"), report)
    plots.grid_figure(rec.grid, out_csv.with_suffix(".png"),
                      title="reconstruction", truth=truth)
    print(f"reconstruction -> {out_csv} "
          f"({rec.iterations} iterations, {rec.flagged_rows} rays flagged)")
    return 0


def _cmd_residual_scan(args, cfg) -> int:
    report = run_residual_scan(cfg, _out_dir(args))
    print(f"residual slope {report['slope']:.3f} "
          f"({'monotone' if report['monotone'] else 'NON-MONOTONE'})")
    return 1 if report["flagged"] else 0


def _cmd_stability(args, cfg) -> int:
    report = run_stability_sweep(cfg, _out_dir(args), jobs=cfg.get("jobs", 1))
    n_fail = sum(1 for r in report.rows if not r["ok"])
    print(f"{len(report.rows)} rows, {n_fail} failed; "
          f"monotone lambda={report.monotone_lambda} "
          f"noise={report.monotone_noise} eps={report.monotone_eps_delta}")
    return 1 if n_fail == len(report.rows) else 0


def _cmd_run_all(args, cfg) -> int:
    summary = run_all(cfg, _out_dir(args), jobs=cfg.get("jobs", 1))
    print(f"run-all -> {summary['out_dir']} "
          f"(delta={summary['delta']:.3e}, "
          f"recon rel L2={summary['recon_rel_l2']:.3f}, "
          f"residual slope={summary['residual_scan']['slope']:.3f})")
    return 0 if summary["ok"] else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config path")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=None)

    parser = argparse.ArgumentParser(
        prog="beamtomo",
        description="Gaussian-beam phaseless tomography pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("trace", parents=[common],
                   help="trace the source fan").set_defaults(fn=_cmd_trace)

    p = sub.add_parser("beam", parents=[common],
                       help="propagate one beam and its boundary trace")
    p.add_argument("--source", type=int, default=None, help="fan index")
    p.set_defaults(fn=_cmd_beam)

    p = sub.add_parser("synth", parents=[common],
                       help="synthesize a phaseless dataset")
    p.add_argument("--medium", default=None,
                   help="JSON file with domain/medium sections")
    p.add_argument("--fan", default=None, help="fan as NxM, e.g. 64x8")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--eps", type=float, default=None,
                   help="perturbation amplitude (omit for the reference)")
    p.add_argument("--noise", type=float, default=None)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("transform", parents=[common],
                       help="flow transform of the configured difference")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--form", choices=["beam", "potential"], default="beam")
    p.set_defaults(fn=_cmd_transform)

    p = sub.add_parser("invert", parents=[common],
                       help="reconstruct n^2 difference from two datasets")
    p.add_argument("--ref", required=True, help="reference dataset directory")
    p.add_argument("--meas", required=True, help="measured dataset directory")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--reg", type=float, default=None,
                   help="relative regularization weight")
    p.set_defaults(fn=_cmd_invert)

    sub.add_parser("residual-scan", parents=[common],
                   help="residual-vs-lambda verification"
                   ).set_defaults(fn=_cmd_residual_scan)
    sub.add_parser("stability", parents=[common],
                   help="(lambda, eps, noise) stability sweep"
                   ).set_defaults(fn=_cmd_stability)
    sub.add_parser("run-all", parents=[common],
                   help="all pipelines plus both campaigns"
                   ).set_defaults(fn=_cmd_run_all)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
            cfg["noise"]["seed"] = args.seed
        if args.jobs is not None:
            cfg["jobs"] = args.jobs
        return args.fn(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BeamtomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
