"""Phaseless boundary measurements: one record per fan source.

The record samples |U| at the domain's boundary nodes.  Nodes whose
closest-point ray parameter falls in the leading 30% of the ray are
marked as the source aperture: the launch spot of the outgoing beam
sits there with amplitude ~1 and would otherwise always dominate the
transmitted exit peak, so peak statistics are taken over the
complement.  The full sample set (aperture included) still enters the
sup-difference statistic.

Peak localization keeps two values: the literal sample maximum
(`peak_value`) and a model-corrected estimate (`peak_fitted`) used by
the extraction.  The latter interpolates log|U| over the 7 nodes around
the maximum (degree-6 polynomial through the samples; unlike a
least-squares fit this has no sub-node aliasing) and then subtracts the
closed-form offset between the boundary profile maximum and the on-axis
amplitude |a0(tau)|,

    bias = A^2 tan^2(phi) / (2 lam Im m_t),
    A = -(alpha n^2 + Re tr M)/(2n) at the exit,

which arises because the amplitude drifts along the beam axis while the
boundary cuts the tube at obliquity phi.  cos^2(phi) is inferred from
the measured profile curvature (-f'' = lam Im m_t cos^2 phi per arc
unit), so the correction tracks each dataset's own exit geometry; the
other inputs (tau, Re tr M, Im m_t, |p| at exit) ride along on the
record.
"""
from __future__ import annotations

import copy
import json
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import csvio
from .beams import BeamConfig, BeamField, propagate_fan
from .errors import ContractViolation, SynthesisError, TrappedRayError
from .fields import Medium
from .geometry import DomainSpec, SourceDirection
from .rays import TraceOptions, trace_fan

SOURCE_MASK_FRACTION = 0.3   # leading ray fraction treated as source aperture
PEAK_FLOOR = 1e-12


@dataclass
class PhaselessRecord:
    source: SourceDirection
    theta_b: np.ndarray                  # boundary parameter nodes
    absU: np.ndarray                     # |U| per node
    peak_theta: float
    peak_value: float                    # max sample outside the source aperture
    peak_fitted: float                   # axis-corrected peak (used by extraction)
    peak_index: int
    tau: float
    retr_exit: float                     # Re tr M at the exit
    n_exit: float                        # |p| at the exit (= n there on H = 0)
    im_exit: float                       # transverse Im M at the exit
    arc_jac: float                       # boundary arc length per unit theta at the peak
    source_mask: np.ndarray | None = None
    flags: dict = field(default_factory=dict)


@dataclass
class Dataset:
    config: dict
    records: list
    fingerprint: str

    def __len__(self):
        return len(self.records)


def _fit_peak(theta_b, absU, mask, tau, retr_exit, n_exit, im_exit,
              arc_jac, lam, alpha):
    """(peak_index, peak_value, peak_theta, fitted_peak, degenerate).

    fitted_peak estimates |a0(tau)|: degree-6 interpolation of log|U|
    through the 7 nodes around the masked maximum, stationary max, minus
    the obliquity-drift offset (see module docstring).
    """
    B = theta_b.size
    work = np.where(mask, -np.inf, absU) if mask is not None else absU
    idx = int(np.argmax(work))
    peak_value = float(absU[idx])
    if peak_value < PEAK_FLOOR:
        return idx, peak_value, float(theta_b[idx]), peak_value, True
    offs = np.arange(-3, 4)
    window = np.take(absU, idx + offs, mode="wrap")
    if np.any(window < 1e-300):
        return idx, peak_value, float(theta_b[idx]), peak_value, True
    y = np.log(window)
    c = np.polyfit(offs.astype(float), y, 6)       # interpolation, not LSQ
    roots = np.roots(np.polyder(c))
    roots = roots[np.abs(roots.imag) < 1e-12].real
    roots = roots[np.abs(roots) <= 1.5]
    if roots.size:
        curv = np.polyval(np.polyder(c, 2), roots)
        maxima = roots[curv < 0]
        u = float(maxima[np.argmin(np.abs(maxima))]) if maxima.size else 0.0
    else:
        u = 0.0
    spacing = 2.0 * np.pi / B
    f_star = float(np.polyval(c, u))
    f2 = float(np.polyval(np.polyder(c, 2), u))
    bias = 0.0
    if f2 < 0 and im_exit > 0 and n_exit > 0:
        q_arc = -f2 / (arc_jac * spacing) ** 2     # lam * Im m_t * cos^2(phi)
        cos2 = min(1.0, max(q_arc / (lam * im_exit), 1e-2))
        drift = -(alpha * n_exit ** 2 + retr_exit) / (2.0 * n_exit)
        bias = drift ** 2 * (1.0 - cos2) / (2.0 * lam * im_exit * cos2)
    peak_theta = float((theta_b[idx] + u * spacing) % (2.0 * np.pi))
    return idx, peak_value, peak_theta, float(np.exp(f_star - bias)), False


def boundary_trace(bf: BeamField, dom: DomainSpec) -> PhaselessRecord:
    """Sample |U| on the boundary grid and locate the transmitted peak."""
    thetas, pts, _ = dom.boundary_nodes()
    U, s_star, _ = bf.eval_batch(pts, apply_cutoff=True, return_geometry=True)
    absU = np.abs(U)
    ray = bf.beam.ray
    tau = ray.tau
    mask = s_star < SOURCE_MASK_FRACTION * tau
    p_exit = ray.p[-1]
    n_exit = float(np.linalg.norm(p_exit))
    e = p_exit / n_exit
    eperp = np.array([-e[1], e[0]])
    M_exit = bf.beam.M[-1]
    retr_exit = float(np.real(M_exit[0, 0] + M_exit[1, 1]))
    im_exit = float(np.imag(eperp @ M_exit @ eperp))
    work = np.where(mask, -np.inf, absU)
    idx0 = int(np.argmax(work))
    B = thetas.size
    arc_jac = float(np.linalg.norm(pts[(idx0 + 1) % B] - pts[idx0 - 1])
                    / (2.0 * (2.0 * np.pi / B)))
    cfg = bf.beam.config
    idx, peak_value, peak_theta, fitted, degenerate = _fit_peak(
        thetas, absU, mask, tau, retr_exit, n_exit, im_exit, arc_jac,
        cfg.lam, cfg.alpha)
    flags = {"degenerate": degenerate,
             "energy_flag": bool(ray.flags.get("energy_flag", False)),
             "masked_nodes": int(np.sum(mask))}
    return PhaselessRecord(
        source=ray.source, theta_b=thetas, absU=absU,
        peak_theta=peak_theta, peak_value=peak_value, peak_fitted=fitted,
        peak_index=idx, tau=tau, retr_exit=retr_exit, n_exit=n_exit,
        im_exit=im_exit, arc_jac=arc_jac, source_mask=mask, flags=flags)


def _synth_chunk(args):
    medium, fan_chunk, cfg, opts = args
    rays = trace_fan(fan_chunk, medium, opts)
    beams = propagate_fan(rays, cfg, medium)
    return [boundary_trace(BeamField(b), medium.domain) for b in beams]


def synthesize(medium: Medium, fan: list, cfg: BeamConfig,
               opts: TraceOptions | None = None, jobs: int = 1,
               config_extra: dict | None = None) -> Dataset:
    """Trace, propagate, and boundary-trace every fan source."""
    opts = opts or TraceOptions()
    try:
        if jobs > 1 and len(fan) >= 2 * jobs:
            chunks = np.array_split(np.arange(len(fan)), jobs)
            payload = [(medium, [fan[i] for i in ch], cfg, opts) for ch in chunks]
            with multiprocessing.Pool(jobs) as pool:
                parts = pool.map(_synth_chunk, payload)
            records = [rec for part in parts for rec in part]
        else:
            records = _synth_chunk((medium, fan, cfg, opts))
    except TrappedRayError as e:
        srcs = [(fan[i].theta_index, fan[i].dir_index) for i in e.indices] \
            if e.indices else []
        raise SynthesisError(
            f"synthesis aborted; trapped sources {srcs}", sources=srcs) from e
    config = {"lambda": cfg.lam, "alpha": cfg.alpha,
              "tube_exponent": cfg.tube_exponent,
              "boundary_samples": int(medium.domain.boundary_samples),
              "fan_size": len(fan), "h": opts.h,
              "noise": 0.0, "noise_seed": None}
    if config_extra:
        config.update(config_extra)
    return Dataset(config=config, records=records, fingerprint=medium.fingerprint())


def _check_compatible(d1: Dataset, d2: Dataset):
    if len(d1) != len(d2):
        raise ContractViolation("datasets have different fan sizes")
    for r1, r2 in zip(d1.records, d2.records):
        if (r1.source.theta_index, r1.source.dir_index) != \
                (r2.source.theta_index, r2.source.dir_index):
            raise ContractViolation("datasets have mismatched fans")
        if r1.theta_b.size != r2.theta_b.size:
            raise ContractViolation("datasets have mismatched boundary grids")


def sup_difference(d1: Dataset, d2: Dataset) -> float:
    """delta = max over sources and boundary nodes of ||u1| - |u2||."""
    _check_compatible(d1, d2)
    return float(max(np.max(np.abs(r1.absU - r2.absU))
                     for r1, r2 in zip(d1.records, d2.records)))


def add_noise(d: Dataset, level: float, seed: int) -> Dataset:
    """Multiplicative uniform noise on |U|, clamped at 0; level 0 = identity."""
    if level < 0:
        raise ContractViolation("noise level must be >= 0")
    rng = np.random.default_rng(seed)
    records = []
    for rec in d.records:
        if level == 0.0:
            records.append(copy.deepcopy(rec))
            continue
        xi = rng.uniform(size=rec.absU.size)
        absU = np.clip(rec.absU * (1.0 + level * (2.0 * xi - 1.0)), 0.0, None)
        idx, pv, pth, fitted, degen = _fit_peak(
            rec.theta_b, absU, rec.source_mask, rec.tau, rec.retr_exit,
            rec.n_exit, rec.im_exit, rec.arc_jac,
            float(d.config["lambda"]), float(d.config["alpha"]))
        flags = dict(rec.flags)
        flags["degenerate"] = degen
        records.append(PhaselessRecord(
            source=rec.source, theta_b=rec.theta_b.copy(), absU=absU,
            peak_theta=pth, peak_value=pv, peak_fitted=fitted, peak_index=idx,
            tau=rec.tau, retr_exit=rec.retr_exit, n_exit=rec.n_exit,
            im_exit=rec.im_exit, arc_jac=rec.arc_jac,
            source_mask=None if rec.source_mask is None else rec.source_mask.copy(),
            flags=flags))
    config = dict(d.config)
    config["noise"] = level
    config["noise_seed"] = seed
    return Dataset(config=config, records=records, fingerprint=d.fingerprint)


# -- dataset files -------------------------------------------------------------

def write_dataset(d: Dataset, dirpath) -> None:
    """JSON header + CSV body (source_idx, theta_b, absU) + record table."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    manifest = csvio.manifest_hash({"config": d.config, "fingerprint": d.fingerprint})
    header = {"config": d.config, "fingerprint": d.fingerprint,
              "n_records": len(d.records), "manifest": manifest}
    (dirpath / "header.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")

    rows = []
    for i, rec in enumerate(d.records):
        for th, u in zip(rec.theta_b, rec.absU):
            rows.append((i, th, u))
    csvio.write_csv(dirpath / "samples.csv", ["source_idx", "theta_b", "absU"],
                    rows, manifest)

    rec_rows = []
    for i, rec in enumerate(d.records):
        s = rec.source
        rec_rows.append((i, s.theta_index, s.dir_index, s.theta, s.psi,
                         s.x0[0], s.x0[1], s.omega0[0], s.omega0[1],
                         rec.tau, rec.peak_theta, rec.peak_value,
                         rec.peak_fitted, rec.retr_exit, rec.n_exit,
                         rec.im_exit, rec.arc_jac,
                         rec.flags.get("degenerate", False)))
    csvio.write_csv(dirpath / "records.csv",
                    ["source_idx", "theta_index", "dir_index", "theta", "psi",
                     "x0x", "x0y", "om0x", "om0y", "tau", "peak_theta",
                     "peak_value", "peak_fitted", "retr_exit", "n_exit",
                     "im_exit", "arc_jac", "degenerate"],
                    rec_rows, manifest)

    mask_rows = []
    for i, rec in enumerate(d.records):
        if rec.source_mask is not None:
            for j in np.nonzero(rec.source_mask)[0]:
                mask_rows.append((i, int(j)))
    csvio.write_csv(dirpath / "mask.csv", ["source_idx", "node_idx"],
                    mask_rows, manifest)


def read_dataset(dirpath) -> Dataset:
    dirpath = Path(dirpath)
    header = json.loads((dirpath / "header.json").read_text())
    _, _, sample_rows = csvio.read_csv(dirpath / "samples.csv")
    _, _, rec_rows = csvio.read_csv(dirpath / "records.csv")
    n = header["n_records"]
    theta_b: list[list[float]] = [[] for _ in range(n)]
    absU: list[list[float]] = [[] for _ in range(n)]
    for row in sample_rows:
        i = int(row[0])
        theta_b[i].append(float(row[1]))
        absU[i].append(float(row[2]))
    masks = [np.zeros(len(theta_b[i]), dtype=bool) for i in range(n)]
    if (dirpath / "mask.csv").exists():
        _, _, mask_rows = csvio.read_csv(dirpath / "mask.csv")
        for row in mask_rows:
            masks[int(row[0])][int(row[1])] = True
    records = []
    for row in rec_rows:
        i = int(row[0])
        src = SourceDirection(
            x0=np.array([float(row[5]), float(row[6])]),
            omega0=np.array([float(row[7]), float(row[8])]),
            theta_index=int(row[1]), dir_index=int(row[2]),
            theta=float(row[3]), psi=float(row[4]))
        tb = np.array(theta_b[i])
        au = np.array(absU[i])
        records.append(PhaselessRecord(
            source=src, theta_b=tb, absU=au,
            peak_theta=float(row[10]), peak_value=float(row[11]),
            peak_fitted=float(row[12]),
            peak_index=int(np.argmax(np.where(masks[i], -np.inf, au))),
            tau=float(row[9]), retr_exit=float(row[13]),
            n_exit=float(row[14]), im_exit=float(row[15]),
            arc_jac=float(row[16]), source_mask=masks[i],
            flags={"degenerate": row[17] == "1"}))
    return Dataset(config=header["config"], records=records,
                   fingerprint=header["fingerprint"])
