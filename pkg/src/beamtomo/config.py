"""Experiment configuration: defaults, JSON loading, validation, builders.

A config file is a complete document, not a patch: loading does not
merge defaults underneath user files, so a missing required field is
reported by its dotted path (exit code 2 at the CLI).  The shipped
defaults live in DEFAULT_CONFIG; tests and smoke runs derive variants
with merged(), which deep-merges overrides into a copy of the defaults.
"""
from __future__ import annotations

import copy
import json
import math
from pathlib import Path

from .beams import BeamConfig
from .csvio import manifest_hash
from .errors import ConfigError
from .fields import Medium, MetricSpec, ScalarField
from .geometry import DomainSpec, sample_inward_sphere
from .rays import TraceOptions
from .transform import PixelGrid

DEFAULT_CONFIG = {
    "seed": 1234,
    "jobs": 1,
    "domain": {
        "kind": "disk",
        "radius": 1.0,
        "center": [0.0, 0.0],
        "boundary_samples": 720,
    },
    "metric": {"kind": "euclidean"},
    "medium": {
        "base": 1.0,
        "eps": 1e-2,
        "bumps": [{"center": [0.15, -0.1], "width": 0.3, "amp": 1.0}],
        "background_bumps": [],
        "taper": {"lo": 0.10, "hi": 0.20},
    },
    "fan": {"n_points": 64, "n_dirs": 8, "span_deg": 120.0, "cutoff": 0.05},
    "beam": {"lam": 1e4, "alpha": 0.5, "tube_exponent": 0.25},
    "trace": {"h": 1e-3},
    "grid": {"n": 32, "pad_rel": 0.15},
    "regularization": {"lam_rel": 1e-6, "max_iter": 500, "tol": 1e-8},
    "noise": {"level": 0.0, "seed": 1234},
    "sweep": {
        "lambda_list": [1e2, 1e3, 1e4],
        "eps_list": [1e-3, 1e-2],
        "noise_list": [0.0, 1e-4, 1e-3],
    },
    "residual_scan": {"lambda_list": [1e2, 1e3, 1e4]},
}

_REQUIRED = [
    "seed",
    "domain.kind",
    "medium.base",
    "medium.eps",
    "medium.bumps",
    "medium.taper.lo",
    "medium.taper.hi",
    "fan.n_points",
    "fan.n_dirs",
    "fan.span_deg",
    "fan.cutoff",
    "beam.lam",
    "beam.alpha",
    "beam.tube_exponent",
    "trace.h",
    "grid.n",
    "grid.pad_rel",
    "regularization.lam_rel",
    "regularization.max_iter",
    "regularization.tol",
    "noise.level",
    "noise.seed",
    "sweep.lambda_list",
    "sweep.eps_list",
    "sweep.noise_list",
    "residual_scan.lambda_list",
]

_DOMAIN_REQUIRED = {"disk": ["domain.radius"], "ellipse": ["domain.axes"],
                    "polygon": ["domain.vertices"]}


def _lookup(cfg: dict, dotted: str):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"missing config field: {dotted}")
        node = node[part]
    return node


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    for dotted in _REQUIRED:
        _lookup(cfg, dotted)
    kind = cfg["domain"]["kind"]
    for dotted in _DOMAIN_REQUIRED.get(kind, []):
        _lookup(cfg, dotted)
    for name in ("lambda_list", "eps_list", "noise_list"):
        seq = cfg["sweep"][name]
        if len(seq) == 0:
            raise ConfigError(f"sweep.{name} must be non-empty")
        if any(b <= a for a, b in zip(seq, seq[1:])):
            raise ConfigError(f"sweep.{name} must be strictly increasing")
    seq = cfg["residual_scan"]["lambda_list"]
    if len(seq) < 2 or any(b <= a for a, b in zip(seq, seq[1:])):
        raise ConfigError("residual_scan.lambda_list must be strictly "
                          "increasing with at least two entries")
    return cfg


def load_config(path=None) -> dict:
    if path is None:
        return validate_config(copy.deepcopy(DEFAULT_CONFIG))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(cfg)


def merged(overrides: dict, base: dict | None = None) -> dict:
    """Deep-merge overrides into a copy of the defaults (or of base)."""
    def _merge(dst, src):
        for k, v in src.items():
            if isinstance(v, dict) and isinstance(dst.get(k), dict):
                _merge(dst[k], v)
            else:
                dst[k] = copy.deepcopy(v)
        return dst

    out = copy.deepcopy(DEFAULT_CONFIG if base is None else base)
    return _merge(out, overrides)


def config_fingerprint(cfg: dict) -> str:
    return manifest_hash(cfg)


def build_domain(cfg: dict) -> DomainSpec:
    d = cfg["domain"]
    kind = d["kind"]
    if kind == "disk":
        size = d["radius"]
    elif kind == "ellipse":
        size = d["axes"]
    else:
        size = 1.0
    return DomainSpec(kind=kind, radius_or_axes=size,
                      center=d.get("center", (0.0, 0.0)),
                      boundary_samples=d.get("boundary_samples", 720),
                      vertices=d.get("vertices"),
                      smoothing=d.get("smoothing"),
                      margin_rel=d.get("margin_rel", 0.2))


def build_metric(cfg: dict) -> MetricSpec:
    m = cfg.get("metric", {"kind": "euclidean"})
    if m.get("kind", "euclidean") == "euclidean":
        return MetricSpec()
    raise ConfigError("only the euclidean metric is configurable from "
                      "files; conformal factors are library-level objects")


def build_medium(cfg: dict, eps: float | None = None,
                 dom: DomainSpec | None = None) -> Medium:
    """Reference medium (eps=None) or reference plus eps-scaled bumps."""
    dom = dom or build_domain(cfg)
    m = cfg["medium"]
    bumps = [dict(b) for b in m.get("background_bumps", [])]
    if eps is not None:
        for b in m["bumps"]:
            bb = dict(b)
            bb["amp"] = bb["amp"] * eps
            bumps.append(bb)
    if bumps:
        field = ScalarField("gaussian_bump_sum",
                            {"base": m["base"], "bumps": bumps,
                             "taper": dict(m["taper"])},
                            domain=dom)
    else:
        field = ScalarField.constant(m["base"], domain=dom)
    return Medium(domain=dom, n2=field, metric=build_metric(cfg))


def build_difference_field(cfg: dict, eps: float,
                           dom: DomainSpec | None = None) -> ScalarField:
    """The exact n^2 difference between build_medium(cfg, eps) and the
    reference: the eps-scaled bumps under the shared boundary taper."""
    dom = dom or build_domain(cfg)
    m = cfg["medium"]
    bumps = []
    for b in m["bumps"]:
        bb = dict(b)
        bb["amp"] = bb["amp"] * eps
        bumps.append(bb)
    return ScalarField("gaussian_bump_sum",
                       {"base": 0.0, "bumps": bumps, "taper": dict(m["taper"])},
                       domain=dom)


def build_fan(cfg: dict, dom: DomainSpec | None = None):
    dom = dom or build_domain(cfg)
    f = cfg["fan"]
    return sample_inward_sphere(dom, f["n_points"], f["n_dirs"],
                                span=math.radians(f["span_deg"]),
                                cutoff=f["cutoff"])


def build_beam_config(cfg: dict, lam: float | None = None) -> BeamConfig:
    b = cfg["beam"]
    return BeamConfig(lam=b["lam"] if lam is None else lam,
                      alpha=b["alpha"],
                      tube_exponent=b["tube_exponent"])


def build_trace_options(cfg: dict) -> TraceOptions:
    t = cfg["trace"]
    return TraceOptions(h=t["h"],
                        rho_tol=t.get("rho_tol", 1e-10),
                        max_span_factor=t.get("max_span_factor", 50.0))


def build_grid(cfg: dict, dom: DomainSpec | None = None) -> PixelGrid:
    dom = dom or build_domain(cfg)
    g = cfg["grid"]
    return PixelGrid.from_domain(dom, g["n"], pad_rel=g["pad_rel"])
