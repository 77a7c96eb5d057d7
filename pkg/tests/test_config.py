"""Config validation, merging, and object builders."""
import json

import numpy as np
import pytest

from beamtomo.config import (DEFAULT_CONFIG, build_difference_field,
                             build_domain, build_fan, build_grid,
                             build_medium, config_fingerprint, load_config,
                             merged, validate_config)
from beamtomo.errors import ConfigError


def test_defaults_validate():
    cfg = load_config(None)
    assert cfg == DEFAULT_CONFIG
    assert cfg is not DEFAULT_CONFIG      # defensive copy


def test_missing_field_reported_by_dotted_path():
    cfg = merged({})
    del cfg["beam"]["alpha"]
    with pytest.raises(ConfigError, match="beam.alpha"):
        validate_config(cfg)


def test_config_files_are_complete_documents(tmp_path):
    # a partial file is rejected rather than silently merged with defaults
    p = tmp_path / "partial.json"
    p.write_text(json.dumps({"beam": {"lam": 500.0}}))
    with pytest.raises(ConfigError):
        load_config(p)
    full = tmp_path / "full.json"
    full.write_text(json.dumps(merged({"beam": {"lam": 500.0}})))
    cfg = load_config(full)
    assert cfg["beam"]["lam"] == 500.0
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_domain_kind_specific_requirements():
    cfg = merged({"domain": {"kind": "ellipse"}})
    del cfg["domain"]["radius"]
    with pytest.raises(ConfigError, match="domain.axes"):
        validate_config(cfg)
    cfg["domain"]["axes"] = [1.3, 0.9]
    validate_config(cfg)
    dom = build_domain(cfg)
    assert dom.kind == "ellipse"


def test_sweep_lists_must_increase():
    with pytest.raises(ConfigError, match="lambda_list"):
        validate_config(merged({"sweep": {"lambda_list": [1e3, 1e2]}}))
    with pytest.raises(ConfigError, match="noise_list"):
        validate_config(merged({"sweep": {"noise_list": []}}))
    with pytest.raises(ConfigError, match="residual_scan"):
        validate_config(merged({"residual_scan": {"lambda_list": [50.0]}}))


def test_merged_is_deep_and_nondestructive():
    cfg = merged({"medium": {"eps": 0.5}})
    assert cfg["medium"]["eps"] == 0.5
    assert cfg["medium"]["base"] == DEFAULT_CONFIG["medium"]["base"]
    assert DEFAULT_CONFIG["medium"]["eps"] == 1e-2
    cfg["medium"]["bumps"][0]["amp"] = 99.0
    assert DEFAULT_CONFIG["medium"]["bumps"][0]["amp"] == 1.0


def test_fingerprint_tracks_content():
    a = config_fingerprint(merged({}))
    b = config_fingerprint(merged({}))
    c = config_fingerprint(merged({"seed": 99}))
    assert a == b
    assert a != c


def test_difference_field_matches_medium_difference():
    cfg = merged({"grid": {"n": 12}})
    dom = build_domain(cfg)
    eps = 3e-2
    ref = build_medium(cfg, eps=None, dom=dom)
    meas = build_medium(cfg, eps=eps, dom=dom)
    diff = build_difference_field(cfg, eps, dom=dom)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.7, 0.7, size=(200, 2))
    lhs = meas.n2_jet(pts, order=0).value - ref.n2_jet(pts, order=0).value
    rhs = diff.jet(pts, order=0).value
    assert np.max(np.abs(lhs - rhs)) < 1e-14
    # the difference vanishes with all derivatives at the boundary
    _, bpts, _ = dom.boundary_nodes()
    assert np.max(np.abs(diff.jet(bpts, order=1).grad)) < 1e-12


def test_builders_respect_config():
    cfg = merged({"fan": {"n_points": 6, "n_dirs": 2, "span_deg": 90.0},
                  "grid": {"n": 9, "pad_rel": 0.1},
                  "domain": {"boundary_samples": 100}})
    dom = build_domain(cfg)
    assert dom.boundary_samples == 100
    fan = build_fan(cfg, dom)
    assert len(fan) == 12
    psis = {round(s.psi, 10) for s in fan}
    assert max(psis) <= np.pi / 4 + 1e-9
    grid = build_grid(cfg, dom)
    assert grid.nx == 9
    assert np.isclose(grid.h, 2.2 / 9)
