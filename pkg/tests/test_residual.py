"""Discrete-Helmholtz residual scan of the beam ansatz."""
import pytest

from beamtomo.beams import BeamConfig
from beamtomo.errors import ConfigError
from beamtomo.rays import TraceOptions
from beamtomo.residual import residual_point, scan_residuals

from conftest import bump_medium, disk


def test_residual_point_rejects_heterogeneous_medium():
    dom = disk()
    med = bump_medium(dom)
    with pytest.raises(ConfigError):
        residual_point(med, dom, BeamConfig(lam=100.0))


def test_scan_slope_near_minus_one():
    # reduced grids keep this quick; the full-resolution scan is pinned
    # in the acceptance module
    dom = disk()
    scan = scan_residuals([3e2, 3e3], dom, opts=TraceOptions(h=5e-3),
                          nx=181, nodes_per_width=8)
    assert scan.monotone
    assert abs(scan.slope - (-1.0)) < 0.35
    for p in scan.points:
        assert p.residual_rel > 0
        assert p.field_norm > 0
        assert p.nx == 181


def test_residual_truncation_under_refinement():
    # doubling the grid must not move the measured residual by more
    # than a few percent (the FD truncation is subdominant)
    dom = disk()
    med_cfg = BeamConfig(lam=1e3, alpha=0.5)
    from beamtomo.fields import Medium, ScalarField
    med = Medium(domain=dom, n2=ScalarField.constant(1.0, domain=dom))
    p1 = residual_point(med, dom, med_cfg, TraceOptions(h=5e-3),
                        nx=181, nodes_per_width=8)
    p2 = residual_point(med, dom, med_cfg, TraceOptions(h=5e-3),
                        nx=181, nodes_per_width=8, refine=2)
    assert abs(p2.residual_rel - p1.residual_rel) < 0.05 * p1.residual_rel
