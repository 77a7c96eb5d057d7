"""Domain shapes, boundary parametrization, and fan sampling."""
import numpy as np
import pytest

from beamtomo.errors import ConfigError
from beamtomo.geometry import DomainSpec, sample_inward_sphere

from conftest import disk


def test_disk_defining_function():
    dom = disk()
    thetas = np.linspace(0, 2 * np.pi, 37)
    pts = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
    assert np.max(np.abs(dom.rho(pts))) < 1e-14
    g = dom.rho_grad(pts)
    assert np.max(np.abs(np.linalg.norm(g, axis=1) - 1.0)) < 1e-12
    # interior negative, exterior positive
    assert np.all(dom.rho(0.5 * pts) < 0)
    assert np.all(dom.rho(1.5 * pts) > 0)


def test_disk_boundary_point_normal():
    dom = disk()
    x, nu = dom.boundary_point(0.7)
    assert np.allclose(x, [np.cos(0.7), np.sin(0.7)], atol=1e-14)
    # inward normal points to the center for a centered disk
    assert np.allclose(nu, -x, atol=1e-14)


def test_boundary_nodes_uniform():
    dom = disk(boundary_samples=90)
    thetas, pts, normals = dom.boundary_nodes()
    assert thetas.shape == (90,)
    assert pts.shape == (90, 2)
    gaps = np.diff(thetas)
    assert np.allclose(gaps, 2 * np.pi / 90, atol=1e-14)
    assert np.max(np.abs(dom.rho(pts))) < 1e-12
    assert np.max(np.abs(np.einsum("ij,ij->i", normals, pts) + 1.0)) < 1e-12


def test_ellipse_boundary():
    dom = DomainSpec("ellipse", (1.5, 0.8), boundary_samples=120)
    _, pts, normals = dom.boundary_nodes()
    lvl = (pts[:, 0] / 1.5) ** 2 + (pts[:, 1] / 0.8) ** 2
    assert np.max(np.abs(lvl - 1.0)) < 1e-10
    assert np.max(np.abs(dom.rho(pts))) < 1e-10
    # unit inward gradient on the boundary
    g = dom.rho_grad(pts)
    assert np.max(np.abs(np.linalg.norm(g, axis=1) - 1.0)) < 1e-8
    assert np.all(np.einsum("ij,ij->i", normals, g) < 0)


def test_polygon_smoothed_boundary():
    verts = np.array([[1.2, 0.0], [0.0, 1.0], [-1.1, 0.1], [-0.2, -1.0]])
    dom = DomainSpec("convex-polygon-smoothed", vertices=verts,
                     smoothing=30.0, boundary_samples=240)
    _, pts, _ = dom.boundary_nodes()
    assert np.max(np.abs(dom.rho(pts))) < 1e-8
    g = dom.rho_grad(pts)
    assert np.max(np.abs(np.linalg.norm(g, axis=1) - 1.0)) < 1e-6


def test_polygon_smoothing_too_soft_rejected():
    verts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ConfigError):
        DomainSpec("convex-polygon-smoothed", vertices=verts, smoothing=0.5)


def test_level_jet_matches_finite_differences():
    a, b = 1.3, 0.9
    dom = DomainSpec("ellipse", (a, b))
    rng = np.random.default_rng(7)
    # stay in the near-boundary band where the level is smooth (the deep
    # half-level is clamped to a constant by design)
    phi = rng.uniform(0.0, 2 * np.pi, size=40)
    fac = rng.uniform(0.6, 0.95, size=40)
    pts = np.stack([a * fac * np.cos(phi), b * fac * np.sin(phi)], axis=1)
    j = dom.level_jet(pts)
    eps = 1e-6
    for axis in range(2):
        dp = np.zeros(2)
        dp[axis] = eps
        fd = (dom.level_jet(pts + dp).value - dom.level_jet(pts - dp).value) / (2 * eps)
        assert np.max(np.abs(fd - j.grad[:, axis])) < 1e-8
        fdh = (dom.level_jet(pts + dp).grad - dom.level_jet(pts - dp).grad) / (2 * eps)
        assert np.max(np.abs(fdh - j.hess[:, :, axis])) < 1e-5


def test_level_jet_deep_clamp_is_constant():
    dom = disk()
    j = dom.level_jet(np.array([[0.1, 0.05], [0.0, 0.0]]))
    assert np.allclose(j.value, 1.0)
    assert np.all(j.grad == 0.0)
    assert np.all(j.hess == 0.0)


def test_fan_sampling_counts_and_span():
    dom = disk()
    fan = sample_inward_sphere(dom, 16, 4, span=2 * np.pi / 3)
    assert len(fan) == 64        # no grazing drops at 120 degrees
    psis = sorted({round(s.psi, 12) for s in fan})
    assert np.isclose(psis[0], -np.pi / 3)
    assert np.isclose(psis[-1], np.pi / 3)
    for s in fan:
        assert np.isclose(np.linalg.norm(s.omega0), 1.0)
        # transversality: inward component above the cutoff
        _, nu = dom.boundary_point(s.theta)
        assert np.dot(s.omega0, nu) >= 0.05


def test_fan_grazing_filter():
    dom = disk()
    wide = sample_inward_sphere(dom, 8, 9, span=np.pi * 0.999, cutoff=0.05)
    # the extreme directions are within cutoff of tangential and get dropped
    assert len(wide) < 72
    with pytest.raises(ConfigError):
        sample_inward_sphere(dom, 4, 1, span=0.0, cutoff=1.5)


def test_fan_speed_rule():
    dom = disk()
    fan = sample_inward_sphere(dom, 4, 1, speed_rule=lambda x: 2.0)
    for s in fan:
        assert np.isclose(np.linalg.norm(s.omega0), 2.0)
