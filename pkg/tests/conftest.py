import numpy as np
import pytest

from beamtomo.config import merged
from beamtomo.fields import Medium, ScalarField
from beamtomo.geometry import DomainSpec
from beamtomo.rays import TraceOptions

# Unit tests run on reduced discretizations; the acceptance module pins
# the full-resolution settings.


def disk(boundary_samples=180, radius=1.0):
    return DomainSpec("disk", radius, boundary_samples=boundary_samples)


def bump_medium(dom, amp=1e-2, base=1.0, center=(0.15, -0.1), width=0.3):
    n2 = ScalarField("gaussian_bump_sum",
                     {"base": base,
                      "bumps": [{"center": list(center), "width": width,
                                 "amp": amp}],
                      "taper": {"lo": 0.10, "hi": 0.20}},
                     boundary_value=base, domain=dom)
    return Medium(domain=dom, n2=n2)


def constant_medium(dom, base=1.0):
    return Medium(domain=dom, n2=ScalarField.constant(base, domain=dom))


def smoke_config(**over):
    """Reduced full-document config for CLI/driver smoke runs."""
    base = merged({
        "domain": {"boundary_samples": 180},
        "fan": {"n_points": 8, "n_dirs": 2},
        "beam": {"lam": 1e3},
        "trace": {"h": 1e-2},
        "grid": {"n": 10},
        "medium": {"eps": 5e-2},
        "regularization": {"max_iter": 300},
        "sweep": {"lambda_list": [300.0], "eps_list": [5e-2],
                  "noise_list": [0.0, 1e-3]},
        "residual_scan": {"lambda_list": [2e2, 6e2]},
    })
    return merged(over, base) if over else base


@pytest.fixture(scope="session")
def fast_opts():
    return TraceOptions(h=5e-3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260825)
