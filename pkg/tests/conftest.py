import numpy as np
import pytest

from lowmach.eos import EosParams
from lowmach.fields import BoundaryData, Grid2D, Side


def periodic_grid(nx=4, ny=4, dx=1.0, dy=1.0):
    return Grid2D(nx, ny, dx, dy)


def channel_grid(nx=4, ny=4, dx=1.0, dy=1.0, lo=None, hi=None):
    """Periodic in x; y sides default to a reservoir below and a wall above."""
    lo = lo or Side("reservoir", c=0.39)
    hi = hi or Side("wall_noslip")
    return Grid2D(nx, ny, dx, dy, bc=BoundaryData.channel(lo, hi))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def glycerol():
    return EosParams(rho1_bar=1.29, rho2_bar=1.0)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
