import numpy as np
import pytest

from avspatial.ambisonics import Direction

SR = 24000


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def noise(n, seed=0):
    return np.random.default_rng(seed).standard_normal(n)


def direction_grid(n_az, n_el, max_el=80.0):
    """``n_az x n_el`` grid of directions, elevations within +-max_el degrees."""
    azs = np.linspace(-180.0, 180.0, n_az, endpoint=False) + 180.0 / n_az
    els = np.linspace(-max_el, max_el, n_el)
    return [Direction.from_degrees(a, e) for a in azs for e in els]


def arc_degrees(u, v):
    u = np.asarray(u) / np.linalg.norm(u)
    v = np.asarray(v) / np.linalg.norm(v)
    return float(np.rad2deg(np.arccos(np.clip(u @ v, -1.0, 1.0))))


# acceptance outcomes, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
