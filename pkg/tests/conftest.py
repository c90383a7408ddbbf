import numpy as np
import pytest

from tactile_moment.field import DisplacementField, GridSpec

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def gaussian(X, Y, cx, cy, s):
    return np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * s * s))


def grad_gaussian(grid, cx=0.0, cy=0.0, s=3.0, amp=1.0):
    """Analytic gradient of ``amp * exp(-r^2 / 2 s^2)``, sampled at nodes."""

    def fn(X, Y):
        g = amp * gaussian(X, Y, cx, cy, s)
        return -(X - cx) / s**2 * g, -(Y - cy) / s**2 * g

    return DisplacementField.from_function(grid, fn)


def laplacian_gaussian(grid, cx=0.0, cy=0.0, s=3.0, amp=1.0):
    X, Y = grid.coords()
    r2 = (X - cx) ** 2 + (Y - cy) ** 2
    return amp * (r2 / s**4 - 2 / s**2) * gaussian(X, Y, cx, cy, s)


def random_smooth_field(grid, rng, n_max=5):
    """Sum of up to ``n_max`` Gaussian sources and vortices plus a drift."""
    X, Y = grid.coords()
    xmin, xmax, ymin, ymax = grid.bounds
    u = np.zeros(grid.shape)
    v = np.zeros(grid.shape)
    for _ in range(rng.integers(1, n_max + 1)):
        cx = rng.uniform(xmin + 4 * grid.pitch, xmax - 4 * grid.pitch)
        cy = rng.uniform(ymin + 4 * grid.pitch, ymax - 4 * grid.pitch)
        s = rng.uniform(3, 6) * grid.pitch
        a, b = rng.normal(size=2)
        g = gaussian(X, Y, cx, cy, s)
        gx, gy = -(X - cx) / s**2 * g, -(Y - cy) / s**2 * g
        u += a * gx - b * gy
        v += a * gy + b * gx
    u += rng.normal(scale=0.05)
    v += rng.normal(scale=0.05)
    return DisplacementField(grid, np.stack([u, v], -1))


@pytest.fixture
def grid32():
    return GridSpec.centered(32, 32, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
