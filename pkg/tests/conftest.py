import sys

import numpy as np
import pytest

from extflow import grid


def conformal_x1(N, amp=0.1):
    """g = exp(2 psi) delta with psi = amp sin x1, plus psi' and psi''."""
    gm = grid.GridManifold(N, N)
    X1, _ = gm.coords()
    psi = amp * np.sin(X1)
    return gm, grid.MetricField.conformal(psi), psi, amp * np.cos(X1), -amp * np.sin(X1)


def smooth_field(gm, rng, modes=3, scale=1.0):
    X1, X2 = gm.coords()
    f = np.zeros(gm.shape)
    for k1 in range(-modes, modes + 1):
        for k2 in range(-modes, modes + 1):
            a, b = rng.normal(size=2) / (1 + k1 * k1 + k2 * k2)
            arg = 2 * np.pi * (k1 * X1 / gm.L1 + k2 * X2 / gm.L2)
            f += a * np.cos(arg) + b * np.sin(arg)
    return scale * f / np.max(np.abs(f))


def smooth_metric(gm, rng, amp=0.2):
    d11, d12, d22 = (smooth_field(gm, rng) for _ in range(3))
    return grid.MetricField.from_components(1 + amp * d11, 0.5 * amp * d12, 1 + amp * d22)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
