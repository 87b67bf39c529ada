import pytest

from envara_rds import multiscale as ms
from envara_rds.grid_ops import Grid

SWEEP_EPS = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]

# criterion number -> (label, passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def gspt_sweep():
    """Prepared-data eps-sweep on the reference grid (n=256, T=1)."""
    grid = Grid.line(256)
    return ms.convergence_study(SWEEP_EPS, 1.0, grid, ms.default_gspt_params())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        label, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {label}: {detail}")
