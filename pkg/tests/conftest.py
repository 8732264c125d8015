import pytest

from cdlab.grid_field import Grid
from cdlab.model import DiffusionPerturbation, Dipole, Gaussian, InitialData, ModelSpec
from cdlab.solver import SolverConfig, solve

BVAR = DiffusionPerturbation("power_decay", 0.3, 2.0)


def small_model(b=DiffusionPerturbation(), u0=None, q=3.0, d=(1.0,)):
    u0 = u0 or InitialData((Gaussian(2.0, 1.0, (0.5,)),))
    return ModelSpec(1, q, d, b, u0)


def small_config(t_final=100.0, L=100.0, N=1280, **kw):
    return SolverConfig(Grid(1, L, N), t_final, **kw)


@pytest.fixture(scope="session")
def run_b0():
    return solve(small_model(), small_config())


@pytest.fixture(scope="session")
def run_bvar():
    return solve(small_model(BVAR), small_config())


@pytest.fixture(scope="session")
def run_dipole():
    return solve(small_model(BVAR, InitialData((Dipole(2.0, 1.0),))), small_config())


@pytest.fixture(scope="session")
def run_heat():
    u0 = InitialData((Gaussian(1.0, 1.0, (0.0,)),))
    return solve(ModelSpec(1, 3.0, (0.0,), DiffusionPerturbation(), u0),
                 SolverConfig(Grid(1, 60.0, 8192), 4.0, dt_init=1e-2))


# criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
