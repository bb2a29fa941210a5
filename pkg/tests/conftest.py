import numpy as np
import pytest

from mkv.fokker_planck import SolverConfig, solve_mild
from mkv.grid import GridSpec, ScalarField
from mkv.kernels import KernelSpec
from mkv.stable_noise import StableParams

ACCEPTANCE: dict[int, str] = {}


def record(number: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])


def gaussian_density(grid: GridSpec, sigma: float = 1.0, center=None) -> ScalarField:
    center = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    r2 = sum((c - x0) ** 2 for c, x0 in zip(grid.coords, center))
    vals = np.exp(-0.5 * r2 / sigma**2)
    return ScalarField(grid, vals / grid.integrate(vals))


def burgers_config(N: int = 512, M: int = 64, **kw) -> SolverConfig:
    g = GridSpec(1, 8.0, N)
    return SolverConfig(mu0=gaussian_density(g), noise=StableParams(2.0, 1), kernel=KernelSpec("burgers"),
                        S=0.5, M=M, picard_tol=kw.pop("picard_tol", 1e-10), **kw)


@pytest.fixture(scope="session")
def burgers_run():
    cfg = burgers_config()
    return cfg, solve_mild(cfg)
