import numpy as np
import pytest

from geoeval.grid_data import Grid
from geoeval.synth import SynthConfig, synthesize_dataset

SMALL_SYNTH = SynthConfig(width=60, height=60, corr_lengths=(12.0, 9.0, 7.0, 3.0, 3.0, 2.0, 2.0),
                          n_regions=4, region_corr_length=10.0, n_holes=1, seed=3)


@pytest.fixture(scope="session")
def small_grid():
    return synthesize_dataset(SMALL_SYNTH)


@pytest.fixture(scope="session")
def desk_grid():
    return synthesize_dataset(SynthConfig())


def make_grid(width, height, cov, target, mask=None, names=None):
    cov = np.asarray(cov, dtype=float).reshape(width * height, -1)
    names = names or tuple(f"c{i}" for i in range(cov.shape[1]))
    if mask is None:
        mask = np.ones(width * height, dtype=bool)
    return Grid(width, height, names, cov, np.asarray(target, dtype=float), mask)


# criterion number -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE[number] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
