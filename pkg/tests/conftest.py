import numpy as np
import pytest

from nvmag.calibration import fit_bias, linearize
from nvmag.constants import BIAS_FIELD, ODMR_LINE_CENTERS, STRAIN_MZ, ZFS_D
from nvmag.spin_model import HamiltonianParams


@pytest.fixture(scope="session")
def ref_point():
    return HamiltonianParams(BIAS_FIELD, ZFS_D, STRAIN_MZ)


@pytest.fixture(scope="session")
def fitted():
    return fit_bias(ODMR_LINE_CENTERS)


@pytest.fixture(scope="session")
def matrix(fitted):
    return linearize(fitted.params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """Record a criterion outcome for the end-of-run summary, then return it."""

    def record(number: int, ok, detail: str):
        ACCEPTANCE[number] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
