import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent / "oracles"))

from quadgroup.hamiltonian import Orientation, QuadrupoleParams, SpinSystemParams  # noqa: E402
from quadgroup.powder import EnsembleMember  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale optimisation runs (hours on one core)")


@pytest.fixture
def rbclo4():
    """Spin system used throughout: C_Q = 3.2 MHz, eta = 0.2, 130.9 MHz, 30 kHz MAS."""
    return SpinSystemParams(QuadrupoleParams(3.2e6, 0.2), 130.9e6, 0.0, 30e3)


@pytest.fixture
def member(rbclo4):
    return EnsembleMember(Orientation(0.7, 1.1, 2.3), 1.0, rbclo4, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, n=4, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def random_unitary(rng, n=4):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


ACCEPTANCE_RESULTS: dict[str, str] = {}


def record_criterion(key: str, passed: bool, detail: str) -> None:
    """Remember one acceptance verdict; the terminal summary prints them all."""
    ACCEPTANCE_RESULTS[key] = f"{key}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[1])):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])
