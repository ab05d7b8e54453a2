import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

from hercules.geometry import build_array  # noqa: E402
from hercules.wavesim import make_excitation  # noqa: E402

# reference acoustics: 6.3 MHz center, 50 MHz sampling, 250 um pitch
C = 1540.0
FC = 6.3e6
FS = 50e6
PITCH = 250e-6
KERF = 30e-6


def make_geometry(n_rows, n_cols=None):
    return build_array(n_rows, n_rows if n_cols is None else n_cols, PITCH, KERF, FC, FS, C)


@pytest.fixture(scope="session")
def geom8():
    return make_geometry(8)


@pytest.fixture(scope="session")
def geom16():
    return make_geometry(16)


@pytest.fixture(scope="session")
def pulse():
    return make_excitation("gated_sine", FS, fc=FC, cycles=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[key])
