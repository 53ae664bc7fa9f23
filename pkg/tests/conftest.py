import pytest

from lattice_wkb.model import anisotropic_model, isotropic_model, reference_model
from lattice_wkb.pipeline import build_pipeline
from lattice_wkb.polynomial import FLOAT

_criteria: list[str] = []

@pytest.fixture(scope="session")
def criteria_log():
    return _criteria

def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criteria, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

@pytest.fixture(scope="session")
def ref_pipe():
    """Reference model through order eps^3, Hermite levels up to |alpha| = 9."""
    return build_pipeline(reference_model(), 3, alpha_cutoff=9)

@pytest.fixture(scope="session")
def ref_small():
    return build_pipeline(reference_model(), 1, alpha_cutoff=4)

@pytest.fixture(scope="session")
def iso_pipe():
    return build_pipeline(isotropic_model(), 2, alpha_cutoff=3)

@pytest.fixture(scope="session")
def aniso_pipe():
    return build_pipeline(anisotropic_model(), 2, alpha_cutoff=2, ctx=FLOAT)
