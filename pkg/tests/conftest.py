import numpy as np
import pytest
from hypothesis import settings

from snnfilter.config import load_bundled
from snnfilter.systems import NoiseSpec, VanDerPol

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def vdp():
    return VanDerPol(mu=0.005)


@pytest.fixture
def vdp_noise():
    return NoiseSpec(np.eye(2) / 100, np.array([[0.1]]))


@pytest.fixture(scope="session")
def vdp_cfg():
    return load_bundled("van_der_pol")


@pytest.fixture(scope="session")
def rdv_cfg():
    return load_bundled("rendezvous")


# ---------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion in the terminal
# summary, so the verdicts survive output capturing.
# ---------------------------------------------------------------------------

ACCEPTANCE_CRITERIA = {
    1: "Van der Pol baseline ratios",
    2: "process-noise mismatch ratios",
    3: "measurement-noise mismatch ratios",
    4: "rendezvous ratios and 3-sigma coverage",
    5: "spike sparsity",
    6: "neuron sweep",
    7: "runtime orderings",
    8: "property suite",
    9: "silencing robustness",
}
_acceptance = {}


@pytest.fixture
def report():
    def record(number, ok, detail):
        _acceptance[number] = (bool(ok), detail)
        print(f"criterion {number} ({ACCEPTANCE_CRITERIA[number]}): {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in ACCEPTANCE_CRITERIA.items():
        ok, detail = _acceptance.get(number, (False, "not run in this session"))
        terminalreporter.write_line(f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'}  {detail}")
