import numpy as np
import pytest
from hypothesis import settings

from groundpop.forward import PopulationDistribution, ProbeConfig
from groundpop.lineshape import VoigtParams
from groundpop.structure import rb87_d1

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE = {}

GAMMA = 103e6
SIGMA = 202e6


@pytest.fixture(scope="session")
def scheme():
    return rb87_d1()


@pytest.fixture(scope="session")
def voigt():
    return VoigtParams(GAMMA, SIGMA)


@pytest.fixture(scope="session")
def axis():
    # 12 GHz scan, 2500 samples
    return np.linspace(-5.5e9, 6.5e9, 2500)


@pytest.fixture
def probes(axis, voigt):
    def make(n0=1e10, qs=(1, -1), ax=None, v=None, **kw):
        ax = axis if ax is None else ax
        v = voigt if v is None else v
        return [ProbeConfig(q, ax, n0, v, **kw) for q in qs]

    return make


def random_population(scheme, rng, concentration=1.0):
    return PopulationDistribution(rng.dirichlet(np.full(len(scheme.ground_states()), concentration)), scheme)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
