import numpy as np
import pytest

from sharp_interface.acceptance import mcf_circle, static_circle, static_pair, translating_pair
from sharp_interface.functional import build_context
from sharp_interface.model import half_flux_model, reference_model

CRITERION_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[CRITERION_LINES] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(CRITERION_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion_log(request):
    return request.config.stash[CRITERION_LINES]


@pytest.fixture(scope="session")
def ref_model():
    return reference_model()


@pytest.fixture(scope="session")
def ref_ctx(ref_model):
    return build_context(ref_model)


@pytest.fixture(scope="session")
def half_ctx():
    return build_context(half_flux_model())


@pytest.fixture(scope="session")
def ref_profile(ref_ctx):
    return ref_ctx.profile


@pytest.fixture(scope="session")
def ref_op(ref_ctx):
    return ref_ctx.op


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def moving_pair():
    return translating_pair()


@pytest.fixture(scope="session")
def still_pair():
    return static_pair()


@pytest.fixture(scope="session")
def still_circle():
    return static_circle()


@pytest.fixture(scope="session")
def shrinking_circle():
    return mcf_circle()
