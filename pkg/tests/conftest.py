import numpy as np
import pytest

from spikecluster.potential import make_saddle
from spikecluster.profile import Nonlinearity, compute_constants, get_profile, interaction_kernel


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("profile_cache")


@pytest.fixture(scope="session")
def pr2(cache_dir):
    """N = 2, p = 3 ground state (solved once per session)."""
    return get_profile(2, 3.0, 1e-9, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def rc2(pr2):
    return compute_constants(pr2)


@pytest.fixture(scope="session")
def kernel2(pr2):
    return interaction_kernel(pr2)


@pytest.fixture(scope="session")
def pr1(cache_dir):
    return get_profile(1, 3.0, 1e-9, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def pot():
    return make_saddle([1.0, -1.0])


@pytest.fixture(scope="session")
def nl3():
    return Nonlinearity(3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance reporting -------------------------------------------------------------

ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: PASS unless the test body raises."""
    state = {"detail": ""}
    number = request.node.get_closest_marker("criterion").args[0]
    yield state
    call = getattr(request.node, "rep_call", None)
    ok = call is not None and call.passed
    ACCEPTANCE[number] = ("PASS" if ok else "FAIL", state["detail"])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}".rstrip())
