import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_mesh():
    from ttpce.fem import build_lshape_mesh
    return build_lshape_mesh(0, cells=5)


@pytest.fixture(scope="session")
def coarse_mesh():
    from ttpce.fem import build_lshape_mesh
    return build_lshape_mesh(0)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(request):
    """criterion number -> list of (part, ok, detail), printed after the run."""
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    res = config.stash.get(_ACCEPTANCE, None)
    if not res:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(res):
        parts = res[n]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAIL'} ({d})" for name, good, d in parts)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
