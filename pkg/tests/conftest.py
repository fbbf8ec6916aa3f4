import numpy as np
import pytest

RESULTS = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical check")
    config.addinivalue_line("markers", "acceptance: acceptance criterion")


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the end-of-run summary."""
    def record(number, checks, detail):
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        RESULTS.append((number, ok, detail, failed))
        return ok, failed
    return record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail, failed in sorted(RESULTS):
        status = "PASS" if ok else "FAIL"
        extra = f" (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"CRITERION {number}: {status} | {detail}{extra}")


@pytest.fixture(scope="session")
def default_params():
    from geomews.model import ModelParams
    return ModelParams()


@pytest.fixture(scope="session")
def field_b21_s01():
    """Committor, MFPT and separatrix at b1 = 2.1, sigma = 0.01 on the default grid."""
    from geomews.analysis import fdm_point
    from geomews.model import ModelParams
    return fdm_point(ModelParams(), 0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fdm_cache(tmp_path_factory):
    from geomews.pde import FieldCache
    return FieldCache(tmp_path_factory.mktemp("fields"))


@pytest.fixture(scope="session")
def base_sweep(fdm_cache):
    """FDM noise sweep at b1 = 2.10 on the default grid, with its wall time."""
    import time
    from geomews.analysis import DEFAULT_SIGMAS, sigma_sweep
    from geomews.model import ModelParams
    t0 = time.perf_counter()
    results = sigma_sweep(ModelParams(b1=2.10), DEFAULT_SIGMAS, cache=fdm_cache)
    return results, time.perf_counter() - t0


@pytest.fixture(scope="session")
def indicator_records(fdm_cache):
    """EWS_geom, MDB and MDS on the 0.004-step b1 scan, with its wall time."""
    import time
    from geomews.analysis import indicator_scan
    from geomews.model import ModelParams
    b1 = np.round(np.arange(2.0, 2.44 + 1e-9, 0.004), 6)
    t0 = time.perf_counter()
    recs = indicator_scan(ModelParams(), b1, [0.005, 0.01, 0.02], cache=fdm_cache)
    return recs, time.perf_counter() - t0
