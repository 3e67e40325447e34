import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_sweep(tmp_path_factory):
    """The default N=512, j=4..7, delta=2 sweep, run once per session."""
    import time

    from cartex.harness import SweepConfig, run_scale_sweep, write_report

    out = tmp_path_factory.mktemp("sweep_a")
    cfg = SweepConfig(out_dir=str(out)).validate()
    start = time.perf_counter()
    results = run_scale_sweep(cfg)
    elapsed = time.perf_counter() - start
    write_report(results, out, cfg)
    return cfg, results, out, elapsed


_CRITERIA: dict = {}


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(number, ok, detail):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} -- {detail}"
        _CRITERIA[number] = line
        print("\n" + line)
        assert ok, detail

    return check


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
