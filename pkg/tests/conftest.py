import os
import sys
import time

import pytest
from hypothesis import HealthCheck, settings

from cbdmeasures import cli
from cbdmeasures.generators import make_cyclic
from cbdmeasures.harness import read_csv, sweep_parity

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CORR = [0.5, 0.0, 0.0, 0.5]
ANTI = [0.0, 0.5, 0.5, 0.0]


@pytest.fixture
def corr_anti():
    """Rank-2 cyclic system: c1 perfectly correlated, c2 perfectly anticorrelated."""
    return make_cyclic(2, [CORR, ANTI])


@pytest.fixture
def pr_box():
    return make_cyclic(4, [CORR, CORR, CORR, ANTI])


# Sweeps shared by the harness, CLI and acceptance tests. They are the
# expensive part of the suite, so each one runs at most once per session.

@pytest.fixture(scope="session")
def parity34_csv(tmp_path_factory):
    """The reference (3,4) parity sweep, produced through the CLI: 2000 systems, seed 42."""
    path = tmp_path_factory.mktemp("sweeps") / "r4.csv"
    t0 = time.perf_counter()
    code = cli.main(["sweep", "--family", "parity", "--order", "3", "--rank", "4",
                     "--count", "2000", "--seed", "42", "--out", str(path)])
    assert code == 0
    return path, time.perf_counter() - t0


@pytest.fixture(scope="session")
def parity34_records(parity34_csv):
    return read_csv(parity34_csv[0])


@pytest.fixture(scope="session")
def parity35_records():
    """(3,5) parity sweep of 1000 random eps vectors from seed 42, with its wall time."""
    t0 = time.perf_counter()
    records = sweep_parity(3, 5, "random", count=1000, seed=42)
    return records, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines at the end of the run."""
    lines = [line for mod in list(sys.modules.values())
             if getattr(mod, "__name__", "").endswith("test_acceptance")
             for line in getattr(mod, "RESULTS", [])]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
