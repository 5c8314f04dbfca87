import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vusni.data import Dataset, ParamVector

settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def random_mixed_dataset(n, p, rng, verif_frac=0.6):
    """Random dataset with all three classes present among the verified."""
    t = rng.normal(size=n)
    a = rng.normal(size=(n, p)) if p > 0 else np.empty((n, 0))
    v = (rng.random(n) < verif_frac).astype(int)
    v[:3] = 1
    d = rng.integers(1, 4, size=n)
    vi = np.flatnonzero(v)
    d[vi[0]], d[vi[1]], d[vi[2]] = 1, 2, 3
    return Dataset.from_arrays(t, a, v, d)


def random_xi(p, rng, scale=0.7):
    return ParamVector.from_flat(rng.normal(0.0, scale, size=8 + 3 * p), p)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import sys

    module = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    log = getattr(module, "ACCEPTANCE_LOG", None)
    if log:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in log:
            terminalreporter.write_line("  " + line)
