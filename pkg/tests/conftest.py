import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tempergrid.ising import IsingModel

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_model(n, rng, density=0.6, field_scale=0.5) -> IsingModel:
    edges = [(i, j, float(rng.normal())) for i in range(n) for j in range(i + 1, n) if rng.random() < density]
    return IsingModel.from_edges(n, edges, rng.normal(scale=field_scale, size=n))


def random_state(n, rng):
    return np.where(rng.random(n) < 0.5, -1, 1).astype(np.int8)


def brute_energy(model, s):
    """Term-by-term energy, independent of the vectorised implementation."""
    e = 0.0
    for i, j, w in model.edges():
        e -= w * s[i] * s[j]
    for i in range(model.n_spins):
        e -= model.fields[i] * s[i]
    return e


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._criterion_lines = []


@pytest.fixture
def report(request, capsys):
    """Print and record one PASS/FAIL line per criterion."""
    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        request.config._criterion_lines.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
