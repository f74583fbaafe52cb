import numpy as np
import pytest

from snas.benchgen import BUILTIN_SPACES, generate_benchmark
from snas.oracle import NoiseProfile, SyntheticOracle
from snas.space import SpaceSpec, TabularBenchmark


NOISELESS = NoiseProfile(0.0, 0.0, 1.0, 0.0, name="noiseless")


@pytest.fixture(scope="session")
def tiny():
    return BUILTIN_SPACES["tiny"]()


@pytest.fixture(scope="session")
def nb():
    return BUILTIN_SPACES["nb201-shape"]()


@pytest.fixture
def flip_bench():
    """The 1-edge / 2-op space: two architectures, the second one better."""
    spec = SpaceSpec(2, ("a", "b"))
    from snas.space import CellEncoding
    return TabularBenchmark(spec, {CellEncoding((0,), spec): 40.0, CellEncoding((1,), spec): 60.0})


@pytest.fixture
def noiseless_tiny(tiny):
    return SyntheticOracle(tiny, NOISELESS, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if not report:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(report):
        terminalreporter.write_line(report[n])
