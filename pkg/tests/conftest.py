import numpy as np
import pytest

from fockfk.fock import build_context


@pytest.fixture
def ctx2():
    return build_context(2, [1.0, 2.0], 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rand_modes(rng, K, scale=1.0):
    return scale * (rng.normal(size=K) + 1j * rng.normal(size=K))


def rand_state(rng, ctx, max_number=None):
    v = rng.normal(size=ctx.dim) + 1j * rng.normal(size=ctx.dim)
    if max_number is not None:
        v[ctx.total_number() > max_number] = 0
    return v / np.linalg.norm(v)


CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
