import numpy as np
import pytest

from fednerf.nerf import RayBatch, chain_dims, init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_batch(rng, n):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    # origins on a shell looking roughly inward
    o = -3.0 * d + 0.3 * rng.normal(size=(n, 3))
    return RayBatch(o, d, rng.random((n, 3)))


def small_params(rng, widths=(39, 8, 8, 4), scale=0.3):
    p = init_params(chain_dims(list(widths)), rng)
    return p.with_values(p.values + scale * rng.normal(size=p.size))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
