import warnings

import numpy as np
import pytest

from lpl.nn import LayerSpec, init_network, mlp_specs

warnings.filterwarnings("ignore", message=".*TBB.*")


def numeric_grad(f, x, h=1e-5):
    """Central differences of a scalar function over every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def max_rel_error(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))


@pytest.fixture
def small_tanh_net():
    return init_network(mlp_specs([3, 5, 2], "tanh", "tanh"), seed=1)


@pytest.fixture
def identity_layer():
    spec = LayerSpec(2, 2)
    from lpl.nn import MlpNetwork

    return MlpNetwork((spec,), (np.eye(2),), (np.zeros(2),))


RING_LATENT = 2


@pytest.fixture(scope="session")
def ring_data():
    from lpl.datasets import make_ring2d

    return make_ring2d(4000, seed=0)


@pytest.fixture(scope="session")
def trained_ring(ring_data):
    """A ring GAN after 2000 steps; shared because training takes seconds."""
    from lpl.gan import TrainConfig, gan_train, make_gan

    model = make_gan(2, latent_dim=RING_LATENT, seed=0)
    model, rows, _ = gan_train(model, ring_data, TrainConfig(steps=2000, seed=0))
    return model, rows


# -- acceptance report -----------------------------------------------------------

ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
