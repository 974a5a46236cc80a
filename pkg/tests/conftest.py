import numpy as np
import pytest
from hypothesis import settings

from daedl import data, density, network

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def moons_model():
    """Small two-moons DAEDL model shared by tests that only need *a* trained model."""
    ds = data.two_moons(400, 0.1, seed=3)
    tr, va = data.split(ds, 0.8, seed=3)
    net = network.EvidentialNetwork.create(2, [16, 16, 16], 2, seed=3, residual=True)
    cfg = network.TrainConfig(batch_size=16, max_epochs=40, patience=40, lr_decay=1.0, seed=3)
    best, history = network.train(net, tr, va, cfg)
    gda = density.fit(best.features(tr.X), tr.y)
    return best, gda, tr, history


def pytest_terminal_summary(terminalreporter):
    from ._acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
