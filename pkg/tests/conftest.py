import time

import numpy as np
import pytest

from vmfgae.adversarial import TrainConfig, train
from vmfgae.synth import ConnectomeSpec, generate_dataset

# criterion number -> (passed, one-line detail); filled by test_acceptance.py
ACCEPTANCE = {}

ACCEPTANCE_SPEC = ConnectomeSpec(n=20, blocks=2, p_in=0.8, p_out=0.05)
ACCEPTANCE_TRAIN = TrainConfig(epochs=300, lambda1=1.0, lambda2=0.1, kappa=20.0, latent_dim=8, seed=0)


class Trained:
    def __init__(self, dataset, cfg):
        self.dataset = dataset
        self.cfg = cfg
        t0 = time.perf_counter()
        self.model, self.disc, self.history = train(dataset.train, cfg)
        self.seconds = time.perf_counter() - t0


@pytest.fixture(scope="session")
def acceptance_run():
    """The full acceptance training run, shared by every test that needs a trained model."""
    ds = generate_dataset(ACCEPTANCE_SPEC, 20, 0.0, seed=1, train_count=200)
    return Trained(ds, ACCEPTANCE_TRAIN)


@pytest.fixture(scope="session")
def small_run():
    """A quick model for tests that only need something better than random."""
    ds = generate_dataset(ACCEPTANCE_SPEC, 4, 0.0, seed=2, train_count=30)
    return Trained(ds, TrainConfig(epochs=40, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
