import numpy as np
import pytest

from relugp import experiments as ex
from relugp.kernels import LayeredDscsParams
from relugp.network import init_net
from relugp.rgpr import RgprModel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_net(rng):
    return init_net([3, 4, 5, 2], rng)


@pytest.fixture(scope="session")
def moons_cfg():
    return ex.resolve_config({})


@pytest.fixture(scope="session")
def moons_fit(moons_cfg):
    """Trained two-moons net, last-layer posterior and data splits (default config)."""
    return ex.train_and_fit(moons_cfg)


@pytest.fixture(scope="session")
def moons_model(moons_fit):
    net, post, _ = moons_fit
    return RgprModel(net, post, LayeredDscsParams.uniform(net.n_representations, 1.0))


@pytest.fixture(scope="session")
def regression_cfg():
    return ex.resolve_config({"dataset": "toy_regression"})


@pytest.fixture(scope="session")
def regression_fit(regression_cfg):
    return ex.train_and_fit(regression_cfg)


ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Print and keep a one-line verdict; the caller still asserts."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
