import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from asymgan import TrainConfig  # noqa: E402
from asymgan.config import seed_all  # noqa: E402
from asymgan.networks import init_model_bundle  # noqa: E402


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def tiny_cfg():
    # channel widths 8/16/32, smallest discriminator-compatible images
    return TrainConfig(base_channels=8, image_size=(32, 64), batch_size=2, iterations=10)


@pytest.fixture
def tiny_bundle(tiny_cfg):
    seed_all(0)
    return init_model_bundle(tiny_cfg)


@pytest.fixture
def toy_pair():
    g = torch.Generator().manual_seed(0)
    x_a = torch.rand(2, 3, 32, 64, generator=g) * 2 - 1
    x_b = torch.rand(2, 3, 32, 64, generator=g) * 2 - 1
    return x_a, x_b


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record the outcome of the acceptance criterion named by the test's marker.

    Call ``criterion(ok, detail)``; a test that errors before calling it is
    reported as failed.
    """
    results = request.config.stash.setdefault(ACCEPTANCE, {})
    name = request.node.get_closest_marker("criterion").args[0]
    results[name] = (False, "did not complete")

    def record(ok, detail):
        results[name] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(results, key=lambda k: int(k.split(".")[0])):
        ok, detail = results[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
