import numpy as np
import pytest

from petparc.nn.model import EncoderConfig, init_params
from petparc.pipeline import ModelCheckpoint

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((criterion, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_checkpoint(mode="flip_invariant", seed=0, **enc) -> ModelCheckpoint:
    cfg = EncoderConfig(
        **{
            "num_layers": 2,
            "token_dim": 16,
            "ff_hidden": 32,
            "head_hidden": 32,
            "num_classes": 11,
            "input_dim": 66 if mode == "flip_invariant" else 45,
            **enc,
        }
    )
    params = init_params(cfg, np.random.default_rng(seed))
    return ModelCheckpoint(cfg, mode, {k: p.data for k, p in params.items()})


@pytest.fixture
def tiny_checkpoint():
    return random_checkpoint()
