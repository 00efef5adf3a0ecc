import time

import numpy as np
import pytest

from chirpsense.classifier import TrainConfig, train
from chirpsense.dataset import desk_train_spec, desk_validation_spec, load_features, synthesize
from chirpsense.evaluation import evaluate

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def pytest_collection_modifyitems(items):
    for item in items:
        if {"desk_run", "desk_model"} & set(getattr(item, "fixturenames", ())):
            item.add_marker(pytest.mark.slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class DeskRun:
    """Desk-scale reproduction: 1800-entry train corpus, 1620-entry
    validation corpus, default training, 10 evaluation repetitions."""

    def __init__(self, root):
        t0 = time.perf_counter()
        self.train_manifest = synthesize(desk_train_spec(seed=0), root / "train")
        self.val_manifest = synthesize(desk_validation_spec(seed=1), root / "val")
        X, y = load_features(self.train_manifest)
        self.model, self.history = train(X, y, TrainConfig(seed=0))
        self.report = evaluate(self.model, self.val_manifest, repetitions=10, seed=7)
        self.seconds = time.perf_counter() - t0


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    return DeskRun(tmp_path_factory.mktemp("desk"))


@pytest.fixture(scope="session")
def desk_model(desk_run):
    return desk_run.model
