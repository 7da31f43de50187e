"""Shared fixtures and the acceptance-criteria summary hook.

Tests marked @pytest.mark.criterion("...") get one PASS/FAIL line each in
the terminal summary, so the acceptance gate is readable at a glance.
"""

from __future__ import annotations

import numpy as np
import pytest

from aedesnet.data import generate_synthetic_dataset, split_dataset
from aedesnet.model import build_model, reference16
from aedesnet.modelfmt import ModelMeta, save_model
from aedesnet.rng import Rng
from aedesnet.train import fit_preprocess_stats, TrainConfig

_criterion_by_nodeid: dict[str, str] = {}
_criterion_results: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(name): marks a test as one acceptance criterion"
    )


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            _criterion_by_nodeid[item.nodeid] = marker.args[0]


def pytest_runtest_logreport(report):
    name = _criterion_by_nodeid.get(report.nodeid)
    if name is None:
        return
    current = _criterion_results.get(name)
    if report.when == "call":
        outcome = "PASS" if report.passed else "FAIL"
    elif report.failed:  # setup or teardown error
        outcome = "FAIL"
    elif report.skipped:
        outcome = "SKIP"
    else:
        return
    # several tests may share one criterion; a FAIL is never overwritten
    if current != "FAIL":
        _criterion_results[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criterion_results):
        terminalreporter.write_line(f"{_criterion_results[name]}  {name}")


@pytest.fixture(scope="session")
def small_dataset():
    """60 synthetic samples at 32x32, split 42/18/0."""
    dataset = generate_synthetic_dataset(30, image_size=(32, 32), rng=Rng(11))
    return split_dataset(dataset, (0.7, 0.3, 0.0), Rng(11).substream("split"))


@pytest.fixture(scope="session")
def small_bundle_path(tmp_path_factory, small_dataset):
    """A saved reference-16 artifact at 32x32 with fitted stats (untrained
    weights; plenty for format/service/CLI agreement tests)."""
    spec = reference16((32, 32, 3))
    model = build_model(spec, Rng(11).substream("init"), dtype="float32")
    images = small_dataset.images(small_dataset.split.train)
    stats = fit_preprocess_stats(images, TrainConfig())
    meta = ModelMeta(class_names=small_dataset.class_names,
                     input_shape=spec.input_shape, threshold=0.5,
                     model_version="test-1", seed=11)
    path = tmp_path_factory.mktemp("artifact") / "model.maed"
    save_model(model, stats, path, meta=meta)
    return path


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
