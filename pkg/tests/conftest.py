from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from epochflow.core import ClassSelection, EpochRange
from epochflow.fixtures import cifar_scenario_run, worked_run


@pytest.fixture
def worked():
    return worked_run()


@pytest.fixture
def full_range(worked):
    return worked.full_range()


@pytest.fixture
def sel_all(worked):
    return ClassSelection.all_classes(worked.class_count)


@pytest.fixture
def sel_a():
    return ClassSelection(selected=(0,))


@pytest.fixture(scope="session")
def cifar_run():
    # ~60k x 50 generation is a couple of seconds; share one per session
    return cifar_scenario_run(seed=7)
