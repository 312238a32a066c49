"""Deterministic run generators for tests, demos, and benchmarks.

``worked_run`` is the 4-instance hand-checkable example used throughout the
test suite; ``random_run`` drives the property suites; ``cifar_scenario_run``
is a synthetic 60k-instance, 10-class, 50-epoch run with two planted cohorts
of Auto instances: one that is classified correctly early and then flips to a
stable Truck prediction, and one that recovers from an early Truck
misclassification to a stable correct prediction.
"""

from __future__ import annotations

import numpy as np

from .core import TrainingRun, build_run
from .ingest import DocumentInstance, RunDocument

CIFAR_CLASSES = ("Plane", "Auto", "Bird", "Cat", "Deer", "Dog", "Frog", "Horse", "Ship", "Truck")

_AUTO = CIFAR_CLASSES.index("Auto")
_TRUCK = CIFAR_CLASSES.index("Truck")
_CAT = CIFAR_CLASSES.index("Cat")
_DOG = CIFAR_CLASSES.index("Dog")

FLIP_COHORT_SIZE = 120
RECOVERED_COHORT_SIZE = 120


def worked_run() -> TrainingRun:
    """3 classes, 4 instances, 3 epochs; every module's worked example."""
    doc = RunDocument(
        classes=("A", "B", "C"),
        epochs=3,
        instances=(
            DocumentInstance(id="i1", label="A", predictions=(0, 0, 0)),
            DocumentInstance(id="i2", label="A", predictions=(1, 0, 0)),
            DocumentInstance(id="i3", label="B", predictions=(1, 2, 1)),
            DocumentInstance(id="i4", label="C", predictions=(0, 1, 2)),
        ),
        metadata={"dataset": "worked-example"},
    )
    return build_run(doc)


def random_run(seed: int, m: int, n: int, epochs: int) -> TrainingRun:
    """Uniform random truths and predictions, reproducible per seed."""
    if m < 1 or n < 2 or epochs < 1:
        raise ValueError("random_run needs m >= 1, n >= 2, epochs >= 1")
    rng = np.random.default_rng(seed)
    labels = tuple(f"c{c}" for c in range(n))
    truths = rng.integers(0, n, m)
    predictions = rng.integers(0, n, (m, epochs))
    doc = RunDocument(
        classes=labels,
        epochs=epochs,
        instances=tuple(
            DocumentInstance(
                id=f"inst-{i:04d}",
                label=labels[truths[i]],
                predictions=tuple(int(p) for p in predictions[i]),
            )
            for i in range(m)
        ),
        metadata={"generator": "random", "seed": seed},
    )
    return build_run(doc)


def cifar_scenario_run(seed: int = 0) -> TrainingRun:
    """Synthetic run at CIFAR-10 scale: 60,000 instances, 10 classes, 50 epochs.

    Background predictions follow a decaying error rate with an Auto/Truck
    (and Cat/Dog) confusion bias, so the epoch-summed confusion matrix has its
    largest off-diagonal entry at (Auto, Truck). The planted flip cohort
    predicts only Auto then Truck with the switch before the midpoint, giving
    a misclassification score above 0.5 and a variability of exactly 2/10.
    """
    instance_count, epoch_count = 60_000, 50
    n = len(CIFAR_CLASSES)
    rng = np.random.default_rng(seed)

    truths = rng.permutation(np.repeat(np.arange(n), instance_count // n)).astype(np.int32)

    error_rate = 0.6 * np.exp(-np.arange(epoch_count) / 8.0) + 0.04
    wrong = rng.random((instance_count, epoch_count)) < error_rate

    partner = np.arange(n)
    partner[[_AUTO, _TRUCK, _CAT, _DOG]] = [_TRUCK, _AUTO, _DOG, _CAT]
    partner_rate = np.zeros(n)
    partner_rate[[_AUTO, _TRUCK, _CAT, _DOG]] = [0.5, 0.35, 0.3, 0.3]
    use_partner = rng.random((instance_count, epoch_count)) < partner_rate[truths][:, None]

    # uniform over the n-1 non-truth classes: draw in [0, n-1) and skip truth
    draw = rng.integers(0, n - 1, (instance_count, epoch_count))
    uniform_wrong = draw + (draw >= truths[:, None])
    wrong_labels = np.where(use_partner, partner[truths][:, None], uniform_wrong)
    predictions = np.where(wrong, wrong_labels, truths[:, None]).astype(np.int32)

    auto_rows = np.flatnonzero(truths == _AUTO)
    flip_rows = auto_rows[:FLIP_COHORT_SIZE]
    recovered_rows = auto_rows[FLIP_COHORT_SIZE : FLIP_COHORT_SIZE + RECOVERED_COHORT_SIZE]

    flip_epochs = rng.integers(10, 21, flip_rows.size)
    for row, switch in zip(flip_rows, flip_epochs):
        predictions[row, :switch] = _AUTO
        predictions[row, switch:] = _TRUCK

    recovery_epochs = rng.integers(5, 13, recovered_rows.size)
    for row, switch in zip(recovered_rows, recovery_epochs):
        predictions[row, :switch] = _TRUCK
        predictions[row, switch:] = _AUTO

    ids = tuple(f"img-{i:05d}" for i in range(instance_count))
    metadata = {
        "dataset": "cifar10-synthetic",
        "seed": seed,
        "planted_flip": [ids[row] for row in flip_rows],
        "planted_recovered": [ids[row] for row in recovered_rows],
    }
    return TrainingRun(
        run_id=f"cifar-synthetic-{seed}",
        class_labels=CIFAR_CLASSES,
        instance_ids=ids,
        true_classes=truths,
        predictions=predictions,
        payload_refs=(None,) * instance_count,
        metadata=metadata,
    )


GENERATORS = {
    "worked": worked_run,
    "random": random_run,
    "cifar": cifar_scenario_run,
}
