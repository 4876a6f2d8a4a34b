"""Experiment orchestration: the five method variants, per-round metrics,
seed-robustness studies, and plot-data emission.

Round indexing: every ensemble method trains ``nb`` weak learners, so the
total training budget is always ``nb * epochs`` (round 1 of the boosting
methods is the basic learner; its warm-up epoch count defaults to
``epochs``).  The single-CNN baseline trains one learner for ``nb * epochs``
epochs and reports a metrics row per ``epochs``-sized block, which keeps
accuracy-versus-time curves comparable across methods.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .boosting import (
    BoostEnsemble,
    Stage,
    boost_round,
    compute_boost_weights,
    risk_of_scores,
)
from .data import (
    DatasetMeta,
    LabeledBatch,
    compute_normalization,
    load_cifar10_binary,
    load_idx,
    make_synthetic,
    normalize,
)
from .errors import ConfigError
from .learners import TrainResult, build_basic_learner, build_probe, train_weak_learner, warm_start_learner
from .optim import Adam
from .subgrid import ImportanceMap, full_mask, select_subgrid, slice_batch, update_importance

METHODS = ("boostcnn", "subgrid-boostcnn", "ecnn", "subgrid-ecnn", "single-cnn")
LOSS_MODES = ("ls-weights", "cross-entropy")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str  # synthetic | cifar10 | idx
    # synthetic parameters
    n_train: int = 2000
    n_test: int = 500
    geometry: tuple = (1, 16, 16)
    n_classes: int = 4
    difficulty: float = 0.5
    data_seed: int = 0
    # file-based parameters
    train_files: tuple = ()
    test_file: str = ""
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""


@dataclass(frozen=True)
class RunConfig:
    method: str
    dataset: DatasetSpec
    profile: str = "tiny-cnn-2conv"
    nb: int = 10
    epochs: int = 15
    warmup_epochs: int | None = None  # None -> epochs (keeps the budget exact)
    nu: float = 0.02
    keep_rows: float = 0.9
    keep_cols: float = 0.9
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 64
    seed: int = 0
    alpha_max: float = 10.0
    loss_mode: str = "ls-weights"
    out: str = ""

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if not 0.0 <= self.nu <= 1.0:
            raise ConfigError(f"nu must be in [0, 1], got {self.nu}")
        if not (0.0 < self.keep_rows <= 1.0 and 0.0 < self.keep_cols <= 1.0):
            raise ConfigError("keep fractions must be in (0, 1]")
        if self.nb < 1:
            raise ConfigError(f"nb must be >= 1, got {self.nb}")
        if self.epochs < 1 or (self.warmup_epochs is not None and self.warmup_epochs < 1):
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.alpha_max <= 0:
            raise ConfigError("alpha_max must be positive")
        if self.dataset.kind not in ("synthetic", "cifar10", "idx"):
            raise ConfigError(f"unknown dataset kind {self.dataset.kind!r}")
        return self


@dataclass
class RoundMetrics:
    round: int
    seconds: float  # cumulative training-phase wall clock
    train_risk: float
    train_accuracy: float
    test_accuracy: float
    step_size: float
    kept_pixels: int


@dataclass
class MetricsRecord:
    method: str
    seed: int
    rounds: list = field(default_factory=list)

    @property
    def name(self):
        return f"{self.method}-seed{self.seed}"

    @property
    def final_accuracy(self):
        return self.rounds[-1].test_accuracy

    @property
    def total_seconds(self):
        return self.rounds[-1].seconds


@dataclass
class ExperimentResult:
    record: MetricsRecord
    ensemble: BoostEnsemble
    importance: ImportanceMap | None


def load_dataset(spec):
    """Train/test batches plus metadata; statistics come from train only."""
    if spec.kind == "synthetic":
        train, _ = make_synthetic(
            2 * spec.data_seed, spec.n_train, spec.geometry, spec.n_classes, spec.difficulty
        )
        test, _ = make_synthetic(
            2 * spec.data_seed + 1, spec.n_test, spec.geometry, spec.n_classes, spec.difficulty
        )
        name = "synthetic"
    elif spec.kind == "cifar10":
        if not spec.train_files or not spec.test_file:
            raise ConfigError("cifar10 dataset needs train_files and test_file")
        parts = [load_cifar10_binary(p) for p in spec.train_files]
        train = LabeledBatch(
            np.concatenate([p.inputs for p in parts]),
            np.concatenate([p.labels for p in parts]),
            10,
        )
        test = load_cifar10_binary(spec.test_file)
        name = "cifar10"
    else:
        if not (spec.train_images and spec.train_labels and spec.test_images and spec.test_labels):
            raise ConfigError("idx dataset needs train/test image and label paths")
        train = load_idx(spec.train_images, spec.train_labels)
        test = load_idx(spec.test_images, spec.test_labels)
        name = "idx"
    mean, std = compute_normalization(train)
    meta = DatasetMeta(name, len(train), len(test), train.geometry, train.n_classes, mean, std)
    return normalize(train, meta), normalize(test, meta), meta


def _accuracy(scores, labels):
    return float(np.mean(scores.argmax(axis=1) + 1 == labels))


def _stage_seed(seed, t):
    return [int(seed), int(t), 0]


def _stage_rng(seed, t):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(t), 1]))


class _Clock:
    """Accumulates wall-clock time over explicitly marked training phases."""

    def __init__(self):
        self.total = 0.0
        self._t0 = None

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.total += time.perf_counter() - self._t0
        self._t0 = None


def _run_boosting(config, train, test, subgrid_enabled):
    c, h, w = train.geometry
    m = train.n_classes
    warmup = config.epochs if config.warmup_epochs is None else config.warmup_epochs
    record = MetricsRecord(config.method, config.seed)
    clock = _Clock()

    with clock:
        # the basic learner starts from a shared, run-seed-independent
        # initialization (the desk-scale stand-in for warm-starting it from
        # one pretrained network); its training shuffle still follows the
        # run seed, as do all additive stages
        basic = build_basic_learner(
            config.profile, (c, h, w), m, [int(config.dataset.data_seed), 0xB0]
        )
        if config.loss_mode == "ls-weights":
            targets = compute_boost_weights(np.zeros((len(train), m)), train.labels)
        else:
            targets = train.labels
        train_weak_learner(
            basic,
            train.inputs,
            targets,
            epochs=warmup,
            lr=config.lr,
            weight_decay=config.weight_decay,
            batch_size=config.batch_size,
            shuffle_rng=_stage_rng(config.seed, 1),
            loss_mode=config.loss_mode,
        )
        ensemble = BoostEnsemble(basic, m, config.nu)

    train_scores = ensemble.scores(train.inputs)
    record.rounds.append(
        RoundMetrics(
            1,
            clock.total,
            risk_of_scores(train_scores, train.labels),
            _accuracy(train_scores, train.labels),
            _accuracy(ensemble.scores(test.inputs), test.labels),
            1.0,
            h * w,
        )
    )

    importance = ImportanceMap(h, w)
    prev = basic
    prev_mask = full_mask(h, w)
    for t in range(2, config.nb + 1):
        with clock:
            if subgrid_enabled:
                probe = build_probe(prev, basic)
                weights = compute_boost_weights(ensemble.scores(train.inputs), train.labels)
                update_importance(importance, probe, train.inputs, weights, prev_mask)
                mask = select_subgrid(importance, config.keep_rows, config.keep_cols)
            else:
                mask = full_mask(h, w)
            learner = warm_start_learner(prev, mask, m, _stage_seed(config.seed, t))
            result = boost_round(
                ensemble,
                train.inputs,
                train.labels,
                mask,
                learner,
                epochs=config.epochs,
                lr=config.lr,
                weight_decay=config.weight_decay,
                batch_size=config.batch_size,
                shuffle_rng=_stage_rng(config.seed, t),
                alpha_max=config.alpha_max,
                loss_mode=config.loss_mode,
            )
        train_scores = ensemble.scores(train.inputs)
        record.rounds.append(
            RoundMetrics(
                t,
                clock.total,
                risk_of_scores(train_scores, train.labels),
                _accuracy(train_scores, train.labels),
                _accuracy(ensemble.scores(test.inputs), test.labels),
                result.step_size,
                mask.pixel_count,
            )
        )
        prev = learner
        prev_mask = mask
    return ExperimentResult(record, ensemble, importance if subgrid_enabled else None)


def _run_averaging(config, train, test, subgrid_enabled):
    """e-CNN variants: independently trained learners, mean-aggregated."""
    c, h, w = train.geometry
    m = train.n_classes
    record = MetricsRecord(config.method, config.seed)
    clock = _Clock()

    with clock:
        basic = build_basic_learner(config.profile, (c, h, w), m, _stage_seed(config.seed, 1))
        train_weak_learner(
            basic,
            train.inputs,
            train.labels,
            epochs=config.epochs,
            lr=config.lr,
            weight_decay=config.weight_decay,
            batch_size=config.batch_size,
            shuffle_rng=_stage_rng(config.seed, 1),
            loss_mode="cross-entropy",
        )
    ensemble = BoostEnsemble(basic, m, 1.0)
    train_sum = basic.net.forward(train.inputs)
    test_sum = basic.net.forward(test.inputs)
    record.rounds.append(
        RoundMetrics(
            1,
            clock.total,
            risk_of_scores(train_sum, train.labels),
            _accuracy(train_sum, train.labels),
            _accuracy(test_sum, test.labels),
            1.0,
            h * w,
        )
    )

    # boosting weights stay at their zero-score values: no weight update
    stale_weights = compute_boost_weights(np.zeros((len(train), m)), train.labels)
    importance = ImportanceMap(h, w)
    prev = basic
    prev_mask = full_mask(h, w)
    for t in range(2, config.nb + 1):
        with clock:
            if subgrid_enabled:
                probe = build_probe(prev, basic)
                update_importance(importance, probe, train.inputs, stale_weights, prev_mask)
                mask = select_subgrid(importance, config.keep_rows, config.keep_cols)
                learner = warm_start_learner(prev, mask, m, _stage_seed(config.seed, t))
            else:
                mask = full_mask(h, w)
                learner = build_basic_learner(
                    config.profile, (c, h, w), m, _stage_seed(config.seed, t)
                )
            train_weak_learner(
                learner,
                slice_batch(train.inputs, mask),
                train.labels,
                epochs=config.epochs,
                lr=config.lr,
                weight_decay=config.weight_decay,
                batch_size=config.batch_size,
                shuffle_rng=_stage_rng(config.seed, t),
                loss_mode="cross-entropy",
            )
        ensemble.stages.append(Stage(learner, 1.0, mask))
        train_sum += learner.net.forward(slice_batch(train.inputs, mask))
        test_sum += learner.net.forward(slice_batch(test.inputs, mask))
        record.rounds.append(
            RoundMetrics(
                t,
                clock.total,
                risk_of_scores(train_sum / t, train.labels),
                _accuracy(train_sum / t, train.labels),
                _accuracy(test_sum / t, test.labels),
                1.0,
                mask.pixel_count,
            )
        )
        prev = learner
        prev_mask = mask
    return ExperimentResult(record, ensemble, importance if subgrid_enabled else None)


def _run_single(config, train, test):
    c, h, w = train.geometry
    m = train.n_classes
    record = MetricsRecord(config.method, config.seed)
    clock = _Clock()

    with clock:
        learner = build_basic_learner(config.profile, (c, h, w), m, _stage_seed(config.seed, 1))
    optimizer = Adam(learner.net.params(), lr=config.lr, weight_decay=config.weight_decay)
    shuffle_rng = _stage_rng(config.seed, 1)
    result = TrainResult()
    for block in range(1, config.nb + 1):
        with clock:
            train_weak_learner(
                learner,
                train.inputs,
                train.labels,
                epochs=config.epochs,
                lr=config.lr,
                weight_decay=config.weight_decay,
                batch_size=config.batch_size,
                shuffle_rng=shuffle_rng,
                loss_mode="cross-entropy",
                optimizer=optimizer,
                result=result,
            )
        train_scores = learner.net.forward(train.inputs)
        record.rounds.append(
            RoundMetrics(
                block,
                clock.total,
                risk_of_scores(train_scores, train.labels),
                _accuracy(train_scores, train.labels),
                _accuracy(learner.net.forward(test.inputs), test.labels),
                1.0,
                h * w,
            )
        )
    return ExperimentResult(record, BoostEnsemble(learner, m, 1.0), None)


def run_experiment(config):
    """Execute one configured run and return metrics plus the trained model."""
    config.validate()
    train, test, _ = load_dataset(config.dataset)
    if config.method == "boostcnn":
        return _run_boosting(config, train, test, subgrid_enabled=False)
    if config.method == "subgrid-boostcnn":
        return _run_boosting(config, train, test, subgrid_enabled=True)
    if config.method == "ecnn":
        return _run_averaging(config, train, test, subgrid_enabled=False)
    if config.method == "subgrid-ecnn":
        return _run_averaging(config, train, test, subgrid_enabled=True)
    return _run_single(config, train, test)


@dataclass
class SeedStudyReport:
    config_method: str
    seeds: list
    final_accuracies: list
    mean_accuracy: float
    std_accuracy: float  # sample std (ddof=1)
    round_traces: np.ndarray  # (rounds, seeds) test accuracy
    relative_traces: np.ndarray  # trace minus per-round seed average
    records: list


def seed_study(config, seeds):
    """Run ``config`` once per seed and report accuracy spread."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ConfigError("seed study needs at least 2 seeds")
    records = [run_experiment(replace(config, seed=s)).record for s in seeds]
    finals = [r.final_accuracy for r in records]
    traces = np.array([[rm.test_accuracy for rm in r.rounds] for r in records]).T
    relative = traces - traces.mean(axis=1, keepdims=True)
    return SeedStudyReport(
        config.method,
        seeds,
        finals,
        float(np.mean(finals)),
        float(np.std(finals, ddof=1)),
        traces,
        relative,
        records,
    )


PLOT_HEADER = ["round", "seconds", "train_risk", "test_accuracy", "step_size", "kept_pixels"]


@dataclass(frozen=True)
class PlotRow:
    """One line of a per-run CSV (the on-disk schema)."""

    round: int
    seconds: float
    train_risk: float
    test_accuracy: float
    step_size: float
    kept_pixels: int


def plot_rows(record):
    return [
        PlotRow(rm.round, rm.seconds, rm.train_risk, rm.test_accuracy, rm.step_size, rm.kept_pixels)
        for rm in record.rounds
    ]


def emit_plotdata(records, outdir, baseline=None):
    """One CSV per run plus, when ``baseline`` names a run or method, a
    comparison CSV of per-round accuracy relative to that baseline."""
    import os

    if not records:
        raise ValueError("no records to emit")
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for record in records:
        path = os.path.join(outdir, f"{record.name}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(PLOT_HEADER)
            for rm in record.rounds:
                writer.writerow(
                    [
                        rm.round,
                        repr(rm.seconds),
                        repr(rm.train_risk),
                        repr(rm.test_accuracy),
                        repr(rm.step_size),
                        rm.kept_pixels,
                    ]
                )
        paths.append(path)

    if baseline is not None:
        base = next((r for r in records if r.name == baseline or r.method == baseline), None)
        if base is None:
            raise ValueError(f"baseline run {baseline!r} not found")
        path = os.path.join(outdir, "comparison.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run", "round", "test_accuracy", "baseline_accuracy", "relative_accuracy"])
            for record in records:
                for rm, bm in zip(record.rounds, base.rounds):
                    writer.writerow(
                        [
                            record.name,
                            rm.round,
                            repr(rm.test_accuracy),
                            repr(bm.test_accuracy),
                            repr(rm.test_accuracy - bm.test_accuracy),
                        ]
                    )
        paths.append(path)
    return paths


def parse_plotdata(path):
    """Read back a per-run CSV exactly as written."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != PLOT_HEADER:
            raise ValueError(f"unexpected header {header}")
        rows = []
        for row in reader:
            rows.append(
                PlotRow(
                    int(row[0]),
                    float(row[1]),
                    float(row[2]),
                    float(row[3]),
                    float(row[4]),
                    int(row[5]),
                )
            )
    return rows
