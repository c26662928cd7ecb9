from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Literal

import numpy as np
import torch
from torch import nn

from venom_module_regulation_enforcement.engine.gridworld import (
    ACTIONS,
    BehaviorTrace,
    ContractViolationError,
)
from venom_module_regulation_enforcement.engine.parallel import run_jobs

logger = logging.getLogger(__name__)

Label = Literal["compliant", "defective"]
LABELS: tuple[Label, ...] = ("compliant", "defective")
DEFAULT_HIDDEN_WIDTHS: tuple[int, ...] = (64, 32, 16)
DECISION_THRESHOLD = 0.5
REWARD_SCALE = 5.0
CLASSIFIER_FORMAT_VERSION = 1

__all__ = [
    "BehaviorTrace",
    "ClassifierReport",
    "ClassifierTrainingError",
    "DatasetConstructionError",
    "LabeledDataset",
    "SequenceClassifier",
    "Verdict",
    "build_dataset",
    "classify",
    "classify_trace",
    "length_sweep",
    "load_classifier",
    "quota_detect",
    "save_classifier",
    "synthetic_reward_traces",
    "train_classifier",
]


class DatasetConstructionError(ValueError):
    pass


class ClassifierTrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Verdict:
    agent_id: int
    flagged: bool
    confidence: float


def quota_detect(trace: BehaviorTrace, quota: float = 3) -> Verdict:
    flagged = any(
        ACTIONS[action_index].kind == "gather" and reward > quota
        for _step, action_index, reward in trace.steps
    )
    return Verdict(agent_id=trace.agent_id, flagged=flagged, confidence=1.0 if flagged else 0.0)


def _reward_sequence(source: BehaviorTrace | Sequence[float]) -> np.ndarray:
    if isinstance(source, BehaviorTrace):
        return source.rewards
    return np.asarray(source, dtype=np.float64)


def _windows(sequence: np.ndarray, length: int) -> np.ndarray:
    count = len(sequence) // length
    return sequence[: count * length].reshape(count, length)


@dataclass
class LabeledDataset:
    length: int
    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    test_mask: np.ndarray
    test_fraction: float
    skipped: int = 0

    @property
    def train_x(self) -> np.ndarray:
        return self.features[~self.test_mask]

    @property
    def train_y(self) -> np.ndarray:
        return self.labels[~self.test_mask]

    @property
    def test_x(self) -> np.ndarray:
        return self.features[self.test_mask]

    @property
    def test_y(self) -> np.ndarray:
        return self.labels[self.test_mask]

    def __len__(self) -> int:
        return len(self.labels)


def build_dataset(
    traces: Sequence[tuple[BehaviorTrace | Sequence[float], Label]],
    length: int,
    *,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> LabeledDataset:
    """Slice labeled reward sequences into non-overlapping windows of ``length``.

    The train/test split is drawn per trace (stratified by label) from ``seed``,
    so datasets built from one corpus at different lengths share the split.
    """
    if length <= 0:
        raise ContractViolationError(f"dataset_length_invalid:{length}")
    if not 0.0 < test_fraction < 1.0:
        raise ContractViolationError(f"dataset_test_fraction_invalid:{test_fraction}")
    labels_present = {label for _source, label in traces}
    unknown = labels_present - set(LABELS)
    if unknown:
        raise DatasetConstructionError(f"dataset_label_unknown:{sorted(unknown)[0]}")
    if labels_present != set(LABELS):
        raise DatasetConstructionError("dataset_single_class")

    rng = np.random.default_rng(seed)
    in_test = np.zeros(len(traces), dtype=bool)
    for label in LABELS:
        members = np.asarray([i for i, (_s, lab) in enumerate(traces) if lab == label])
        members = rng.permutation(members)
        in_test[members[: int(round(test_fraction * len(members)))]] = True

    rows: list[np.ndarray] = []
    labels: list[int] = []
    groups: list[int] = []
    test_mask: list[bool] = []
    skipped = 0
    for index, (source, label) in enumerate(traces):
        windows = _windows(_reward_sequence(source), length)
        if not len(windows):
            skipped += 1
            continue
        rows.append(windows)
        labels.extend([LABELS.index(label)] * len(windows))
        groups.extend([index] * len(windows))
        test_mask.extend([bool(in_test[index])] * len(windows))
    if skipped:
        logger.warning("Skipped %d traces shorter than L=%d", skipped, length)
    if not rows:
        raise DatasetConstructionError(f"dataset_empty:length={length}")

    dataset = LabeledDataset(
        length=length,
        features=np.concatenate(rows).astype(np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        groups=np.asarray(groups, dtype=np.int64),
        test_mask=np.asarray(test_mask, dtype=bool),
        test_fraction=test_fraction,
        skipped=skipped,
    )
    if len(set(dataset.labels.tolist())) < 2:
        raise DatasetConstructionError("dataset_single_class")
    if not dataset.test_mask.any() or len(set(dataset.train_y.tolist())) < 2:
        raise DatasetConstructionError(f"dataset_too_small_for_split:windows={len(dataset)}")
    return dataset


class SequenceClassifier:
    """Feed-forward classifier over fixed-length reward windows."""

    def __init__(
        self,
        length: int,
        *,
        hidden_widths: Sequence[int] = DEFAULT_HIDDEN_WIDTHS,
        threshold: float = DECISION_THRESHOLD,
        reward_scale: float = REWARD_SCALE,
        generator: torch.Generator | None = None,
    ) -> None:
        self.length = length
        self.hidden_widths = tuple(int(w) for w in hidden_widths)
        self.threshold = threshold
        self.reward_scale = reward_scale
        layers: list[nn.Module] = []
        width_in = length
        for width in self.hidden_widths:
            layers.extend([nn.Linear(width_in, width), nn.ReLU()])
            width_in = width
        layers.append(nn.Linear(width_in, 1))
        self.network = nn.Sequential(*layers)
        if generator is not None:
            self._reset_parameters(generator)

    def _reset_parameters(self, generator: torch.Generator) -> None:
        with torch.no_grad():
            for module in self.network:
                if not isinstance(module, nn.Linear):
                    continue
                bound = 1.0 / math.sqrt(module.in_features)
                module.weight.uniform_(-bound, bound, generator=generator)
                module.bias.uniform_(-bound, bound, generator=generator)

    def _inputs(self, sequences: np.ndarray) -> torch.Tensor:
        return torch.as_tensor(np.asarray(sequences) / self.reward_scale, dtype=torch.float32)

    def logits(self, sequences: np.ndarray) -> torch.Tensor:
        return self.network(self._inputs(sequences)).squeeze(-1)

    def predict_proba(self, sequences: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return torch.sigmoid(self.logits(sequences).double()).numpy()


@dataclass(frozen=True)
class ClassifierReport:
    length: int
    train_accuracy: float
    test_accuracy: float
    majority_baseline: float
    epochs: int
    train_windows: int
    test_windows: int
    final_loss: float


def _accuracy(classifier: SequenceClassifier, x: np.ndarray, y: np.ndarray) -> float:
    if not len(y):
        return float("nan")
    predicted = classifier.predict_proba(x) > classifier.threshold
    return float(np.mean(predicted == y.astype(bool)))


def train_classifier(
    dataset: LabeledDataset,
    epochs: int = 100,
    seed: int = 0,
    *,
    learning_rate: float = 1e-3,
    batch_size: int = 64,
    hidden_widths: Sequence[int] = DEFAULT_HIDDEN_WIDTHS,
) -> tuple[SequenceClassifier, ClassifierReport]:
    if epochs <= 0:
        raise ContractViolationError(f"classifier_epochs_invalid:{epochs}")
    if batch_size <= 0:
        raise ContractViolationError(f"classifier_batch_size_invalid:{batch_size}")
    generator = torch.Generator().manual_seed(seed)
    classifier = SequenceClassifier(
        dataset.length, hidden_widths=hidden_widths, generator=generator
    )
    x = classifier._inputs(dataset.train_x)
    y = torch.as_tensor(dataset.train_y, dtype=torch.float32)
    optimizer = torch.optim.Adam(classifier.network.parameters(), lr=learning_rate)
    loss_fn = nn.BCEWithLogitsLoss()
    epoch_loss = float("nan")
    for epoch in range(epochs):
        order = torch.randperm(len(y), generator=generator)
        total = 0.0
        for start in range(0, len(y), batch_size):
            index = order[start : start + batch_size]
            optimizer.zero_grad()
            loss = loss_fn(classifier.network(x[index]).squeeze(-1), y[index])
            if not torch.isfinite(loss):
                raise ClassifierTrainingError(
                    f"training_diverged:epoch={epoch}:batch={start // batch_size}"
                    f":loss={loss.item()}:lr={learning_rate}"
                )
            loss.backward()
            optimizer.step()
            total += loss.item() * len(index)
        epoch_loss = total / len(y)

    share = float(np.mean(dataset.test_y)) if len(dataset.test_y) else 0.5
    report = ClassifierReport(
        length=dataset.length,
        train_accuracy=_accuracy(classifier, dataset.train_x, dataset.train_y),
        test_accuracy=_accuracy(classifier, dataset.test_x, dataset.test_y),
        majority_baseline=max(share, 1.0 - share),
        epochs=epochs,
        train_windows=int(len(dataset.train_y)),
        test_windows=int(len(dataset.test_y)),
        final_loss=epoch_loss,
    )
    logger.info(
        "Detector trained (L=%d): train_acc=%.3f test_acc=%.3f",
        report.length,
        report.train_accuracy,
        report.test_accuracy,
    )
    return classifier, report


def classify(
    classifier: SequenceClassifier,
    sequence: Sequence[float] | np.ndarray,
    *,
    agent_id: int = -1,
) -> Verdict:
    values = np.asarray(sequence, dtype=np.float64)
    if values.shape != (classifier.length,):
        raise ContractViolationError(
            f"classify_length_mismatch:{values.shape[0] if values.ndim else 0}!={classifier.length}"
        )
    confidence = float(classifier.predict_proba(values[None, :])[0])
    return Verdict(
        agent_id=agent_id,
        flagged=confidence > classifier.threshold,
        confidence=confidence,
    )


def classify_trace(classifier: SequenceClassifier, trace: BehaviorTrace) -> Verdict:
    """Mean confidence over every full window; too-short traces are not flagged."""
    windows = _windows(trace.rewards, classifier.length)
    if not len(windows):
        return Verdict(agent_id=trace.agent_id, flagged=False, confidence=0.0)
    confidence = float(np.mean(classifier.predict_proba(windows)))
    return Verdict(
        agent_id=trace.agent_id,
        flagged=confidence > classifier.threshold,
        confidence=confidence,
    )


def _sweep_point(
    dataset: LabeledDataset,
    epochs: int,
    seed: int,
    learning_rate: float,
    batch_size: int,
    hidden_widths: Sequence[int],
) -> ClassifierReport:
    _classifier, report = train_classifier(
        dataset,
        epochs,
        seed,
        learning_rate=learning_rate,
        batch_size=batch_size,
        hidden_widths=hidden_widths,
    )
    return report


def length_sweep(
    corpus: Sequence[tuple[BehaviorTrace | Sequence[float], Label]],
    lengths: Sequence[int],
    *,
    epochs: int = 100,
    seed: int = 0,
    test_fraction: float = 0.2,
    learning_rate: float = 1e-3,
    batch_size: int = 64,
    hidden_widths: Sequence[int] = DEFAULT_HIDDEN_WIDTHS,
    max_workers: int = 1,
) -> list[ClassifierReport]:
    if not lengths:
        raise ContractViolationError("sweep_lengths_empty")
    if any(length <= 0 for length in lengths) or list(lengths) != sorted(set(lengths)):
        raise ContractViolationError("sweep_lengths_not_positive_ascending")
    jobs = {
        position: partial(
            _sweep_point,
            build_dataset(corpus, length, test_fraction=test_fraction, seed=seed),
            epochs,
            seed + position,
            learning_rate,
            batch_size,
            tuple(hidden_widths),
        )
        for position, length in enumerate(lengths)
    }
    results = run_jobs(jobs, max_workers)
    return [results[position] for position in range(len(lengths))]


def synthetic_reward_traces(
    *,
    traces_per_class: int,
    trace_length: int,
    seed: int,
    harvest_probability: float = 0.6,
    tau: float = 2.0,
    window: int = 3,
    compliant_caps: Sequence[int] = (5,),
    defective_caps: Sequence[int] = (5,),
) -> list[tuple[BehaviorTrace, Label]]:
    """Reward traces shaped like the diminishing-regulation scenario.

    Compliant agents only harvest while the sum of their last ``window``
    rewards is at most ``tau``; defective agents harvest whenever they can.
    """
    if traces_per_class <= 0 or trace_length <= 0:
        raise ContractViolationError("synthetic_corpus_size_invalid")
    rng = np.random.default_rng(seed)
    gather = next(action.index for action in ACTIONS if action.kind == "gather")
    corpus: list[tuple[BehaviorTrace, Label]] = []
    for label in LABELS:
        caps = compliant_caps if label == "compliant" else defective_caps
        for ordinal in range(traces_per_class):
            trace = BehaviorTrace(agent_id=len(corpus))
            recent: list[int] = []
            harvests = 0
            for step_index in range(trace_length):
                allowed = label == "defective" or sum(recent[-window:]) <= tau
                reward = 0
                if allowed and rng.random() < harvest_probability:
                    reward = int(caps[harvests % len(caps)])
                    harvests += 1
                trace.append(step_index, gather if reward else 0, reward)
                recent.append(reward)
            corpus.append((trace, label))
    return corpus


def save_classifier(classifier: SequenceClassifier, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(classifier.network.state_dict(), path)
    meta = {
        "format_version": CLASSIFIER_FORMAT_VERSION,
        "length": classifier.length,
        "hidden_widths": list(classifier.hidden_widths),
        "threshold": classifier.threshold,
        "reward_scale": classifier.reward_scale,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, ensure_ascii=False), encoding="utf-8")
    return path


def load_classifier(path: Path) -> SequenceClassifier:
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    if meta.get("format_version") != CLASSIFIER_FORMAT_VERSION:
        raise ValueError(f"classifier_format_unsupported:{meta.get('format_version')}")
    classifier = SequenceClassifier(
        int(meta["length"]),
        hidden_widths=meta["hidden_widths"],
        threshold=float(meta["threshold"]),
        reward_scale=float(meta["reward_scale"]),
    )
    classifier.network.load_state_dict(torch.load(path, weights_only=True))
    return classifier
