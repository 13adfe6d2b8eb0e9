"""Metrics, the naive baseline, Monte-Carlo splits and a synthetic data generator."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .classifier import CrdaModel, predict
from .exceptions import CrdaError
from .linalg import LabeledDataset

__all__ = [
    "MetricsRecord",
    "METRIC_COLUMNS",
    "evaluate_metrics",
    "NaiveClassifier",
    "naive_fit",
    "SyntheticSpec",
    "make_partially_synthetic",
    "stratified_allocation",
    "Split",
    "monte_carlo_splits",
    "run_monte_carlo",
    "mean_metrics",
    "metrics_to_csv",
]

METRIC_COLUMNS = ("split_index", "variant", "ter", "fsr", "fpr", "fnr",
                  "act_seconds", "K", "selector")


@dataclass(frozen=True)
class MetricsRecord:
    ter: float
    fsr: float
    fpr: float | None = None
    fnr: float | None = None
    act_seconds: float = 0.0
    split_index: int = 0
    variant: str = ""
    K: int | None = None
    selector: str | None = None

    def csv_row(self) -> str:
        def num(x):
            return "" if x is None else format(x, ".17g")

        return ",".join([str(self.split_index), self.variant, num(self.ter), num(self.fsr),
                         num(self.fpr), num(self.fnr), num(self.act_seconds),
                         "" if self.K is None else str(self.K), self.selector or ""])


def metrics_to_csv(records) -> str:
    return ",".join(METRIC_COLUMNS) + "\n" + "".join(r.csv_row() + "\n" for r in records)


def evaluate_metrics(predictions, truth, selected_rows, p, mask=None, **extra) -> MetricsRecord:
    """Test error, feature-selection rate and, given a DE mask, FPR/FNR.

    ``mask`` is a length-``p`` boolean array marking the truly informative
    features. ``extra`` fills the bookkeeping fields of the record
    (``act_seconds``, ``split_index``, ``variant``, ``K``, ``selector``).
    """
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise CrdaError(f"length mismatch: {predictions.shape} predictions vs "
                        f"{truth.shape} labels")
    if truth.size == 0:
        raise CrdaError("no test observations")
    selected = np.unique(np.asarray(selected_rows, dtype=np.int64))
    ter = np.count_nonzero(predictions != truth) / truth.size
    fsr = selected.size / p
    fpr = fnr = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (p,):
            raise CrdaError(f"mask must have length p={p}")
        p1 = int(mask.sum())
        p0 = p - p1
        if p1 == 0 or p0 == 0:
            raise CrdaError("mask must contain both DE and non-DE features")
        true_pos = int(np.count_nonzero(mask[selected]))
        false_pos = selected.size - true_pos
        fpr = false_pos / p0
        fnr = (p1 - true_pos) / p1
    return MetricsRecord(float(ter), float(fsr), fpr, fnr, **extra)


@dataclass(frozen=True)
class NaiveClassifier:
    """Predicts the majority training class for every input."""

    label: int

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X)
        t = X.shape[1] if X.ndim == 2 else 1
        return np.full(t, self.label, dtype=np.int64)


def naive_fit(train: LabeledDataset) -> NaiveClassifier:
    counts = train.class_counts()
    return NaiveClassifier(int(np.argmax(counts)) + 1)


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a synthetic study.

    ``class_sizes`` are total observations per class; ``n_test`` of them
    are split off as the test set with class proportions preserved.
    Informative rows have class means ``+shift`` or ``-shift`` (never all
    equal across classes) and unit variance; the others are pure
    ``N(0, noise_var)`` noise.
    """

    p: int
    p1: int
    class_sizes: tuple
    n_test: int
    shift: float = 1.0
    noise_var: float = 0.01
    seed: int = 0

    @property
    def G(self) -> int:
        return len(self.class_sizes)


def make_partially_synthetic(spec: SyntheticSpec):
    """Generate ``(train, test, mask)`` from ``spec``."""
    if not 0 < spec.p1 <= spec.p:
        raise CrdaError(f"p1 must lie in 1..p={spec.p}, got {spec.p1}")
    if spec.noise_var <= 0:
        raise CrdaError("noise variance must be positive")
    if spec.G < 2 or min(spec.class_sizes) < 1:
        raise CrdaError("need at least two nonempty classes")
    rng = np.random.default_rng(spec.seed)
    sizes = np.asarray(spec.class_sizes, dtype=np.int64)
    n = int(sizes.sum())
    labels = np.repeat(np.arange(1, spec.G + 1), sizes)

    de_rows = np.sort(rng.choice(spec.p, size=spec.p1, replace=False))
    mask = np.zeros(spec.p, dtype=bool)
    mask[de_rows] = True

    signs = rng.choice([-1.0, 1.0], size=(spec.p1, spec.G))
    flat = np.all(signs == signs[:, :1], axis=1)
    # force at least one class to differ from the others
    signs[flat, rng.integers(spec.G, size=int(flat.sum()))] *= -1.0
    X = rng.normal(0.0, np.sqrt(spec.noise_var), size=(spec.p, n))
    X[de_rows] = rng.normal(size=(spec.p1, n)) + spec.shift * signs[:, labels - 1]

    names = tuple(f"f{i + 1}" for i in range(spec.p))
    classes = tuple(str(g) for g in range(1, spec.G + 1))
    full = LabeledDataset(X, labels, names, classes)
    train_idx, test_idx = _stratified_split(labels, n - spec.n_test, rng)
    return full.subset(train_idx), full.subset(test_idx), mask


def stratified_allocation(counts, train_size) -> np.ndarray:
    """Per-class training counts proportional to ``counts`` (largest remainder).

    Every class keeps at least one training observation; leftover ties go to
    the smaller class index.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    G = counts.size
    if not G <= train_size < n:
        raise CrdaError(f"train size must lie in {G}..{n - 1}, got {train_size}")
    exact = counts * train_size / n
    alloc = np.maximum(np.floor(exact).astype(np.int64), 1)
    alloc = np.minimum(alloc, counts)
    while alloc.sum() > train_size:
        spare = np.flatnonzero(alloc > 1)
        g = spare[np.argmax((alloc - exact)[spare])]
        alloc[g] -= 1
    while alloc.sum() < train_size:
        room = np.flatnonzero(alloc < counts)
        g = room[np.argmax((exact - alloc)[room])]
        alloc[g] += 1
    return alloc


def _stratified_split(labels, train_size, rng):
    classes = np.unique(labels)
    counts = np.array([np.count_nonzero(labels == g) for g in classes])
    alloc = stratified_allocation(counts, train_size)
    train = []
    for g, k in zip(classes, alloc):
        members = np.flatnonzero(labels == g)
        train.extend(rng.permutation(members)[:k])
    train = np.sort(np.asarray(train, dtype=np.int64))
    test = np.setdiff1d(np.arange(labels.size), train)
    return train, test


class Split(NamedTuple):
    train: LabeledDataset
    test: LabeledDataset
    train_index: np.ndarray
    test_index: np.ndarray


def monte_carlo_splits(data: LabeledDataset, L: int, train_size: int, seed: int = 0):
    """``L`` reproducible stratified train/test splits of ``data``."""
    if L < 1:
        raise CrdaError("need at least one split")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(L):
        tr, te = _stratified_split(data.labels, train_size, rng)
        out.append(Split(data.subset(tr), data.subset(te), tr, te))
    return out


def run_monte_carlo(data: LabeledDataset, fit_fn: Callable[[LabeledDataset], CrdaModel],
                    L: int = 10, train_size: int | None = None, seed: int = 0,
                    mask=None, variant: str = "") -> list[MetricsRecord]:
    """Fit and score ``fit_fn`` on each Monte-Carlo split; ACT is wall-clock per fit."""
    if train_size is None:
        train_size = int(round(0.6 * data.n))
    records = []
    for i, split in enumerate(monte_carlo_splits(data, L, train_size, seed)):
        start = time.perf_counter()
        model = fit_fn(split.train)
        elapsed = time.perf_counter() - start
        preds = predict(split.test.features, model)
        records.append(evaluate_metrics(
            preds, split.test.labels, model.selected_rows, data.p, mask,
            act_seconds=elapsed, split_index=i, variant=variant or model.variant,
            K=model.K, selector=model.selector.value if model.selector else None))
    return records


def mean_metrics(records) -> dict:
    out = {}
    for name in ("ter", "fsr", "fpr", "fnr", "act_seconds"):
        vals = [getattr(r, name) for r in records if getattr(r, name) is not None]
        out[name] = float(np.mean(vals)) if vals else None
    return out
