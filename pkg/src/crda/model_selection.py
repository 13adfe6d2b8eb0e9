"""Cross-validated choice of the selector and joint-sparsity level."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .classifier import (
    SELECTOR_ORDER,
    CrdaModel,
    Selector,
    coefficient_matrix,
    k_upper_bound,
    predict,
    selector_scores,
    soft_threshold,
)
from .covariance import CovarianceConfig, estimate_covariance
from .exceptions import CrdaError, InsufficientSamplesError
from .linalg import LabeledDataset, group_center

__all__ = [
    "CvConfig",
    "CvReport",
    "DeltaCvReport",
    "k_grid",
    "stratified_folds",
    "cross_validate",
    "cross_validate_delta",
    "delta_grid",
]


@dataclass(frozen=True)
class CvConfig:
    """Settings for the (selector, K) search.

    ``kub_scope="full"`` computes the K upper bound once from the full
    training set and reuses the grid in every fold; ``"fold"`` recomputes it
    per fold and compares candidates by grid position.
    """

    folds: int = 5
    grid_size: int = 10
    selectors: tuple = SELECTOR_ORDER
    seed: int = 0
    kub_scope: str = "full"

    def __post_init__(self):
        if self.folds < 2:
            raise CrdaError("CV needs at least 2 folds")
        if self.grid_size < 2:
            raise CrdaError("K grid needs at least 2 points")
        sel = tuple(Selector.parse(s) for s in self.selectors)
        if not sel or len(set(sel)) != len(sel):
            raise CrdaError("selectors must be nonempty and distinct")
        object.__setattr__(self, "selectors", sel)
        if self.kub_scope not in ("full", "fold"):
            raise CrdaError(f"unknown kub_scope {self.kub_scope!r}")


@dataclass(frozen=True)
class CvReport:
    errors: np.ndarray          # len(selectors) x len(grid), integer counts
    selectors: tuple
    grid: tuple
    selector: Selector
    k: int
    k_upper: int
    folds: np.ndarray = field(repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("selector," + ",".join(f"K={k}" for k in self.grid) + "\n")
        for s, row in zip(self.selectors, self.errors):
            buf.write(s.value + "," + ",".join(str(int(e)) for e in row) + "\n")
        buf.write(f"# chosen selector={self.selector.value} K={self.k} "
                  f"K_UB={self.k_upper}\n")
        return buf.getvalue()


def _log_grid(k_upper, p, J):
    k1 = max(1, int(np.floor(0.05 * p)))
    if k_upper <= k1:
        return [int(k_upper)] * J
    grid = np.rint(np.geomspace(k1, k_upper, J)).astype(int)
    grid[0], grid[-1] = k1, k_upper
    return [int(k) for k in grid]


def k_grid(k_upper: int, p: int, J: int = 10) -> list[int]:
    """Log-spaced, deduplicated K values from ``max(1, floor(0.05 p))`` to ``k_upper``.

    Collapses to ``[k_upper]`` when ``k_upper`` does not exceed the start.
    """
    if k_upper < 1 or p < 1:
        raise CrdaError("k_grid needs k_upper >= 1 and p >= 1")
    out = []
    for k in _log_grid(k_upper, p, J):
        if not out or k != out[-1]:
            out.append(k)
    return out


def stratified_folds(labels, Q: int, seed: int = 0) -> np.ndarray:
    """Assign each observation a fold in ``0..Q-1``, stratified by class.

    Members of each class are shuffled and dealt round-robin, continuing
    the deal position from the previous class so fold sizes stay balanced
    overall (``Q = n`` gives leave-one-out).
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if Q < 1 or Q > n:
        raise CrdaError(f"number of folds must lie in 1..n={n}, got {Q}")
    rng = np.random.default_rng(seed)
    assign = np.empty(n, dtype=np.int64)
    offset = 0
    for g in np.unique(labels):
        members = np.flatnonzero(labels == g)
        rng.shuffle(members)
        assign[members] = (offset + np.arange(members.size)) % Q
        offset = (offset + members.size) % Q
    return assign


def _check_feasible(data: LabeledDataset, Q: int):
    counts = data.class_counts()
    if counts.min() < Q:
        g = int(np.argmin(counts)) + 1
        raise InsufficientSamplesError(
            f"CV infeasible: class {g} has {int(counts.min())} members but "
            f"{Q} folds were requested; use a smaller number of folds")


def _fit_dense(data, covariance, priors, seed):
    stats = group_center(data, priors)
    op, _ = estimate_covariance(data, stats, covariance, seed)
    return stats, coefficient_matrix(op, stats.means)


def _errors_for_rows(Xv, yv, stats, B, rows):
    sparse = np.zeros_like(B)
    sparse[rows] = B[rows]
    model = CrdaModel(stats.means, sparse, stats.log_priors, np.sort(rows), "cv")
    return int(np.count_nonzero(predict(Xv, model) != yv))


def cross_validate(train: LabeledDataset, covariance: CovarianceConfig | None = None,
                   cfg: CvConfig | None = None, priors: str = "uniform") -> CvReport:
    """Accumulate held-out misclassification counts over the selector x K grid.

    The covariance estimate and dense coefficient matrix are fit once per
    fold; only the hard-thresholding step changes between candidates. The
    chosen cell has the fewest errors; ties go to the smaller K, then to the
    earlier selector in ``cfg.selectors``.
    """
    covariance = covariance or CovarianceConfig()
    cfg = cfg or CvConfig()
    Q = cfg.folds
    _check_feasible(train, Q)

    _, B_full = _fit_dense(train, covariance, priors, cfg.seed)
    k_upper = k_upper_bound(B_full, cfg.selectors)
    positional = _log_grid(k_upper, train.p, cfg.grid_size)
    grid = k_grid(k_upper, train.p, cfg.grid_size) if cfg.kub_scope == "full" else positional

    assign = stratified_folds(train.labels, Q, cfg.seed)
    errors = np.zeros((len(cfg.selectors), len(grid)), dtype=np.int64)
    for q in range(Q):
        tr, va = train.subset(assign != q), train.subset(assign == q)
        stats, B = _fit_dense(tr, covariance, priors, cfg.seed)
        if cfg.kub_scope == "full":
            ks = grid
        else:
            ks = _log_grid(k_upper_bound(B, cfg.selectors), train.p, cfg.grid_size)
        for i, s in enumerate(cfg.selectors):
            order = np.argsort(-selector_scores(B, s), kind="stable")
            for j, k in enumerate(ks):
                errors[i, j] += _errors_for_rows(va.features, va.labels, stats, B,
                                                 order[:k])

    best = errors.min()
    # first column (smallest K) holding a minimum, then first selector in it
    j = int(np.flatnonzero((errors == best).any(axis=0))[0])
    i = int(np.flatnonzero(errors[:, j] == best)[0])
    return CvReport(errors, cfg.selectors, tuple(grid), cfg.selectors[i],
                    int(grid[j]), int(k_upper), assign)


@dataclass(frozen=True)
class DeltaCvReport:
    errors: np.ndarray
    deltas: tuple
    delta: float
    folds: np.ndarray = field(repr=False)


def delta_grid(B, size: int = 10) -> np.ndarray:
    """``size`` evenly spaced soft thresholds from 0 to ``max |B|``."""
    return np.linspace(0.0, float(np.max(np.abs(B))), size)


def cross_validate_delta(train: LabeledDataset, covariance: CovarianceConfig | None = None,
                         deltas=None, folds: int = 5, seed: int = 0,
                         priors: str = "uniform") -> DeltaCvReport:
    """CV over soft-threshold levels for the shrunken-centroid baseline.

    Ties go to the larger threshold (fewer features).
    """
    covariance = covariance or CovarianceConfig()
    _check_feasible(train, folds)
    if deltas is None:
        _, B_full = _fit_dense(train, covariance, priors, seed)
        deltas = delta_grid(B_full)
    deltas = np.asarray(deltas, dtype=float)
    assign = stratified_folds(train.labels, folds, seed)
    errors = np.zeros(deltas.size, dtype=np.int64)
    for q in range(folds):
        tr, va = train.subset(assign != q), train.subset(assign == q)
        stats, B = _fit_dense(tr, covariance, priors, seed)
        for j, delta in enumerate(deltas):
            sparse = soft_threshold(B, delta)
            rows = np.flatnonzero(np.any(sparse != 0, axis=1))
            model = CrdaModel(stats.means, sparse, stats.log_priors, rows, "cv")
            errors[j] += int(np.count_nonzero(predict(va.features, model) != va.labels))
    best = errors.min()
    j = int(np.flatnonzero(errors == best)[-1])
    return DeltaCvReport(errors, tuple(float(d) for d in deltas), float(deltas[j]), assign)
