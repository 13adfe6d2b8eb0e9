"""Coefficient matrix, sparsifying transforms, discriminant scoring and prediction."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import CrdaError
from .linalg import CovarianceOperator

__all__ = [
    "Selector",
    "SELECTOR_ORDER",
    "CoefficientMatrix",
    "CrdaModel",
    "coefficient_matrix",
    "selector_scores",
    "hard_threshold_rows",
    "soft_threshold",
    "k_upper_bound",
    "discriminant_scores",
    "predict",
]


class Selector(str, Enum):
    """Row-scoring functions for hard thresholding."""

    VARIANCE = "variance"
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @classmethod
    def parse(cls, value) -> "Selector":
        if isinstance(value, cls):
            return value
        aliases = {"phi0": "variance", "phi1": "l1", "phi2": "l2", "phiinf": "linf",
                   "var": "variance", "inf": "linf"}
        key = str(value).lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise CrdaError(f"unknown selector {value!r}") from None


SELECTOR_ORDER = (Selector.VARIANCE, Selector.L1, Selector.L2, Selector.LINF)


@dataclass(frozen=True)
class CoefficientMatrix:
    dense: np.ndarray
    sparse: np.ndarray
    selected_rows: np.ndarray  # ascending row indices (0-based)


def coefficient_matrix(operator: CovarianceOperator, means) -> np.ndarray:
    """``Sigma^-1 M``: one discriminant direction per class column."""
    means = np.asarray(means, dtype=float)
    if means.ndim != 2 or means.shape[0] != operator.p:
        raise CrdaError(
            f"dimension mismatch: operator is {operator.p}x{operator.p}, "
            f"means have shape {means.shape}")
    return operator.apply_inverse(means)


def selector_scores(B, phi) -> np.ndarray:
    """Score every row of ``B`` with the selector ``phi``.

    ``variance`` is the sample variance across classes with divisor ``G - 1``.
    """
    B = np.asarray(B, dtype=float)
    phi = Selector.parse(phi)
    if phi is Selector.L1:
        return np.sum(np.abs(B), axis=1)
    if phi is Selector.L2:
        return np.sqrt(np.sum(B * B, axis=1))
    if phi is Selector.LINF:
        return np.max(np.abs(B), axis=1)
    if B.shape[1] < 2:
        raise CrdaError("variance selector needs G >= 2")
    return np.var(B, axis=1, ddof=1)


def _top_rows(scores, K):
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:K])


def hard_threshold_rows(B, K, phi) -> CoefficientMatrix:
    """Keep the ``K`` rows of ``B`` with the largest scores, zero the rest.

    Equal scores are ranked by row index, smaller first.
    """
    B = np.asarray(B, dtype=float)
    p = B.shape[0]
    K = int(K)
    if not 1 <= K <= p:
        raise CrdaError(f"K must lie in 1..{p}, got {K}")
    rows = _top_rows(selector_scores(B, phi), K)
    sparse = np.zeros_like(B)
    sparse[rows] = B[rows]
    return CoefficientMatrix(B, sparse, rows)


def soft_threshold(B, delta) -> np.ndarray:
    """Elementwise ``sign(b) * max(|b| - delta, 0)``."""
    if delta < 0:
        raise CrdaError(f"soft threshold needs delta >= 0, got {delta}")
    B = np.asarray(B, dtype=float)
    return np.sign(B) * np.maximum(np.abs(B) - delta, 0.0)


def _count_at_least_mean(scores) -> int:
    mean = scores.mean()
    # scores equal to the mean up to summation rounding still count
    slack = 1e-12 * abs(mean)
    return max(1, int(np.count_nonzero(scores >= mean - slack)))


def k_upper_bound(B, selectors=SELECTOR_ORDER) -> int:
    """Smallest, over ``selectors``, count of rows scoring at least the mean score."""
    selectors = [Selector.parse(s) for s in selectors]
    if not selectors:
        raise CrdaError("k_upper_bound needs at least one selector")
    return min(_count_at_least_mean(selector_scores(B, s)) for s in selectors)


@dataclass(frozen=True)
class CrdaModel:
    """Everything needed to score new observations.

    ``coefficients`` is the row-sparse ``p x G`` matrix; ``selected_rows``
    lists its (possibly) nonzero rows, 0-based and ascending.
    """

    means: np.ndarray
    coefficients: np.ndarray
    log_priors: np.ndarray
    selected_rows: np.ndarray
    variant: str
    selector: Selector | None = None
    K: int | None = None
    delta: float | None = None
    diagnostics: dict = field(default_factory=dict)
    class_names: tuple[str, ...] | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        for name in ("means", "coefficients", "log_priors"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        rows = np.array(self.selected_rows, dtype=np.int64)
        rows.setflags(write=False)
        object.__setattr__(self, "selected_rows", rows)
        if self.means.shape != self.coefficients.shape:
            raise CrdaError("means and coefficients must both be p x G")
        if self.log_priors.shape != (self.means.shape[1],):
            raise CrdaError("log_priors must have length G")
        if self.selector is not None:
            object.__setattr__(self, "selector", Selector.parse(self.selector))

    @property
    def p(self) -> int:
        return self.means.shape[0]

    @property
    def n_classes(self) -> int:
        return self.means.shape[1]

    def offsets(self) -> np.ndarray:
        """``-1/2 diag(M^T B) + ln(pi)`` over the selected rows."""
        r = self.selected_rows
        quad = np.einsum("ig,ig->g", self.means[r], self.coefficients[r])
        return -0.5 * quad + self.log_priors


def discriminant_scores(X, model: CrdaModel) -> np.ndarray:
    """``t x G`` matrix of discriminant values for the columns of ``X``.

    Only the selected rows of ``X`` are read, so unselected features have no
    influence at all.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != model.p:
        raise CrdaError(
            f"dimension mismatch: model has p={model.p}, data has {X.shape[0]} features")
    r = model.selected_rows
    return X[r].T @ model.coefficients[r] + model.offsets()


def predict(X, model: CrdaModel) -> np.ndarray:
    """Class labels ``1..G``; ties go to the smallest class index."""
    return np.argmax(discriminant_scores(X, model), axis=1) + 1
