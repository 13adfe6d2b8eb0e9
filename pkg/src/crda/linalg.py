"""Group-wise centering, pooled SCM and the SVD-trick regularized inverse.

Data matrices are stored column-per-observation (``p x n``) throughout the
package, so a class is a set of columns and an observation is ``X[:, i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import CrdaError, DegenerateClassError, SingularTargetError

__all__ = [
    "LabeledDataset",
    "GroupStatistics",
    "ThinSvd",
    "CovarianceOperator",
    "RscmOperator",
    "EigenOperator",
    "DenseOperator",
    "group_center",
    "pooled_scm",
    "thin_svd_via_gram",
    "rscm_inverse_operator",
]


@dataclass(frozen=True)
class LabeledDataset:
    """A ``p x n`` feature matrix with integer class labels in ``1..G``.

    Parameters
    ----------
    features : array-like of shape (p, n)
        One observation per column.
    labels : array-like of shape (n,)
        Class indices in ``1..n_classes``.
    feature_names : sequence of str, optional
    class_names : sequence of str, optional
        Original label for class ``g`` is ``class_names[g - 1]``.
    n_classes : int, optional
        Defaults to ``len(class_names)`` or ``labels.max()``. Subsets keep the
        parent's value so a fold missing a class still has the same ``G``.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] | None = None
    class_names: tuple[str, ...] | None = None
    n_classes: int | None = field(default=None)

    def __post_init__(self):
        X = np.array(self.features, dtype=float, copy=True)
        if X.ndim != 2:
            raise CrdaError(f"features must be 2-D (p x n), got shape {X.shape}")
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != X.shape[1]:
            raise CrdaError(
                f"labels must have length n={X.shape[1]}, got shape {y.shape}")
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise CrdaError("labels must be integers")
        y = y.astype(np.int64)
        G = self.n_classes
        if G is None:
            G = len(self.class_names) if self.class_names is not None else (
                int(y.max()) if y.size else 0)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise CrdaError(f"need p >= 1 and n >= 1, got shape {X.shape}")
        if y.size and (y.min() < 1 or y.max() > G):
            raise CrdaError(f"labels must lie in 1..{G}")
        if self.feature_names is not None and len(self.feature_names) != X.shape[0]:
            raise CrdaError("feature_names length does not match p")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "n_classes", int(G))
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def p(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes + 1)[1:]

    def subset(self, index) -> "LabeledDataset":
        """Observations ``index`` (integer array or boolean mask)."""
        index = np.asarray(index)
        return LabeledDataset(self.features[:, index], self.labels[index],
                              self.feature_names, self.class_names,
                              self.n_classes)


@dataclass(frozen=True)
class GroupStatistics:
    means: np.ndarray       # p x G
    counts: np.ndarray      # G
    log_priors: np.ndarray  # G
    centered: np.ndarray    # p x n

    @property
    def n(self) -> int:
        return self.centered.shape[1]


def group_center(data: LabeledDataset, priors: str = "uniform") -> GroupStatistics:
    """Class means, counts, log-priors and the group-centered data.

    Parameters
    ----------
    data : LabeledDataset
    priors : {"uniform", "empirical"}
        ``"uniform"`` gives ``ln(1/G)``; ``"empirical"`` gives ``ln(n_g/n)``.

    Raises
    ------
    DegenerateClassError
        If some class in ``1..G`` has no observations.
    """
    G = data.n_classes
    counts = data.class_counts()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise DegenerateClassError(
            f"degenerate class: class {empty[0] + 1} has no observations")
    X = data.features
    idx = data.labels - 1
    means = np.empty((data.p, G))
    for g in range(G):
        means[:, g] = X[:, idx == g].mean(axis=1)
    centered = X - means[:, idx]
    if priors == "uniform":
        log_priors = np.full(G, -np.log(G))
    elif priors == "empirical":
        log_priors = np.log(counts / counts.sum())
    else:
        raise CrdaError(f"unknown priors option {priors!r}")
    for a in (means, counts, log_priors, centered):
        a.setflags(write=False)
    return GroupStatistics(means, counts, log_priors, centered)


def pooled_scm(stats: GroupStatistics) -> np.ndarray:
    """Pooled sample covariance ``(1/n) X_c X_c^T`` (divisor n, not n - G)."""
    Xc = stats.centered
    S = Xc @ Xc.T / Xc.shape[1]
    return (S + S.T) / 2


@dataclass(frozen=True)
class ThinSvd:
    U: np.ndarray  # p x m
    D: np.ndarray  # m, descending
    V: np.ndarray  # n x m

    @property
    def rank(self) -> int:
        return self.D.shape[0]


def thin_svd_via_gram(X) -> ThinSvd:
    """Thin SVD of a ``p x n`` matrix from the eigendecomposition of ``X^T X``.

    Eigenvalues of the Gram matrix below
    ``max_eig * max(n, p) * machine_eps`` are treated as zero and the
    corresponding directions dropped.
    """
    X = np.asarray(X, dtype=float)
    p, n = X.shape
    gram = X.T @ X
    w, V = np.linalg.eigh((gram + gram.T) / 2)
    w, V = w[::-1], V[:, ::-1]
    w = np.clip(w, 0.0, None)
    if w[0] <= 0.0:
        raise CrdaError("zero matrix has no singular directions")
    keep = w >= w[0] * max(n, p) * np.finfo(float).eps
    D = np.sqrt(w[keep])
    V = V[:, keep]
    U = (X @ V) / D
    return ThinSvd(U, D, V)


class CovarianceOperator:
    """Applies a symmetric positive definite ``p x p`` matrix or its inverse.

    Subclasses keep a factored form so that neither the matrix nor its
    inverse has to be materialized for large ``p``.
    """

    kind = "abstract"

    @property
    def p(self) -> int:
        raise NotImplementedError

    def apply(self, Z):
        raise NotImplementedError

    def apply_inverse(self, Z):
        raise NotImplementedError

    def trace(self) -> float:
        raise NotImplementedError

    def logdet(self) -> float:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        return self.apply(np.eye(self.p))

    def inverse_dense(self) -> np.ndarray:
        return self.apply_inverse(np.eye(self.p))


class RscmOperator(CovarianceOperator):
    """``alpha * S + (1 - alpha) * eta * I`` with ``S = (1/n) U D^2 U^T``."""

    kind = "rscm-factored"

    def __init__(self, U, D, alpha, eta, n):
        self.U = U
        self.D = D
        self.alpha = float(alpha)
        self.eta = float(eta)
        self.n = int(n)
        self._target = (1.0 - self.alpha) * self.eta
        # eigenvalues of the regularized matrix on span(U)
        self._inner = self.alpha / self.n * D**2 + self._target

    @property
    def p(self) -> int:
        return self.U.shape[0]

    def apply(self, Z):
        Z = np.asarray(Z, dtype=float)
        proj = self.U.T @ Z
        scale = (self.alpha / self.n) * self.D**2
        return self.U @ (_scale_rows(proj, scale)) + self._target * Z

    def apply_inverse(self, Z):
        Z = np.asarray(Z, dtype=float)
        c = 1.0 / self._target
        proj = self.U.T @ Z
        return self.U @ _scale_rows(proj, 1.0 / self._inner - c) + c * Z

    def trace(self) -> float:
        return float(self.alpha / self.n * np.sum(self.D**2) + self.p * self._target)

    def logdet(self) -> float:
        m = self.D.shape[0]
        return float(np.sum(np.log(self._inner)) + (self.p - m) * np.log(self._target))


class EigenOperator(CovarianceOperator):
    """``B diag(v) B^T + c (I - B B^T)`` for an orthonormal ``p x r`` basis ``B``.

    When ``B`` is square the complement term vanishes and ``c`` is unused.
    """

    kind = "rie-pscm"

    def __init__(self, basis, values, complement=None):
        self.basis = basis
        self.values = np.asarray(values, dtype=float)
        r = basis.shape[1]
        if r < basis.shape[0] and complement is None:
            raise CrdaError("thin eigenbasis needs a complement eigenvalue")
        self.complement = None if r == basis.shape[0] else float(complement)

    @property
    def p(self) -> int:
        return self.basis.shape[0]

    def _apply_fn(self, Z, vals, comp):
        Z = np.asarray(Z, dtype=float)
        proj = self.basis.T @ Z
        if comp is None:
            return self.basis @ _scale_rows(proj, vals)
        return self.basis @ _scale_rows(proj, vals - comp) + comp * Z

    def apply(self, Z):
        return self._apply_fn(Z, self.values, self.complement)

    def apply_inverse(self, Z):
        comp = None if self.complement is None else 1.0 / self.complement
        return self._apply_fn(Z, 1.0 / self.values, comp)

    def eigenvalues(self) -> np.ndarray:
        """All ``p`` eigenvalues, basis values first."""
        extra = self.p - self.values.shape[0]
        return np.concatenate([self.values, np.full(extra, self.complement or 0.0)])

    def trace(self) -> float:
        return float(np.sum(self.eigenvalues()))

    def logdet(self) -> float:
        return float(np.sum(np.log(self.eigenvalues())))


class DenseOperator(CovarianceOperator):
    kind = "dense"

    def __init__(self, matrix):
        M = np.asarray(matrix, dtype=float)
        self.matrix = (M + M.T) / 2
        try:
            self._chol = np.linalg.cholesky(self.matrix)
        except np.linalg.LinAlgError as exc:
            raise CrdaError("covariance matrix is not positive definite") from exc

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    def apply(self, Z):
        return self.matrix @ np.asarray(Z, dtype=float)

    def apply_inverse(self, Z):
        L = self._chol
        return np.linalg.solve(L.T, np.linalg.solve(L, np.asarray(Z, dtype=float)))

    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self._chol))))


def _scale_rows(A, s):
    return s[:, None] * A if A.ndim == 2 else s * A


def rscm_inverse_operator(svd: ThinSvd, alpha: float, n: int) -> RscmOperator:
    """Regularized SCM operator built from the thin SVD of the centered data.

    The inverse is applied with

        U [ (alpha/n D^2 + (1-alpha) eta I)^-1 - I / ((1-alpha) eta) ] U^T
            + I / ((1-alpha) eta)

    where ``eta = tr(D^2) / (n p)``, at ``O(p n k)`` cost per ``p x k`` block.
    """
    if not 0.0 <= alpha < 1.0:
        raise CrdaError(f"alpha must lie in [0, 1), got {alpha}")
    p = svd.U.shape[0]
    eta = float(np.sum(svd.D**2)) / (n * p)
    if not eta > 0.0:
        raise SingularTargetError("singular target: tr(S) = 0")
    return RscmOperator(svd.U, svd.D, alpha, eta, n)
