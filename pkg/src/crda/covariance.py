"""Shrinkage (Ell1/Ell2-RSCM) and penalized (Rie-PSCM) covariance estimators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, CrdaError, InsufficientSamplesError
from .linalg import (
    CovarianceOperator,
    EigenOperator,
    GroupStatistics,
    LabeledDataset,
    ThinSvd,
    group_center,
    rscm_inverse_operator,
    thin_svd_via_gram,
)

__all__ = [
    "ShrinkageEstimate",
    "RiePscmEstimate",
    "CovarianceConfig",
    "marginal_excess_kurtosis",
    "kurtosis_kappa",
    "spatial_median",
    "spatial_sign_covariance",
    "sphericity_ell1",
    "sphericity_ell2",
    "alpha_hat",
    "ell_rscm",
    "solve_rie_eigenvalues",
    "rie_pscm",
    "rie_pscm_from_svd",
    "rie_pscm_eta_scores",
    "rie_pscm_select_eta",
    "estimate_covariance",
    "DEFAULT_ETA_GRID",
]

ALPHA_MAX = 1.0 - 1e-12
DEFAULT_ETA_GRID = tuple(np.logspace(-2, 2, 10))


@dataclass(frozen=True)
class ShrinkageEstimate:
    alpha_hat: float
    gamma_hat: float
    kappa_hat: float
    eta: float  # tr(S)/p
    operator: CovarianceOperator
    variant: str


@dataclass(frozen=True)
class RiePscmEstimate:
    operator: EigenOperator
    eta_penalty: float
    m_target: float
    sample_eigenvalues: np.ndarray

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.operator.basis

    @property
    def shrunk_eigenvalues(self) -> np.ndarray:
        return self.operator.eigenvalues()


# ---------------------------------------------------------------------------
# kurtosis and sphericity
# ---------------------------------------------------------------------------

def marginal_excess_kurtosis(X) -> tuple[np.ndarray, np.ndarray]:
    """Moment-based excess kurtosis ``m4 / m2^2 - 3`` of every row of ``X``.

    Returns the kurtosis vector and a boolean mask of rows with usable
    variance. Rows whose second moment is at or below ``1e-24`` times the
    largest row second moment get kurtosis 0.
    """
    X = np.asarray(X, dtype=float)
    dev = X - X.mean(axis=1, keepdims=True)
    m2 = np.mean(dev**2, axis=1)
    m4 = np.mean(dev**4, axis=1)
    top = m2.max(initial=0.0)
    ok = m2 > 1e-24 * top if top > 0 else np.zeros_like(m2, dtype=bool)
    kurt = np.zeros_like(m2)
    kurt[ok] = m4[ok] / m2[ok] ** 2 - 3.0
    return kurt, ok


def kurtosis_kappa(centered) -> float:
    """Elliptical kurtosis: one third of the mean marginal excess kurtosis.

    Zero-variance rows count as 0 in the average. The result is clamped
    below at ``-2/(p+2) + 1e-6``, the elliptical lower bound.
    """
    centered = np.asarray(centered, dtype=float)
    p, n = centered.shape
    if n < 4:
        raise InsufficientSamplesError(
            f"insufficient samples for kurtosis: n={n} < 4")
    kurt, ok = marginal_excess_kurtosis(centered)
    if not ok.any():
        raise CrdaError("zero variance in every feature; kurtosis undefined")
    kappa = kurt.mean() / 3.0
    return float(max(kappa, -2.0 / (p + 2) + 1e-6))


def spatial_median(X, tol=1e-8, max_iter=1000) -> np.ndarray:
    """Minimizer of ``sum_i ||x_i - mu||`` over ``mu``.

    Weiszfeld iteration with the Vardi-Zhang correction for iterates that
    land on a data point (distance below 1e-12). Stops when the step is
    below ``tol * max(1, ||mu||)``.

    Raises
    ------
    ConvergenceError
        After ``max_iter`` iterations; ``last_iterate`` holds the estimate.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise CrdaError("spatial_median needs a p x n matrix with n >= 1")
    mu = X.mean(axis=1)
    for _ in range(max_iter):
        diff = X - mu[:, None]
        dist = np.sqrt(np.einsum("ij,ij->j", diff, diff))
        at_point = dist < 1e-12
        far = ~at_point
        if not far.any():
            return mu
        w = 1.0 / dist[far]
        T = X[:, far] @ w / w.sum()
        n_at = int(at_point.sum())
        if n_at:
            r = np.linalg.norm(diff[:, far] @ w)
            if r <= n_at:
                return mu
            lam = n_at / r
            new = (1.0 - lam) * T + lam * mu
        else:
            new = T
        step = np.linalg.norm(new - mu)
        mu = new
        if step <= tol * max(1.0, np.linalg.norm(mu)):
            return mu
    raise ConvergenceError(
        f"spatial median did not converge in {max_iter} iterations", mu)


def _unit_signs(X, mu):
    diff = np.asarray(X, dtype=float) - np.asarray(mu, dtype=float)[:, None]
    norms = np.linalg.norm(diff, axis=0)
    keep = norms > 1e-12 * norms.max(initial=0.0)
    if not keep.any():
        raise CrdaError("degenerate signs: every observation equals mu")
    return diff[:, keep] / norms[keep]


def spatial_sign_covariance(X, mu) -> np.ndarray:
    """Average outer product of the unit vectors ``(x_i - mu)/||x_i - mu||``.

    Columns coinciding with ``mu`` are dropped; the result has unit trace.
    """
    signs = _unit_signs(X, mu)
    return signs @ signs.T / signs.shape[1]


def sphericity_ell1(X, mu=None) -> float:
    """Sphericity estimate from the spatial sign covariance, clamped to [1, p].

    ``tr(S_sign^2)`` is evaluated through the ``n x n`` Gram matrix of the
    signs, so no ``p x p`` matrix is formed.
    """
    X = np.asarray(X, dtype=float)
    p = X.shape[0]
    if X.shape[1] < 2:
        raise InsufficientSamplesError("sphericity needs n >= 2")
    if mu is None:
        mu = spatial_median(X)
    signs = _unit_signs(X, mu)
    n = signs.shape[1]
    if n < 2:
        raise InsufficientSamplesError("sphericity needs two distinct observations")
    gram = signs.T @ signs
    tr_sq = float(np.sum(gram**2)) / n**2
    raw = n / (n - 1) * (p * tr_sq - p / n)
    return float(min(p, max(1.0, raw)))


def _ell2_constants(n, kappa):
    a = (n / (n + kappa)) * (n / (n - 1) + kappa)
    b = (kappa + n) * (n - 1) ** 2 / ((n - 2) * (3 * kappa * (n - 1) + n * (n + 1)))
    return a, b


def _sphericity_ell2_traces(tr_s, tr_s2, p, n, kappa):
    if n <= 2:
        raise InsufficientSamplesError(f"insufficient samples: n={n} <= 2")
    if not tr_s > 0:
        raise CrdaError("sphericity undefined for tr(S) = 0")
    a, b = _ell2_constants(n, kappa)
    raw = b * (p * tr_s2 / tr_s**2 - a * p / n)
    return float(min(p, max(1.0, raw)))


def sphericity_ell2(S, n, kappa_hat) -> float:
    """Moment-corrected sphericity estimate from the pooled SCM, clamped to [1, p]."""
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    return _sphericity_ell2_traces(float(np.trace(S)), float(np.sum(S * S)),
                                   p, n, kappa_hat)


def alpha_hat(gamma_hat, kappa_hat, n, p) -> float:
    """Estimated MSE-optimal shrinkage weight, clamped to ``[0, 1 - 1e-12]``."""
    num = gamma_hat - 1.0
    den = num + kappa_hat * (2 * gamma_hat + p) / n + (gamma_hat + p) / (n - 1)
    if not den > 0:
        raise CrdaError("invalid kurtosis/sphericity combination: "
                        f"non-positive denominator {den}")
    return float(min(ALPHA_MAX, max(0.0, num / den)))


def ell_rscm(data: LabeledDataset, variant: str = "ell1", *, alpha=None,
             ell1_source: str = "raw", stats: GroupStatistics | None = None,
             svd: ThinSvd | None = None) -> ShrinkageEstimate:
    """Ell1- or Ell2-RSCM estimate of the pooled covariance.

    Parameters
    ----------
    data : LabeledDataset
    variant : {"ell1", "ell2"}
    alpha : float, optional
        Overrides the estimated shrinkage weight (``0`` gives the pure
        ``tr(S)/p * I`` target).
    ell1_source : {"raw", "centered"}
        Ell1 sphericity is computed around one spatial median of either the
        raw observations or the group-centered ones.
    stats, svd : optional
        Precomputed group statistics and thin SVD of ``stats.centered``.
    """
    if variant not in ("ell1", "ell2"):
        raise CrdaError(f"unknown RSCM variant {variant!r}")
    if stats is None:
        stats = group_center(data)
    Xc = stats.centered
    p, n = Xc.shape
    if svd is None:
        svd = thin_svd_via_gram(Xc)
    kappa = kurtosis_kappa(Xc)
    if variant == "ell1":
        if ell1_source == "raw":
            source = data.features
        elif ell1_source == "centered":
            source = Xc
        else:
            raise CrdaError(f"unknown ell1_source {ell1_source!r}")
        gamma = sphericity_ell1(source)
    else:
        d2 = svd.D**2
        gamma = _sphericity_ell2_traces(d2.sum() / n, np.sum(d2**2) / n**2,
                                        p, n, kappa)
    a = alpha_hat(gamma, kappa, n, p) if alpha is None else float(alpha)
    op = rscm_inverse_operator(svd, a, n)
    return ShrinkageEstimate(a, gamma, kappa, op.eta, op, variant)


# ---------------------------------------------------------------------------
# Rie-PSCM
# ---------------------------------------------------------------------------

def solve_rie_eigenvalues(d, m, eta, tol=1e-14, max_iter=200) -> np.ndarray:
    """Per-eigenvalue minimizers of ``d/s + ln s + eta (ln s - ln m)^2``.

    The stationarity condition ``-d + s + 2 eta s (ln s - ln m) = 0`` is
    solved in ``t = ln s``, where it is strictly increasing, by Newton steps
    safeguarded with bisection on the bracket
    ``[min(d, m e^{-1/(2 eta)}) 1e-3, max(d, m) 10]``.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if not eta > 0 or not m > 0:
        raise CrdaError("Rie-PSCM needs eta > 0 and m > 0")
    if np.any(d < 0):
        raise CrdaError("eigenvalues must be nonnegative")
    log_m = np.log(m)
    pos = d > 0
    log_d = np.log(np.where(pos, d, 1.0))
    zero_root = log_m - 1.0 / (2 * eta)
    lo = np.where(pos, np.minimum(log_d, zero_root), zero_root) + np.log(1e-3)
    hi = np.where(pos, np.maximum(log_d, log_m), log_m) + np.log(10.0)

    def g(t):
        return -d * np.exp(-t) + 1.0 + 2 * eta * (t - log_m)

    t = np.where(pos, np.clip(log_m, lo, hi), zero_root)
    done = np.zeros(d.shape, dtype=bool)
    for _ in range(max_iter):
        gt = g(t)
        lo = np.where(gt < 0, t, lo)
        hi = np.where(gt > 0, t, hi)
        newton = t - gt / (d * np.exp(-t) + 2 * eta)
        inside = (newton > lo) & (newton < hi)
        new = np.where(inside, newton, 0.5 * (lo + hi))
        new = np.where(done, t, new)
        step = np.abs(new - t)
        t = new
        done |= (step <= tol * (1.0 + np.abs(t))) | (gt == 0)
        if done.all():
            return np.exp(t)
    bad = int(np.flatnonzero(~done)[0])
    raise ConvergenceError(
        f"Rie-PSCM Newton did not converge for eigenvalue index {bad} "
        f"(d={d[bad]:.6g}, bracket=[{np.exp(lo[bad]):.6g}, {np.exp(hi[bad]):.6g}])",
        np.exp(t))


def rie_pscm(S, eta_penalty) -> RiePscmEstimate:
    """Rie-PSCM estimate from a dense SCM ``S``; shrinks its eigenvalues toward tr(S)/p."""
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    m = float(np.trace(S)) / p
    if not m > 0:
        raise CrdaError("Rie-PSCM needs tr(S) > 0")
    d, V = np.linalg.eigh((S + S.T) / 2)
    d, V = np.clip(d[::-1], 0.0, None), V[:, ::-1]
    sigma = solve_rie_eigenvalues(d, m, eta_penalty)
    return RiePscmEstimate(EigenOperator(V, sigma), float(eta_penalty), m, d)


def rie_pscm_from_svd(svd: ThinSvd, n: int, eta_penalty) -> RiePscmEstimate:
    """Rie-PSCM from the thin SVD of the centered data (``S = U D^2 U^T / n``).

    The ``p - rank`` zero eigenvalues share one shrunk value, so only the
    ``p x rank`` basis is stored.
    """
    p = svd.U.shape[0]
    d = svd.D**2 / n
    m = float(d.sum()) / p
    if not m > 0:
        raise CrdaError("Rie-PSCM needs tr(S) > 0")
    sigma = solve_rie_eigenvalues(np.append(d, 0.0), m, eta_penalty)
    comp = sigma[-1] if svd.rank < p else None
    op = EigenOperator(svd.U, sigma[:-1], comp)
    d_full = np.concatenate([d, np.zeros(p - svd.rank)])
    return RiePscmEstimate(op, float(eta_penalty), m, d_full)


def _fold_split(data, folds, seed):
    from .model_selection import stratified_folds

    counts = data.class_counts()
    if counts.min() < folds:
        raise InsufficientSamplesError(
            f"fold too small: class {int(np.argmin(counts)) + 1} has "
            f"{int(counts.min())} members, fewer than {folds} folds; use fewer folds")
    return stratified_folds(data.labels, folds, seed)


def rie_pscm_eta_scores(data: LabeledDataset, eta_grid=DEFAULT_ETA_GRID,
                        folds: int = 5, seed: int = 0) -> np.ndarray:
    """Mean held-out Gaussian loss ``tr(Sigma^-1 S_val) + ln|Sigma|`` per grid value.

    Validation observations are centered with the training-fold class means.
    """
    eta_grid = np.asarray(eta_grid, dtype=float)
    if eta_grid.size == 0 or np.any(eta_grid <= 0):
        raise CrdaError("eta grid must be nonempty and positive")
    assign = _fold_split(data, folds, seed)
    scores = np.zeros(eta_grid.size)
    for q in range(folds):
        train = data.subset(assign != q)
        val = data.subset(assign == q)
        stats = group_center(train)
        Xv = val.features - stats.means[:, val.labels - 1]
        svd = thin_svd_via_gram(stats.centered)
        for j, eta in enumerate(eta_grid):
            op = rie_pscm_from_svd(svd, train.n, eta).operator
            fit = np.sum(Xv * op.apply_inverse(Xv)) / val.n
            scores[j] += fit + op.logdet()
    return scores / folds


def rie_pscm_select_eta(data: LabeledDataset, eta_grid=DEFAULT_ETA_GRID,
                        folds: int = 5, seed: int = 0) -> float:
    """Grid penalty with the smallest cross-validated loss; ties go to the smaller eta."""
    eta_grid = np.asarray(eta_grid, dtype=float)
    scores = rie_pscm_eta_scores(data, eta_grid, folds, seed)
    best = scores.min()
    return float(eta_grid[scores == best].min())


# ---------------------------------------------------------------------------
# dispatch used by the classifier and cross-validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceConfig:
    """Which covariance estimator to fit and its fixed settings.

    ``kind`` is ``"ell1"``, ``"ell2"`` or ``"rie"``. For ``"rie"`` a fixed
    ``eta`` skips the cross-validated penalty search over ``eta_grid``.
    """

    kind: str = "ell1"
    alpha: float | None = None
    ell1_source: str = "raw"
    eta: float | None = None
    eta_grid: tuple = field(default=DEFAULT_ETA_GRID)
    eta_folds: int = 5


def estimate_covariance(data: LabeledDataset, stats: GroupStatistics,
                        config: CovarianceConfig, seed: int = 0):
    """Fit the configured estimator; returns ``(operator, diagnostics)``."""
    if stats.centered.shape[1] != data.n:
        raise CrdaError("group statistics do not match the dataset")
    svd = thin_svd_via_gram(stats.centered)
    if config.kind in ("ell1", "ell2"):
        est = ell_rscm(data, config.kind, alpha=config.alpha,
                       ell1_source=config.ell1_source, stats=stats, svd=svd)
        diag = {"alpha": est.alpha_hat, "gamma": est.gamma_hat,
                "kappa": est.kappa_hat, "scale": est.eta}
        return est.operator, diag
    if config.kind == "rie":
        eta = config.eta
        if eta is None:
            eta = rie_pscm_select_eta(data, config.eta_grid, config.eta_folds, seed)
        est = rie_pscm_from_svd(svd, data.n, eta)
        return est.operator, {"penalty": est.eta_penalty, "scale": est.m_target}
    raise CrdaError(f"unknown covariance estimator {config.kind!r}")
