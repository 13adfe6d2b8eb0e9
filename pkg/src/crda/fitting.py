"""Fitting the CRDA variants and the shrunken-centroid baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .classifier import (
    SELECTOR_ORDER,
    CrdaModel,
    Selector,
    coefficient_matrix,
    hard_threshold_rows,
    k_upper_bound,
    soft_threshold,
)
from .covariance import DEFAULT_ETA_GRID, CovarianceConfig, estimate_covariance
from .exceptions import CrdaError
from .linalg import LabeledDataset, group_center
from .model_selection import CvConfig, cross_validate, cross_validate_delta

__all__ = ["VARIANTS", "FitConfig", "fit"]

log = logging.getLogger(__name__)

VARIANTS = ("crda1", "crda2", "crda3", "scrda")
_DEFAULT_ESTIMATOR = {"crda1": "ell1", "crda2": "ell2", "crda3": "rie", "scrda": "ell1"}


@dataclass(frozen=True)
class FitConfig:
    """Fitting options.

    Parameters
    ----------
    variant : {"crda1", "crda2", "crda3", "scrda"}
    estimator : {"ell1", "ell2", "rie"}, optional
        Overrides the variant's covariance estimator.
    selector, K : optional
        Fixing both skips the (selector, K) cross-validation.
    delta : float, optional
        Soft threshold for ``scrda``; cross-validated when omitted.
    alpha : float, optional
        Fixed RSCM shrinkage weight.
    eta : float, optional
        Fixed Rie-PSCM penalty; otherwise chosen over ``eta_grid``.
    priors : {"uniform", "empirical"}
    """

    variant: str = "crda1"
    estimator: str | None = None
    selector: Selector | str | None = None
    K: int | None = None
    delta: float | None = None
    folds: int = 5
    grid_size: int = 10
    selectors: tuple = SELECTOR_ORDER
    seed: int = 0
    kub_scope: str = "full"
    alpha: float | None = None
    ell1_source: str = "raw"
    eta: float | None = None
    eta_grid: tuple = DEFAULT_ETA_GRID
    priors: str = "uniform"

    def covariance_config(self) -> CovarianceConfig:
        kind = self.estimator or _DEFAULT_ESTIMATOR[self.variant]
        return CovarianceConfig(kind=kind, alpha=self.alpha, ell1_source=self.ell1_source,
                                eta=self.eta, eta_grid=tuple(self.eta_grid),
                                eta_folds=self.folds)

    def cv_config(self) -> CvConfig:
        return CvConfig(self.folds, self.grid_size, tuple(self.selectors), self.seed,
                        self.kub_scope)


def fit(train: LabeledDataset, config: FitConfig | None = None, **overrides) -> CrdaModel:
    """Fit a CRDA classifier (or the soft-threshold baseline) to ``train``.

    ``crda1``/``crda2`` choose the selector and K by cross-validation unless
    both are given; ``crda3`` uses the max-abs selector with K equal to its
    K upper bound; ``scrda`` soft-thresholds the coefficient matrix.
    Keyword ``overrides`` replace fields of ``config``.
    """
    config = replace(config or FitConfig(), **overrides)
    if config.variant not in VARIANTS:
        raise CrdaError(f"unknown variant {config.variant!r}; expected one of {VARIANTS}")
    cov_cfg = config.covariance_config()

    stats = group_center(train, config.priors)
    op, diagnostics = estimate_covariance(train, stats, cov_cfg, config.seed)
    if cov_cfg.kind == "rie" and cov_cfg.eta is None:
        # freeze the selected penalty so CV folds reuse it
        cov_cfg = replace(cov_cfg, eta=diagnostics["penalty"])
    B = coefficient_matrix(op, stats.means)
    common = dict(means=stats.means, log_priors=stats.log_priors, variant=config.variant,
                  diagnostics=diagnostics, class_names=train.class_names,
                  feature_names=train.feature_names)

    if config.variant == "scrda":
        delta = config.delta
        if delta is None:
            delta = cross_validate_delta(train, cov_cfg, folds=config.folds,
                                         seed=config.seed, priors=config.priors).delta
        sparse = soft_threshold(B, delta)
        rows = np.flatnonzero(np.any(sparse != 0, axis=1))
        return CrdaModel(coefficients=sparse, selected_rows=rows, delta=float(delta),
                         **common)

    if config.variant == "crda3" and config.selector is None and config.K is None:
        selector = Selector.LINF
        K = k_upper_bound(B, [Selector.LINF])
    elif config.selector is not None and config.K is not None:
        selector, K = Selector.parse(config.selector), int(config.K)
    else:
        cfg = config.cv_config()
        if config.selector is not None:
            cfg = replace(cfg, selectors=(Selector.parse(config.selector),))
        report = cross_validate(train, cov_cfg, cfg, config.priors)
        selector, K = report.selector, report.k
        if config.K is not None:
            K = int(config.K)
        log.debug("CV chose selector=%s K=%d (K_UB=%d)", selector.value, K, report.k_upper)

    coef = hard_threshold_rows(B, K, selector)
    return CrdaModel(coefficients=coef.sparse, selected_rows=coef.selected_rows,
                     selector=selector, K=K, **common)
