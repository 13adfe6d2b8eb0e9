"""Compressive regularized discriminant analysis (CRDA) for p >> n data."""

from .classifier import (
    SELECTOR_ORDER,
    CoefficientMatrix,
    CrdaModel,
    Selector,
    coefficient_matrix,
    discriminant_scores,
    hard_threshold_rows,
    k_upper_bound,
    predict,
    selector_scores,
    soft_threshold,
)
from .covariance import (
    CovarianceConfig,
    RiePscmEstimate,
    ShrinkageEstimate,
    alpha_hat,
    ell_rscm,
    kurtosis_kappa,
    rie_pscm,
    rie_pscm_select_eta,
    spatial_median,
    spatial_sign_covariance,
    sphericity_ell1,
    sphericity_ell2,
)
from .evaluation import (
    MetricsRecord,
    SyntheticSpec,
    evaluate_metrics,
    make_partially_synthetic,
    monte_carlo_splits,
    naive_fit,
    run_monte_carlo,
)
from .exceptions import ConvergenceError, CrdaError, FormatError
from .fitting import FitConfig, fit
from .io import load_dataset, load_model, save_dataset, save_model
from .linalg import (
    GroupStatistics,
    LabeledDataset,
    ThinSvd,
    group_center,
    pooled_scm,
    rscm_inverse_operator,
    thin_svd_via_gram,
)
from .model_selection import CvConfig, CvReport, cross_validate, k_grid, stratified_folds

__version__ = "0.1.0"
