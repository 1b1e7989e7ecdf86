"""Sparse longitudinal generalized linear models.

Fits GLMs on lagged longitudinal designs while jointly selecting the
predictive features and the influential time lags: the coefficient matrix
is decomposed as W = U + V with a row-wise L1,2 penalty on U (feature
selection) and a column-wise one on V (lag selection), solved by an
accelerated proximal-gradient method nested inside an alternating loop
that re-estimates the within-subject working correlation.
"""

__version__ = "0.1.0"

from .alternation import FitConfig, FitResult, fit, predict, selected_support
from .correlation import (
    WorkingCorrelation,
    build_R,
    build_sigma,
    estimate_alpha,
    estimate_phi,
    make_working,
    pearson_residuals,
)
from .dataset import (
    CsvSchema,
    LaggedDesign,
    LongitudinalDataset,
    SubjectSeries,
    build_lagged,
    load_csv,
    split_temporal,
    write_csv,
)
from .errors import DataError, NumericalError
from .evaluation import (
    CvSpec,
    auc,
    default_grids,
    grid_cv,
    lambda_max,
    nmse,
    support_lambdas,
)
from .families import Family, get_family, independence_deviance
from .fista import (
    InnerConfig,
    InnerState,
    fista_step,
    gradient,
    inner_solve,
    lipschitz_upper,
)
from .penalty import (
    CoefficientPair,
    norm_12_cols,
    norm_12_rows,
    prox_col_groups,
    prox_row_groups,
)
from .simulate import SimConfig, generate_classification, generate_regression

__all__ = [
    "CoefficientPair",
    "CsvSchema",
    "CvSpec",
    "DataError",
    "Family",
    "FitConfig",
    "FitResult",
    "InnerConfig",
    "InnerState",
    "LaggedDesign",
    "LongitudinalDataset",
    "NumericalError",
    "SimConfig",
    "SubjectSeries",
    "WorkingCorrelation",
    "auc",
    "build_R",
    "build_lagged",
    "build_sigma",
    "default_grids",
    "estimate_alpha",
    "estimate_phi",
    "fista_step",
    "fit",
    "generate_classification",
    "generate_regression",
    "get_family",
    "gradient",
    "grid_cv",
    "independence_deviance",
    "inner_solve",
    "lambda_max",
    "lipschitz_upper",
    "load_csv",
    "make_working",
    "nmse",
    "norm_12_cols",
    "norm_12_rows",
    "pearson_residuals",
    "predict",
    "prox_col_groups",
    "prox_row_groups",
    "selected_support",
    "split_temporal",
    "support_lambdas",
    "write_csv",
]
