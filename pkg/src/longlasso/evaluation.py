"""Prediction metrics and subject-wise k-fold cross-validation over a
(lambda1, lambda2) grid.

Folds partition subjects, never time points: time-sliced folds would leak
through overlapping lag windows.  Fold assignment is a deterministic
function of the subject order and the seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import alternation, fista
from .correlation import make_working, spd_cholesky
from .dataset import LongitudinalDataset, build_lagged
from .errors import NumericalError
from .families import get_family
from .penalty import row_norms

METRICS = ("nmse", "auc")


def nmse(predictions, actuals) -> float:
    """Mean squared error divided by the population variance of actuals."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    actuals = np.asarray(actuals, dtype=float).ravel()
    if predictions.shape != actuals.shape:
        raise ValueError("predictions and actuals must have matching lengths")
    if actuals.size < 2:
        raise ValueError("need at least two observations")
    variance = float(np.var(actuals))
    if variance <= 0.0:
        raise ValueError("zero variance in actuals")
    return float(np.mean((predictions - actuals) ** 2) / variance)


def auc(scores, labels) -> float:
    """Area under the ROC curve in the Mann-Whitney form.

    P(score+ > score-) + 0.5 * P(tie), computed exactly via midranks.
    Invariant under strictly increasing transforms of the scores.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=float).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have matching lengths")
    unique = set(np.unique(labels))
    if not unique <= {0.0, 1.0}:
        raise ValueError("labels must be binary")
    n_pos = int(np.sum(labels == 1.0))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[labels == 1.0]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def lambda_max(design, family) -> tuple[float, float]:
    """Smallest penalties that zero everything at the first prox step.

    Computed from the gradient at W = 0 under R = I, phi = 1: the largest
    row norm bounds lambda1, the largest column norm bounds lambda2.
    """
    if isinstance(family, str):
        family = get_family(family)
    working = make_working("independent", 0.0, 1.0, design.n)
    g = fista.gradient_matrix(design, family, working, np.zeros(design.coef_shape))
    lam1 = float(row_norms(g).max())
    lam2 = float(row_norms(g.T).max())
    return max(lam1, 1e-12), max(lam2, 1e-12)


def support_lambdas(
    design,
    family,
    structure: str,
    draws: int = 40,
    quantile: float = 0.9,
    row_inflation: float = 1.5,
    col_inflation: float = 2.2,
    seed: int = 0,
    pilot: alternation.FitResult | None = None,
):
    """Noise-calibrated penalties targeting support recovery.

    Prediction error cannot identify the U/V split (the loss depends on
    W = U + V only), so penalties chosen by prediction CV systematically
    under-regularize the decomposition.  This calibrator simulates pure
    noise from a pilot fit's working covariance, measures the largest
    row and column group norms of the resulting gradient pulls, and
    returns high quantiles inflated to withstand penalty cross-talk
    (each block's penalty must also absorb the pull induced by the other
    block's active groups).  Returns (lambda1, lambda2).
    """
    if isinstance(family, str):
        family = get_family(family)
    if pilot is None:
        pilot = alternation.fit(
            design,
            family,
            structure,
            0.0,
            0.0,
            config=alternation.FitConfig(
                max_outer=4, inner_max_iterations=600, inner_tolerance=1e-5
            ),
        )
    working = pilot.working
    eta = fista.linear_predictor(design, pilot.W)
    root = np.sqrt(family.variance(family.mean(eta)))
    chol = spd_cholesky(working.R, "working correlation")
    flat = design.flat_design().reshape(design.n_examples, design.n_params)
    rng = np.random.default_rng(seed)
    row_pulls = np.empty(draws)
    col_pulls = np.empty(draws)
    for b in range(draws):
        z = rng.standard_normal((design.m, design.n))
        noise = (root * (z @ chol.T)) / np.sqrt(working.phi)
        c = working.phi * root * ((noise / root) @ working.R_inv)
        g = (flat.T @ c.ravel()).reshape(design.coef_shape)
        row_pulls[b] = row_norms(g).max()
        col_pulls[b] = row_norms(g.T).max()
    return (
        row_inflation * float(np.quantile(row_pulls, quantile)),
        col_inflation * float(np.quantile(col_pulls, quantile)),
    )


def default_grids(design, family, n_points: int = 5, span: float = 1e-3):
    """Log-spaced grids from span*lambda_max up to lambda_max."""
    if n_points < 1:
        raise ValueError("n_points must be positive")
    if not 0.0 < span <= 1.0:
        raise ValueError("span must lie in (0, 1]")
    lam1_top, lam2_top = lambda_max(design, family)
    fractions = np.logspace(np.log10(span), 0.0, n_points)
    return (
        tuple(float(f * lam1_top) for f in fractions),
        tuple(float(f * lam2_top) for f in fractions),
    )


@dataclass(frozen=True)
class CvSpec:
    """Cross-validation plan.

    ``lam1_grid``/``lam2_grid`` default to the data-driven log grids.
    The per-cell fit runs a lighter solver configuration than a final
    fit: cells only need ranking, not full precision.
    """

    lam1_grid: tuple[float, ...] | None = None
    lam2_grid: tuple[float, ...] | None = None
    folds: int = 3
    metric: str = "nmse"
    seed: int = 0
    grid_points: int = 5
    grid_span: float = 1e-3
    fit_config: alternation.FitConfig = field(
        default_factory=lambda: alternation.FitConfig(
            max_outer=6, inner_max_iterations=800, inner_tolerance=1e-5
        )
    )

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.lam1_grid is not None and len(self.lam1_grid) == 0:
            raise ValueError("lam1_grid must be nonempty")
        if self.lam2_grid is not None and len(self.lam2_grid) == 0:
            raise ValueError("lam2_grid must be nonempty")


@dataclass(frozen=True)
class CvResult:
    best_lam1: float
    best_lam2: float
    lam1_grid: tuple[float, ...]
    lam2_grid: tuple[float, ...]
    table: tuple[tuple[float, float, int, float | None], ...]
    mean_scores: dict

    def report_rows(self):
        """(lambda1, lambda2, fold, score) rows; score None for failures."""
        return self.table


def fold_assignments(subject_ids, folds: int, seed: int) -> dict:
    """Deterministic subject -> fold map from the id order and the seed."""
    ids = list(subject_ids)
    if folds > len(ids):
        raise ValueError("more folds than subjects")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    return {ids[idx]: int(pos % folds) for pos, idx in enumerate(order)}


def _score_cell(train_ds, test_ds, tau, family, structure, lam1, lam2, spec, include_lagged_outcome):
    design = build_lagged(train_ds, tau, include_lagged_outcome)
    result = alternation.fit(
        design, family, structure, lam1, lam2, config=spec.fit_config
    )
    test_design = build_lagged(test_ds, tau, include_lagged_outcome)
    predictions = alternation.predict(result, test_design)
    if spec.metric == "nmse":
        return nmse(predictions.ravel(), test_design.y.ravel())
    return auc(predictions.ravel(), test_design.y.ravel())


def grid_cv(
    train: LongitudinalDataset,
    tau: int,
    family: str = "gaussian",
    structure: str = "independent",
    spec: CvSpec | None = None,
    include_lagged_outcome: bool = False,
) -> CvResult:
    """Evaluate every (lambda1, lambda2) cell with subject-wise k-fold CV.

    Each cell fits on k-1 folds and scores on the held-out fold; the best
    cell optimizes the mean metric (min nMSE or max AUC) with ties broken
    toward larger lambda1 + lambda2, i.e. sparser models.  Cells whose fit
    fails are marked invalid; if every cell is invalid an error is raised.
    """
    spec = spec or CvSpec()
    if spec.lam1_grid is None or spec.lam2_grid is None:
        full_design = build_lagged(train, tau, include_lagged_outcome)
        auto1, auto2 = default_grids(full_design, family, spec.grid_points, spec.grid_span)
        lam1_grid = spec.lam1_grid or auto1
        lam2_grid = spec.lam2_grid or auto2
    else:
        lam1_grid = tuple(spec.lam1_grid)
        lam2_grid = tuple(spec.lam2_grid)

    assignment = fold_assignments(train.subject_ids, spec.folds, spec.seed)
    fold_ids = [
        [sid for sid in train.subject_ids if assignment[sid] == f] for f in range(spec.folds)
    ]
    fold_train = [
        train.subset([sid for sid in train.subject_ids if assignment[sid] != f])
        for f in range(spec.folds)
    ]
    fold_test = [train.subset(ids) for ids in fold_ids]

    table = []
    mean_scores = {}
    for lam1 in lam1_grid:
        for lam2 in lam2_grid:
            scores = []
            for f in range(spec.folds):
                try:
                    score = _score_cell(
                        fold_train[f],
                        fold_test[f],
                        tau,
                        family,
                        structure,
                        lam1,
                        lam2,
                        spec,
                        include_lagged_outcome,
                    )
                except (NumericalError, ValueError):
                    score = None
                table.append((lam1, lam2, f, score))
                scores.append(score)
            if any(s is None for s in scores):
                mean_scores[(lam1, lam2)] = None
            else:
                mean_scores[(lam1, lam2)] = float(np.mean(scores))

    valid = {cell: s for cell, s in mean_scores.items() if s is not None}
    if not valid:
        raise NumericalError("every cross-validation cell failed to fit")
    sign = 1.0 if spec.metric == "nmse" else -1.0
    best = min(valid.items(), key=lambda item: (sign * item[1], -(item[0][0] + item[0][1])))
    return CvResult(
        best_lam1=best[0][0],
        best_lam2=best[0][1],
        lam1_grid=tuple(lam1_grid),
        lam2_grid=tuple(lam2_grid),
        table=tuple(table),
        mean_scores=mean_scores,
    )
