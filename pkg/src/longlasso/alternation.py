"""Outer alternating loop: inner solves interleaved with correlation updates.

Round zero fixes R = I and phi = 1.  After each inner solve the Pearson
residuals are recomputed, phi and alpha re-estimated, and the working
correlation rebuilt; the loop stops once both the alpha change and the
relative coefficient change fall below threshold.  The correlation is
never touched inside inner iterations, which keeps each inner problem a
fixed-alpha convex program.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import fista
from .correlation import (
    WorkingCorrelation,
    estimate_alpha,
    estimate_phi,
    make_working,
    pearson_residuals,
)
from .dataset import LaggedDesign
from .errors import DataError
from .families import Family, get_family
from .penalty import CoefficientPair, row_norms

FIT_RESULT_SCHEMA = "longlasso.fit_result.v1"


@dataclass(frozen=True)
class FitConfig:
    """Settings for the alternating fit."""

    max_outer: int = 25
    alpha_tolerance: float = 1e-4
    coef_tolerance: float = 1e-4
    inner_max_iterations: int = 2000
    inner_tolerance: float = 1e-6
    step_mode: str = "backtracking"

    def __post_init__(self):
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.alpha_tolerance <= 0.0 or self.coef_tolerance <= 0.0:
            raise ValueError("convergence tolerances must be positive")

    def inner(self, lam1: float, lam2: float) -> fista.InnerConfig:
        return fista.InnerConfig(
            lam1=lam1,
            lam2=lam2,
            max_iterations=self.inner_max_iterations,
            tolerance=self.inner_tolerance,
            step_mode=self.step_mode,
        )


@dataclass(frozen=True)
class FitResult:
    """Fitted coefficients plus the correlation estimate and run metadata."""

    coefficients: CoefficientPair
    working: WorkingCorrelation
    family: str
    structure: str
    tau: int
    include_lagged_outcome: bool
    feature_names: tuple[str, ...]
    outer_iterations: int
    trace: tuple[float, ...]
    inner_traces: tuple[np.ndarray, ...]
    inner_step_traces: tuple[np.ndarray, ...]
    converged: bool
    max_outer_reached: bool
    config: dict
    seed: int | None = None

    @property
    def W(self) -> np.ndarray:
        return self.coefficients.W


def _moment_update(design, family, structure, W, current_phi_only=False):
    """Pearson residuals -> phi -> alpha, using variance-function scaling.

    Residuals for the moment step are standardized by the variance
    function alone (phi = 1 in the covariance diagonal); this makes the
    phi estimator idempotent and alpha scale-free.
    """
    eta = fista.linear_predictor(design, W)
    mu = family.mean(eta)
    sigma_diag = family.variance(mu)
    gamma = pearson_residuals(design.y, mu, sigma_diag)
    phi = estimate_phi(gamma, design.n_params)
    if current_phi_only:
        return phi, 0.0
    alpha = estimate_alpha(gamma, structure, design.n_params, phi)
    return phi, alpha


def fit(
    design: LaggedDesign,
    family: str | Family = "gaussian",
    structure: str = "independent",
    lam1: float = 0.0,
    lam2: float = 0.0,
    config: FitConfig | None = None,
    seed: int | None = None,
) -> FitResult:
    """Alternating fit of the decomposed coefficients and the correlation.

    The independent structure runs exactly one correlation pass (phi
    only).  Hitting the outer-round cap is flagged on the result, not an
    error.
    """
    if isinstance(family, str):
        family = get_family(family)
    config = config or FitConfig()
    if design.n_examples <= design.n_params:
        raise DataError("not enough examples to estimate the scale parameter")

    working = make_working(structure, 0.0, 1.0, design.n)
    trace: list[float] = []
    inner_traces: list[np.ndarray] = []
    inner_step_traces: list[np.ndarray] = []
    U = np.zeros(design.coef_shape)
    V = np.zeros(design.coef_shape)
    converged = False
    rounds = 0

    for outer in range(config.max_outer):
        # The loss carries the phi scaling through Sigma^{-1}, so the
        # penalties are scaled along with it: each round then solves the
        # same unit-dispersion problem and the fit cannot drift with the
        # phi estimate (a fixed penalty against a phi-scaled loss feeds
        # back on itself and can collapse the coefficients).
        inner_cfg = config.inner(lam1 * working.phi, lam2 * working.phi)
        # Warm-start later rounds at the previous iterate: the inner
        # problem changes only through alpha, so restarting from zero
        # wastes iterations and an underconverged refit would bias the
        # next moment update.
        start = None if outer == 0 else (U, V)
        result = fista.inner_solve(design, family, working, inner_cfg, start=start)
        rounds += 1
        coef_change = max(
            float(np.linalg.norm(result.U - U)), float(np.linalg.norm(result.V - V))
        ) / (1.0 + float(np.linalg.norm(result.U)) + float(np.linalg.norm(result.V)))
        U, V = result.U, result.V
        trace.append(float(result.objective_trace[-1]) if result.objective_trace.size else 0.0)
        inner_traces.append(result.objective_trace)
        inner_step_traces.append(result.step_trace)

        if structure == "independent":
            if outer == 0:
                phi, _ = _moment_update(design, family, structure, U + V, current_phi_only=True)
                working = make_working(structure, 0.0, phi, design.n)
                continue
            converged = True
            break

        phi, alpha = _moment_update(design, family, structure, U + V)
        alpha_change = abs(alpha - working.alpha)
        working = make_working(structure, alpha, phi, design.n)
        if outer > 0 and alpha_change < config.alpha_tolerance and coef_change < config.coef_tolerance:
            converged = True
            break

    max_outer_reached = not converged and rounds >= config.max_outer
    return FitResult(
        coefficients=CoefficientPair(U=U, V=V, lam1=lam1, lam2=lam2),
        working=working,
        family=family.kind,
        structure=structure,
        tau=design.tau,
        include_lagged_outcome=design.include_lagged_outcome,
        feature_names=design.feature_names,
        outer_iterations=rounds,
        trace=tuple(trace),
        inner_traces=tuple(inner_traces),
        inner_step_traces=tuple(inner_step_traces),
        converged=converged,
        max_outer_reached=max_outer_reached,
        config=asdict(config),
        seed=seed,
    )


def predict(result: FitResult, design: LaggedDesign) -> np.ndarray:
    """Mean-scale predictions, one (m, n) matrix aligned with the design.

    Bernoulli returns probabilities; class decisions are the caller's.
    """
    if design.coef_shape != result.coefficients.U.shape:
        raise ValueError(
            f"design shape {design.coef_shape} does not match coefficients "
            f"{result.coefficients.U.shape}"
        )
    family = get_family(result.family)
    eta = fista.linear_predictor(design, result.W)
    return family.mean(eta)


def selected_support(result: FitResult, rel_tol: float = 0.0):
    """Indices of selected feature rows of U and lag columns of V.

    A group is selected iff its l2 norm exceeds ``rel_tol`` times the
    largest group norm of its matrix; exact zeros are never selected.
    Lag k lives in column k (0-based).
    """
    if not 0.0 <= rel_tol < 1.0:
        raise ValueError("rel_tol must lie in [0, 1)")
    u_norms = row_norms(result.coefficients.U)
    v_norms = row_norms(result.coefficients.V.T)
    features = _select(u_norms, rel_tol)
    lags = _select(v_norms, rel_tol)
    return features, lags


def _select(norms: np.ndarray, rel_tol: float) -> tuple[int, ...]:
    peak = float(norms.max()) if norms.size else 0.0
    if peak == 0.0:
        return ()
    return tuple(int(i) for i in np.nonzero(norms > rel_tol * peak)[0])


def to_json_dict(result: FitResult) -> dict:
    """JSON-ready view: shapes, row-major arrays, correlation and trace."""
    U = result.coefficients.U
    return {
        "schema": FIT_RESULT_SCHEMA,
        "family": result.family,
        "structure": result.structure,
        "tau": result.tau,
        "include_lagged_outcome": result.include_lagged_outcome,
        "lambda1": result.coefficients.lam1,
        "lambda2": result.coefficients.lam2,
        "shape": list(U.shape),
        "U": [[float(v) for v in row] for row in U],
        "V": [[float(v) for v in row] for row in result.coefficients.V],
        "alpha": result.working.alpha,
        "phi": result.working.phi,
        "feature_names": list(result.feature_names),
        "outer_iterations": result.outer_iterations,
        "converged": result.converged,
        "max_outer_reached": result.max_outer_reached,
        "trace": [float(v) for v in result.trace],
        "config": result.config,
        "seed": result.seed,
    }


def from_json_dict(payload: dict) -> FitResult:
    """Rebuild a FitResult from its JSON form (correlation re-realized)."""
    if payload.get("schema") != FIT_RESULT_SCHEMA:
        raise DataError(f"unexpected model schema {payload.get('schema')!r}")
    U = np.asarray(payload["U"], dtype=float)
    V = np.asarray(payload["V"], dtype=float)
    if list(U.shape) != list(payload["shape"]) or list(V.shape) != list(payload["shape"]):
        raise DataError("coefficient arrays disagree with the recorded shape")
    n = max(2, U.shape[1])
    working = make_working(payload["structure"], payload["alpha"], payload["phi"], n)
    return FitResult(
        coefficients=CoefficientPair(
            U=U, V=V, lam1=payload["lambda1"], lam2=payload["lambda2"]
        ),
        working=working,
        family=payload["family"],
        structure=payload["structure"],
        tau=int(payload["tau"]),
        include_lagged_outcome=bool(payload["include_lagged_outcome"]),
        feature_names=tuple(payload["feature_names"]),
        outer_iterations=int(payload["outer_iterations"]),
        trace=tuple(payload["trace"]),
        inner_traces=(),
        inner_step_traces=(),
        converged=bool(payload["converged"]),
        max_outer_reached=bool(payload["max_outer_reached"]),
        config=dict(payload["config"]),
        seed=payload.get("seed"),
    )


def dumps(result: FitResult) -> str:
    """Deterministic JSON text for a fit result."""
    return json.dumps(to_json_dict(result), sort_keys=True, indent=2) + "\n"
