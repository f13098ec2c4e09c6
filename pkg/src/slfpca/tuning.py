"""Tuning-parameter selection: GCV for the mean penalty, BIC for (kappa_theta, lambda)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bspline import BSplineBasis
from .dataset import BinaryFunctionalDataset, DesignCache, build_design
from .errors import InvalidArgumentError, NumericalSingularityError, SlfpcaError
from .model import FitConfig, FitReport, SlfpcaModel
from .penalty import PenaltyConfig
from .solver import degrees_of_freedom, fit, log_logistic, working_response

logger = logging.getLogger(__name__)


def _default_kappas():
    return [float(x) for x in np.logspace(-8, -1, 8)]


def _default_lambdas():
    return [0.0] + [float(x) for x in np.logspace(math.log10(0.01), math.log10(0.3), 6)]


@dataclass(frozen=True)
class TuningGrid:
    kappa_mu_candidates: tuple = field(default_factory=lambda: tuple(_default_kappas()))
    kappa_theta_candidates: tuple = field(default_factory=lambda: tuple(_default_kappas()))
    lambda_candidates: tuple = field(default_factory=lambda: tuple(_default_lambdas()))

    def __post_init__(self):
        for name in ("kappa_mu_candidates", "kappa_theta_candidates", "lambda_candidates"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise InvalidArgumentError(f"{name} must not be empty")
            if any(v < 0 or not np.isfinite(v) for v in vals):
                raise InvalidArgumentError(f"{name} must be non-negative")
            object.__setattr__(self, name, vals)
        if 0.0 not in self.lambda_candidates:
            raise InvalidArgumentError("lambda_candidates must include 0")

    def cells(self):
        return [(kt, lam) for kt in self.kappa_theta_candidates for lam in self.lambda_candidates]


def gcv_kappa_mu(design: DesignCache, ztilde: np.ndarray, V: np.ndarray, candidates):
    """Pick the mean roughness weight minimizing generalized cross-validation.

    Returns the best candidate and the GCV score of every candidate (``inf``
    where the system is singular).
    """
    B = design.B
    N = B.shape[0]
    BtB = B.T @ B
    Btz = B.T @ ztilde
    scores = []
    for kappa in candidates:
        A = BtB + N * kappa * V
        try:
            c = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            scores.append(math.inf)
            continue
        if np.min(np.abs(np.diag(c))) ** 2 < 1e-13 * np.max(np.abs(np.diag(c))) ** 2:
            scores.append(math.inf)
            continue
        coef = np.linalg.solve(A, Btz)
        trace = float(np.trace(np.linalg.solve(A, BtB)))
        rss = float(np.sum((ztilde - B @ coef) ** 2))
        scores.append((rss / N) / (1.0 - trace / N) ** 2)
    scores = np.asarray(scores)
    if not np.isfinite(scores).any():
        raise NumericalSingularityError("every kappa_mu candidate gives a singular system")
    return float(candidates[int(np.argmin(scores))]), scores


def bic_score(data: BinaryFunctionalDataset, model: SlfpcaModel, kappa_theta: float,
              design: DesignCache | None = None):
    """BIC-type criterion ``-2 loglik + sum(df_k) log N`` and the per-component df."""
    if design is None:
        design = build_design(data, model.basis)
    X = model.linear_predictor(design)
    loglik = float(np.sum(log_logistic(data.q * X)))
    V = model.basis.penalty_matrix
    df = np.array([degrees_of_freedom(design, model.theta[k], model.scores[:, k],
                                      kappa_theta, V) for k in range(model.p)])
    return -2.0 * loglik + df.sum() * math.log(design.N), df


@dataclass
class TuningResult:
    best: PenaltyConfig
    table: list
    best_model: SlfpcaModel | None = None
    best_report: FitReport | None = None
    gcv_scores: np.ndarray | None = None

    def best_row(self) -> dict:
        return min(self.table, key=_rank_key)


def _rank_key(row):
    # smallest BIC, ties toward larger lambda then larger kappa_theta
    return (row["bic"], -row["lambda"], -row["kappa_theta"])


def select_kappa_mu(data, basis, init: SlfpcaModel, candidates, design=None) -> tuple[float, np.ndarray]:
    """GCV choice of ``kappa_mu`` on the first surrogate of ``init``."""
    if design is None:
        design = build_design(data, basis)
    z = working_response(init.linear_predictor(design), data.q)
    ztilde = z - np.sum((design.B @ init.theta.T) * init.scores[design.subject_index], axis=1)
    return gcv_kappa_mu(design, ztilde, basis.penalty_matrix, list(candidates))


def select_tuning(data: BinaryFunctionalDataset, basis: BSplineBasis, grid: TuningGrid,
                  config: FitConfig, init: SlfpcaModel, design: DesignCache | None = None,
                  keep_best: bool = True) -> TuningResult:
    """Fit every ``(kappa_theta, lambda)`` cell from the same start and rank by BIC."""
    if design is None:
        design = build_design(data, basis)
    kappa_mu, gcv = select_kappa_mu(data, basis, init, grid.kappa_mu_candidates, design)
    a = config.penalties.a
    table = []
    best = None
    for kt, lam in grid.cells():
        pen = PenaltyConfig(kappa_mu, kt, lam, a)
        row = {"kappa_theta": kt, "lambda": lam, "bic": math.inf, "df_total": math.nan,
               "converged": False}
        try:
            model, report = fit(data, basis, replace(config, penalties=pen), init, design)
            bic, df = bic_score(data, model, kt, design)
            row.update(bic=bic, df_total=float(df.sum()), converged=report.converged)
            if keep_best and (best is None or _rank_key(row) < _rank_key(best[0])):
                best = (row, model, report)
        except SlfpcaError as exc:
            logger.warning("tuning cell kappa_theta=%g lambda=%g failed: %s", kt, lam, exc)
        table.append(row)
    best_row = min(table, key=_rank_key)
    result = TuningResult(PenaltyConfig(kappa_mu, best_row["kappa_theta"], best_row["lambda"], a),
                          table, gcv_scores=gcv)
    if best is not None:
        result.best_model, result.best_report = best[1], best[2]
    return result
