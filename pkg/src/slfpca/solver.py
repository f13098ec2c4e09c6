"""Majorization-minimization fit of the penalized Bernoulli likelihood.

Each outer iteration replaces ``-log pi(q X)`` by the quadratic majorizer
``(X - z)^2 / 8`` around the current linear predictor, then updates the mean
coefficients, and for every component alternates closed-form score updates
with a local-quadratic-approximation sub-iteration for the eigenfunction
coefficients. Components are normalized to unit L2 norm at the end.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg
from scipy.special import expit

from .bspline import BSplineBasis
from .dataset import BinaryFunctionalDataset, DesignCache, build_design
from .errors import InvalidArgumentError, NumericalSingularityError
from .model import FitConfig, FitReport, SlfpcaModel
from .penalty import PenaltyConfig, fscad_penalty_value, lqa_weight_matrix

logger = logging.getLogger(__name__)

# score denominators below this mean the component is invisible to a subject
SCORE_EPS = 1e-10
_MAX_COND = 1e16


def logistic(v):
    """``e^v / (1 + e^v)`` without overflow."""
    return expit(v)


def log_logistic(v):
    return -np.logaddexp(0.0, -np.asarray(v, dtype=float))


def working_response(X0, q):
    """Center of the quadratic majorizer: ``X0 + 4 q (1 - pi(q X0))``."""
    X0 = np.asarray(X0, dtype=float)
    return X0 + 4.0 * q * (1.0 - expit(q * X0))


def _spd_solve(A: np.ndarray, b: np.ndarray, advice: str) -> np.ndarray:
    try:
        c, lower = scipy.linalg.cho_factor(A, check_finite=True)
    except (np.linalg.LinAlgError, ValueError):
        raise NumericalSingularityError(f"system is not positive definite; {advice}") from None
    diag = np.abs(np.diag(c))
    if diag.min() <= diag.max() * _MAX_COND ** -0.5:
        raise NumericalSingularityError(f"system is numerically singular; {advice}")
    return scipy.linalg.cho_solve((c, lower), b)


def update_mean(design: DesignCache, ztilde: np.ndarray, kappa_mu: float,
                V: np.ndarray) -> np.ndarray:
    """Penalized least squares ``(B'B + N kappa V)^{-1} B' z``."""
    B = design.B
    A = B.T @ B + design.N * kappa_mu * V
    return _spd_solve(A, B.T @ ztilde, "use kappa_mu > 0")


def update_score(zbar_i: np.ndarray, rows_i: np.ndarray, theta_k: np.ndarray) -> float:
    """Least-squares score of one subject on one component."""
    f = np.asarray(rows_i) @ theta_k
    den = float(f @ f)
    if den < SCORE_EPS:
        return 0.0
    return float(f @ zbar_i) / den


def update_scores(design: DesignCache, zbar: np.ndarray, theta_k: np.ndarray,
                  center: bool = False) -> np.ndarray:
    """:func:`update_score` for all subjects at once.

    With ``center`` the scores minimize the same criterion subject to summing
    to zero: ``xi_i = (num_i - nu) / den_i`` with the multiplier ``nu`` fixed by
    the constraint.
    """
    f = design.B @ theta_k
    num = design.subject_sum(f * zbar)
    den = design.subject_sum(f * f)
    ok = den >= SCORE_EPS
    out = np.zeros(design.n)
    if not ok.any():
        return out
    nu = 0.0
    if center:
        nu = np.sum(num[ok] / den[ok]) / np.sum(1.0 / den[ok])
    out[ok] = (num[ok] - nu) / den[ok]
    return out


def update_theta_subiter(zbar, scores_k, design: DesignCache, kappa_theta: float,
                         lam: float, a: float, basis: BSplineBasis, theta_init,
                         max_sub_iter: int = 50, tol_sub: float = 1e-5,
                         shrink_threshold: float = 1e-3, zero_boundary: bool = True,
                         fixed_zero=None, return_info: bool = False):
    """Eigenfunction coefficients for fixed scores.

    Repeatedly solves ``(U'U + N kappa V + N W) theta = U' zbar`` on the active
    coefficient set, refreshing ``W`` from the latest iterate. Coefficients whose
    magnitude falls below ``shrink_threshold`` times the current function norm
    are fixed at zero for the rest of the call, as are entries flagged in
    ``fixed_zero`` and the two boundary
    coefficients when ``zero_boundary`` is set. With ``lam == 0`` there is no
    ``W``: a single unrestricted solve is exact and neither rule applies.
    """
    N, L = design.N, basis.L
    theta = np.array(theta_init, dtype=float)
    if theta.shape != (L,):
        raise InvalidArgumentError(f"theta_init has shape {theta.shape}, expected ({L},)")
    w = np.asarray(scores_k, dtype=float)[design.subject_index]
    U = design.B * w[:, None]
    UtU = U.T @ U
    Utz = U.T @ zbar
    base = UtU + N * kappa_theta * basis.penalty_matrix
    G0 = basis.mass_matrix

    active = np.ones(L, dtype=bool)
    if fixed_zero is not None and lam > 0:
        active &= ~np.asarray(fixed_zero, dtype=bool)
        theta[~active] = 0.0
    if zero_boundary and lam > 0:
        theta[[0, -1]] = 0.0
        active[[0, -1]] = False
    advice = "increase kappa_theta or shrink_threshold"

    iters = 0
    converged = lam == 0
    if lam == 0:
        theta = np.zeros(L)
        theta[active] = _spd_solve(base[np.ix_(active, active)], Utz[active], advice)
        iters = 1
    else:
        for iters in range(1, max_sub_iter + 1):
            A = base + N * lqa_weight_matrix(theta, basis, lam, a)
            new = np.zeros(L)
            if active.any():
                new[active] = _spd_solve(A[np.ix_(active, active)], Utz[active], advice)
            norm = np.sqrt(max(new @ G0 @ new, 0.0))
            small = active & (np.abs(new) < shrink_threshold * norm)
            new[small] = 0.0
            active &= ~small
            delta = np.max(np.abs(new - theta))
            theta = new
            if delta < tol_sub * max(1.0, norm) or not active.any():
                converged = True
                break
    if return_info:
        return theta, {"iterations": iters, "converged": converged, "active": active}
    return theta


def estimate_scores(design: DesignCache, q: np.ndarray, mu: np.ndarray, theta: np.ndarray,
                    max_iter: int = 200, tol: float = 1e-8, init=None) -> np.ndarray:
    """Scores of every subject with the mean and eigenfunctions held fixed.

    Runs the MM score updates alone, e.g. to score new subjects against a fitted
    model. Subjects whose outcomes are separable have no finite optimum; their
    scores keep growing slowly and are returned after ``max_iter`` sweeps.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    p = theta.shape[0]
    B, sid = design.B, design.subject_index
    F = B @ theta.T
    base = B @ mu
    xi = np.zeros((design.n, p)) if init is None else np.array(init, dtype=float)
    for _ in range(max_iter):
        old = xi.copy()
        z = working_response(base + np.sum(F * xi[sid], axis=1), q)
        for k in range(p):
            others = np.sum(F * xi[sid], axis=1) - F[:, k] * xi[sid, k]
            xi[:, k] = update_scores(design, z - base - others, theta[k])
        if np.max(np.abs(xi - old)) < tol * max(1.0, np.max(np.abs(xi))):
            break
    return xi


def degrees_of_freedom(design: DesignCache, theta_k: np.ndarray, scores_k: np.ndarray,
                       kappa_theta: float, V: np.ndarray) -> float:
    """Ridge hat-matrix trace over the non-zero coefficients of ``theta_k``."""
    A = np.flatnonzero(theta_k != 0)
    if A.size == 0:
        return 0.0
    U = design.B[:, A] * np.asarray(scores_k)[design.subject_index][:, None]
    UtU = U.T @ U
    M = UtU + design.N * kappa_theta * V[np.ix_(A, A)]
    # tr(U (U'U + N k V)^{-1} U') = tr((U'U + N k V)^{-1} U'U)
    sol = np.linalg.lstsq(M, UtU, rcond=None)[0] if np.linalg.cond(M) > _MAX_COND \
        else np.linalg.solve(M, UtU)
    return float(np.trace(sol))


def penalized_objective(design: DesignCache, q: np.ndarray, model: SlfpcaModel,
                        pen: PenaltyConfig) -> tuple[float, float]:
    """Penalized negative log-likelihood and its likelihood part.

    Roughness weights carry a factor 1/8 so that the quadratic surrogate
    minimized by :func:`fit` is exactly eight times a majorizer of this value.
    """
    basis = model.basis
    V = basis.penalty_matrix
    N = design.N
    nll = -float(np.sum(log_logistic(q * model.linear_predictor(design))))
    rough = pen.kappa_mu * model.mu @ V @ model.mu + pen.kappa_theta * float(
        np.einsum("ki,ij,kj->", model.theta, V, model.theta))
    sparse = 0.0
    if pen.lam > 0:
        sparse = sum(fscad_penalty_value(th, basis, pen.lam, pen.a) for th in model.theta)
    return float(nll + N / 8.0 * rough + N * sparse), nll


def normalize(model: SlfpcaModel) -> list[int]:
    """Scale each eigenfunction to unit L2 norm and its scores inversely.

    Returns the indices of components that are identically zero.
    """
    dead = []
    for k, c in enumerate(model.function_norms()):
        if c > 0:
            model.theta[k] /= c
            model.scores[:, k] *= c
        else:
            dead.append(k)
    model.normalized = True
    return dead


def principal_axes(model: SlfpcaModel) -> None:
    """Rotate components to orthonormal functions with uncorrelated scores.

    Eigen-decomposes the fitted low-rank covariance ``Theta' Cov(xi) Theta``
    in the ``L2`` metric; the subject curves ``xi_i' Theta`` are unchanged.
    Components come out ordered by decreasing score variance.
    """
    G0 = model.basis.mass_matrix
    gram = model.theta @ G0 @ model.theta.T
    w, Q = np.linalg.eigh(gram)
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        return
    half = (Q * np.sqrt(w)) @ Q.T
    inv_half = (Q / np.sqrt(w)) @ Q.T
    S = np.cov(model.scores, rowvar=False, bias=True).reshape(model.p, model.p)
    lam, R = np.linalg.eigh(half @ S @ half)
    R = R[:, np.argsort(lam)[::-1]]
    theta = R.T @ inv_half @ model.theta
    scores = model.scores @ half @ R
    # deterministic sign: largest-magnitude coefficient positive
    flip = np.sign(theta[np.arange(model.p), np.argmax(np.abs(theta), axis=1)])
    flip[flip == 0] = 1.0
    model.theta = theta * flip[:, None]
    model.scores = scores * flip[None, :]


def _rel_change(new, old) -> float:
    den = max(np.linalg.norm(old), 1e-12)
    return float(np.linalg.norm(new - old) / den)


def fit(data: BinaryFunctionalDataset, basis: BSplineBasis, config: FitConfig,
        init: SlfpcaModel, design: DesignCache | None = None) -> tuple[SlfpcaModel, FitReport]:
    """Run the MM algorithm from ``init``; returns a normalized model and report."""
    if design is None:
        design = build_design(data, basis)
    if init.basis.L != basis.L or init.n != data.n:
        raise InvalidArgumentError("initial model does not match the data/basis dimensions")
    if init.p != config.num_fpcs:
        raise InvalidArgumentError(
            f"initial model has {init.p} components, config asks for {config.num_fpcs}")
    pen = config.penalties
    q = data.q
    B, sid = design.B, design.subject_index
    V, G0 = basis.penalty_matrix, basis.mass_matrix
    model = init.copy()
    model.basis = basis
    model.normalized = False
    p = model.p
    report = FitReport(boundary_zeroed=config.zero_boundary and pen.lam > 0)
    fpc_converged = [False] * p

    for it in range(1, config.max_outer_iter + 1):
        old = model.copy()
        z = working_response(model.linear_predictor(design), q)
        comps = (B @ model.theta.T) * model.scores[sid]
        model.mu = update_mean(design, z - comps.sum(axis=1), pen.kappa_mu, V)
        resid = z - B @ model.mu
        for k in range(p):
            zbar = resid - (comps.sum(axis=1) - comps[:, k])
            theta_k, xi_k = model.theta[k], model.scores[:, k]
            fpc_converged[k] = False
            for _ in range(config.max_alt_iter):
                dead = (theta_k == 0) if (config.sticky_zeros and it > 1) else None
                xi_new = update_scores(design, zbar, theta_k, config.center_scores)
                theta_new = update_theta_subiter(
                    zbar, xi_new, design, pen.kappa_theta, pen.lam, pen.a, basis, theta_k,
                    config.max_sub_iter, config.tol_sub, config.shrink_threshold,
                    config.zero_boundary, dead)
                # the penalties are not scale invariant: keep phi_k at unit norm
                c = np.sqrt(max(theta_new @ G0 @ theta_new, 0.0))
                if c > 0:
                    theta_new, xi_new = theta_new / c, xi_new * c
                step = max(_rel_change(xi_new, xi_k), _rel_change(theta_new, theta_k))
                theta_k, xi_k = theta_new, xi_new
                if step < config.tol_outer:
                    fpc_converged[k] = True
                    break
            model.theta[k], model.scores[:, k] = theta_k, xi_k
            comps[:, k] = (B @ theta_k) * xi_k[sid]

        obj, nll = penalized_objective(design, q, model, pen)
        report.objective_trace.append(obj)
        # subject curves scores @ theta are invariant to rotations within the span
        change = max(_rel_change(model.mu, old.mu),
                     _rel_change(model.scores @ model.theta, old.scores @ old.theta))
        logger.debug("outer %d objective %.10g change %.3g", it, obj, change)
        report.iterations = it
        if change < config.tol_outer:
            report.converged = True
            break

    report.dead_components = normalize(model)
    if pen.lam == 0 and config.principal_axes and p > 1 and not report.dead_components:
        principal_axes(model)
    report.fpc_converged = fpc_converged
    report.objective, report.neg_loglik = penalized_objective(design, q, model, pen)
    report.df = [degrees_of_freedom(design, model.theta[k], model.scores[:, k],
                                    pen.kappa_theta, V) for k in range(p)]
    return model, report
