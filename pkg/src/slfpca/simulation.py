"""Simulated binary functional data, accuracy metrics and the Monte Carlo driver."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import simpson

from .bspline import BSplineBasis, build_basis, eval_basis
from .dataset import BinaryFunctionalDataset
from .errors import InvalidArgumentError
from .solver import logistic

logger = logging.getLogger(__name__)

DOMAIN_END = 10.0
DENSE_GRID_SIZE = 51
SPARSE_COUNTS = (8, 12)
ISE_POINTS = 2001
ZERO_TOL = 1e-10
SUPPORT_TOL = 1e-6


def generator_basis() -> BSplineBasis:
    """Cubic basis with nine equally spaced interior knots on [0, 10]."""
    return build_basis(DOMAIN_END, 9, 3)


def true_mean(t):
    return 2.0 * np.sin(np.pi * np.asarray(t, dtype=float) / 5.0) / math.sqrt(5.0)


class _SplineFunction:
    def __init__(self, basis: BSplineBasis, coef):
        coef = np.asarray(coef, dtype=float)
        self.basis = basis
        self.coef = coef / math.sqrt(coef @ basis.mass_matrix @ coef)

    def __call__(self, t):
        return eval_basis(self.basis, t) @ self.coef


def true_eigenfunctions(case: int, basis_ref: BSplineBasis | None = None):
    """The two unit-norm eigenfunctions of simulation case 1-4."""
    basis_ref = generator_basis() if basis_ref is None else basis_ref
    e = np.eye(basis_ref.L)
    rt5 = math.sqrt(5.0)
    if case == 1:
        return _SplineFunction(basis_ref, e[3]), _SplineFunction(basis_ref, e[9])
    if case == 2:
        return _SplineFunction(basis_ref, e[6]), _SplineFunction(basis_ref, e[3] - e[9])
    if case == 3:
        return (lambda t: np.cos(np.pi * np.asarray(t, float) / 5) / rt5,
                lambda t: np.sin(np.pi * np.asarray(t, float) / 5) / rt5)
    if case == 4:
        return (lambda t: np.cos(np.pi * np.asarray(t, float) / 5) / rt5,
                lambda t: np.cos(2 * np.pi * np.asarray(t, float) / 5) / rt5)
    raise InvalidArgumentError(f"unknown simulation case {case!r}; expected 1-4")


@dataclass(frozen=True)
class SimScenario:
    case: int = 1
    n: int = 200
    design: str = "dense"
    eigenvalues: tuple = (9.0, 4.0)
    seed: int = 0

    def __post_init__(self):
        if self.case not in (1, 2, 3, 4):
            raise InvalidArgumentError(f"unknown simulation case {self.case!r}")
        if self.design not in ("dense", "sparse"):
            raise InvalidArgumentError(f"design must be 'dense' or 'sparse', got {self.design!r}")
        if self.n < 1:
            raise InvalidArgumentError("n must be positive")
        if len(self.eigenvalues) != 2 or min(self.eigenvalues) < 0:
            raise InvalidArgumentError("need two non-negative eigenvalues")


@dataclass
class Truth:
    case: int
    mean: object
    eigenfunctions: tuple
    scores: np.ndarray
    eigenvalues: tuple
    T: float = DOMAIN_END


def generate(scenario: SimScenario) -> tuple[BinaryFunctionalDataset, Truth]:
    """Draw latent Gaussian scores and Bernoulli outcomes for ``scenario``."""
    rng = np.random.default_rng(scenario.seed)
    phis = true_eigenfunctions(scenario.case)
    sd = np.sqrt(np.asarray(scenario.eigenvalues, dtype=float))
    xi = rng.standard_normal((scenario.n, 2)) * sd
    if scenario.design == "dense":
        grid = np.linspace(0.0, DOMAIN_END, DENSE_GRID_SIZE)
        times = [grid] * scenario.n
    else:
        lo, hi = SPARSE_COUNTS
        m = rng.integers(lo, hi + 1, size=scenario.n)
        times = [np.sort(rng.uniform(0.0, DOMAIN_END, size=mi)) for mi in m]
    subjects = []
    for i, t in enumerate(times):
        X = true_mean(t) + xi[i, 0] * phis[0](t) + xi[i, 1] * phis[1](t)
        y = (rng.uniform(size=t.size) < logistic(X)).astype(np.int8)
        subjects.append((t, y))
    data = BinaryFunctionalDataset.from_subjects(subjects, DOMAIN_END)
    truth = Truth(scenario.case, true_mean, phis, xi, tuple(scenario.eigenvalues))
    return data, truth


def _grid(T, points=ISE_POINTS):
    return np.linspace(0.0, T, points)


def ise(estimate, truth, sign_align: bool = False, T: float = DOMAIN_END) -> float:
    """Integrated squared error on [0, T] by composite Simpson's rule."""
    t = _grid(T)
    f, g = np.asarray(estimate(t), float), np.asarray(truth(t), float)
    err = simpson((g - f) ** 2, x=t)
    if sign_align:
        err = min(err, simpson((g + f) ** 2, x=t))
    return float(err)


def support_metrics(estimate, truth, grid_size: int = 1001, T: float = DOMAIN_END):
    """Fractions of the true zero / non-zero region recovered by ``estimate``."""
    if grid_size < 100:
        raise InvalidArgumentError("grid_size must be at least 100")
    t = np.linspace(0.0, T, grid_size)
    f, g = np.asarray(estimate(t), float), np.asarray(truth(t), float)
    if simpson((g + f) ** 2, x=t) < simpson((g - f) ** 2, x=t):
        f = -f
    zero = np.abs(g) < ZERO_TOL
    est_zero = np.abs(f) < SUPPORT_TOL
    zero_acc = float(np.mean(est_zero[zero])) if zero.any() else 1.0
    nonzero_acc = float(np.mean(~est_zero[~zero])) if (~zero).any() else 1.0
    return zero_acc, nonzero_acc


def match_components(estimates, truths, T: float = DOMAIN_END):
    """Order the estimated functions to maximize total |inner product| with the truths."""
    t = _grid(T)
    E = np.stack([np.asarray(f(t), float) for f in estimates])
    Tr = np.stack([np.asarray(g(t), float) for g in truths])
    ip = np.abs(simpson(Tr[:, None, :] * E[None, :, :], x=t, axis=-1))
    best = max(itertools.permutations(range(len(estimates)), len(truths)),
               key=lambda perm: sum(ip[k, j] for k, j in enumerate(perm)))
    return [estimates[j] for j in best]


RUN_COLUMNS = ("run", "ise_mu", "ise_1", "ise_2", "zero_acc_1", "zero_acc_2",
               "lambda_selected", "kappa_theta_selected", "converged")


@dataclass
class MonteCarloResult:
    rows: list
    failures: int = 0

    def summary(self) -> dict:
        """Mean and standard deviation of every numeric column over successful runs."""
        out = {}
        for col in RUN_COLUMNS[1:]:
            vals = np.array([float(r[col]) for r in self.rows], dtype=float)
            if vals.size:
                out[col] = (float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0)
            else:
                out[col] = (math.nan, math.nan)
        return out


def evaluate_fit(model, truth: Truth) -> dict:
    """Sign-aligned, component-matched accuracy of a fitted model against the truth."""
    T = model.basis.T
    ests = [(lambda t, k=k: model.eigenfunctions(t)[:, k]) for k in range(model.p)]
    if len(ests) >= len(truth.eigenfunctions):
        ests = match_components(ests, truth.eigenfunctions, T)
    row = {"ise_mu": ise(model.mean_function, truth.mean, T=T)}
    for k, (est, g) in enumerate(zip(ests, truth.eigenfunctions), start=1):
        row[f"ise_{k}"] = ise(est, g, sign_align=True, T=T)
        row[f"zero_acc_{k}"], row[f"nonzero_acc_{k}"] = support_metrics(est, g, T=T)
    return row


def run_once(scenario: SimScenario, config, grid, basis: BSplineBasis | None = None) -> dict:
    """Generate, initialize, tune by BIC and score a single replicate."""
    from .dataset import build_design
    from .initial import init_from_naive_fpca
    from .tuning import select_tuning

    basis = generator_basis() if basis is None else basis
    data, truth = generate(scenario)
    design = build_design(data, basis)
    init = init_from_naive_fpca(data, basis, config.num_fpcs, seed=scenario.seed)
    result = select_tuning(data, basis, grid, config, init, design)
    if result.best_model is None:
        raise RuntimeError("every tuning cell failed")
    row = evaluate_fit(result.best_model, truth)
    row.update(lambda_selected=result.best.lam, kappa_theta_selected=result.best.kappa_theta,
               converged=bool(result.best_report.converged))
    return row


def monte_carlo(scenario: SimScenario, config, grid, runs: int, base_seed: int = 0,
                basis: BSplineBasis | None = None, progress=None) -> MonteCarloResult:
    """Repeat :func:`run_once` with seeds ``base_seed + r``; failed runs are counted, not raised."""
    if runs < 1:
        raise InvalidArgumentError("runs must be >= 1")
    rows, failures = [], 0
    for r in range(runs):
        sc = replace(scenario, seed=base_seed + r)
        try:
            row = run_once(sc, config, grid, basis)
        except Exception as exc:  # noqa: BLE001 - a failed replicate must not stop the study
            logger.warning("run %d failed: %s", r, exc)
            failures += 1
            continue
        row = {"run": r, **{c: row[c] for c in RUN_COLUMNS[1:]}}
        rows.append(row)
        if progress is not None:
            progress(row)
    return MonteCarloResult(rows, failures)
