"""Starting values for the MM algorithm."""

from __future__ import annotations

import warnings

import numpy as np

from .bspline import BSplineBasis, eval_basis
from .dataset import BinaryFunctionalDataset, build_design
from .errors import InvalidArgumentError
from .model import SlfpcaModel

GRID_SIZE = 51
EIGEN_FLOOR = 1e-4
_RIDGE_CANDIDATES = np.logspace(-8, 0, 17)


def _g0_normalize(theta: np.ndarray, G0: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ki,ij,kj->k", theta, G0, theta))
    norms[norms == 0] = 1.0
    return theta / norms[:, None]


def init_random(basis: BSplineBasis, n: int, p: int, seed: int = 0) -> SlfpcaModel:
    """Zero mean, standard-normal coefficient rows (unit norm) and scores."""
    if p < 1 or n < 1:
        raise InvalidArgumentError("need n >= 1 and p >= 1")
    rng = np.random.default_rng(seed)
    theta = _g0_normalize(rng.standard_normal((p, basis.L)), basis.mass_matrix)
    scores = rng.standard_normal((n, p))
    return SlfpcaModel(np.zeros(basis.L), theta, scores, basis, normalized=True)


def _smooth_mean(B, y, V, N):
    # ridge-penalized spline regression with the ridge weight picked by GCV
    from .tuning import gcv_kappa_mu
    from .dataset import DesignCache
    design = DesignCache(B, np.zeros(len(y), dtype=np.intp), 1)
    kappa, _ = gcv_kappa_mu(design, y, V, _RIDGE_CANDIDATES)
    return np.linalg.solve(B.T @ B + N * kappa * V, B.T @ y)


def pooled_covariance(data: BinaryFunctionalDataset, resid: np.ndarray, grid: np.ndarray,
                      exclude_diagonal: bool) -> np.ndarray:
    """Average within-subject residual products onto ``grid x grid``.

    Each product lands in the nearest grid cell; cell means are then averaged
    over the 3 x 3 neighbourhood (one grid cell of bandwidth).
    """
    G = grid.size
    h = grid[1] - grid[0]
    cell = np.clip(np.rint((data.times - grid[0]) / h).astype(int), 0, G - 1)
    sums = np.zeros((G, G))
    cnts = np.zeros((G, G))
    starts = np.concatenate([[0], np.cumsum(data.counts)])
    for i in range(data.n):
        sl = slice(starts[i], starts[i + 1])
        c, r = cell[sl], resid[sl]
        prod = np.outer(r, r)
        ii, jj = np.meshgrid(c, c, indexing="ij")
        keep = np.ones_like(prod, dtype=bool)
        if exclude_diagonal:
            np.fill_diagonal(keep, False)
        np.add.at(sums, (ii[keep], jj[keep]), prod[keep])
        np.add.at(cnts, (ii[keep], jj[keep]), 1.0)
    pad_s = np.pad(sums, 1)
    pad_c = np.pad(cnts, 1)
    box_s = sum(pad_s[1 + a:1 + a + G, 1 + b:1 + b + G] for a in (-1, 0, 1) for b in (-1, 0, 1))
    box_c = sum(pad_c[1 + a:1 + a + G, 1 + b:1 + b + G] for a in (-1, 0, 1) for b in (-1, 0, 1))
    cov = np.divide(box_s, box_c, out=np.zeros_like(box_s), where=box_c > 0)
    return 0.5 * (cov + cov.T)


def init_from_naive_fpca(data: BinaryFunctionalDataset, basis: BSplineBasis, p: int,
                         seed: int = 0, exclude_diagonal: bool | None = None) -> SlfpcaModel:
    """FPCA of the signed outcomes ``q`` ignoring that they are binary.

    The mean is a GCV-tuned penalized spline fit of ``q`` on ``t``; the
    eigenfunctions come from the grid-pooled residual covariance, projected onto
    the basis. Scores are drawn from ``N(0, eigenvalue)``. ``exclude_diagonal``
    defaults to True unless all subjects share one observation grid.
    """
    if p < 1:
        raise InvalidArgumentError("p must be >= 1")
    if data.N < basis.L:
        raise InvalidArgumentError(f"need at least L={basis.L} observations, got {data.N}")
    rng = np.random.default_rng(seed)
    design = build_design(data, basis)
    q = data.q
    V, G0 = basis.penalty_matrix, basis.mass_matrix
    mu = _smooth_mean(design.B, q, V, data.N)
    resid = q - design.B @ mu

    if exclude_diagonal is None:
        exclude_diagonal = not data.is_common_grid()
    grid = np.linspace(0.0, basis.T, GRID_SIZE)
    h = grid[1] - grid[0]
    cov = pooled_covariance(data, resid, grid, exclude_diagonal)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order] * h
    evecs = evecs[:, order] / np.sqrt(h)

    n_pos = int(np.sum(evals > EIGEN_FLOOR))
    if p > max(n_pos, 1):
        warnings.warn(f"only {n_pos} positive eigenvalues for p={p}; "
                      "remaining components start from floored variances", RuntimeWarning)
    Bg = eval_basis(basis, grid)
    coef, *_ = np.linalg.lstsq(Bg, evecs[:, :p], rcond=None)
    theta = coef.T
    zero = np.einsum("ki,ij,kj->k", theta, G0, theta) <= 1e-20
    if zero.any():
        theta[zero] = rng.standard_normal((int(zero.sum()), basis.L))
    theta = _g0_normalize(theta, G0)
    var = np.maximum(evals[:p], EIGEN_FLOOR)
    scores = rng.standard_normal((data.n, p)) * np.sqrt(var)
    model = SlfpcaModel(mu, theta, scores, basis, normalized=True)
    model.n_positive_eigenvalues = n_pos
    return model
