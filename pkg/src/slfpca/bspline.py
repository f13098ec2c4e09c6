"""Clamped B-spline bases on [0, T] with exact Gram matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidArgumentError, OutOfDomainError


@dataclass(frozen=True, eq=False)
class BSplineBasis:
    """B-spline basis of degree ``d`` with ``K`` equally spaced interior knots.

    The full knot vector is clamped: both endpoints are repeated ``d + 1``
    times, giving ``L = K + d + 1`` basis functions on ``[0, T]``.
    """

    T: float
    K: int
    d: int
    breaks: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return self.K + self.d + 1

    @cached_property
    def knots(self) -> np.ndarray:
        """Full clamped knot vector of length ``L + d + 1``."""
        d = self.d
        return np.concatenate([np.repeat(self.breaks[0], d), self.breaks,
                               np.repeat(self.breaks[-1], d)])

    def support(self, l: int) -> tuple[float, float]:
        """Support interval of the 0-based basis function ``l``."""
        u = self.knots
        return float(u[l]), float(u[l + self.d + 1])

    def __call__(self, t, deriv_order: int = 0) -> np.ndarray:
        return eval_basis(self, t, deriv_order)

    @cached_property
    def penalty_matrix(self) -> np.ndarray:
        """Roughness matrix ``V``: Gram matrix of second derivatives."""
        return gram_matrix(self, 2)

    @cached_property
    def mass_matrix(self) -> np.ndarray:
        """``G0``: Gram matrix of the basis itself over [0, T]."""
        return gram_matrix(self, 0)

    @cached_property
    def segment_grams(self) -> np.ndarray:
        """Stack of ``K + 1`` per-subinterval Gram matrices ``V_m``."""
        b = self.breaks
        return np.stack([gram_matrix(self, 0, b[m], b[m + 1])
                         for m in range(self.K + 1)])

    def to_dict(self) -> dict:
        return {"T": self.T, "K": self.K, "d": self.d,
                "knots": [float(x) for x in self.breaks]}

    @classmethod
    def from_dict(cls, payload: dict) -> "BSplineBasis":
        basis = build_basis(payload["T"], payload["K"], payload["d"])
        knots = payload.get("knots")
        if knots is not None and not np.allclose(knots, basis.breaks,
                                                 rtol=0, atol=1e-12):
            raise InvalidArgumentError("serialized knots are not equally spaced")
        return basis


def build_basis(T: float = 10.0, K: int = 9, d: int = 3) -> BSplineBasis:
    """Build an equally spaced clamped basis on ``[0, T]``."""
    if not (np.isfinite(T) and T > 0):
        raise InvalidArgumentError(f"domain end T must be positive, got {T}")
    if int(K) != K or K < 0:
        raise InvalidArgumentError(f"interior knot count must be >= 0, got {K}")
    if int(d) != d or d < 0:
        raise InvalidArgumentError(f"degree must be >= 0, got {d}")
    K, d = int(K), int(d)
    breaks = np.linspace(0.0, float(T), K + 2)
    breaks.setflags(write=False)
    return BSplineBasis(float(T), K, d, breaks)


def _span_index(basis: BSplineBasis, t: np.ndarray) -> np.ndarray:
    # index of the knot-vector interval [u_s, u_{s+1}) containing t; t = T is
    # folded into the last non-degenerate interval
    u = basis.knots
    s = np.searchsorted(u, t, side="right") - 1
    return np.clip(s, basis.d, basis.L - 1)


def eval_basis(basis: BSplineBasis, t, deriv_order: int = 0) -> np.ndarray:
    """Evaluate all basis functions (or a derivative) at ``t``.

    Parameters
    ----------
    basis : BSplineBasis
    t : float or array_like
        Evaluation points inside ``[0, T]``.
    deriv_order : int
        0, 1 or 2.

    Returns
    -------
    ndarray
        Shape ``(L,)`` for scalar ``t``, otherwise ``(len(t), L)``.
    """
    if deriv_order not in (0, 1, 2):
        raise InvalidArgumentError(f"deriv_order must be 0, 1 or 2, got {deriv_order}")
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.ndim != 1:
        raise InvalidArgumentError("t must be a scalar or a 1-d array")
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > basis.T):
        bad = t[~((t >= 0.0) & (t <= basis.T))][0]
        raise OutOfDomainError(f"t={bad} outside [0, {basis.T}]")

    u, d = basis.knots, basis.d
    span = _span_index(basis, t)
    rows = np.arange(t.size)
    nfun = len(u) - 1
    # Cox-de Boor: degree-j values over all len(u) - 1 - j functions
    B = np.zeros((t.size, nfun))
    B[rows, span] = 1.0
    levels = [B]
    for j in range(1, d + 1):
        n_j = nfun - j
        left = u[:n_j]
        den1 = u[j:j + n_j] - u[:n_j]
        den2 = u[j + 1:j + 1 + n_j] - u[1:1 + n_j]
        w1 = np.divide(t[:, None] - left, den1, out=np.zeros((t.size, n_j)),
                       where=den1 > 0)
        w2 = np.divide(u[j + 1:j + 1 + n_j] - t[:, None], den2,
                       out=np.zeros((t.size, n_j)), where=den2 > 0)
        prev = levels[-1]
        levels.append(w1 * prev[:, :n_j] + w2 * prev[:, 1:n_j + 1])

    if deriv_order > d:
        out = np.zeros((t.size, basis.L))
    else:
        out = levels[d - deriv_order]
        # differentiate: N'_{i,p} = p [N_{i,p-1}/(u_{i+p}-u_i) - N_{i+1,p-1}/(u_{i+p+1}-u_{i+1})]
        for p in range(d - deriv_order + 1, d + 1):
            n_p = nfun - p
            den1 = u[p:p + n_p] - u[:n_p]
            den2 = u[p + 1:p + 1 + n_p] - u[1:1 + n_p]
            c1 = np.divide(p, den1, out=np.zeros(n_p), where=den1 > 0)
            c2 = np.divide(p, den2, out=np.zeros(n_p), where=den2 > 0)
            out = c1 * out[:, :n_p] - c2 * out[:, 1:n_p + 1]
    return out[0] if scalar else out


def gauss_nodes(d: int) -> int:
    """Gauss-Legendre node count used per subinterval for degree ``d``."""
    return math.ceil((2 * d + 1) / 2) + 1


def gram_matrix(basis: BSplineBasis, deriv_order: int = 0,
                lower: float = 0.0, upper: float | None = None) -> np.ndarray:
    """Exact ``int_lower^upper B^(r)(t) B^(r)(t)^T dt`` by piecewise Gauss-Legendre."""
    if upper is None:
        upper = basis.T
    if deriv_order not in (0, 2):
        raise InvalidArgumentError(f"deriv_order must be 0 or 2, got {deriv_order}")
    if not (0.0 <= lower < upper <= basis.T):
        raise InvalidArgumentError(
            f"need 0 <= lower < upper <= T, got [{lower}, {upper}]")
    b = basis.breaks
    cuts = np.concatenate([[lower], b[(b > lower) & (b < upper)], [upper]])
    x, w = np.polynomial.legendre.leggauss(gauss_nodes(basis.d))
    half = 0.5 * np.diff(cuts)
    mid = 0.5 * (cuts[1:] + cuts[:-1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    Bv = eval_basis(basis, pts, deriv_order)
    G = (Bv * wts[:, None]).T @ Bv
    return 0.5 * (G + G.T)
