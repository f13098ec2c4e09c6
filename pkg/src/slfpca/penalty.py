"""SCAD penalty, its derivative and the functional-SCAD quadratic weights."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .bspline import BSplineBasis
from .errors import InvalidArgumentError

# floor on theta' V_m theta before taking square roots in the LQA weights
EPS_DEN = 1e-8


@dataclass(frozen=True)
class PenaltyConfig:
    """Tuning parameters of the penalized likelihood.

    ``kappa_mu`` and ``kappa_theta`` weight the roughness penalties of the
    mean and eigenfunctions, ``lam`` sets the SCAD threshold and ``a`` its
    shape.
    """

    kappa_mu: float = 1e-4
    kappa_theta: float = 1e-4
    lam: float = 0.0
    a: float = 3.7

    def __post_init__(self):
        for name in ("kappa_mu", "kappa_theta", "lam"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidArgumentError(f"{name} must be a non-negative number, got {v}")
        if not self.a > 2:
            raise InvalidArgumentError(f"SCAD parameter a must exceed 2, got {self.a}")

    def to_dict(self) -> dict:
        return asdict(self)


def _check(v, lam, a):
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise InvalidArgumentError("SCAD argument must be non-negative")
    if lam < 0 or not a > 2:
        raise InvalidArgumentError(f"invalid SCAD parameters lam={lam}, a={a}")
    return v


def scad(v, lam: float, a: float = 3.7):
    """SCAD penalty ``p_lam(v)`` for ``v >= 0`` (vectorized)."""
    v = _check(v, lam, a)
    out = np.where(
        v <= lam, lam * v,
        np.where(v < a * lam,
                 -(v * v - 2 * a * lam * v + lam * lam) / (2 * (a - 1)),
                 (a + 1) * lam * lam / 2))
    return out[()] if out.ndim == 0 else out


def scad_deriv(v, lam: float, a: float = 3.7):
    """Derivative of :func:`scad`; left-branch value at the two kinks."""
    v = _check(v, lam, a)
    out = np.where(v <= lam, lam,
                   np.where(v <= a * lam, (a * lam - v) / (a - 1), 0.0))
    return out[()] if out.ndim == 0 else out


def segment_energies(theta: np.ndarray, basis: BSplineBasis) -> np.ndarray:
    """``theta' V_m theta`` for every knot subinterval ``m``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (basis.L,):
        raise InvalidArgumentError(
            f"coefficient vector has shape {theta.shape}, basis needs ({basis.L},)")
    Vm = basis.segment_grams
    return np.maximum(np.einsum("i,mij,j->m", theta, Vm, theta), 0.0)


def lqa_weight_matrix(theta0, basis: BSplineBasis, lam: float, a: float = 3.7,
                      segment_grams: np.ndarray | None = None) -> np.ndarray:
    """Local quadratic approximation weights ``W`` around ``theta0``.

    ``W = 1/2 sum_m p'(s_m) / r_m V_m`` with ``s_m`` the scaled segment norm of
    ``B' theta0`` and ``r_m = T/(K+1) s_m``.
    """
    Vm = basis.segment_grams if segment_grams is None else segment_grams
    if Vm.shape != (basis.K + 1, basis.L, basis.L):
        raise InvalidArgumentError("segment_grams do not match the basis")
    if lam == 0:
        return np.zeros((basis.L, basis.L))
    e = np.maximum(segment_energies(theta0, basis), EPS_DEN)
    h = basis.T / (basis.K + 1)
    s = np.sqrt(e / h)
    r = np.sqrt(h * e)
    coef = 0.5 * scad_deriv(s, lam, a) / r
    return np.einsum("m,mij->ij", coef, Vm)


def fscad_penalty_value(theta, basis: BSplineBasis, lam: float, a: float = 3.7) -> float:
    """Discretized functional SCAD of one eigenfunction, ``1/8 sum_m p(s_m)``."""
    e = segment_energies(theta, basis)
    s = np.sqrt(e * (basis.K + 1) / basis.T)
    return float(np.sum(scad(s, lam, a)) / 8.0)
