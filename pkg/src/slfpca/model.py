"""Fitted-model container, fit configuration and report types."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .bspline import BSplineBasis, eval_basis
from .errors import InvalidArgumentError
from .penalty import PenaltyConfig


@dataclass
class SlfpcaModel:
    """Basis coefficients of the mean and eigenfunctions plus subject scores.

    ``theta`` holds one eigenfunction per row (``p x L``) and ``scores`` is
    ``n x p``.
    """

    mu: np.ndarray
    theta: np.ndarray
    scores: np.ndarray
    basis: BSplineBasis
    normalized: bool = False

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        self.scores = np.asarray(self.scores, dtype=float).reshape(-1, self.theta.shape[0])
        L = self.basis.L
        if self.mu.shape != (L,) or self.theta.shape[1] != L:
            raise InvalidArgumentError(
                f"coefficient shapes {self.mu.shape}, {self.theta.shape} do not match L={L}")

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def copy(self) -> "SlfpcaModel":
        return SlfpcaModel(self.mu.copy(), self.theta.copy(), self.scores.copy(),
                           self.basis, self.normalized)

    def mean_function(self, t) -> np.ndarray:
        return eval_basis(self.basis, t) @ self.mu

    def eigenfunctions(self, t) -> np.ndarray:
        """Values of every eigenfunction at ``t``; shape ``(len(t), p)``."""
        return eval_basis(self.basis, t) @ self.theta.T

    def function_norms(self) -> np.ndarray:
        G0 = self.basis.mass_matrix
        return np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", self.theta, G0, self.theta), 0.0))

    def linear_predictor(self, design) -> np.ndarray:
        F = design.B @ self.theta.T
        return design.B @ self.mu + np.sum(F * self.scores[design.subject_index], axis=1)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.to_dict(),
            "mu": self.mu.tolist(),
            "theta": self.theta.tolist(),
            "scores": self.scores.tolist(),
            "normalized": self.normalized,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SlfpcaModel":
        basis = BSplineBasis.from_dict(payload["basis"])
        theta = np.asarray(payload["theta"], dtype=float).reshape(-1, basis.L)
        scores = np.asarray(payload["scores"], dtype=float).reshape(-1, theta.shape[0])
        return cls(np.asarray(payload["mu"], dtype=float), theta, scores, basis,
                   bool(payload.get("normalized", False)))


@dataclass(frozen=True)
class FitConfig:
    num_fpcs: int = 2
    penalties: PenaltyConfig = field(default_factory=PenaltyConfig)
    max_outer_iter: int = 100
    max_sub_iter: int = 50
    max_alt_iter: int = 20
    tol_outer: float = 1e-4
    tol_sub: float = 1e-5
    shrink_threshold: float = 1e-3
    zero_boundary: bool = True
    center_scores: bool = True
    principal_axes: bool = True
    sticky_zeros: bool = True
    seed: int = 0

    def __post_init__(self):
        if int(self.num_fpcs) != self.num_fpcs or self.num_fpcs < 1:
            raise InvalidArgumentError(f"num_fpcs must be a positive integer, got {self.num_fpcs}")
        for name in ("tol_outer", "tol_sub"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        for name in ("max_outer_iter", "max_sub_iter", "max_alt_iter"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be at least 1")
        if self.shrink_threshold < 0:
            raise InvalidArgumentError("shrink_threshold must be non-negative")

    def with_penalties(self, **changes) -> "FitConfig":
        from dataclasses import replace
        return replace(self, penalties=replace(self.penalties, **changes))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "FitConfig":
        payload = dict(payload)
        pen = payload.pop("penalties", {})
        return cls(penalties=PenaltyConfig(**pen), **payload)


@dataclass
class FitReport:
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    fpc_converged: list = field(default_factory=list)
    iterations: int = 0
    objective: float = float("nan")
    neg_loglik: float = float("nan")
    df: list = field(default_factory=list)
    boundary_zeroed: bool = False
    dead_components: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)
