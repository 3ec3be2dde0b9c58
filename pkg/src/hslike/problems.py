"""Data containers for the two observation models (unit noise variance)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class NormalMeansProblem:
    """``y_i ~ N(theta_i, 1)``, one parameter per observation."""

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        if y.size < 1:
            raise DomainError("need at least one observation")
        if not np.all(np.isfinite(y)):
            raise DomainError("observations must be finite")
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class RegressionProblem:
    """``y ~ N(X theta, I_n)`` with design ``X`` of shape (n, p)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise DomainError("X must be a 2-d array")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DomainError("X must have at least one row and one column")
        if y.size != n:
            raise DomainError(f"y has length {y.size} but X has {n} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError("X and y must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_means(cls, problem: NormalMeansProblem) -> "RegressionProblem":
        return cls(np.eye(problem.n), problem.y)
