"""EM / ECM solvers for the MAP estimate under the horseshoe-like prior.

Latent-variable form: ``theta_i | u_i, a ~ N(0, a / (2 u_i))``.  Each
iteration updates the global scale ``a`` from the current ``theta``, then
recomputes the latent expectations at the new ``a`` and takes the Gaussian
posterior mode of ``theta``.  The coordinate-wise prior variance
``a / (2 u_tilde) = pi theta^2 (theta^2 + a) / sqrt(a)`` is carried directly,
so a coordinate that reaches exactly zero gets zero prior variance and stays
there (the absorbing all-zero mode) without any infinities in the algebra.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg

from .errors import DomainError, NumericalError, SingularSystemError
from .problems import NormalMeansProblem, RegressionProblem
from .prior import PenaltySpec, hslike_penalty

__all__ = [
    "EmConfig",
    "EmSolution",
    "e_step_u",
    "update_a",
    "prior_variance",
    "em_step_means",
    "em_step_regression",
    "em_normal_means",
    "em_regression",
    "woodbury_solve",
    "naive_solve",
    "ridge_estimate",
    "penalized_objective",
]


@dataclass
class EmConfig:
    """Tuning knobs for the EM solvers.

    ``theta_init`` is ``"auto"`` (data for normal means, ridge for regression),
    ``"data"``, ``"ridge"`` or an explicit starting vector.
    """

    theta_init: Union[str, np.ndarray] = "auto"
    ridge_eps: float = 1e-3
    a_init: float = 1.0
    tol: float = 1e-8
    max_iter: int = 10000
    zero_threshold: float = 1e-6
    restarts: int = 3
    restart_jitter_sd: float = 0.1
    rng_seed: Optional[int] = 0
    solver: str = "auto"

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")
        if not self.zero_threshold >= 0:
            raise DomainError("zero_threshold must be non-negative")
        if not self.a_init > 0:
            raise DomainError("a_init must be positive")
        if self.restarts < 0 or self.restart_jitter_sd < 0:
            raise DomainError("restarts and restart_jitter_sd must be non-negative")
        if self.solver not in ("auto", "woodbury", "naive"):
            raise DomainError(f"unknown solver {self.solver!r}")


@dataclass
class EmSolution:
    theta_hat: np.ndarray
    a_hat: float
    u_tilde: np.ndarray
    iterations: int
    converged: bool
    objective_trace: np.ndarray
    support: np.ndarray
    restarts_used: int = 0
    run_objectives: list = field(default_factory=list)


def e_step_u(theta, a: float):
    """Latent expectation ``a^{3/2} / (2 pi theta^2 (theta^2 + a))``.

    Returns ``+inf`` where ``theta == 0``.
    """
    if not a > 0:
        raise DomainError("a must be positive")
    theta = np.asarray(theta, dtype=float)
    t2 = theta * theta
    with np.errstate(divide="ignore"):
        out = a ** 1.5 / (2.0 * math.pi * t2 * (t2 + a))
    return float(out) if out.ndim == 0 else out


def prior_variance(theta, a: float) -> np.ndarray:
    """``a / (2 u_tilde)``, the conditional prior variance of each coordinate."""
    theta = np.asarray(theta, dtype=float)
    t2 = theta * theta
    with np.errstate(over="ignore"):
        return math.pi * t2 * (t2 + a) / math.sqrt(a)


def update_a(theta, a_prev: float) -> float:
    """One fixed-point sweep ``a^{3/2} / (n pi) * sum 1 / (theta_i^2 + a)``."""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size < 1:
        raise DomainError("theta must be non-empty")
    if not a_prev > 0:
        raise DomainError("a_prev must be positive")
    with np.errstate(over="ignore"):
        s = np.sum(1.0 / (theta * theta + a_prev))
    a_new = a_prev ** 1.5 / (theta.size * math.pi) * s
    if not (np.isfinite(a_new) and a_new > 0):
        raise NumericalError(f"degenerate global-scale update (a = {a_new!r})", estimate=a_new)
    return float(a_new)


def woodbury_solve(X, d, y) -> np.ndarray:
    """Solve ``(X^T X + diag(d)) theta = X^T y`` through an n x n system.

    With ``D = diag(1/d)`` the Woodbury identity
    ``(X^T X + D^{-1})^{-1} = D - D X^T (X D X^T + I)^{-1} X D`` collapses to
    ``theta = D X^T (X D X^T + I)^{-1} y``.  Entries ``d_i = +inf`` give
    ``D_ii = 0``, pinning that coordinate to zero.
    """
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("precisions d must be positive (inf allowed)")
    with np.errstate(divide="ignore"):
        D = 1.0 / d
    return _woodbury_from_variance(np.asarray(X, dtype=float), D, np.asarray(y, dtype=float))


def _woodbury_from_variance(X, D, y):
    M = (X * D) @ X.T
    M[np.diag_indices_from(M)] += 1.0
    try:
        c = linalg.cho_factor(M, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:  # pragma: no cover - M >= I in exact arithmetic
        raise SingularSystemError(str(exc)) from exc
    w = linalg.cho_solve(c, y, check_finite=False)
    return D * (X.T @ w)


def naive_solve(X, d, y) -> np.ndarray:
    """Dense p x p reference for :func:`woodbury_solve` (same conventions)."""
    X = np.asarray(X, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(~(d >= 0)):
        raise DomainError("precisions d must be non-negative (inf allowed)")
    return _naive_from_precision(X, d, np.asarray(y, dtype=float))


def _naive_from_precision(X, d, y):
    theta = np.zeros(X.shape[1])
    act = np.isfinite(d)
    if not np.any(act):
        return theta
    Xa = X[:, act]
    A = Xa.T @ Xa
    A[np.diag_indices_from(A)] += d[act]
    try:
        c = linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"normal equations are singular: {exc}") from exc
    theta[act] = linalg.cho_solve(c, Xa.T @ y, check_finite=False)
    return theta


def ridge_estimate(X, y, eps: float = 1e-3) -> np.ndarray:
    """``(X^T X + eps I)^{-1} X^T y``, via the n x n form when p > n."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if p > n:
        G = X @ X.T
        G[np.diag_indices_from(G)] += eps
        return X.T @ linalg.solve(G, y, assume_a="pos")
    G = X.T @ X
    G[np.diag_indices_from(G)] += eps
    return linalg.solve(G, X.T @ y, assume_a="pos")


def penalized_objective(X, y, theta, a: float, zero_threshold: float) -> float:
    """Squared error plus the horseshoe-like penalty over the declared support.

    Coordinates at or below ``zero_threshold`` are treated as exact zeros and
    left out of the penalty sum (their penalty is the pole at ``-inf``).
    """
    resid = y - (theta if X is None else X @ theta)
    keep = np.abs(theta) > zero_threshold
    pen = np.sum(hslike_penalty(theta[keep], PenaltySpec(a))) if np.any(keep) else 0.0
    return float(0.5 * resid @ resid + pen)


def em_step_means(y, theta, a):
    """One ECM recursion for the normal-means model; returns ``(theta, a)``."""
    a_new = update_a(theta, a)
    D = prior_variance(theta, a_new)
    with np.errstate(divide="ignore", over="ignore"):
        theta_new = y / (1.0 + 1.0 / D)
    return theta_new, a_new


class _GramCache:
    """Precomputed ``X^T X`` and ``X^T y`` for the dense p x p path."""

    def __init__(self, X, y):
        self.G = X.T @ X
        self.b = X.T @ y
        off = self.G - np.diag(np.diag(self.G))
        self.diagonal = not np.any(off)

    def solve(self, d):
        theta = np.zeros(self.b.size)
        act = np.isfinite(d)
        if self.diagonal:
            # orthogonal columns: the system separates coordinate-wise
            theta[act] = self.b[act] / (np.diag(self.G)[act] + d[act])
            return theta
        if not np.any(act):
            return theta
        A = self.G[np.ix_(act, act)]
        A[np.diag_indices_from(A)] += d[act]
        try:
            c = linalg.cho_factor(A, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise SingularSystemError(f"normal equations are singular: {exc}") from exc
        theta[act] = linalg.cho_solve(c, self.b[act], check_finite=False)
        return theta


def em_step_regression(X, y, theta, a, solver="woodbury", _cache=None):
    """One ECM recursion for the regression model; returns ``(theta, a)``."""
    a_new = update_a(theta, a)
    D = prior_variance(theta, a_new)
    if not np.all(np.isfinite(D)):
        raise NumericalError("prior variance overflowed", estimate=theta)
    if solver == "woodbury":
        theta_new = _woodbury_from_variance(X, D, y)
    else:
        cache = _cache if _cache is not None else _GramCache(X, y)
        with np.errstate(divide="ignore", over="ignore"):
            theta_new = cache.solve(1.0 / D)
    return theta_new, a_new


def _iterate(step, X, y, theta0, cfg, callback):
    theta = np.array(theta0, dtype=float)
    a = float(cfg.a_init)
    trace = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        theta_new, a_new = step(theta, a)
        if not (np.all(np.isfinite(theta_new)) and np.isfinite(a_new)):
            raise NumericalError(f"non-finite iterate at iteration {it}",
                                 estimate=theta, trace=np.asarray(trace))
        # flush denormals so the absorbing zero state is reached exactly
        theta_new[np.abs(theta_new) < 1e-300] = 0.0
        change = max(float(np.max(np.abs(theta_new - theta))), abs(a_new - a))
        theta, a = theta_new, a_new
        trace.append(penalized_objective(X, y, theta, a, cfg.zero_threshold))
        if callback is not None:
            callback(it, theta, a)
        if change < cfg.tol:
            converged = True
            break
    return theta, a, it, converged, np.asarray(trace)


def _solve_with_restarts(step, X, y, theta0, cfg, callback):
    rng = np.random.default_rng(cfg.rng_seed)
    runs = []
    start = theta0
    for attempt in range(cfg.restarts + 1):
        theta, a, it, conv, trace = _iterate(step, X, y, start, cfg, callback)
        trapped = bool(np.all(np.abs(theta) < cfg.zero_threshold))
        obj = trace[-1] if len(trace) else np.inf
        runs.append((trapped, obj, attempt, theta, a, it, conv, trace))
        if not trapped:
            break
        start = theta0 + rng.normal(0.0, cfg.restart_jitter_sd, size=theta0.shape)
    live = [r for r in runs if not r[0]]
    if live:
        best = min(live, key=lambda r: r[1])
    else:
        best = runs[-1]
    _, _, attempt, theta, a, it, conv, trace = best
    return EmSolution(
        theta_hat=theta,
        a_hat=a,
        u_tilde=np.asarray(e_step_u(theta, a), dtype=float).reshape(theta.shape),
        iterations=it,
        converged=conv,
        objective_trace=trace,
        support=np.flatnonzero(np.abs(theta) > cfg.zero_threshold),
        restarts_used=len(runs) - 1,
        run_objectives=[r[1] for r in runs],
    )


def _initial_theta(cfg, X, y, default):
    init = cfg.theta_init
    if isinstance(init, str):
        rule = default if init == "auto" else init
        if rule == "data":
            if X is not None and X.shape[0] != X.shape[1]:
                raise DomainError("'data' initialisation needs a square design")
            return np.array(y, dtype=float)
        if rule == "ridge":
            return ridge_estimate(X if X is not None else np.eye(y.size), y, cfg.ridge_eps)
        raise DomainError(f"unknown initialisation rule {init!r}")
    theta0 = np.array(init, dtype=float).ravel()
    p = y.size if X is None else X.shape[1]
    if theta0.size != p:
        raise DomainError(f"theta_init has length {theta0.size}, expected {p}")
    return theta0


def em_normal_means(problem: NormalMeansProblem, cfg: EmConfig | None = None,
                    callback: Callable | None = None) -> EmSolution:
    """MAP estimate of the normal-means model by the ECM recursion.

    Starting from ``theta = y`` and ``a = 1`` by default.  If the run ends in
    the all-zero mode, it is restarted from jittered starts (up to
    ``cfg.restarts`` times).

    Parameters
    ----------
    problem : NormalMeansProblem
    cfg : EmConfig, optional
    callback : callable, optional
        Called as ``callback(iteration, theta, a)`` after every recursion.
    """
    cfg = cfg or EmConfig()
    y = problem.y
    theta0 = _initial_theta(cfg, None, y, "data")
    return _solve_with_restarts(lambda th, a: em_step_means(y, th, a), None, y, theta0, cfg, callback)


def em_regression(problem: RegressionProblem, cfg: EmConfig | None = None,
                  callback: Callable | None = None) -> EmSolution:
    """MAP estimate of the sparse linear model by the ECM recursion.

    The theta-step solves ``(X^T X + diag(2 u_tilde / a)) theta = X^T y``; the
    Woodbury form is used when ``p > n`` (``cfg.solver='auto'``) so each
    iteration costs O(n^2 p) rather than O(p^3).
    """
    cfg = cfg or EmConfig()
    X, y = problem.X, problem.y
    solver = cfg.solver
    if solver == "auto":
        solver = "woodbury" if problem.p > problem.n else "naive"
    theta0 = _initial_theta(cfg, X, y, "ridge")
    cache = _GramCache(X, y) if solver == "naive" else None
    return _solve_with_restarts(lambda th, a: em_step_regression(X, y, th, a, solver, cache),
                                X, y, theta0, cfg, callback)
