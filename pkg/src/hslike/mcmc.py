"""Gibbs / slice sampler for the horseshoe-like hierarchy.

Hierarchy (unit noise)::

    y_i | theta_i      ~ N(theta_i, 1)
    theta_i | t_i, tau ~ N(0, tau^2 / t_i^2)
    t_i | nu_i         ~ N(0, 1 / nu_i),   nu_i ~ density (1/2) nu^{-1/2} on (0, 1)
    tau                ~ half-Cauchy(0, 1)   (or fixed)

Integrating ``nu`` out gives the slash-normal law for ``t``; integrating
``t`` out gives the horseshoe-like density with ``a = tau^2``.  One scan
updates theta, then t^2, then nu, then ``eta = 1 / tau^2`` by slice sampling.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, special

from .errors import DegenerateStateError, DomainError
from .problems import NormalMeansProblem, RegressionProblem

__all__ = [
    "T2_SHAPE",
    "McmcConfig",
    "McmcChain",
    "gibbs_theta",
    "gibbs_t2",
    "gibbs_nu",
    "truncated_gamma",
    "slice_eta",
    "eta_target_logpdf",
    "draw_theta_block",
    "run_chain",
    "run_chain_regression",
    "effective_sample_size",
]

# Shape of the t^2 full conditional.  The joint density carries |t_i|; moving
# to s = t_i^2 costs a Jacobian 1 / (2 |t_i|), which cancels it and leaves an
# exponential (shape 1) law rather than shape 3/2.
T2_SHAPE = 1.0


@dataclass
class McmcConfig:
    """Chain settings.

    ``tau_mode`` is ``"HalfCauchyFull"`` (sample ``eta = 1/tau^2``) or
    ``"Fixed"`` with ``tau`` given.
    """

    n_iter: int = 10000
    burn_in: int = 2000
    thin: int = 1
    rng_seed: Optional[int] = 0
    tau_mode: str = "HalfCauchyFull"
    tau: Optional[float] = None
    keep_latent: bool = False
    t2_init: float = 1.0
    nu_init: float = 0.5
    eta_init: float = 1.0

    def __post_init__(self):
        if self.n_iter < 1 or not 0 <= self.burn_in < self.n_iter:
            raise DomainError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise DomainError("thin must be at least 1")
        if self.tau_mode not in ("HalfCauchyFull", "Fixed"):
            raise DomainError(f"unknown tau_mode {self.tau_mode!r}")
        if self.tau_mode == "Fixed" and not (self.tau is not None and self.tau > 0):
            raise DomainError("Fixed tau_mode needs a positive tau")
        if not (self.t2_init > 0 and 0 < self.nu_init < 1 and self.eta_init > 0):
            raise DomainError("invalid initial values")


@dataclass
class McmcChain:
    theta_draws: np.ndarray
    eta_draws: np.ndarray
    posterior_mean: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    ess: np.ndarray
    t2_draws: Optional[np.ndarray] = None
    nu_draws: Optional[np.ndarray] = None
    wall_time_s: float = 0.0

    @property
    def n_kept(self) -> int:
        return self.theta_draws.shape[0]


def gibbs_theta(y, t2, tau2, rng):
    """theta | . ~ N(y / (1 + t^2/tau^2), 1 / (1 + t^2/tau^2)), vectorized."""
    y = np.asarray(y, dtype=float)
    prec = 1.0 + np.asarray(t2, dtype=float) / tau2
    z = rng.standard_normal(y.shape)
    return y / prec + z / np.sqrt(prec)


def gibbs_t2(theta, nu, tau2, rng, shape: float = T2_SHAPE):
    """t^2 | . ~ Gamma(shape, rate = theta^2 / (2 tau^2) + nu / 2)."""
    theta = np.asarray(theta, dtype=float)
    rate = theta * theta / (2.0 * tau2) + np.asarray(nu, dtype=float) / 2.0
    if np.any(~(rate > 0)):
        raise DomainError("t^2 conditional has non-positive rate")
    return rng.gamma(shape, 1.0, size=np.broadcast(theta, rate).shape) / rate


_NU_LO = np.nextafter(0.0, 1.0)
_NU_HI = np.nextafter(1.0, 0.0)


def gibbs_nu(t2, rng):
    """nu | . ~ Exponential(rate t^2/2) truncated to (0, 1), by inverse CDF."""
    r = np.asarray(t2, dtype=float) / 2.0
    u = rng.random(r.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = np.where(r > 0, -np.log1p(u * np.expm1(-r)) / r, u)
    return np.clip(nu, _NU_LO, _NU_HI)


def _log_lower_gamma(a, z):
    """log of the regularized lower incomplete gamma P(a, z), small-z safe."""
    p = special.gammainc(a, z)
    if p > 1e-250:
        return math.log(p)
    # series P(a,z) = z^a e^{-z} / Gamma(a+1) * sum_k z^k / ((a+1)...(a+k))
    term, total, k = 1.0, 1.0, 0
    while term > 1e-17 * total and k < 10000:
        k += 1
        term *= z / (a + k)
        total += term
    return a * math.log(z) - z - special.gammaln(a + 1.0) + math.log(total)


def truncated_gamma(shape: float, rate: float, upper: float, rng) -> float:
    """One draw from Gamma(shape, rate) restricted to ``[0, upper]``.

    Inverse CDF through the regularized incomplete gamma; falls back to
    bisection on the log-CDF when the truncation mass underflows.
    """
    if not (shape > 0 and rate > 0 and upper > 0):
        raise DomainError("truncated_gamma needs positive shape, rate and upper")
    if not np.isfinite(upper):
        return float(rng.gamma(shape) / rate)
    z_up = rate * upper
    u = 1.0 - rng.random()  # in (0, 1]
    p_up = special.gammainc(shape, z_up)
    if p_up > 1e-250:
        z = special.gammaincinv(shape, u * p_up)
        if np.isfinite(z) and 0.0 <= z <= z_up:
            return float(z / rate)
    target = math.log(u) + _log_lower_gamma(shape, z_up)
    lo, hi = 0.0, z_up
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= 0.0 or _log_lower_gamma(shape, mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return float(0.5 * (lo + hi) / rate)


def eta_target_logpdf(eta, n: int, S: float):
    """Unnormalized log of ``(1 + eta)^{-1} eta^{(n-1)/2} exp(-eta S / 2)``."""
    eta = np.asarray(eta, dtype=float)
    return -np.log1p(eta) + 0.5 * (n - 1) * np.log(eta) - 0.5 * eta * S


def slice_eta(theta, t2, eta_prev: float, rng) -> float:
    """Two-step slice update of ``eta = 1 / tau^2``.

    ``u | eta ~ U(0, 1/(1+eta))`` then
    ``eta | u ~ Gamma((n+1)/2, S/2)`` truncated to ``[0, (1-u)/u]`` where
    ``S = sum t_i^2 theta_i^2``.
    """
    if not eta_prev > 0:
        raise DomainError("eta_prev must be positive")
    theta = np.asarray(theta, dtype=float)
    S = float(np.sum(np.asarray(t2, dtype=float) * theta * theta))
    if not (S > 0 and np.isfinite(S)):
        raise DegenerateStateError(f"sum of t^2 theta^2 is {S!r}; the eta conditional is improper")
    u = rng.random() / (1.0 + eta_prev)
    upper = (1.0 - u) / u if u > 0 else np.inf
    return truncated_gamma(0.5 * (theta.size + 1), 0.5 * S, upper, rng)


class _ThetaBlock:
    """Joint draw of theta | t^2, tau for the regression model."""

    def __init__(self, X, y):
        self.X, self.y = X, y
        self.n, self.p = X.shape
        self.fast = self.p > self.n
        if not self.fast:
            self.G = X.T @ X
            self.b = X.T @ y
            self.diagonal = not np.any(self.G - np.diag(np.diag(self.G)))

    def draw(self, t2, tau2, rng):
        prior_prec = t2 / tau2
        if self.fast:
            # exact N(A^{-1} X^T y, A^{-1}) draw in O(n^2 p) with D = prior variance
            D = 1.0 / prior_prec
            u = np.sqrt(D) * rng.standard_normal(self.p)
            delta = rng.standard_normal(self.n)
            M = (self.X * D) @ self.X.T
            M[np.diag_indices_from(M)] += 1.0
            w = linalg.solve(M, self.y - self.X @ u - delta, assume_a="pos")
            return u + D * (self.X.T @ w)
        z = rng.standard_normal(self.p)
        if self.diagonal:
            prec = np.diag(self.G) + prior_prec
            return self.b / prec + z / np.sqrt(prec)
        A = self.G.copy()
        A[np.diag_indices_from(A)] += prior_prec
        L = linalg.cholesky(A, lower=True)
        mean = linalg.cho_solve((L, True), self.b)
        return mean + linalg.solve_triangular(L, z, lower=True, trans="T")


def draw_theta_block(X, y, t2, tau2, rng):
    """One joint draw from ``N(A^{-1} X^T y, A^{-1})``, ``A = X^T X + diag(t^2/tau^2)``."""
    return _ThetaBlock(np.asarray(X, float), np.asarray(y, float)).draw(np.asarray(t2, float), tau2, rng)


def _run(theta_step, theta0, cfg: McmcConfig) -> McmcChain:
    rng = np.random.default_rng(cfg.rng_seed)
    p = theta0.size
    theta = theta0.copy()
    t2 = np.full(p, cfg.t2_init)
    nu = np.full(p, cfg.nu_init)
    fixed = cfg.tau_mode == "Fixed"
    eta = 1.0 / cfg.tau ** 2 if fixed else cfg.eta_init
    n_keep = len(range(cfg.burn_in, cfg.n_iter, cfg.thin))
    th_draws = np.empty((n_keep, p))
    eta_draws = np.empty(n_keep)
    t2_draws = np.empty((n_keep, p)) if cfg.keep_latent else None
    nu_draws = np.empty((n_keep, p)) if cfg.keep_latent else None
    k = 0
    t0 = time.perf_counter()
    for it in range(cfg.n_iter):
        tau2 = 1.0 / eta
        theta = theta_step(t2, tau2, rng)
        t2 = gibbs_t2(theta, nu, tau2, rng)
        nu = gibbs_nu(t2, rng)
        if not fixed:
            eta = slice_eta(theta, t2, eta, rng)
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            th_draws[k] = theta
            eta_draws[k] = eta
            if cfg.keep_latent:
                t2_draws[k] = t2
                nu_draws[k] = nu
            k += 1
    elapsed = time.perf_counter() - t0
    lo, hi = np.percentile(th_draws, [2.5, 97.5], axis=0)
    return McmcChain(
        theta_draws=th_draws,
        eta_draws=eta_draws,
        posterior_mean=th_draws.mean(axis=0),
        ci_lower=lo,
        ci_upper=hi,
        ess=effective_sample_size(th_draws),
        t2_draws=t2_draws,
        nu_draws=nu_draws,
        wall_time_s=elapsed,
    )


def run_chain(problem: NormalMeansProblem, cfg: McmcConfig | None = None) -> McmcChain:
    """Systematic-scan sampler for the normal-means model, started at theta = y."""
    cfg = cfg or McmcConfig()
    y = problem.y
    return _run(lambda t2, tau2, rng: gibbs_theta(y, t2, tau2, rng), y.copy(), cfg)


def run_chain_regression(problem: RegressionProblem, cfg: McmcConfig | None = None) -> McmcChain:
    """Sampler for the regression model with a joint Gaussian theta block.

    With ``p > n`` the block draw uses the auxiliary-variable construction
    ``theta = u + D X^T (X D X^T + I)^{-1} (y - X u - delta)``, which costs
    an n x n solve.  For ``p <= n`` a Cholesky factor of the precision is
    used; when the Gram matrix is diagonal the draw separates and consumes
    random numbers exactly as :func:`run_chain` does.
    """
    cfg = cfg or McmcConfig()
    block = _ThetaBlock(problem.X, problem.y)
    if problem.n == problem.p:
        theta0 = linalg.solve(problem.X, problem.y) if not block.diagonal else block.b / np.diag(block.G)
    else:
        from .em import ridge_estimate
        theta0 = ridge_estimate(problem.X, problem.y)
    return _run(block.draw, theta0, cfg)


def _ess_block(x):
    m, k = x.shape
    xc = x - x.mean(axis=0)
    nfft = 1 << (2 * m - 1).bit_length()
    f = np.fft.rfft(xc, n=nfft, axis=0)
    acov = np.fft.irfft(f * np.conj(f), n=nfft, axis=0)[:m] / m
    out = np.full(k, float(m))
    for j in range(k):
        if acov[0, j] <= 0:
            continue
        rho = acov[:, j] / acov[0, j]
        # initial positive sequence: sum adjacent pairs while positive
        npair = (m - 1) // 2
        pairs = rho[1:2 * npair + 1:2] + rho[2:2 * npair + 2:2] if npair else np.empty(0)
        neg = np.flatnonzero(pairs <= 0)
        stop = neg[0] if neg.size else pairs.size
        tau_int = 1.0 + 2.0 * rho[1:2 * stop + 1].sum()
        out[j] = m / max(tau_int, 1e-12)
    return out


def effective_sample_size(draws, block: int = 64) -> np.ndarray:
    """Per-column effective sample size from FFT autocorrelations.

    The integrated autocorrelation time is summed up to the first
    non-positive pair of consecutive autocorrelations.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        return _ess_block(draws[:, None])
    return np.concatenate([_ess_block(draws[:, i:i + block]) for i in range(0, draws.shape[1], block)])
