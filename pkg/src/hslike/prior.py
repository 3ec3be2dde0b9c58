"""Horseshoe and horseshoe-like densities, penalties and their mixture forms.

The horseshoe-like density with global variance-scale ``a`` is

    p(theta | a) = log(1 + a / theta**2) / (2 * pi * sqrt(a)),

and the matching penalty is ``-log log(1 + a / theta**2)`` (additive
constants dropped; they never move an argmin).  ``a`` is tied to the
horseshoe's global scale by ``a = 2 * tau**2``.

All functions accept scalars or array-likes and return a float for scalar
input, an ``ndarray`` otherwise.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, QuadratureError

__all__ = [
    "PenaltySpec",
    "QuadratureConfig",
    "MixtureKind",
    "integrate_half_line",
    "hslike_density",
    "hslike_penalty",
    "hslike_penalty_deriv",
    "horseshoe_density_quadrature",
    "hs_bounds",
    "marginal_density",
    "fvp_density",
    "slash_normal_pdf",
    "slash_normal_cdf",
    "mixing_density_u",
    "mixture_check",
    "sample_slash_normal",
    "sample_pareto_half",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_HS_CONST = (2.0 * math.pi) ** 1.5


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class PenaltySpec:
    """One member of the horseshoe-like family, identified by ``a = 2 tau^2``."""

    a: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0):
            raise DomainError(f"global scale a must be positive and finite, got {self.a!r}")

    @classmethod
    def from_tau(cls, tau: float) -> "PenaltySpec":
        if not (np.isfinite(tau) and tau > 0):
            raise DomainError(f"tau must be positive and finite, got {tau!r}")
        return cls(a=2.0 * tau * tau)

    @property
    def tau(self) -> float:
        return math.sqrt(self.a / 2.0)


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 0.0
    max_subdivisions: int = 500

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be positive")
        if self.abs_tol == 0 and self.rel_tol < 50 * np.finfo(float).eps:
            raise DomainError("with abs_tol = 0, rel_tol must be at least 50 machine epsilons")
        if not self.abs_tol >= 0:
            raise DomainError("abs_tol must be non-negative")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be at least 1")


class MixtureKind(enum.Enum):
    NORMAL_FRULLANI = "NormalFrullani"
    CAUCHY_UNIFORM = "CauchyUniform"
    LAPLACE_FVP = "LaplaceFVP"
    SLASH_NORMAL_PARETO = "SlashNormalPareto"


def _quad(f, lo, hi, cfg, points=None, **kw):
    val, err, info = _quad_raw(f, lo, hi, cfg, points=points, **kw)
    return val


def _quad_raw(f, lo, hi, cfg, points=None, **kw):
    # QUADPACK needs room for the initial breakpoint intervals
    limit = max(cfg.max_subdivisions, len(points) + 2) if points is not None else cfg.max_subdivisions
    res = integrate.quad(
        f, lo, hi,
        epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=limit,
        points=points, full_output=1, **kw,
    )
    val, err, info = res[0], res[1], res[2]
    if len(res) > 3:
        msg = res[3]
        # roundoff detection means the estimate is already at working precision
        if not msg.startswith("The occurrence of roundoff error"):
            raise QuadratureError(f"quadrature did not converge: {msg}", estimate=val)
    return val, err, info


def integrate_half_line(f, cfg: QuadratureConfig | None = None, breaks=()):
    """Integrate ``f`` over (0, inf) after the substitution u = v / (1 - v).

    ``breaks`` are points in the original variable where the integrand changes
    scale; they become QUADPACK breakpoints on (0, 1).

    Raises
    ------
    QuadratureError
        If the requested tolerance is not met within ``cfg.max_subdivisions``;
        the achieved estimate is attached as ``.estimate``.
    """
    cfg = cfg or QuadratureConfig()

    def g(v):
        if v <= 0.0 or v >= 1.0:
            return 0.0
        w = 1.0 - v
        return f(v / w) / (w * w)

    pts = sorted({b / (1.0 + b) for b in breaks if 0.0 < b < np.inf})
    return _quad(g, 0.0, 1.0, cfg, points=pts or None)


def _check_finite(theta):
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta must be finite")
    return theta


def hslike_density(theta, spec: PenaltySpec):
    """Horseshoe-like prior density; ``+inf`` at the pole ``theta == 0``."""
    theta = _check_finite(theta)
    a = spec.a
    with np.errstate(divide="ignore", over="ignore"):
        val = np.log1p(a / (theta * theta)) / (2.0 * math.pi * math.sqrt(a))
    return _out(val)


def hslike_penalty(theta, spec: PenaltySpec):
    """``-log log(1 + 2 tau^2 / theta^2)``; ``-inf`` at ``theta == 0``."""
    theta = _check_finite(theta)
    with np.errstate(divide="ignore", over="ignore"):
        val = -np.log(np.log1p(spec.a / (theta * theta)))
    return _out(val)


def _log1p_ratio(x):
    # log1p(x) / x with the removable singularity at 0
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    big = x > 1e-8
    out[big] = np.log1p(x[big]) / x[big]
    small = ~big
    out[small] = 1.0 - x[small] / 2.0
    return out


def hslike_penalty_deriv(theta, spec: PenaltySpec):
    """Derivative of the penalty in ``|theta|``.

    Equals ``(4 tau^2 / |theta|^3) / ((1 + x) log(1 + x))`` with
    ``x = 2 tau^2 / theta^2``; even in ``theta``, positive, and decaying like
    ``2 / |theta|`` in the tails.
    """
    theta = _check_finite(theta)
    if np.any(theta == 0):
        raise DomainError("penalty derivative is undefined at theta = 0")
    t = np.abs(theta)
    with np.errstate(over="ignore"):
        x = spec.a / (t * t)
    # (1 + x) log1p(x) / x, written to survive both x -> 0 and x -> inf
    g = (1.0 + x) * _log1p_ratio(x)
    return _out(2.0 / (t * g))


def hs_bounds(theta, tau: float):
    """Lower and upper envelopes of the exact horseshoe density.

    Returns ``(lower, upper)`` with
    ``lower = log(1 + 4 tau^2/theta^2) / (tau (2 pi)^{3/2})`` and
    ``upper = 2 log(1 + 2 tau^2/theta^2) / (tau (2 pi)^{3/2})``.
    """
    theta = _check_finite(theta)
    if tau <= 0:
        raise DomainError("tau must be positive")
    if np.any(theta == 0):
        raise DomainError("bounds are infinite at theta = 0")
    t2 = theta * theta
    lower = np.log1p(4.0 * tau * tau / t2) / (tau * _HS_CONST)
    upper = 2.0 * np.log1p(2.0 * tau * tau / t2) / (tau * _HS_CONST)
    return _out(lower), _out(upper)


def horseshoe_density_quadrature(theta: float, tau: float, cfg: QuadratureConfig | None = None) -> float:
    """Exact horseshoe density by adaptive quadrature over the local scale.

    The integral over ``u`` of ``N(theta | 0, u^2 tau^2) * 2 / (pi (1 + u^2))``
    is evaluated in the scale-free variable ``w = u tau / |theta|`` so the
    integrand's bulk sits near ``w ~ 1`` whatever the ratio ``theta / tau``.
    """
    theta = float(theta)
    if not math.isfinite(theta) or theta == 0.0:
        raise DomainError("horseshoe density needs finite, non-zero theta")
    if not (tau > 0):
        raise DomainError("tau must be positive")
    cfg = cfg or QuadratureConfig()
    r = abs(theta) / tau
    r2 = r * r

    def f(w):
        if w == 0.0 or not math.isfinite(w):
            return 0.0
        iw = 1.0 / w
        return iw * math.exp(-0.5 * iw * iw) / _SQRT_2PI * 2.0 / (math.pi * (1.0 + r2 * w * w))

    # the Cauchy factor switches from flat to w^-2 decay at w = 1/r
    val = integrate_half_line(f, cfg, breaks=(0.5, 1.0, 1.0 / r))
    return val / tau


def marginal_density(y, tau: float):
    """Marginal density of ``y`` under a Cauchy error and the horseshoe-like prior.

    Model: ``y | theta, sigma^2 ~ N(theta, sigma^2)``,
    ``sigma^2 ~ Inverse-Gamma(1/2, 1/2)``, and
    ``theta ~ log(1 + tau^2/theta^2) / (2 pi tau)`` (i.e. ``a = tau^2``).
    Integrating out ``sigma^2`` gives a unit Cauchy error; the prior is a
    uniform mixture of ``Cauchy(0, lambda tau)``; Cauchy scales add, so

        m(y | tau) = log(((1 + tau)^2 + y^2) / (1 + y^2)) / (2 pi tau).
    """
    y = np.asarray(y, dtype=float)
    if not tau > 0:
        raise DomainError("tau must be positive")
    val = np.log1p(tau * (tau + 2.0) / (1.0 + y * y)) / (2.0 * math.pi * tau)
    return _out(val)


def fvp_density(lam):
    """Fejer-de la Vallee Poussin density on [0, inf).

    ``(2/pi)(1 - cos lam)/lam^2 = (1/pi) (sin(lam/2)/(lam/2))^2``, with a
    series branch near zero where the quotient cancels.
    """
    lam = np.abs(np.asarray(lam, dtype=float))
    h = lam / 2.0
    out = np.empty_like(h)
    small = h < 1e-4
    hs = h[small]
    out[small] = (1.0 - hs * hs / 3.0) / math.pi
    hb = h[~small]
    out[~small] = (np.sin(hb) / hb) ** 2 / math.pi
    return _out(out)


def slash_normal_pdf(x):
    """Standard slash-normal density ``(1 - exp(-x^2/2)) / (sqrt(2 pi) x^2)``."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    out = np.empty_like(x2)
    small = x2 < 1e-8
    out[small] = (0.5 - x2[small] / 8.0) / _SQRT_2PI
    xb = x2[~small]
    out[~small] = -np.expm1(-0.5 * xb) / (_SQRT_2PI * xb)
    return _out(out)


def slash_normal_cdf(x):
    """CDF of the standard slash-normal: ``Phi(x) - (phi(0) - phi(x)) / x``."""
    from scipy.special import ndtr

    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-6
    out[small] = 0.5 + x[small] / (2.0 * _SQRT_2PI)
    xb = x[~small]
    out[~small] = ndtr(xb) + np.expm1(-0.5 * xb * xb) / (_SQRT_2PI * xb)
    return _out(out)


def mixing_density_u(u):
    """Density of the local variable ``u`` in the normal mixture, (1 - e^-u) / (2 sqrt(pi) u^1.5)."""
    u = np.asarray(u, dtype=float)
    return _out(-np.expm1(-u) / (2.0 * math.sqrt(math.pi) * u ** 1.5))


def _mixture_normal_frullani(theta, a, cfg):
    th2 = theta * theta

    def f(u):
        if u == 0.0:
            return 0.0
        # N(theta | 0, a / (2u)) * p(u)
        dens = math.sqrt(u / (a * math.pi)) * math.exp(-u * th2 / a)
        return dens * (-math.expm1(-u)) / (2.0 * math.sqrt(math.pi) * u ** 1.5)

    return integrate_half_line(f, cfg, breaks=(1.0, a / th2))


def _mixture_cauchy_uniform(theta, a, cfg):
    s = math.sqrt(a)
    th2 = theta * theta

    def f(lam):
        return lam * s / (lam * lam * a + th2) / math.pi

    peak = abs(theta) / s
    pts = [peak] if 0.0 < peak < 1.0 else None
    return _quad(f, 0.0, 1.0, cfg, points=pts)


def _mixture_laplace_fvp(theta, a, cfg):
    s = math.sqrt(a)
    c = abs(theta) / s

    def f(lam):
        return lam * math.exp(-c * lam) * float(fvp_density(lam))

    # the integrand oscillates with period 2 pi under an e^{-c lam} envelope;
    # integrate block by block until the envelope is negligible
    block = 16.0 * math.pi
    total, lo = 0.0, 0.0
    while True:
        part = _quad(f, lo, lo + block, cfg)
        total += part
        lo += block
        # remaining mass is below (2/pi) e^{-c lo} / (c lo)
        if (2.0 / math.pi) * math.exp(-c * lo) / (c * lo) <= max(cfg.abs_tol, cfg.rel_tol * abs(total)) * 1e-3:
            break
    return total / (2.0 * s)


def _mixture_slash_normal(theta, a, cfg):
    th2 = theta * theta

    def f(t):
        if t == 0.0:
            return 0.0
        # 2 * N(theta | 0, a / t^2) * p_SN(t) on t > 0
        return 2.0 * t / math.sqrt(2.0 * math.pi * a) * math.exp(-0.5 * t * t * th2 / a) * float(slash_normal_pdf(t))

    return integrate_half_line(f, cfg, breaks=(1.0, math.sqrt(a) / abs(theta)))


_MIXTURES = {
    MixtureKind.NORMAL_FRULLANI: _mixture_normal_frullani,
    MixtureKind.CAUCHY_UNIFORM: _mixture_cauchy_uniform,
    MixtureKind.LAPLACE_FVP: _mixture_laplace_fvp,
    MixtureKind.SLASH_NORMAL_PARETO: _mixture_slash_normal,
}


def mixture_check(kind, theta: float, spec: PenaltySpec, cfg: QuadratureConfig | None = None):
    """Evaluate one latent-variable representation of the density by quadrature.

    Returns ``(mixture_value, direct_value, abs_gap)`` where ``direct_value``
    is :func:`hslike_density`.  Every representation is parameterised so that
    it reproduces ``hslike_density(theta, spec)`` exactly:

    * NormalFrullani: ``theta | u ~ N(0, a/(2u))``, ``u ~ (1-e^-u)/(2 sqrt(pi) u^1.5)``
    * CauchyUniform: ``theta | lam ~ Cauchy(0, lam sqrt(a))``, ``lam ~ U(0, 1)``
    * LaplaceFVP: ``theta | lam ~ Laplace(scale sqrt(a)/lam)``, ``lam ~ FVP``
    * SlashNormalPareto: ``theta | t ~ N(0, a/t^2)``, ``t ~ slash-normal``
    """
    kind = MixtureKind(kind)
    theta = float(theta)
    if theta == 0.0 or not math.isfinite(theta):
        raise DomainError("mixture check needs finite, non-zero theta")
    cfg = cfg or QuadratureConfig()
    mix = _MIXTURES[kind](theta, spec.a, cfg)
    direct = hslike_density(theta, spec)
    return mix, direct, abs(mix - direct)


def sample_pareto_half(n: int, rng_seed=None) -> np.ndarray:
    """Pareto(1/2) on [1, inf) by inverse CDF, ``V = U^-2``."""
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = np.random.default_rng(rng_seed)
    u = 1.0 - rng.random(n)  # (0, 1]
    return u ** -2.0


def sample_slash_normal(n: int, rng_seed=None) -> np.ndarray:
    """Draw standard slash-normal variates as ``Z * sqrt(V)``, ``V ~ Pareto(1/2)``."""
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = np.random.default_rng(rng_seed)
    u = 1.0 - rng.random(n)
    z = rng.standard_normal(n)
    return z / u  # sqrt(u^-2) = 1/u
