"""Synthetic designs, selection metrics and the seeded comparison runner."""
from __future__ import annotations

import csv
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .em import EmConfig, em_normal_means, em_regression
from .errors import DomainError, HsLikeError
from .lla import LlaConfig, lasso_baseline, one_step_hslike, select_lasso_lambda
from .mcmc import McmcConfig, run_chain, run_chain_regression
from .problems import NormalMeansProblem, RegressionProblem

__all__ = [
    "METHODS",
    "MeansDesign",
    "RegressionDesign",
    "SelectionMetrics",
    "HarnessConfig",
    "PRESETS",
    "preset",
    "generate_means",
    "generate_regression",
    "score",
    "fit_method",
    "run_comparison",
    "ComparisonTable",
]

METHODS = ("EmMode", "McmcMean", "OneStepLLA", "Lasso")


def _blocks_total(blocks):
    return sum(int(c) for c, _ in blocks)


@dataclass(frozen=True)
class MeansDesign:
    n: int
    signal_blocks: tuple = ()
    noise_sd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "signal_blocks", tuple(tuple(b) for b in self.signal_blocks))
        if self.n < 1 or _blocks_total(self.signal_blocks) > self.n:
            raise DomainError("signal blocks exceed the number of coordinates")
        if not self.noise_sd >= 0:
            raise DomainError("noise_sd must be non-negative")

    def theta_true(self) -> np.ndarray:
        return _layout(self.n, self.signal_blocks)


@dataclass(frozen=True)
class RegressionDesign:
    n: int
    p: int
    signal_blocks: tuple = ()
    noise_sd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "signal_blocks", tuple(tuple(b) for b in self.signal_blocks))
        if self.n < 1 or self.p < 1 or _blocks_total(self.signal_blocks) > self.p:
            raise DomainError("signal blocks exceed the number of coefficients")

    def theta_true(self) -> np.ndarray:
        return _layout(self.p, self.signal_blocks)


def _layout(size, blocks):
    theta = np.zeros(size)
    i = 0
    for count, mag in blocks:
        theta[i:i + int(count)] = mag
        i += int(count)
    return theta


PRESETS = {
    "table1": MeansDesign(1000, ((10, 3.0), (10, -3.0))),
    "table2": RegressionDesign(70, 350, ((10, 3.0), (10, -3.0))),
    "theta1": MeansDesign(100, ((10, 7.0),)),
    "theta2": MeansDesign(100, ((10, 7.0), (10, 3.0))),
}


def preset(name: str):
    try:
        return PRESETS[name]
    except KeyError:
        raise DomainError(f"unknown design {name!r}; choose from {sorted(PRESETS)}") from None


def generate_means(design: MeansDesign, seed) -> tuple:
    """``(theta_true, y)`` with ``y = theta_true + noise_sd * N(0, I)``."""
    rng = np.random.default_rng(seed)
    theta = design.theta_true()
    return theta, theta + design.noise_sd * rng.standard_normal(design.n)


def generate_regression(design: RegressionDesign, seed, identity_design: bool = False) -> tuple:
    """``(theta_true, X, y)`` with i.i.d. standard-normal ``X``.

    ``identity_design=True`` (requires ``n == p``) replaces ``X`` by the
    identity and draws the noise exactly as :func:`generate_means` would.
    """
    rng = np.random.default_rng(seed)
    theta = design.theta_true()
    if identity_design:
        if design.n != design.p:
            raise DomainError("identity design needs n == p")
        X = np.eye(design.n)
    else:
        X = rng.standard_normal((design.n, design.p))
    y = X @ theta + design.noise_sd * rng.standard_normal(design.n)
    return theta, X, y


@dataclass
class SelectionMetrics:
    sse: float
    cor_z: Optional[int]
    cor_nz: Optional[int]
    wall_time_s: float = 0.0


def score(theta_hat, theta_true, zero_threshold: float = 1e-6, wall_time_s: float = 0.0,
          selection: bool = True) -> SelectionMetrics:
    """SSE and correct zero / non-zero counts.

    ``selection=False`` (posterior means) reports the counts as ``None``.
    """
    theta_hat = np.asarray(theta_hat, dtype=float).ravel()
    theta_true = np.asarray(theta_true, dtype=float).ravel()
    if theta_hat.size != theta_true.size:
        raise DomainError(f"length mismatch: {theta_hat.size} vs {theta_true.size}")
    sse = float(np.sum((theta_hat - theta_true) ** 2))
    if not selection:
        return SelectionMetrics(sse, None, None, wall_time_s)
    small = np.abs(theta_hat) <= zero_threshold
    zero = theta_true == 0
    return SelectionMetrics(sse, int(np.sum(small & zero)), int(np.sum(~small & ~zero)), wall_time_s)


@dataclass
class HarnessConfig:
    em: EmConfig = field(default_factory=EmConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    lla: LlaConfig = field(default_factory=LlaConfig)
    zero_threshold: float = 1e-6


def fit_method(method: str, problem, cfg: HarnessConfig, seed: int):
    """Fit one method; returns ``(estimate, wall_time_s)``."""
    is_means = isinstance(problem, NormalMeansProblem)
    t0 = time.perf_counter()
    if method == "EmMode":
        em_cfg = EmConfig(**{**asdict(cfg.em), "rng_seed": seed})
        sol = (em_normal_means if is_means else em_regression)(problem, em_cfg)
        est = sol.theta_hat
    elif method == "McmcMean":
        mc_cfg = McmcConfig(**{**asdict(cfg.mcmc), "rng_seed": seed, "keep_latent": False})
        chain = (run_chain if is_means else run_chain_regression)(problem, mc_cfg)
        est = chain.posterior_mean
    elif method == "OneStepLLA":
        est = one_step_hslike(problem, cfg.lla).coef
    elif method == "Lasso":
        lam = select_lasso_lambda(problem, rng_seed=seed)
        est = lasso_baseline(problem, lam).coef
    else:
        raise DomainError(f"unknown method {method!r}; choose from {METHODS}")
    return est, time.perf_counter() - t0


def _cell_seeds(seed, rep, method_idx):
    data = np.random.SeedSequence([seed, rep, 0]).generate_state(1)[0]
    fit = np.random.SeedSequence([seed, rep, 1 + method_idx]).generate_state(1)[0]
    return int(data), int(fit)


def _make_problem(design, data_seed):
    if isinstance(design, MeansDesign):
        theta, y = generate_means(design, data_seed)
        return theta, NormalMeansProblem(y)
    theta, X, y = generate_regression(design, data_seed)
    return theta, RegressionProblem(X, y)


def _run_cell(args):
    design, method, rep, seed, cfg = args
    data_seed, fit_seed = _cell_seeds(seed, rep, METHODS.index(method))
    theta, problem = _make_problem(design, data_seed)
    row = {"method": method, "replication": rep, "status": "ok"}
    try:
        est, wall = fit_method(method, problem, cfg, fit_seed)
        m = score(est, theta, cfg.zero_threshold, wall, selection=method != "McmcMean")
        row.update(asdict(m))
    except (HsLikeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        row.update(sse=None, cor_z=None, cor_nz=None, wall_time_s=None,
                   status=f"failed: {type(exc).__name__}: {exc}")
    return row


COLUMNS = ("method", "replication", "sse", "cor_z", "cor_nz", "wall_time_s", "status")


@dataclass
class ComparisonTable:
    """Per-replication rows plus per-method medians."""

    rows: list
    medians: dict

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
            w.writeheader()
            for method, med in self.medians.items():
                w.writerow({"method": method, "replication": "median", **_fmt_row(med), "status": "summary"})
            for r in self.rows:
                w.writerow({**r, **_fmt_row(r)})

    def to_text(self) -> str:
        head = f"{'method':<12}{'SSE':>12}{'Cor_Z':>10}{'Cor_NZ':>10}{'time_s':>10}{'failed':>8}"
        lines = [head, "-" * len(head)]
        for method, med in self.medians.items():
            def f(v, spec):
                return "NA" if v is None else format(v, spec)
            lines.append(f"{method:<12}{f(med['sse'], '.2f'):>12}{f(med['cor_z'], '.1f'):>10}"
                         f"{f(med['cor_nz'], '.1f'):>10}{f(med['wall_time_s'], '.3f'):>10}{med['failed']:>8d}")
        return "\n".join(lines)


def _fmt_row(r):
    out = {}
    for k in ("sse", "cor_z", "cor_nz", "wall_time_s"):
        v = r.get(k)
        out[k] = "NA" if v is None else (format(v, ".17g") if isinstance(v, float) else v)
    return out


def _median(vals):
    vals = [v for v in vals if v is not None]
    return statistics.median(vals) if vals else None


def run_comparison(design, methods: Sequence[str] = METHODS, replications: int = 10, seed: int = 0,
                   cfg: HarnessConfig | None = None, n_jobs: int = 1) -> ComparisonTable:
    """Fit every method on ``replications`` seeded datasets.

    All methods share the dataset of a replication.  Every cell derives its
    own seeds from ``(seed, replication, method)``, so serial and parallel
    runs produce the same table.  Solver failures are recorded in the
    ``status`` column instead of aborting the run.
    """
    methods = list(dict.fromkeys(methods))
    if not methods:
        raise DomainError("need at least one method")
    for m in methods:
        if m not in METHODS:
            raise DomainError(f"unknown method {m!r}; choose from {METHODS}")
    if replications < 1:
        raise DomainError("replications must be at least 1")
    cfg = cfg or HarnessConfig()
    tasks = [(design, m, r, seed, cfg) for r in range(replications) for m in methods]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            rows = list(ex.map(_run_cell, tasks))
    else:
        rows = [_run_cell(t) for t in tasks]
    medians = {}
    for m in methods:
        mine = [r for r in rows if r["method"] == m]
        medians[m] = {k: _median([r[k] for r in mine]) for k in ("sse", "cor_z", "cor_nz", "wall_time_s")}
        medians[m]["failed"] = sum(r["status"] != "ok" for r in mine)
    return ComparisonTable(rows, medians)
