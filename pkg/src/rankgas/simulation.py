"""Data generation from the dynamic ranking model and Monte Carlo studies."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .estimation import EstimationError, OptimizerConfig, fit
from .gas_filter import (
    DIVERGENCE_BOUND,
    ZERO_SCORE,
    FilterDivergence,
    ModelSpec,
    PanelDataset,
    ParameterVector,
    initial_worth,
)

__all__ = [
    "design_params",
    "simulate_panel",
    "SimulationDesign",
    "StudyRow",
    "StudyReport",
    "replication_study",
    "PARAM_GROUPS",
]

log = logging.getLogger(__name__)

PARAM_GROUPS = ("omega", "beta", "alpha", "phi")


def design_params(n_items: int, beta: float = 1.0, alpha: float = 0.4,
                  phi: float = 0.5) -> ParameterVector:
    """Evenly spaced fixed effects from -2 to 2 with scalar dynamics."""
    if n_items < 2:
        raise ValueError("the design needs at least two items")
    omega = 4.0 * np.arange(n_items) / (n_items - 1) - 2.0
    # the grid is symmetric; remove rounding so the sum is exactly zero
    omega = omega - omega.mean()
    return ParameterVector(omega, [beta], [alpha], [phi])


def simulate_panel(
    params: ParameterVector,
    spec: ModelSpec,
    n_periods: int,
    rng: np.random.Generator,
    top: int | None = None,
    covariates=None,
    participants=None,
    item_labels: Sequence[str] = (),
) -> tuple[PanelDataset, np.ndarray]:
    """Simulate rankings forward through the recursion.

    Covariates are i.i.d. standard normal unless given as a (T, N, M) array.
    ``top`` truncates each ranking to its best ``top`` items. With a
    ``participants`` mask (T, N), only participating items are drawn each
    period; in zero-score mode absent items also get a zero score.

    Returns the dataset and the latent (T, N) worth path.
    """
    params.check(spec)
    n, m = spec.universe_size, spec.covariate_count
    if n_periods < 1:
        raise ValueError("n_periods must be positive")
    if covariates is None:
        covariates = rng.standard_normal((n_periods, n, m))
    covariates = np.ascontiguousarray(covariates, dtype=np.float64)
    if covariates.shape != (n_periods, n, m):
        raise ValueError(f"covariates must have shape ({n_periods}, {n}, {m})")
    if participants is None:
        participants = np.ones((n_periods, n), dtype=bool)
    participants = np.ascontiguousarray(participants, dtype=np.bool_)

    f0 = initial_worth(params, spec)
    orders = np.full((n_periods, n), -1, dtype=np.int64)
    n_ranked = np.empty(n_periods, dtype=np.int64)
    worth = np.empty((n_periods, n))
    scores = np.empty((n_periods, n))
    logliks = np.empty(n_periods)
    rank_pos = np.empty(n, dtype=np.int64)
    log_denom = np.empty(n)
    all_active = np.ones(n, dtype=np.bool_)
    zero_score = spec.absent_mode == ZERO_SCORE
    p, q = spec.score_order, spec.ar_order

    for t in range(n_periods):
        for i in range(n):
            val = params.omega[i]
            for j in range(m):
                val += params.beta[j] * covariates[t, i, j]
            for k in range(p):
                if t - 1 - k >= 0:
                    val += params.alpha[k] * scores[t - 1 - k, i]
            for lag in range(q):
                prev = worth[t - 1 - lag, i] if t - 1 - lag >= 0 else f0[i]
                val += params.phi[lag] * prev
            worth[t, i] = val
        if not np.all(np.abs(worth[t]) <= DIVERGENCE_BOUND):
            raise FilterDivergence(f"simulated worths diverged at period {t}", t)
        pool = participants[t]
        k = int(pool.sum()) if top is None else min(int(top), int(pool.sum()))
        drawn = np.empty((1, k), dtype=np.int64)
        _kernels.sequential_draws(worth[t], pool, k, rng.random((1, k)), drawn)
        orders[t, :k] = drawn[0]
        n_ranked[t] = k
        act = pool if zero_score else all_active
        logliks[t] = _kernels.loglik_score(
            worth[t], orders[t], k, act, rank_pos, log_denom, scores[t]
        )

    data = PanelDataset(orders, n_ranked, covariates, participants, tuple(item_labels))
    return data, worth


@dataclass(frozen=True)
class SimulationDesign:
    """Grid of (N, T) cells with evenly spaced fixed effects."""

    item_counts: tuple[int, ...] = (20,)
    horizons: tuple[int, ...] = (20,)
    replications: int = 500
    beta: float = 1.0
    alpha: float = 0.4
    phi: float = 0.5
    seed: int = 0
    level: float = 0.95

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        object.__setattr__(self, "item_counts", tuple(int(n) for n in self.item_counts))
        object.__setattr__(self, "horizons", tuple(int(t) for t in self.horizons))

    def cells(self) -> list[tuple[int, int]]:
        return [(n, t) for n in self.item_counts for t in self.horizons]


@dataclass(frozen=True)
class StudyRow:
    n_items: int
    n_periods: int
    param_group: str
    mae: float
    coverage: float
    n_success: int
    n_fail: int


@dataclass
class StudyReport:
    rows: list[StudyRow] = field(default_factory=list)

    COLUMNS = ("N", "T", "param_group", "mae", "coverage", "n_success", "n_fail")

    def get(self, n_items: int, n_periods: int, group: str) -> StudyRow:
        for row in self.rows:
            if (row.n_items, row.n_periods, row.param_group) == (n_items, n_periods, group):
                return row
        raise KeyError((n_items, n_periods, group))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for r in self.rows:
                writer.writerow([r.n_items, r.n_periods, r.param_group, f"{r.mae:.6f}",
                                 "" if math.isnan(r.coverage) else f"{r.coverage:.6f}",
                                 r.n_success, r.n_fail])


def _group_slices(n_items: int) -> dict[str, slice]:
    return {"omega": slice(0, n_items), "beta": slice(n_items, n_items + 1),
            "alpha": slice(n_items + 1, n_items + 2), "phi": slice(n_items + 2, n_items + 3)}


def _one_replication(task):
    """Simulate, fit and score one replication.

    Returns (abs_errors, hits) over (omega_1..omega_N, beta, alpha, phi), or
    None when the fit failed.
    """
    n_items, n_periods, cell, rep, design, config, oracle = task
    seq = np.random.SeedSequence([design.seed, cell, rep])
    rng = np.random.default_rng(seq)
    truth = design_params(n_items, design.beta, design.alpha, design.phi)
    spec = ModelSpec.mean_reverting(n_items, 1)
    true_vec = np.concatenate([truth.omega, truth.beta, truth.alpha, truth.phi])
    try:
        data, _ = simulate_panel(truth, spec, n_periods, rng)
    except FilterDivergence:
        return None
    if oracle:
        return np.zeros_like(true_vec), np.full(true_vec.shape, np.nan)
    try:
        with warnings.catch_warnings():
            # connectivity notes are expected in small panels; the fit is kept
            warnings.simplefilter("ignore", RuntimeWarning)
            res = fit(data, spec, config)
    except (EstimationError, FilterDivergence) as exc:
        log.debug("cell %d rep %d failed: %s", cell, rep, exc)
        return None
    if not res.converged or res.std_errors is None:
        return None
    est = np.concatenate([res.params.omega, res.params.beta, res.params.alpha, res.params.phi])
    se = np.concatenate([res.std_errors[: n_items - 1], [res.omega_last_se],
                         res.std_errors[n_items - 1:]])
    if not np.all(np.isfinite(se)):
        return None
    z = stats.norm.ppf(0.5 + 0.5 * design.level)
    hits = (np.abs(est - true_vec) <= z * se).astype(float)
    return np.abs(est - true_vec), hits


def replication_study(
    design: SimulationDesign,
    config: OptimizerConfig | None = None,
    n_jobs: int = 1,
    oracle: bool = False,
) -> StudyReport:
    """Monte Carlo study of estimation error and interval coverage.

    Every replication draws from its own seed derived from
    (design.seed, cell index, replication index), so results do not depend
    on ``n_jobs``. Failed fits are excluded from the averages and counted in
    ``n_fail``. In ``oracle`` mode the true parameters stand in for the
    estimates, so errors are zero and coverage is undefined (NaN).
    """
    config = OptimizerConfig(restart_count=1) if config is None else config
    report = StudyReport()
    for cell, (n_items, n_periods) in enumerate(design.cells()):
        tasks = [(n_items, n_periods, cell, rep, design, config, oracle)
                 for rep in range(design.replications)]
        if n_jobs > 1:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                outcomes = list(pool.map(_one_replication, tasks, chunksize=4))
        else:
            outcomes = [_one_replication(task) for task in tasks]
        good = [o for o in outcomes if o is not None]
        n_fail = len(outcomes) - len(good)
        log.info("cell N=%d T=%d: %d ok, %d failed", n_items, n_periods, len(good), n_fail)
        for group, sl in _group_slices(n_items).items():
            if good:
                errors = np.array([g[0][sl].mean() for g in good])
                hits = np.array([g[1][sl].mean() for g in good])
                mae = float(errors.mean())
                coverage = math.nan if oracle else float(hits.mean())
            else:
                mae = coverage = math.nan
            report.rows.append(StudyRow(n_items, n_periods, group, mae, coverage,
                                        len(good), n_fail))
    return report

