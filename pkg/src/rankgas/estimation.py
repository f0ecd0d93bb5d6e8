"""Maximum-likelihood estimation of the dynamic ranking model.

Parameters are estimated on the free vector
``(omega_1..omega_{N-1}, beta_1..beta_M, alpha_1..alpha_P, phi_1..phi_Q)``
with ``omega_N = -sum(omega_1..omega_{N-1})``. The random-walk variant fixes
``phi_1 = 1`` and drops it from the free vector.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, sparse, stats
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .gas_filter import (
    MEAN_REVERTING,
    RANDOM_WALK,
    STATIC,
    ZERO_SCORE,
    FilterOutput,
    ModelSpec,
    PanelDataset,
    ParameterVector,
    filter_path,
)

__all__ = [
    "EstimationError",
    "OptimizerConfig",
    "FitResult",
    "Connectivity",
    "fit",
    "standard_errors",
    "confidence_interval",
    "parameter_table",
    "connectivity_check",
    "aic",
    "log_likelihood",
    "numerical_gradient",
    "numerical_hessian",
]

log = logging.getLogger(__name__)

# objective value returned where the filter diverges
PENALTY = 1e12


class EstimationError(RuntimeError):
    """Raised when no usable estimate can be produced."""


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 1000
    gradient_tolerance: float = 1e-5
    relative_loglik_tolerance: float = 1e-9
    restart_count: int = 3
    finite_difference_step: float = 1e-6
    hessian_step: float = 1e-4
    random_seed: int = 0
    jitter: float = 0.2
    # largest |theta_k| accepted when the connectivity condition fails
    unbounded_threshold: float = 30.0
    compute_std_errors: bool = True

    def __post_init__(self):
        for name in ("gradient_tolerance", "relative_loglik_tolerance",
                     "finite_difference_step", "hessian_step", "unbounded_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1 or self.restart_count < 1:
            raise ValueError("max_iterations and restart_count must be at least 1")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")


@dataclass(frozen=True)
class Connectivity:
    """Outcome of the strong-connectivity check on the comparison graph.

    When the check fails, ``witness`` holds a set of items that no item
    outside it is ever ranked above.
    """

    passed: bool
    witness: tuple[int, ...] = ()

    def __bool__(self) -> bool:
        return self.passed


@dataclass(frozen=True)
class FitResult:
    spec: ModelSpec
    params: ParameterVector
    free_params: np.ndarray
    loglik: float
    aic: float
    filter: FilterOutput
    converged: bool
    iterations: int
    data: PanelDataset = field(repr=False)
    config: OptimizerConfig = field(repr=False, default_factory=OptimizerConfig)
    std_errors: np.ndarray | None = None
    omega_last_se: float | None = None
    cov_matrix: np.ndarray | None = None
    hessian_ok: bool | None = None
    gradient_norm: float = math.nan
    warnings: tuple[str, ...] = ()

    @property
    def names(self) -> list[str]:
        return self.spec.free_names()

    @property
    def n_params(self) -> int:
        return self.spec.n_free


def aic(fit_or_loglik, n_params: int | None = None) -> float:
    """Akaike information criterion 2k - 2 loglik.

    Accepts either a :class:`FitResult` or a log-likelihood together with
    the number of free parameters.
    """
    if isinstance(fit_or_loglik, FitResult):
        return 2.0 * fit_or_loglik.n_params - 2.0 * fit_or_loglik.loglik
    if n_params is None:
        raise TypeError("n_params is required when passing a log-likelihood")
    return 2.0 * n_params - 2.0 * float(fit_or_loglik)


def connectivity_check(data: PanelDataset, absent_mode: str | None = None) -> Connectivity:
    """Check that the "ranked above" digraph is strongly connected.

    Edges run from each ranked item to every item ranked below it. Unranked
    items sit below all ranked items of a period; in zero-score mode only
    participating items are considered.
    """
    n = data.universe_size
    rows, cols = [], []
    for t in range(data.period_count):
        ranked = data.orders[t, : data.n_ranked[t]]
        if absent_mode == ZERO_SCORE:
            pool = data.participants[t].copy()
        else:
            pool = np.ones(n, dtype=bool)
        pool[ranked] = False
        below = np.flatnonzero(pool)
        for pos, item in enumerate(ranked):
            targets = np.concatenate([ranked[pos + 1:], below])
            rows.extend([item] * targets.size)
            cols.extend(targets.tolist())
    graph = sparse.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, n)
    ).tocsr()
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    if n_comp == 1:
        return Connectivity(True)
    # a component with no incoming edge from another component
    has_incoming = np.zeros(n_comp, dtype=bool)
    coo = graph.tocoo()
    cross = labels[coo.row] != labels[coo.col]
    has_incoming[labels[coo.col[cross]]] = True
    source = int(np.flatnonzero(~has_incoming)[0])
    return Connectivity(False, tuple(int(i) for i in np.flatnonzero(labels == source)))


class _Objective:
    """Negative log-likelihood on the free parameter vector."""

    def __init__(self, spec: ModelSpec, data: PanelDataset):
        data.check(spec)
        self.spec = spec
        self.data = data
        t_len, n = data.period_count, data.universe_size
        self._worth = np.empty((t_len, n))
        self._scores = np.empty((t_len, n))
        self._logliks = np.empty(t_len)
        self._zero_score = spec.absent_mode == ZERO_SCORE
        self.n_evals = 0

    def loglik(self, theta) -> float:
        spec = self.spec
        n, m, p, q = (spec.universe_size, spec.covariate_count,
                      spec.score_order, spec.ar_order)
        theta = np.asarray(theta, dtype=np.float64)
        omega = np.empty(n)
        omega[:-1] = theta[: n - 1]
        omega[-1] = -theta[: n - 1].sum()
        pos = n - 1
        beta = theta[pos: pos + m]
        alpha = theta[pos + m: pos + m + p]
        if spec.variant == RANDOM_WALK:
            phi = np.ones(1)
            f0 = omega if spec.rw_init == "omega" else np.zeros(n)
        else:
            phi = theta[pos + m + p: pos + m + p + q]
            denom = 1.0 - phi.sum()
            if abs(denom) <= 1e-8:
                return -math.inf
            f0 = omega / denom
        self.n_evals += 1
        status = _kernels.filter_kernel(
            omega, np.ascontiguousarray(beta), np.ascontiguousarray(alpha),
            np.ascontiguousarray(phi), self.data.covariates, self.data.orders,
            self.data.n_ranked, self.data.participants, self._zero_score, f0,
            1e6, self._worth, self._scores, self._logliks,
        )
        if status != _kernels.OK:
            return -math.inf
        value = float(self._logliks.sum())
        return value if math.isfinite(value) else -math.inf

    def __call__(self, theta) -> float:
        value = self.loglik(theta)
        return -value if math.isfinite(value) else PENALTY


def _steps(theta, rel):
    return rel * np.maximum(1.0, np.abs(theta))


def numerical_gradient(func, theta, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient with step ``rel_step * max(1, |theta_k|)``.

    Falls back to a one-sided difference when one neighbour is non-finite.
    """
    theta = np.asarray(theta, dtype=np.float64)
    h = _steps(theta, rel_step)
    grad = np.zeros_like(theta)
    f_mid = None
    for k in range(theta.size):
        up = theta.copy()
        up[k] += h[k]
        down = theta.copy()
        down[k] -= h[k]
        f_up, f_down = func(up), func(down)
        if math.isfinite(f_up) and math.isfinite(f_down):
            grad[k] = (f_up - f_down) / (2.0 * h[k])
            continue
        if f_mid is None:
            f_mid = func(theta)
        if math.isfinite(f_up) and math.isfinite(f_mid):
            grad[k] = (f_up - f_mid) / h[k]
        elif math.isfinite(f_down) and math.isfinite(f_mid):
            grad[k] = (f_mid - f_down) / h[k]
    return grad


def numerical_hessian(func, theta, rel_step: float = 1e-4) -> np.ndarray:
    """Central second-difference Hessian, symmetric by construction."""
    theta = np.asarray(theta, dtype=np.float64)
    n = theta.size
    h = _steps(theta, rel_step)
    f0 = func(theta)
    hess = np.empty((n, n))

    def at(shifts):
        x = theta.copy()
        for k, s in shifts:
            x[k] += s * h[k]
        return func(x)

    for i in range(n):
        hess[i, i] = (at([(i, 1)]) - 2.0 * f0 + at([(i, -1)])) / h[i] ** 2
        for j in range(i):
            val = (
                at([(i, 1), (j, 1)]) - at([(i, 1), (j, -1)])
                - at([(i, -1), (j, 1)]) + at([(i, -1), (j, -1)])
            ) / (4.0 * h[i] * h[j])
            hess[i, j] = hess[j, i] = val
    return hess


def log_likelihood(params: ParameterVector, spec: ModelSpec, data: PanelDataset) -> float:
    """Summed conditional log-likelihood, -inf where the filter diverges."""
    return _Objective(spec, data).loglik(params.to_free(spec))


def _minimize(objective: _Objective, start: np.ndarray, config: OptimizerConfig):
    history = [objective(start)]
    grad = lambda x: numerical_gradient(objective, x, config.finite_difference_step)

    def record(xk):
        history.append(objective(xk))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(
            objective, start, jac=grad, method="BFGS", callback=record,
            options={"gtol": config.gradient_tolerance, "maxiter": config.max_iterations},
        )
    x = np.asarray(res.x, dtype=np.float64)
    value = objective(x)
    if not value < PENALTY:
        return x, -math.inf, False, int(res.nit), math.inf
    gnorm = float(np.max(np.abs(grad(x)))) if x.size else 0.0
    converged = gnorm <= config.gradient_tolerance
    if not converged and len(history) >= 2 and res.nit < config.max_iterations:
        prev, last = history[-2], history[-1]
        converged = abs(prev - last) <= config.relative_loglik_tolerance * max(1.0, abs(last))
    return x, -value, bool(converged), int(res.nit), gnorm


def _starting_points(
    data: PanelDataset, spec: ModelSpec, config: OptimizerConfig
) -> list[np.ndarray]:
    n = spec.universe_size
    rng = np.random.default_rng(config.random_seed)
    if spec.variant == STATIC:
        base = np.zeros(spec.n_free)
    else:
        pre = fit(
            data, ModelSpec.static(n, spec.covariate_count, absent_mode=spec.absent_mode),
            replace(config, restart_count=1, compute_std_errors=False),
        )
        omega_static = pre.free_params[: n - 1]
        phi0 = 0.5
        if spec.variant == MEAN_REVERTING:
            # match the static worths at the unconditional level
            omega0 = omega_static * (1.0 - phi0)
        else:
            # random-walk worths accumulate omega once per period
            omega0 = omega_static * 2.0 / (data.period_count + 3)
        parts = [omega0, np.zeros(spec.covariate_count), np.full(spec.score_order, 0.1)]
        if spec.variant == MEAN_REVERTING:
            parts.append(np.full(spec.ar_order, phi0 / spec.ar_order))
        base = np.concatenate(parts)
    starts = [base]
    for _ in range(config.restart_count - 1):
        starts.append(base + rng.uniform(-config.jitter, config.jitter, base.size))
    return starts


def _still_rising(objective: _Objective, theta: np.ndarray, witness) -> bool:
    """True if lifting the witness items' fixed effects does not lower the fit."""
    n = objective.spec.universe_size
    lift = np.zeros(n)
    lift[list(witness)] = 1.0
    lift -= lift.mean()
    step = np.zeros_like(theta)
    step[: n - 1] = lift[:-1]
    return objective.loglik(theta + step) >= objective.loglik(theta)


def fit(
    data: PanelDataset,
    spec: ModelSpec,
    config: OptimizerConfig | None = None,
    start=None,
) -> FitResult:
    """Maximize the conditional log-likelihood over the free parameters.

    Runs BFGS with central finite-difference gradients from
    ``config.restart_count`` starting points (the first unjittered) and keeps
    the best. Standard errors are attached when the best run converged and
    ``config.compute_std_errors`` is set.

    Raises:
        EstimationError: if every start diverges, or if the connectivity
            condition fails and the estimate drifts beyond
            ``config.unbounded_threshold``. When connectivity fails but the
            estimate stays below the threshold, a warning is attached if the
            likelihood still rises along the separating direction.
    """
    config = OptimizerConfig() if config is None else config
    data.check(spec)
    notes = []
    conn = connectivity_check(data, spec.absent_mode)
    if not conn:
        labels = [data.item_labels[i] for i in conn.witness]
        msg = f"connectivity condition fails; no item ranks above {labels}"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    objective = _Objective(spec, data)
    starts = [np.asarray(start, dtype=float)] if start is not None else _starting_points(
        data, spec, config
    )
    best = None
    for k, x0 in enumerate(starts):
        x, ll, converged, nit, gnorm = _minimize(objective, x0, config)
        log.debug("start %d: loglik=%.6f converged=%s iterations=%d", k, ll, converged, nit)
        if not math.isfinite(ll):
            continue
        key = (converged, ll)
        if best is None or key > best[0]:
            best = (key, x, ll, converged, nit, gnorm)
    if best is None:
        raise EstimationError("all starting points diverged")
    _, x, ll, converged, nit, gnorm = best
    if not conn:
        drift = float(np.max(np.abs(x)))
        if drift > config.unbounded_threshold:
            raise EstimationError(
                "likelihood appears unbounded: connectivity fails and "
                f"max |theta| = {drift:.1f}"
            )
        if _still_rising(objective, x, conn.witness):
            # the optimizer stopped on a flat slope, not at a maximum
            msg = ("likelihood still rises when the unbeaten items are raised further; "
                   "their fixed effects are not finite maximum-likelihood estimates")
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    params = ParameterVector.from_free(x, spec)
    result = FitResult(
        spec=spec,
        params=params,
        free_params=x,
        loglik=ll,
        aic=aic(ll, spec.n_free),
        filter=filter_path(params, spec, data),
        converged=converged,
        iterations=nit,
        data=data,
        config=config,
        gradient_norm=gnorm,
        warnings=tuple(notes),
    )
    if converged and config.compute_std_errors:
        result = standard_errors(result)
    return result


def standard_errors(result: FitResult) -> FitResult:
    """Attach Hessian-based covariance and standard errors.

    The covariance is the inverse of the negative numerical Hessian of the
    summed log-likelihood at the estimate. If the negative Hessian is not
    positive definite, a pseudo-inverse is used and ``hessian_ok`` is False.
    """
    objective = _Objective(result.spec, result.data)
    hess = numerical_hessian(objective.loglik, result.free_params, result.config.hessian_step)
    neg = -0.5 * (hess + hess.T)
    notes = list(result.warnings)
    try:
        if not np.all(np.isfinite(neg)):
            raise np.linalg.LinAlgError("non-finite Hessian")
        chol = np.linalg.cholesky(neg)
        inv_chol = np.linalg.inv(chol)
        cov = inv_chol.T @ inv_chol
        ok = True
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(np.nan_to_num(neg))
        ok = False
        msg = "Hessian is not negative definite; standard errors use a pseudo-inverse"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    cov = 0.5 * (cov + cov.T)
    diag = np.diag(cov)
    se = np.where(diag >= 0, np.sqrt(np.abs(diag)), np.nan)
    k = result.spec.universe_size - 1
    var_last = float(cov[:k, :k].sum())
    se_last = math.sqrt(var_last) if var_last >= 0 else math.nan
    return replace(
        result, std_errors=se, omega_last_se=se_last, cov_matrix=cov,
        hessian_ok=ok, warnings=tuple(notes),
    )


def confidence_interval(result: FitResult, level: float = 0.95) -> list[tuple[str, float, float]]:
    """Normal-approximation intervals for every free parameter and omega_N."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if result.std_errors is None:
        raise ValueError("standard errors are not available for this fit")
    z = stats.norm.ppf(0.5 + 0.5 * level)
    rows = []
    for name, est, se in _estimates(result):
        rows.append((name, est - z * se, est + z * se))
    return rows


def _estimates(result: FitResult):
    names = result.names
    n = result.spec.universe_size
    se = result.std_errors if result.std_errors is not None else np.full(len(names), np.nan)
    out = [(names[k], float(result.free_params[k]), float(se[k])) for k in range(n - 1)]
    last_se = result.omega_last_se if result.omega_last_se is not None else math.nan
    out.append((f"omega_{n}", float(result.params.omega[-1]), last_se))
    out += [(names[k], float(result.free_params[k]), float(se[k]))
            for k in range(n - 1, len(names))]
    return out


def parameter_table(result: FitResult, level: float = 0.95) -> list[dict]:
    """Rows of name, estimate, SE, z, two-sided p-value and CI bounds."""
    z_crit = stats.norm.ppf(0.5 + 0.5 * level)
    rows = []
    for name, est, se in _estimates(result):
        z = est / se if se and math.isfinite(se) and se > 0 else math.nan
        p = 2.0 * stats.norm.sf(abs(z)) if math.isfinite(z) else math.nan
        rows.append({
            "parameter": name,
            "estimate": est,
            "std_error": se,
            "z": z,
            "p_value": p,
            "ci_lower": est - z_crit * se,
            "ci_upper": est + z_crit * se,
        })
    return rows
