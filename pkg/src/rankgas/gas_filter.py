"""Score-driven filtering of time-varying Plackett-Luce worths.

The worth of item i at period t follows

    f[t, i] = omega[i] + sum_j beta[j] * x[t, i, j]
              + sum_k alpha[k] * score[t-k, i] + sum_l phi[l] * f[t-l, i]

where ``score[t]`` is the gradient of the period-t ranking log-likelihood
evaluated at ``f[t]``. Scores enter with unit scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .plackett_luce import Ranking

__all__ = [
    "STATIC",
    "MEAN_REVERTING",
    "RANDOM_WALK",
    "PARTIAL_LIKELIHOOD",
    "ZERO_SCORE",
    "DIVERGENCE_BOUND",
    "FilterDivergence",
    "ModelSpec",
    "ParameterVector",
    "PanelDataset",
    "FilterOutput",
    "unconditional_worth",
    "initial_worth",
    "filter_path",
]

STATIC = "static"
MEAN_REVERTING = "mean-reverting"
RANDOM_WALK = "random-walk"
VARIANTS = (STATIC, MEAN_REVERTING, RANDOM_WALK)

PARTIAL_LIKELIHOOD = "partial-likelihood"
ZERO_SCORE = "zero-score"
ABSENT_MODES = (PARTIAL_LIKELIHOOD, ZERO_SCORE)

DIVERGENCE_BOUND = 1e6


class FilterDivergence(FloatingPointError):
    """The recursion left the region of finite, bounded worths."""

    def __init__(self, message: str, period: int | None = None):
        super().__init__(message)
        self.period = period


@dataclass(frozen=True)
class ModelSpec:
    """Orders and restrictions of the dynamic ranking model.

    ``rw_init`` selects the pre-sample worth of the random-walk variant:
    ``"omega"`` (default) starts at the fixed effects, ``"zero"`` at 0.
    """

    universe_size: int
    covariate_count: int = 0
    score_order: int = 0
    ar_order: int = 0
    variant: str = STATIC
    absent_mode: str = PARTIAL_LIKELIHOOD
    rw_init: str = "omega"

    def __post_init__(self):
        if self.universe_size < 1:
            raise ValueError("universe_size must be positive")
        if min(self.covariate_count, self.score_order, self.ar_order) < 0:
            raise ValueError("model orders must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.absent_mode not in ABSENT_MODES:
            raise ValueError(
                f"unknown absent_mode {self.absent_mode!r}; expected one of {ABSENT_MODES}"
            )
        if self.rw_init not in ("omega", "zero"):
            raise ValueError(f"rw_init must be 'omega' or 'zero', got {self.rw_init!r}")
        if self.variant == STATIC and (self.score_order or self.ar_order):
            raise ValueError("static variant requires P = Q = 0")
        if self.variant == MEAN_REVERTING and (self.score_order < 1 or self.ar_order < 1):
            raise ValueError("mean-reverting variant requires P >= 1 and Q >= 1")
        if self.variant == RANDOM_WALK and (self.score_order < 1 or self.ar_order != 1):
            raise ValueError("random-walk variant requires P >= 1 and Q = 1")

    @classmethod
    def static(cls, universe_size: int, covariate_count: int = 0, **kw) -> "ModelSpec":
        return cls(universe_size, covariate_count, 0, 0, STATIC, **kw)

    @classmethod
    def mean_reverting(
        cls, universe_size: int, covariate_count: int = 0, score_order: int = 1,
        ar_order: int = 1, **kw,
    ) -> "ModelSpec":
        return cls(universe_size, covariate_count, score_order, ar_order, MEAN_REVERTING, **kw)

    @classmethod
    def random_walk(
        cls, universe_size: int, covariate_count: int = 0, score_order: int = 1, **kw
    ) -> "ModelSpec":
        return cls(universe_size, covariate_count, score_order, 1, RANDOM_WALK, **kw)

    @property
    def n_free(self) -> int:
        """Number of free parameters; phi is fixed in the random-walk variant."""
        n = self.universe_size + self.covariate_count + self.score_order - 1
        if self.variant != RANDOM_WALK:
            n += self.ar_order
        return n

    def free_names(self) -> list[str]:
        names = [f"omega_{i + 1}" for i in range(self.universe_size - 1)]
        names += [f"beta_{j + 1}" for j in range(self.covariate_count)]
        names += [f"alpha_{k + 1}" for k in range(self.score_order)]
        if self.variant != RANDOM_WALK:
            names += [f"phi_{l + 1}" for l in range(self.ar_order)]
        return names


@dataclass(frozen=True)
class ParameterVector:
    """Static parameters of the recursion.

    ``omega`` must sum to zero; only its first N-1 entries are free.
    """

    omega: np.ndarray
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("omega", "beta", "alpha", "phi"):
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.omega.size == 0:
            raise ValueError("omega must have at least one entry")
        total = float(self.omega.sum())
        if abs(total) > 1e-10 * max(1.0, float(np.abs(self.omega).sum())):
            raise ValueError(f"omega must sum to zero, got sum {total:.3e}")

    @classmethod
    def from_free(cls, theta, spec: ModelSpec) -> "ParameterVector":
        """Unpack (omega_1..omega_{N-1}, beta, alpha, phi) into a full vector."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (spec.n_free,):
            raise ValueError(f"expected {spec.n_free} free parameters, got {theta.shape}")
        n, m, p, q = (spec.universe_size, spec.covariate_count,
                      spec.score_order, spec.ar_order)
        head = theta[: n - 1]
        omega = np.append(head, -head.sum())
        pos = n - 1
        beta = theta[pos: pos + m]
        pos += m
        alpha = theta[pos: pos + p]
        pos += p
        phi = np.ones(1) if spec.variant == RANDOM_WALK else theta[pos: pos + q]
        return cls(omega, beta, alpha, phi)

    def to_free(self, spec: ModelSpec) -> np.ndarray:
        self.check(spec)
        parts = [self.omega[:-1], self.beta, self.alpha]
        if spec.variant != RANDOM_WALK:
            parts.append(self.phi)
        return np.concatenate(parts)

    def check(self, spec: ModelSpec) -> None:
        expected = (spec.universe_size, spec.covariate_count, spec.score_order, spec.ar_order)
        got = (self.omega.size, self.beta.size, self.alpha.size, self.phi.size)
        if got != expected:
            raise ValueError(
                f"parameter dimensions (N, M, P, Q) = {got} do not match spec {expected}"
            )
        if spec.variant == RANDOM_WALK and self.phi[0] != 1.0:
            raise ValueError("random-walk variant requires phi_1 = 1")


@dataclass(frozen=True)
class PanelDataset:
    """Rankings observed over T periods plus item covariates.

    Attributes:
        orders: (T, N) int array; row t holds period t's ordering padded
            with -1.
        n_ranked: (T,) number of ranked items per period.
        covariates: (T, N, M) covariate values.
        participants: (T, N) bool mask of items taking part in each period.
            Defaults to the ranked items.
    """

    orders: np.ndarray
    n_ranked: np.ndarray
    covariates: np.ndarray
    participants: np.ndarray
    item_labels: tuple[str, ...] = ()
    covariate_names: tuple[str, ...] = ()
    time_labels: tuple[str, ...] = ()

    def __post_init__(self):
        orders = np.array(self.orders, dtype=np.int64)
        if orders.ndim != 2 or orders.shape[0] < 1:
            raise ValueError("orders must be a non-empty (T, N) array")
        t_len, n = orders.shape
        n_ranked = np.array(self.n_ranked, dtype=np.int64).reshape(-1)
        if n_ranked.shape != (t_len,):
            raise ValueError("n_ranked must have one entry per period")
        cov = np.array(self.covariates, dtype=np.float64)
        if cov.ndim != 3 or cov.shape[:2] != (t_len, n):
            raise ValueError(f"covariates must have shape ({t_len}, {n}, M), got {cov.shape}")
        if not np.all(np.isfinite(cov)):
            raise ValueError("covariates contain non-finite values")
        part = np.array(self.participants, dtype=np.bool_)
        if part.shape != (t_len, n):
            raise ValueError(f"participants must have shape ({t_len}, {n})")
        for t in range(t_len):
            k = n_ranked[t]
            if not 1 <= k <= n:
                raise ValueError(f"period {t}: ranks {k} items, expected 1..{n}")
            ranked = orders[t, :k]
            if np.any((ranked < 0) | (ranked >= n)) or len(set(ranked.tolist())) != k:
                raise ValueError(f"period {t}: ordering is not a set of distinct items")
            if np.any(orders[t, k:] != -1):
                raise ValueError(f"period {t}: ordering padding must be -1")
            if not np.all(part[t, ranked]):
                raise ValueError(f"period {t}: ranked items must be participants")
        labels = tuple(str(x) for x in self.item_labels) or tuple(
            f"item{i + 1}" for i in range(n)
        )
        if len(labels) != n or len(set(labels)) != n:
            raise ValueError("item_labels must be N distinct names")
        names = tuple(self.covariate_names) or tuple(
            f"x{j + 1}" for j in range(cov.shape[2])
        )
        if len(names) != cov.shape[2]:
            raise ValueError("covariate_names must have one entry per covariate")
        times = tuple(str(x) for x in self.time_labels) or tuple(
            str(t + 1) for t in range(t_len)
        )
        if len(times) != t_len:
            raise ValueError("time_labels must have one entry per period")
        for name, arr in (("orders", orders), ("n_ranked", n_ranked),
                          ("covariates", cov), ("participants", part)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "item_labels", labels)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "time_labels", times)

    @classmethod
    def from_rankings(
        cls,
        rankings: Sequence[Ranking],
        covariates=None,
        participants=None,
        item_labels: Sequence[str] = (),
        covariate_names: Sequence[str] = (),
        time_labels: Sequence[str] = (),
    ) -> "PanelDataset":
        if not rankings:
            raise ValueError("at least one period is required")
        n = rankings[0].universe_size
        if any(r.universe_size != n for r in rankings):
            raise ValueError("all rankings must share one universe size")
        orders = np.stack([r.as_array() for r in rankings])
        n_ranked = np.array([r.n_ranked for r in rankings])
        if covariates is None:
            covariates = np.zeros((len(rankings), n, 0))
        if participants is None:
            participants = np.zeros((len(rankings), n), dtype=bool)
            for t, r in enumerate(rankings):
                participants[t, list(r.ordering)] = True
        return cls(orders, n_ranked, covariates, participants,
                   tuple(item_labels), tuple(covariate_names), tuple(time_labels))

    @property
    def universe_size(self) -> int:
        return self.orders.shape[1]

    @property
    def period_count(self) -> int:
        return self.orders.shape[0]

    @property
    def covariate_count(self) -> int:
        return self.covariates.shape[2]

    @property
    def rankings(self) -> list[Ranking]:
        return [Ranking(self.universe_size, self.orders[t, : self.n_ranked[t]])
                for t in range(self.period_count)]

    def check(self, spec: ModelSpec) -> None:
        if self.universe_size != spec.universe_size:
            raise ValueError(
                f"dataset has N={self.universe_size}, spec expects {spec.universe_size}"
            )
        if self.covariate_count != spec.covariate_count:
            raise ValueError(
                f"dataset has M={self.covariate_count}, spec expects {spec.covariate_count}"
            )

    def permuted(self, perm: Sequence[int]) -> "PanelDataset":
        """Relabel items so that new item ``k`` is old item ``perm[k]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(perm.size)
        orders = np.where(self.orders >= 0, inverse[np.maximum(self.orders, 0)], -1)
        return PanelDataset(
            orders, self.n_ranked, self.covariates[:, perm, :], self.participants[:, perm],
            tuple(self.item_labels[i] for i in perm), self.covariate_names, self.time_labels,
        )


@dataclass(frozen=True)
class FilterOutput:
    worth_path: np.ndarray
    score_path: np.ndarray
    per_period_loglik: np.ndarray
    total_loglik: float
    initial_worth: np.ndarray


def unconditional_worth(params: ParameterVector, spec: ModelSpec) -> np.ndarray:
    """Fixed point omega / (1 - sum(phi)) of the covariate-free recursion."""
    if spec.variant == RANDOM_WALK:
        raise ValueError("random-walk variant has no unconditional worth")
    denom = 1.0 - float(np.sum(params.phi))
    if abs(denom) <= 1e-8:
        raise ValueError("autoregressive coefficients sum to one; no unconditional worth")
    return params.omega / denom


def initial_worth(params: ParameterVector, spec: ModelSpec) -> np.ndarray:
    """Pre-sample worth f_0 = ... = f_{-Q+1} used to start the recursion."""
    if spec.variant == RANDOM_WALK:
        if spec.rw_init == "zero":
            return np.zeros(spec.universe_size)
        return np.array(params.omega)
    return unconditional_worth(params, spec)


def _run(params: ParameterVector, spec: ModelSpec, data: PanelDataset, f0):
    t_len, n = data.period_count, data.universe_size
    worth = np.empty((t_len, n))
    scores = np.empty((t_len, n))
    logliks = np.empty(t_len)
    status = _kernels.filter_kernel(
        params.omega, params.beta, params.alpha, params.phi,
        data.covariates, data.orders, data.n_ranked, data.participants,
        spec.absent_mode == ZERO_SCORE, f0, DIVERGENCE_BOUND,
        worth, scores, logliks,
    )
    return status, worth, scores, logliks


def filter_path(
    params: ParameterVector, spec: ModelSpec, data: PanelDataset, f0=None
) -> FilterOutput:
    """Filter the worths through all periods of ``data``.

    Pre-sample scores are zero. Pre-sample worths default to
    :func:`initial_worth`; ``f0`` overrides them (e.g. with prior ratings).

    Raises:
        FilterDivergence: if any worth becomes non-finite or exceeds
            ``DIVERGENCE_BOUND`` in absolute value.
    """
    params.check(spec)
    data.check(spec)
    if f0 is None:
        try:
            f0 = initial_worth(params, spec)
        except ValueError as exc:
            raise FilterDivergence(str(exc)) from exc
    f0 = np.ascontiguousarray(f0, dtype=np.float64)
    if f0.shape != (spec.universe_size,):
        raise ValueError(f"f0 must have shape ({spec.universe_size},)")
    status, worth, scores, logliks = _run(params, spec, data, f0)
    if status != _kernels.OK:
        raise FilterDivergence(f"filtered worths diverged at period {status}", status)
    return FilterOutput(worth, scores, logliks, float(logliks.sum()), f0)


def total_loglik(params: ParameterVector, spec: ModelSpec, data: PanelDataset) -> float:
    """Summed log-likelihood, or -inf where the recursion diverges."""
    try:
        f0 = initial_worth(params, spec)
    except ValueError:
        return -np.inf
    status, _, _, logliks = _run(params, spec, data, f0)
    if status != _kernels.OK:
        return -np.inf
    return float(logliks.sum())
