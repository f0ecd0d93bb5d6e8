"""One-step-ahead worths, predicted rankings and ranking-event probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .estimation import FitResult
from .plackett_luce import sample_many

__all__ = [
    "predict_worth",
    "predicted_ranking",
    "winner_probabilities",
    "RankingEvent",
    "EventProbability",
    "event_probability",
    "MAX_TUPLES",
]

MAX_TUPLES = 10**6


def predict_worth(fit: FitResult, next_covariates=None) -> np.ndarray:
    """Worths for period T+1 from one more step of the recursion.

    Args:
        fit: A fitted model; its filter holds the last scores and worths.
        next_covariates: (N, M) covariate values at T+1; zeros when omitted.
    """
    spec, params, filt = fit.spec, fit.params, fit.filter
    n, m = spec.universe_size, spec.covariate_count
    if next_covariates is None:
        x = np.zeros((n, m))
    else:
        x = np.asarray(next_covariates, dtype=np.float64)
        if m == 1 and x.shape == (n,):
            x = x[:, None]
        if x.shape != (n, m):
            raise ValueError(f"next covariates must have shape ({n}, {m}), got {x.shape}")
    t_len = filt.worth_path.shape[0]
    f = params.omega + x @ params.beta
    for k in range(spec.score_order):
        if t_len - 1 - k >= 0:
            f = f + params.alpha[k] * filt.score_path[t_len - 1 - k]
    for lag in range(spec.ar_order):
        prev = filt.worth_path[t_len - 1 - lag] if t_len - 1 - lag >= 0 else filt.initial_worth
        f = f + params.phi[lag] * prev
    return f


def _participant_list(f: np.ndarray, participants) -> list[int]:
    if participants is None:
        return list(range(f.shape[0]))
    items = [int(i) for i in participants]
    if not items:
        raise ValueError("participants must be non-empty")
    if len(set(items)) != len(items) or any(not 0 <= i < f.shape[0] for i in items):
        raise ValueError("participants must be distinct valid item indices")
    return items


def predicted_ranking(f, participants: Sequence[int] | None = None) -> list[int]:
    """Participants sorted by worth, highest first; ties go to the lower index."""
    f = np.asarray(f, dtype=np.float64)
    items = _participant_list(f, participants)
    return sorted(items, key=lambda i: (-f[i], i))


def winner_probabilities(f, participants: Sequence[int] | None = None) -> dict[int, float]:
    f = np.asarray(f, dtype=np.float64)
    items = _participant_list(f, participants)
    w = np.exp(f[items] - f[items].max())
    w /= w.sum()
    return dict(zip(items, w.tolist()))


@dataclass(frozen=True)
class RankingEvent:
    """An event about the next ranking among a known set of participants.

    ``kind`` is ``"order"`` (the given items take the top places in the
    given order), ``"top"`` (``item`` finishes within the first ``k``) or
    ``"rank"`` (``item`` finishes exactly at position ``k``).
    """

    kind: str
    participants: tuple[int, ...]
    items: tuple[int, ...]
    k: int = 0

    def __post_init__(self):
        parts = tuple(int(i) for i in self.participants)
        items = tuple(int(i) for i in self.items)
        object.__setattr__(self, "participants", parts)
        object.__setattr__(self, "items", items)
        if not parts or len(set(parts)) != len(parts):
            raise ValueError("participants must be a non-empty set of items")
        missing = [i for i in items if i not in parts]
        if missing:
            raise ValueError(f"event references non-participants {missing}")
        if self.kind == "order":
            if not items or len(set(items)) != len(items):
                raise ValueError("an ordering event needs distinct items")
        elif self.kind in ("top", "rank"):
            if len(items) != 1:
                raise ValueError(f"a {self.kind} event refers to exactly one item")
            if not 1 <= self.k <= len(parts):
                raise ValueError(f"position {self.k} outside 1..{len(parts)}")
        else:
            raise ValueError(f"unknown event kind {self.kind!r}")

    @classmethod
    def ordering(cls, items: Sequence[int], participants: Sequence[int]) -> "RankingEvent":
        return cls("order", tuple(participants), tuple(items))

    @classmethod
    def in_top(cls, item: int, k: int, participants: Sequence[int]) -> "RankingEvent":
        return cls("top", tuple(participants), (item,), k)

    @classmethod
    def at_rank(cls, item: int, r: int, participants: Sequence[int]) -> "RankingEvent":
        return cls("rank", tuple(participants), (item,), r)

    @property
    def depth(self) -> int:
        return len(self.items) if self.kind == "order" else self.k


@dataclass(frozen=True)
class EventProbability:
    probability: float
    std_error: float = 0.0
    method: str = "exact"

    def __float__(self) -> float:
        return self.probability


def _n_tuples(n: int, depth: int) -> int:
    return math.perm(n, depth)


def _rank_distribution(w: np.ndarray, target: int, depth: int) -> np.ndarray:
    """P[target lands at position r] for r = 1..depth by prefix enumeration."""
    out = np.zeros(depth)
    others = [i for i in range(w.size) if i != target]

    def walk(total, prob, d, used):
        out[d] += prob * w[target] / total
        if d + 1 == depth:
            return
        for j in others:
            if not used[j]:
                used[j] = True
                walk(total - w[j], prob * w[j] / total, d + 1, used)
                used[j] = False

    walk(float(w.sum()), 1.0, 0, np.zeros(w.size, dtype=bool))
    return out


def event_probability(
    f,
    event: RankingEvent,
    max_tuples: int = MAX_TUPLES,
    n_draws: int = 10**6,
    rng: np.random.Generator | None = None,
) -> EventProbability:
    """Probability of ``event`` under worths ``f`` restricted to participants.

    Ordering events are evaluated in closed form. Top-k and at-rank events
    sum over all ordered prefixes when there are at most ``max_tuples`` of
    them and fall back to ``n_draws`` simulated rankings otherwise.
    """
    f = np.ascontiguousarray(f, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise ValueError("worth vector contains non-finite values")
    n = f.shape[0]
    parts = list(event.participants)
    if any(not 0 <= i < n for i in parts):
        raise ValueError("participants must be valid item indices")
    mask = np.zeros(n, dtype=np.bool_)
    mask[parts] = True

    if event.kind == "order":
        order = np.full(n, -1, dtype=np.int64)
        order[: len(event.items)] = event.items
        loglik = _kernels.loglik_score(
            f, order, len(event.items), mask, np.empty(n, dtype=np.int64),
            np.empty(n), np.empty(n),
        )
        return EventProbability(math.exp(loglik))

    item = event.items[0]
    if _n_tuples(len(parts), event.k) <= max_tuples:
        sub = f[parts]
        w = np.exp(sub - sub.max())
        dist = _rank_distribution(w, parts.index(item), event.k)
        p = float(dist.sum()) if event.kind == "top" else float(dist[-1])
        return EventProbability(min(max(p, 0.0), 1.0))

    rng = np.random.default_rng() if rng is None else rng
    draws = sample_many(f, n_draws, top=event.k, rng=rng, available=mask)
    if event.kind == "top":
        hits = (draws == item).any(axis=1)
    else:
        hits = draws[:, -1] == item
    p = float(hits.mean())
    return EventProbability(p, math.sqrt(p * (1.0 - p) / n_draws), "monte-carlo")
