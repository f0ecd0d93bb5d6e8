"""Plackett-Luce distribution on complete and partial rankings.

Items are 0-based integer indices. A :class:`Ranking` stores the ordering,
i.e. the ranked items listed best first; items missing from the ordering are
unranked and implicitly below every ranked item.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels

__all__ = [
    "Ranking",
    "log_pmf",
    "pmf",
    "score",
    "sample",
    "sample_many",
    "evaluate_many",
    "fisher_information",
    "MAX_ENUMERATION_ITEMS",
]

MAX_ENUMERATION_ITEMS = 8


@dataclass(frozen=True)
class Ranking:
    """A (possibly partial) ranking of ``universe_size`` items.

    Args:
        universe_size: Number of items N.
        ordering: Distinct item indices in ``[0, N)``, best first.
    """

    universe_size: int
    ordering: tuple[int, ...]

    def __init__(self, universe_size: int, ordering: Sequence[int]):
        ordering = tuple(int(i) for i in ordering)
        if universe_size < 1:
            raise ValueError(f"universe_size must be positive, got {universe_size}")
        if not 1 <= len(ordering) <= universe_size:
            raise ValueError(
                f"ordering must rank between 1 and {universe_size} items, "
                f"got {len(ordering)}"
            )
        if len(set(ordering)) != len(ordering):
            raise ValueError(f"ordering contains duplicate items: {ordering}")
        bad = [i for i in ordering if not 0 <= i < universe_size]
        if bad:
            raise ValueError(f"items {bad} outside [0, {universe_size})")
        object.__setattr__(self, "universe_size", int(universe_size))
        object.__setattr__(self, "ordering", ordering)

    @property
    def n_ranked(self) -> int:
        return len(self.ordering)

    @property
    def is_complete(self) -> bool:
        return len(self.ordering) == self.universe_size

    def rank(self, item: int) -> int | None:
        """1-based rank of ``item``, or None when it is unranked."""
        try:
            return self.ordering.index(item) + 1
        except ValueError:
            return None

    def as_array(self) -> np.ndarray:
        """Ordering padded with -1 to length N."""
        out = np.full(self.universe_size, -1, dtype=np.int64)
        out[: self.n_ranked] = self.ordering
        return out


def _check_worths(ranking: Ranking, f) -> np.ndarray:
    f = np.ascontiguousarray(f, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != ranking.universe_size:
        raise ValueError(
            f"worth vector has shape {f.shape}, expected ({ranking.universe_size},)"
        )
    if not np.all(np.isfinite(f)):
        raise ValueError("worth vector contains non-finite values")
    return f


def _evaluate(ranking: Ranking, f) -> tuple[float, np.ndarray]:
    f = _check_worths(ranking, f)
    n = ranking.universe_size
    out = np.empty(n)
    loglik = _kernels.loglik_score(
        f,
        ranking.as_array(),
        ranking.n_ranked,
        np.ones(n, dtype=np.bool_),
        np.empty(n, dtype=np.int64),
        np.empty(n),
        out,
    )
    return loglik, out


def log_pmf(ranking: Ranking, f) -> float:
    """Log-probability of ``ranking`` under worths ``f``.

    Unranked items enter every stage denominator, so for a partial ranking
    this is the probability that the ranked items fill the top positions in
    the given order.
    """
    return _evaluate(ranking, f)[0]


def pmf(ranking: Ranking, f) -> float:
    return math.exp(log_pmf(ranking, f))


def score(ranking: Ranking, f) -> np.ndarray:
    """Gradient of :func:`log_pmf` with respect to the worths."""
    return _evaluate(ranking, f)[1]


def sample(f, top: int | None = None, rng: np.random.Generator | None = None) -> Ranking:
    """Draw one ranking by sequential selection of the best remaining item.

    Args:
        f: Worth vector.
        top: Number of positions to fill (defaults to a complete ranking).
        rng: Random generator; a fresh default one is used when omitted.
    """
    f = np.ascontiguousarray(f, dtype=np.float64)
    n = f.shape[0]
    top = n if top is None else int(top)
    if not 1 <= top <= n:
        raise ValueError(f"top must lie in [1, {n}], got {top}")
    if not np.all(np.isfinite(f)):
        raise ValueError("worth vector contains non-finite values")
    rng = np.random.default_rng() if rng is None else rng
    orders = sample_many(f, 1, top=top, rng=rng)
    return Ranking(n, orders[0])


def sample_many(
    f,
    size: int,
    top: int | None = None,
    rng: np.random.Generator | None = None,
    available=None,
) -> np.ndarray:
    """Draw ``size`` orderings at once; returns an int array (size, top).

    ``available`` optionally restricts selection to a subset of items, which
    then form the whole pool (the others can never be drawn).
    """
    f = np.ascontiguousarray(f, dtype=np.float64)
    n = f.shape[0]
    if available is None:
        available = np.ones(n, dtype=np.bool_)
    else:
        available = np.asarray(available, dtype=np.bool_)
    n_avail = int(available.sum())
    top = n_avail if top is None else int(top)
    if not 1 <= top <= n_avail:
        raise ValueError(f"top must lie in [1, {n_avail}], got {top}")
    rng = np.random.default_rng() if rng is None else rng
    uniforms = rng.random((size, top))
    out = np.empty((size, top), dtype=np.int64)
    _kernels.sequential_draws(f, available, top, uniforms, out)
    return out


def evaluate_many(f, orders) -> tuple[np.ndarray, np.ndarray]:
    """Log-probabilities and scores for a batch of complete orderings.

    ``orders`` is an int array (R, N); returns arrays of shape (R,) and (R, N).
    """
    f = np.ascontiguousarray(f, dtype=np.float64)
    orders = np.ascontiguousarray(orders, dtype=np.int64)
    n = f.shape[0]
    if orders.ndim != 2 or orders.shape[1] != n:
        raise ValueError(f"orders must have shape (R, {n}), got {orders.shape}")
    logliks = np.empty(orders.shape[0])
    scores = np.empty(orders.shape)
    _kernels.batch_loglik_score(
        f, orders, np.full(orders.shape[0], n, dtype=np.int64),
        np.ones(n, dtype=np.bool_), logliks, scores,
    )
    return logliks, scores


def fisher_information(f) -> np.ndarray:
    """Fisher information E[score score'] by enumerating all N! rankings.

    Only meant as a reference value; the cost grows factorially and the
    function refuses universes larger than ``MAX_ENUMERATION_ITEMS``.
    """
    f = np.ascontiguousarray(f, dtype=np.float64)
    n = f.shape[0]
    if n > MAX_ENUMERATION_ITEMS:
        raise ValueError(
            f"enumeration over {n}! rankings refused (limit N={MAX_ENUMERATION_ITEMS})"
        )
    if not np.all(np.isfinite(f)):
        raise ValueError("worth vector contains non-finite values")
    orders = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    logliks, scores = evaluate_many(f, orders)
    probs = np.exp(logliks)
    info = (scores * probs[:, None]).T @ scores
    return 0.5 * (info + info.T)
