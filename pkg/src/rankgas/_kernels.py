"""Compiled inner loops shared by the distribution and the filter.

Every kernel works on dense 0-based item indices. An ordering is an int64
array whose first ``n_ranked`` entries are the ranked items, best first.
``active`` marks the items that take part in the stage denominators; items
outside it get a zero score and never enter the likelihood.
"""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf

# filter_kernel returns OK, or the index of the period that diverged
OK = -1


@njit(cache=True, inline="always")
def _logaddexp(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def loglik_score(f, order, n_ranked, active, rank_pos, log_denom, out_score):
    """Log-probability of one (partial) ordering and its score.

    ``rank_pos`` and ``log_denom`` are scratch buffers of length N. The score
    is written into ``out_score``; the log-probability is returned.
    """
    n = f.shape[0]
    for i in range(n):
        rank_pos[i] = -1
    for j in range(n_ranked):
        rank_pos[order[j]] = j

    # log of the pooled weight of active, unranked items
    log_pool = NEG_INF
    for i in range(n):
        if active[i] and rank_pos[i] < 0:
            log_pool = _logaddexp(log_pool, f[i])

    # backward pass: log_denom[j] = log(sum_{k>=j} w_order[k] + pool)
    acc = log_pool
    for j in range(n_ranked - 1, -1, -1):
        acc = _logaddexp(acc, f[order[j]])
        log_denom[j] = acc

    loglik = 0.0
    for j in range(n_ranked):
        loglik += f[order[j]] - log_denom[j]

    # forward pass: cumulative log(sum_{j'<=j} 1/denom_j'), stored in place
    acc = NEG_INF
    for j in range(n_ranked):
        acc = _logaddexp(acc, -log_denom[j])
        log_denom[j] = acc

    for i in range(n):
        if not active[i]:
            out_score[i] = 0.0
        elif rank_pos[i] >= 0:
            out_score[i] = 1.0 - math.exp(f[i] + log_denom[rank_pos[i]])
        elif n_ranked > 0:
            out_score[i] = -math.exp(f[i] + log_denom[n_ranked - 1])
        else:
            out_score[i] = 0.0
    return loglik


@njit(cache=True)
def batch_loglik_score(f, orders, n_ranked, active, out_loglik, out_score):
    """Evaluate many orderings under one worth vector."""
    n = f.shape[0]
    rank_pos = np.empty(n, dtype=np.int64)
    log_denom = np.empty(n, dtype=np.float64)
    for r in range(orders.shape[0]):
        out_loglik[r] = loglik_score(
            f, orders[r], n_ranked[r], active, rank_pos, log_denom, out_score[r]
        )


@njit(cache=True)
def filter_kernel(
    omega,
    beta,
    alpha,
    phi,
    covariates,
    orders,
    n_ranked,
    active,
    zero_score,
    f_init,
    bound,
    worth_path,
    score_path,
    loglik_path,
):
    """Run the score-driven recursion over all periods.

    ``covariates`` has shape (T, N, M); ``active`` has shape (T, N). When
    ``zero_score`` is set, scores of inactive items are zero (the likelihood
    kernel already yields that). ``f_init`` holds the pre-sample worth used
    for every lag. Stops at the first period where any |f| exceeds ``bound``
    or is not finite and returns that period's index.
    """
    n_periods, n = worth_path.shape
    m = beta.shape[0]
    p = alpha.shape[0]
    q = phi.shape[0]
    rank_pos = np.empty(n, dtype=np.int64)
    log_denom = np.empty(n, dtype=np.float64)
    all_active = np.ones(n, dtype=np.bool_)

    for t in range(n_periods):
        for i in range(n):
            val = omega[i]
            for j in range(m):
                val += beta[j] * covariates[t, i, j]
            for k in range(p):
                s = t - 1 - k
                if s >= 0:
                    val += alpha[k] * score_path[s, i]
            for lag in range(q):
                s = t - 1 - lag
                if s >= 0:
                    val += phi[lag] * worth_path[s, i]
                else:
                    val += phi[lag] * f_init[i]
            if not (abs(val) <= bound):
                return t
            worth_path[t, i] = val

        act = active[t] if zero_score else all_active
        loglik_path[t] = loglik_score(
            worth_path[t], orders[t], n_ranked[t], act, rank_pos, log_denom,
            score_path[t],
        )
    return OK


@njit(cache=True)
def sequential_draws(f, available, top, uniforms, out):
    """Sequential selection for a batch of draws.

    ``f`` holds log-worths; ``available`` (N,) marks the items eligible for
    selection. Each stage shifts by the largest remaining worth before
    exponentiating. ``uniforms`` has shape (R, top); ``out`` receives item
    indices, best first.
    """
    n = f.shape[0]
    n_draws = uniforms.shape[0]
    taken = np.empty(n, dtype=np.bool_)
    w = np.empty(n, dtype=np.float64)
    for r in range(n_draws):
        for i in range(n):
            taken[i] = not available[i]
        for stage in range(top):
            top_f = NEG_INF
            for i in range(n):
                if not taken[i] and f[i] > top_f:
                    top_f = f[i]
            total = 0.0
            for i in range(n):
                if taken[i]:
                    w[i] = 0.0
                else:
                    w[i] = math.exp(f[i] - top_f)
                    total += w[i]
            target = uniforms[r, stage] * total
            acc = 0.0
            pick = -1
            for i in range(n):
                if not taken[i]:
                    pick = i
                    acc += w[i]
                    if acc > target:
                        break
            out[r, stage] = pick
            taken[pick] = True
