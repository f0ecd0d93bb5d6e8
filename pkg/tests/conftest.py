import itertools

import mpmath
import numpy as np
import pytest

ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    """Record a verdict; ``passed`` may also be a status word such as "NOT RUN"."""
    status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
    line = f"criterion {number}: {status} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def ref_pmf(ordering, f):
    """Straight product of stage probabilities in 50-digit arithmetic."""
    with mpmath.workdps(50):
        w = [mpmath.e ** mpmath.mpf(float(x)) for x in f]
        ranked = list(ordering)
        unranked = [i for i in range(len(f)) if i not in ranked]
        prob = mpmath.mpf(1)
        for j, item in enumerate(ranked):
            denom = sum(w[k] for k in ranked[j:]) + sum(w[l] for l in unranked)
            prob *= w[item] / denom
        return prob


def ref_score(ordering, f):
    """Score written out stage by stage in plain floats."""
    f = np.asarray(f, dtype=float)
    n = len(f)
    ranked = list(ordering)
    unranked = [i for i in range(n) if i not in ranked]
    w = np.exp(f)
    out = np.zeros(n)
    for i in range(n):
        stages = ranked.index(i) + 1 if i in ranked else len(ranked)
        total = 0.0
        for j in range(stages):
            denom = w[ranked[j:]].sum() + w[unranked].sum()
            total += w[i] / denom
        out[i] = (1.0 if i in ranked else 0.0) - total
    return out


def all_orderings(n):
    return list(itertools.permutations(range(n)))


def fd_gradient(func, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        up, down = x.copy(), x.copy()
        up[k] += step
        down[k] -= step
        g[k] = (func(up) - func(down)) / (2 * step)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


STUDY_HORIZONS = (10, 20, 50, 100)
STUDY_REPLICATIONS = 500


@pytest.fixture(scope="session")
def design_study():
    """The full-size replication study, shared by every test that needs it."""
    import time

    from rankgas.simulation import SimulationDesign, replication_study

    design = SimulationDesign(item_counts=(20,), horizons=STUDY_HORIZONS,
                              replications=STUDY_REPLICATIONS, seed=0)
    start = time.perf_counter()
    report = replication_study(design)
    return report, time.perf_counter() - start
