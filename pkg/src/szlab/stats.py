"""Two-sided Wilcoxon rank-sum (Mann-Whitney U) test."""
from __future__ import annotations

import itertools
import math

import numpy as np

EXACT_MAX_N = 12


def rankdata(values) -> np.ndarray:
    """Ranks starting at 1; tied values share the mean of their ranks."""
    a = np.asarray(values, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a))
    sa = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def mann_whitney_u(sample_a, sample_b, exact: bool | None = None) -> tuple[float, float]:
    """Return ``(U, p)`` for the two-sided rank-sum test.

    ``U`` counts pairs with ``a > b`` (ties count one half).  The p-value is
    exact (enumeration over all splits of the pooled ranks) when
    ``n1 + n2 <= 12``; otherwise a normal approximation with tie and
    continuity correction is used.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    ranks = rankdata(np.concatenate([a, b]))
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    if exact is None:
        exact = n1 + n2 <= EXACT_MAX_N
    if exact:
        return u, _exact_p(ranks, n1, u)
    return u, _normal_p(ranks, n1, n2, u)


def _exact_p(ranks, n1, u_obs):
    n = len(ranks)
    mean = n1 * (n - n1) / 2.0
    offset = n1 * (n1 + 1) / 2.0
    dev_obs = abs(u_obs - mean)
    hits = total = 0
    # ranks are multiples of 1/2, so compare deviations with a small slack
    for combo in itertools.combinations(range(n), n1):
        dev = abs(sum(ranks[i] for i in combo) - offset - mean)
        total += 1
        if dev >= dev_obs - 1e-9:
            hits += 1
    return min(1.0, hits / total)


def _normal_p(ranks, n1, n2, u):
    n = n1 + n2
    _, counts = np.unique(ranks, return_counts=True)
    tie = float(np.sum(counts ** 3 - counts))
    var = n1 * n2 / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return 1.0
    dev = abs(u - n1 * n2 / 2.0)
    z = max(dev - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))
