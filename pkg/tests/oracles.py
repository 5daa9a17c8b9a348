"""Independent reference implementations used only by tests.

Each oracle deliberately takes the slow, literal route (pair enumeration,
explicit sums of squares, plain DP loops) so the production code is
checked by arithmetic it does not share.
"""

import math

import numpy as np
from scipy.stats import f_oneway


def alpha_bruteforce(values) -> float:
    """Interval alpha by enumerating every pairable value pair."""
    rows = [[v for v in row if not (isinstance(v, float) and math.isnan(v))]
            for row in np.asarray(values, dtype=float).tolist()]
    rows = [r for r in rows if len(r) >= 2]
    pooled = [v for r in rows for v in r]
    n = len(pooled)
    d_o = 0.0
    for r in rows:
        within = 0.0
        for i in range(len(r)):
            for j in range(len(r)):
                within += (r[i] - r[j]) ** 2
        d_o += within / (len(r) - 1)
    d_o /= n
    d_e = 0.0
    for i in range(n):
        for j in range(n):
            d_e += (pooled[i] - pooled[j]) ** 2
    d_e /= n * (n - 1)
    if d_o == 0.0:
        return 1.0
    return 1.0 - d_o / d_e


def icc31_ss(grid) -> float:
    """ICC(3,1) from SS_total, SS_rows, SS_cols computed by explicit loops."""
    grid = np.asarray(grid, dtype=float)
    n, k = grid.shape
    grand = grid.sum() / (n * k)
    ss_total = 0.0
    for i in range(n):
        for j in range(k):
            ss_total += (grid[i, j] - grand) ** 2
    ss_rows = 0.0
    for i in range(n):
        row_mean = grid[i].sum() / k
        ss_rows += k * (row_mean - grand) ** 2
    ss_cols = 0.0
    for j in range(k):
        col_mean = grid[:, j].sum() / n
        ss_cols += n * (col_mean - grand) ** 2
    ss_error = ss_total - ss_rows - ss_cols
    ms_items = ss_rows / (n - 1)
    ms_error = ss_error / ((n - 1) * (k - 1))
    return (ms_items - ms_error) / (ms_items + (k - 1) * ms_error)


def naive_cluster_bootstrap(values_by_video: dict, n_boot: int, seed: int,
                            judge_index: int, rng_factory) -> tuple[float, float]:
    """Percentile CI endpoints from a row-by-row resampling loop. Shares
    the draw contract (rng_factory) but rebuilds every replicate naively."""
    videos = sorted(values_by_video)
    reps = []
    for b in range(n_boot):
        rng = rng_factory(seed, judge_index, b)
        idx = rng.integers(0, len(videos), len(videos))
        picked = []
        for i in idx:
            for v in values_by_video[videos[i]]:
                picked.append(v)
        reps.append(math.fsum(picked) / len(picked))
    lo, hi = np.percentile(np.array(reps), [2.5, 97.5])
    return float(lo), float(hi)


def anova_oracle(groups) -> tuple[float, float, float]:
    """(F, p, eta^2): F and p from scipy's one-way ANOVA, eta^2 from the
    textbook SS ratio computed with loops."""
    res = f_oneway(*groups)
    pooled = [v for g in groups for v in g]
    grand = sum(pooled) / len(pooled)
    ss_between = 0.0
    ss_total = 0.0
    for g in groups:
        gm = sum(g) / len(g)
        ss_between += len(g) * (gm - grand) ** 2
    for v in pooled:
        ss_total += (v - grand) ** 2
    return float(res.statistic), float(res.pvalue), ss_between / ss_total


def plain_edit_distance(a: str, b: str) -> int:
    """Textbook full-table Levenshtein."""
    la, lb = len(a), len(b)
    dp = [[0] * (lb + 1) for _ in range(la + 1)]
    for i in range(la + 1):
        dp[i][0] = i
    for j in range(lb + 1):
        dp[0][j] = j
    for i in range(1, la + 1):
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            dp[i][j] = min(dp[i - 1][j] + 1, dp[i][j - 1] + 1, dp[i - 1][j - 1] + cost)
    return dp[la][lb]


def best_window_distance(needle: str, haystack: str) -> int:
    """Min Levenshtein distance to any substring, by trying all substrings
    (bounded window lengths around len(needle) for tractability)."""
    n = len(needle)
    best = n  # empty substring
    max_pad = min(n, 6)
    for start in range(len(haystack)):
        for length in range(max(0, n - max_pad), min(len(haystack) - start, n + max_pad) + 1):
            d = plain_edit_distance(needle, haystack[start:start + length])
            if d < best:
                best = d
    return best


def spearman_manual(x, y) -> float:
    """Average ranks by hand, then the covariance/sigma formula."""
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        r = [0.0] * len(v)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
                j += 1
            avg = (i + j) / 2.0 + 1.0
            for t in range(i, j + 1):
                r[order[t]] = avg
            i = j + 1
        return r

    rx, ry = ranks(list(x)), ranks(list(y))
    n = len(rx)
    mx = sum(rx) / n
    my = sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sx = math.sqrt(sum((a - mx) ** 2 for a in rx))
    sy = math.sqrt(sum((b - my) ** 2 for b in ry))
    return cov / (sx * sy)


def pearson_manual(x, y) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sx = math.sqrt(sum((a - mx) ** 2 for a in x))
    sy = math.sqrt(sum((b - my) ** 2 for b in y))
    return cov / (sx * sy)
