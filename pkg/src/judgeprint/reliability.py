"""Within-judge stability and dispositional severity.

ICC(3,1) is the two-way consistency intraclass correlation for single
measurements: items are (video, pack) pairs, columns are runs. Harshness
is a record's deviation from the panel mean for the same (video, pack,
run); summaries carry 95% percentile intervals from a video-cluster
bootstrap. Replicate means use exactly-rounded summation (math.fsum) so
they do not depend on accumulation order, which lets an independent
naive bootstrap reproduce them bit for bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .agreement import UndefinedStatisticError, _is_constant
from .corpus import DIMENSIONS, Corpus, CorpusError

log = logging.getLogger(__name__)


@dataclass
class IccResult:
    judge_id: str
    icc: float
    n_items: int
    k_runs: int
    ms_items: float
    ms_error: float
    n_dropped_items: int = 0


@dataclass
class HarshnessRow:
    judge_id: str
    video_id: str
    pack_id: str
    run_id: int
    harshness: float
    per_dimension_harshness: dict[str, float]


@dataclass
class HarshnessSummary:
    judge_id: str
    mean_harshness: float
    ci_low: float
    ci_high: float
    n_boot: int
    seed: int
    n_videos: int
    degenerate: bool = False


@dataclass
class AnovaResult:
    group_key: tuple[str, str]  # (judge/model, video)
    f_stat: float
    p_value: float
    eta_squared: float
    significant_bonferroni: bool
    adjusted_alpha: float
    n_groups: int
    n_obs: int
    defined: bool = True


def _judge_grid(corpus: Corpus, judge_id: str) -> tuple[np.ndarray, int]:
    """Items x runs grid for one judge; items missing any run are dropped."""
    runs = sorted({r.run_id for r in corpus.records if r.judge_id == judge_id})
    per_item: dict[tuple[str, str], dict[int, float]] = {}
    for r in corpus.records:
        if r.judge_id != judge_id:
            continue
        per_item.setdefault((r.video_id, r.pack_id), {})[r.run_id] = r.overall_score
    complete = [k for k in sorted(per_item) if set(per_item[k]) == set(runs)]
    dropped = len(per_item) - len(complete)
    if dropped:
        log.info("icc31(%s): dropped %d items with missing runs", judge_id, dropped)
    grid = np.array([[per_item[k][run] for run in runs] for k in complete], dtype=float)
    return grid, dropped


def icc31(corpus: Corpus, judge_id: str) -> IccResult:
    """ICC(3,1) for one judge across repeated runs.

    Two-way decomposition with item and run effects removed; the residual
    sum of squares is computed from the residuals directly (no subtraction
    of large aggregates), so identical run columns give an exact 1.0.
    """
    if judge_id not in corpus.judges:
        raise CorpusError(f"unknown judge {judge_id!r}")
    grid, dropped = _judge_grid(corpus, judge_id)
    n, k = grid.shape if grid.size else (0, 0)
    if n < 2 or k < 2:
        raise UndefinedStatisticError(
            f"icc31 undefined for {judge_id}: needs >= 2 items and >= 2 runs, got {n} x {k}")

    grand = grid.mean()
    row_means = grid.mean(axis=1)
    col_means = grid.mean(axis=0)
    ss_items = k * float(((row_means - grand) ** 2).sum())
    resid = grid - row_means[:, None] - col_means[None, :] + grand
    ss_error = float((resid ** 2).sum())
    ss_total = float(((grid - grand) ** 2).sum())
    if ss_error < 1e-12 * (1.0 + ss_total):
        ss_error = 0.0

    ms_items = ss_items / (n - 1)
    ms_error = ss_error / ((n - 1) * (k - 1))
    denom = ms_items + (k - 1) * ms_error
    if denom <= 0.0:
        raise UndefinedStatisticError(f"icc31 undefined for {judge_id}: no variance at all")
    return IccResult(judge_id=judge_id, icc=(ms_items - ms_error) / denom,
                     n_items=n, k_runs=k, ms_items=ms_items, ms_error=ms_error,
                     n_dropped_items=dropped)


def harshness_rows(corpus: Corpus) -> list[HarshnessRow]:
    """Per-record deviation from the across-judge mean of the same
    (video, pack, run) panel, for the overall score and each dimension.
    Panels must be complete (intersection-filtered)."""
    expected = set(corpus.judges)
    rows: list[HarshnessRow] = []
    panels = corpus.panels()
    means: dict[tuple, tuple[float, dict[str, float]]] = {}
    for key, recs in panels.items():
        present = {r.judge_id for r in recs}
        if present != expected:
            raise CorpusError(
                f"incomplete panel {key}: judges {sorted(expected - present)} missing; "
                "run intersection_filter first")
        m_overall = math.fsum(r.overall_score for r in recs) / len(recs)
        m_dims = {d: math.fsum(r.dimension_scores[d] for r in recs) / len(recs) for d in DIMENSIONS}
        means[key] = (m_overall, m_dims)
    for r in corpus.records:
        m_overall, m_dims = means[r.item_key]
        rows.append(HarshnessRow(
            judge_id=r.judge_id, video_id=r.video_id, pack_id=r.pack_id, run_id=r.run_id,
            harshness=r.overall_score - m_overall,
            per_dimension_harshness={d: r.dimension_scores[d] - m_dims[d] for d in DIMENSIONS},
        ))
    return rows


def bootstrap_rng(seed: int, judge_index: int, replicate: int) -> np.random.Generator:
    """Replicate RNG stream: deterministic in (seed, judge index, replicate),
    so serial and parallel execution draw identically."""
    return np.random.default_rng(np.random.SeedSequence([seed, judge_index, replicate]))


def harshness_summary(rows: list[HarshnessRow], n_boot: int = 2000,
                      seed: int = 0) -> list[HarshnessSummary]:
    """Per-judge mean harshness with a 95% video-cluster bootstrap
    percentile interval: videos are resampled with replacement and every
    row of a drawn video enters the replicate (duplicates duplicated)."""
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    per_judge: dict[str, dict[str, list[float]]] = {}
    for row in rows:
        per_judge.setdefault(row.judge_id, {}).setdefault(row.video_id, []).append(row.harshness)

    out: list[HarshnessSummary] = []
    for jdx, judge in enumerate(sorted(per_judge)):
        videos = sorted(per_judge[judge])
        vals = [per_judge[judge][v] for v in videos]
        all_vals = [x for vv in vals for x in vv]
        mean = math.fsum(all_vals) / len(all_vals)
        degenerate = len(videos) < 2
        if degenerate:
            log.warning("harshness CI degenerate for %s: rows in < 2 videos", judge)
        reps = np.empty(n_boot)
        for b in range(n_boot):
            rng = bootstrap_rng(seed, jdx, b)
            idx = rng.integers(0, len(videos), len(videos))
            picked = [x for i in idx for x in vals[i]]
            reps[b] = math.fsum(picked) / len(picked)
        lo, hi = np.percentile(reps, [2.5, 97.5])
        out.append(HarshnessSummary(judge_id=judge, mean_harshness=mean,
                                    ci_low=float(lo), ci_high=float(hi),
                                    n_boot=n_boot, seed=seed, n_videos=len(videos),
                                    degenerate=degenerate))
    return out


def dimension_emphasis(corpus: Corpus) -> dict[tuple[str, str], float]:
    """Mean per-dimension harshness per judge: the 'shape' of severity."""
    rows = harshness_rows(corpus)
    acc: dict[tuple[str, str], list[float]] = {}
    for row in rows:
        for d, v in row.per_dimension_harshness.items():
            acc.setdefault((row.judge_id, d), []).append(v)
    return {k: math.fsum(v) / len(v) for k, v in sorted(acc.items())}


def harshness_profile_correlation(a: dict[str, float], b: dict[str, float]) -> float:
    """Pearson correlation of two per-judge mean-harshness vectors."""
    if set(a) != set(b):
        raise ValueError(f"judge sets differ: {sorted(set(a) ^ set(b))}")
    judges = sorted(a)
    va = np.array([a[j] for j in judges])
    vb = np.array([b[j] for j in judges])
    if _is_constant(va) or _is_constant(vb):
        raise UndefinedStatisticError("profile correlation undefined: zero variance")
    return float(np.corrcoef(va, vb)[0, 1])


def f_sf(f_stat: float, d1: int, d2: int) -> float:
    """Upper tail of the F distribution via the regularized incomplete
    beta function: P(F > f) = I_{d2/(d2 + d1 f)}(d2/2, d1/2)."""
    if math.isinf(f_stat):
        return 0.0
    if f_stat <= 0.0:
        return 1.0
    x = d2 / (d2 + d1 * f_stat)
    return float(betainc(d2 / 2.0, d1 / 2.0, x))


def one_way_anova(groups: list[np.ndarray]) -> tuple[float, float, float]:
    """(F, p, eta^2) for a one-way layout; groups are 1-d value arrays."""
    g = len(groups)
    if g < 2 or any(len(x) < 2 for x in groups):
        raise UndefinedStatisticError("anova needs >= 2 groups with >= 2 observations each")
    pooled = np.concatenate(groups)
    n = pooled.size
    grand = pooled.mean()
    ss_between = math.fsum(len(x) * (x.mean() - grand) ** 2 for x in groups)
    ss_within = math.fsum(float(((x - x.mean()) ** 2).sum()) for x in groups)
    ss_total = ss_between + ss_within
    if _is_constant(pooled):
        raise UndefinedStatisticError("anova undefined: zero variance everywhere")
    d1, d2 = g - 1, n - g
    ms_between = ss_between / d1
    ms_within = ss_within / d2
    f_stat = math.inf if ms_within == 0.0 else ms_between / ms_within
    eta_sq = min(1.0, max(0.0, ss_between / ss_total))
    return f_stat, f_sf(f_stat, d1, d2), eta_sq


def temperature_anova(corpus: Corpus, family_size: int | None = None,
                      base_alpha: float = 0.05) -> list[AnovaResult]:
    """One-way ANOVA of overall score across temperature settings, per
    (judge, video), with Bonferroni correction across the family of tests."""
    cells: dict[tuple[str, str], dict[float, list[float]]] = {}
    for r in corpus.records:
        if r.temperature is None:
            continue
        cells.setdefault((r.judge_id, r.video_id), {}).setdefault(r.temperature, []).append(r.overall_score)
    eligible = {}
    for key in sorted(cells):
        groups = [np.array(v) for t, v in sorted(cells[key].items())]
        if len(groups) >= 2 and all(len(x) >= 2 for x in groups):
            eligible[key] = groups
        else:
            log.warning("temperature_anova: skipping %s (needs >= 2 groups of >= 2)", key)
    if not eligible:
        raise CorpusError("no (judge, video) cell has enough temperature groups")
    if family_size is None:
        family_size = len(eligible)
    adjusted = base_alpha / family_size

    out: list[AnovaResult] = []
    for key, groups in eligible.items():
        n_obs = sum(len(x) for x in groups)
        try:
            f_stat, p, eta = one_way_anova(groups)
        except UndefinedStatisticError:
            out.append(AnovaResult(group_key=key, f_stat=float("nan"), p_value=float("nan"),
                                   eta_squared=float("nan"), significant_bonferroni=False,
                                   adjusted_alpha=adjusted, n_groups=len(groups),
                                   n_obs=n_obs, defined=False))
            continue
        out.append(AnovaResult(group_key=key, f_stat=f_stat, p_value=p, eta_squared=eta,
                               significant_bonferroni=bool(p < adjusted),
                               adjusted_alpha=adjusted, n_groups=len(groups), n_obs=n_obs))
    return out
