"""Between-judge agreement: pairwise Spearman rank correlation on
run-averaged overall scores, and Krippendorff's interval alpha on the
rater x item matrix (overall and per dimension)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .corpus import DIMENSIONS, Corpus, CorpusError

log = logging.getLogger(__name__)

# scores are small rationals; "zero variance" means equal after rounding here
VARIANCE_DECIMALS = 12


class UndefinedStatisticError(ValueError):
    """A statistic has no defined value on this input (e.g. no variance)."""


@dataclass
class RaterMatrix:
    items: list  # item keys, row order
    raters: list[str]
    values: np.ndarray  # items x raters, NaN = missing


@dataclass
class PairwiseAgreementReport:
    rho: dict[tuple[str, str], float]  # keys sorted (a, b), a < b
    undefined_pairs: list[tuple[str, str]] = field(default_factory=list)

    @property
    def summary(self) -> dict[str, float]:
        vals = np.array(sorted(self.rho.values()))
        if vals.size == 0:
            return {"mean": float("nan"), "median": float("nan"),
                    "min": float("nan"), "max": float("nan")}
        return {"mean": float(vals.mean()), "median": float(np.median(vals)),
                "min": float(vals.min()), "max": float(vals.max())}


@dataclass
class AlphaReport:
    alpha_overall: float
    alpha_by_dimension: dict[str, float]
    observed_disagreement: float
    expected_disagreement: float


def overall_matrix(corpus: Corpus) -> RaterMatrix:
    """Rater x item matrix of overall scores; items are (video, pack, run)."""
    return _matrix(corpus, lambda r: r.overall_score)


def dimension_matrix(corpus: Corpus, dimension: str) -> RaterMatrix:
    if dimension not in DIMENSIONS:
        raise ValueError(f"unknown dimension {dimension!r}")
    return _matrix(corpus, lambda r: r.dimension_scores.get(dimension))


def _matrix(corpus: Corpus, value_fn) -> RaterMatrix:
    items = sorted({r.item_key for r in corpus.records})
    raters = list(corpus.judges)
    idx_i = {k: i for i, k in enumerate(items)}
    idx_r = {j: i for i, j in enumerate(raters)}
    values = np.full((len(items), len(raters)), np.nan)
    for r in corpus.records:
        v = value_fn(r)
        if v is not None:
            values[idx_i[r.item_key], idx_r[r.judge_id]] = float(v)
    return RaterMatrix(items=items, raters=raters, values=values)


def _is_constant(x: np.ndarray) -> bool:
    x = np.round(np.asarray(x, dtype=float), VARIANCE_DECIMALS)
    return bool(x.size == 0 or np.all(x == x[0]))


def _disagreement_sums(matrix) -> tuple[float, float, bool]:
    """(D_o, D_e, pooled_constant) under the interval metric.

    Sum over ordered value pairs of (v - v')^2 collapses to
    2*k*sum(v^2) - 2*(sum v)^2; constant groups are forced to an exact
    zero to avoid cancellation noise.
    """
    values = matrix.values if isinstance(matrix, RaterMatrix) else np.asarray(matrix, dtype=float)
    if values.ndim != 2 or values.shape[1] < 2:
        raise UndefinedStatisticError("alpha needs an items x raters matrix with >= 2 raters")
    rows = [row[~np.isnan(row)] for row in values]
    rows = [r for r in rows if r.size >= 2]
    if not rows:
        raise UndefinedStatisticError("no item has two or more pairable values")
    pooled = np.concatenate(rows)
    n = pooled.size
    d_o = 0.0
    for r in rows:
        if _is_constant(r):
            continue
        k = r.size
        d_o += max(0.0, 2.0 * k * float(np.dot(r, r)) - 2.0 * float(r.sum()) ** 2) / (k - 1)
    d_o /= n
    constant = _is_constant(pooled)
    if constant:
        d_e = 0.0
    else:
        d_e = max(0.0, 2.0 * n * float(np.dot(pooled, pooled)) - 2.0 * float(pooled.sum()) ** 2) / (n * (n - 1))
    return d_o, d_e, constant


def krippendorff_interval(matrix: RaterMatrix | np.ndarray) -> float:
    """Krippendorff's alpha with the interval metric d(v, v') = (v - v')^2.

    Missing cells follow the standard pairable-values rule: items with
    fewer than two values contribute nothing. Returns exactly 1.0 when
    there is no within-item disagreement; raises when all pairable values
    are identical (expected disagreement zero).
    """
    d_o, d_e, constant = _disagreement_sums(matrix)
    if constant:
        raise UndefinedStatisticError("alpha undefined: all pairable values identical (D_e = 0)")
    if d_o == 0.0:
        return 1.0
    return 1.0 - d_o / d_e


def alpha_components(matrix: RaterMatrix | np.ndarray) -> tuple[float, float]:
    """(D_o, D_e) for the interval alpha; both nonnegative."""
    d_o, d_e, _ = _disagreement_sums(matrix)
    return d_o, d_e


def run_averaged_overall(corpus: Corpus) -> tuple[list, list[str], np.ndarray]:
    """Items x judges grid of overall scores averaged over runs.
    Items are (video, pack). Requires a full panel (intersection-filtered)."""
    per: dict[tuple[str, str], dict[str, list[float]]] = {}
    for r in corpus.records:
        per.setdefault((r.video_id, r.pack_id), {}).setdefault(r.judge_id, []).append(r.overall_score)
    items = sorted(per)
    judges = list(corpus.judges)
    grid = np.empty((len(items), len(judges)))
    for i, it in enumerate(items):
        for j, judge in enumerate(judges):
            vals = per[it].get(judge)
            if not vals:
                raise CorpusError(f"judge {judge} missing item {it}: run intersection_filter first")
            grid[i, j] = float(np.mean(vals))
    return items, judges, grid


def spearman_pairwise(corpus: Corpus) -> PairwiseAgreementReport:
    """Pairwise Spearman rho on run-averaged overall scores (average ranks
    for ties). Pairs where either judge has zero score variance are
    flagged undefined and excluded from the summary."""
    items, judges, grid = run_averaged_overall(corpus)
    if len(items) < 3:
        raise CorpusError(f"need >= 3 items for rank correlation, got {len(items)}")
    rho: dict[tuple[str, str], float] = {}
    undefined: list[tuple[str, str]] = []
    for a in range(len(judges)):
        for b in range(a + 1, len(judges)):
            pair = tuple(sorted((judges[a], judges[b])))
            if _is_constant(grid[:, a]) or _is_constant(grid[:, b]):
                undefined.append(pair)
                log.warning("spearman undefined for pair %s (zero variance)", pair)
                continue
            rho[pair] = float(spearmanr(grid[:, a], grid[:, b]).statistic)
    return PairwiseAgreementReport(rho=rho, undefined_pairs=undefined)


def alpha_by_dimension(corpus: Corpus) -> AlphaReport:
    """Interval alpha on the overall-score matrix plus one alpha per rubric
    dimension; items are (video, pack, run) instances."""
    overall = overall_matrix(corpus)
    alpha = krippendorff_interval(overall)
    d_o, d_e = alpha_components(overall)
    by_dim = {}
    for dim in DIMENSIONS:
        by_dim[dim] = krippendorff_interval(dimension_matrix(corpus, dim))
    return AlphaReport(alpha_overall=alpha, alpha_by_dimension=by_dim,
                       observed_disagreement=d_o, expected_disagreement=d_e)
