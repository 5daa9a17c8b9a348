"""Controlled-variant diagnostics: does a judge's faithfulness score drop
when the artifact is poisoned? Verdict bands and the failing-rate are
computed per judge from row-level means."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .corpus import Corpus

log = logging.getLogger(__name__)

VERDICT_CATCHES = "catches"
VERDICT_WEAK = "weak"
VERDICT_BLIND = "blind"

DEFAULT_CATCHES_THRESHOLD = 0.5  # drop >= this -> catches
DEFAULT_BLIND_THRESHOLD = 0.0    # drop <= this -> blind


@dataclass
class VariantDiagnostic:
    judge_id: str
    clean_mean: float
    poisoned_mean: float
    drop: float  # clean - poisoned; positive when the judge penalizes poison
    verdict: str
    failing_rate: float
    n_clean: int
    n_poisoned: int


def classify_drop(drop: float, catches_threshold: float = DEFAULT_CATCHES_THRESHOLD,
                  blind_threshold: float = DEFAULT_BLIND_THRESHOLD) -> str:
    """Boundary semantics: drop == catches_threshold is catches,
    drop == blind_threshold is blind."""
    if drop >= catches_threshold:
        return VERDICT_CATCHES
    if drop <= blind_threshold:
        return VERDICT_BLIND
    return VERDICT_WEAK


def variant_diagnostics(corpus: Corpus, clean_variant: str, poisoned_variant: str,
                        dimension: str = "faithfulness", fail_threshold: int = 3,
                        catches_threshold: float = DEFAULT_CATCHES_THRESHOLD,
                        blind_threshold: float = DEFAULT_BLIND_THRESHOLD) -> list[VariantDiagnostic]:
    """Per-judge mean score on the clean vs poisoned variant, the drop
    between them, a verdict band, and the fraction of poisoned rows at or
    below the failing threshold. Judges missing either variant are skipped
    with a warning."""
    per: dict[str, dict[str, list[int]]] = {}
    for r in corpus.records:
        if r.variant_id not in (clean_variant, poisoned_variant):
            continue
        if dimension not in r.dimension_scores:
            continue
        per.setdefault(r.judge_id, {}).setdefault(r.variant_id, []).append(
            r.dimension_scores[dimension])

    out: list[VariantDiagnostic] = []
    for judge in corpus.judges:
        cells = per.get(judge, {})
        clean = cells.get(clean_variant, [])
        poisoned = cells.get(poisoned_variant, [])
        if not clean or not poisoned:
            log.warning("variant_diagnostics: skipping %s (missing %s rows)", judge,
                        "clean" if not clean else "poisoned")
            continue
        clean_mean = math.fsum(clean) / len(clean)
        poisoned_mean = math.fsum(poisoned) / len(poisoned)
        drop = clean_mean - poisoned_mean
        failing = sum(1 for v in poisoned if v <= fail_threshold) / len(poisoned)
        out.append(VariantDiagnostic(
            judge_id=judge, clean_mean=clean_mean, poisoned_mean=poisoned_mean,
            drop=drop, verdict=classify_drop(drop, catches_threshold, blind_threshold),
            failing_rate=failing, n_clean=len(clean), n_poisoned=len(poisoned)))
    return out
