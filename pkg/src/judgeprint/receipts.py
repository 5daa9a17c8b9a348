"""Two-stage evidence audit.

Stage one (provenance): is the quoted span present in its declared source
under normalization + windowed fuzzy matching? Stage two (semantic
linkage): conditional on presence-valid receipts with a non-empty
justification, does the quote entail the judge's justification under the
two-threshold NLI gate? Profiles aggregate both stages per judge,
including the shotgun index (receipts per evaluation times the fraction
that fail linkage).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from .corpus import (GROUNDING_DIMENSIONS, SOURCE_PACK, SOURCE_SCRIPT,
                     Corpus, Receipt, SourceDocument, SourcesUnavailableError)
from .nli import NLIProvider, NLIResult, NullProvider
from .textmatch import (DEFAULT_PRESENCE_THRESHOLD, MATCH_EXACT,
                        PresenceVerdict, match_quote, normalize_text)

log = logging.getLogger(__name__)

JUSTIFICATION_TRUNCATION = 200  # raw characters fed to the NLI hypothesis
DEFAULT_NLI_P = 0.75
DEFAULT_NLI_MARGIN = 0.20
NLI_BATCH_SIZE = 256

LABEL_ENTAILMENT = "ENTAILMENT"
LABEL_NEUTRAL = "NEUTRAL"
LABEL_NONE = "NONE"  # presence-invalid; excluded from the binary comparison


@dataclass
class ReceiptAudit:
    receipt_id: str
    judge_id: str
    video_id: str
    pack_id: str
    run_id: int
    dimension: str
    declared_source: str
    match_type: str
    similarity: float
    presence_valid: bool
    justification_empty: bool
    nli: NLIResult | None = None
    supported: bool | None = None

    @property
    def record_key(self) -> tuple[str, str, str, int]:
        return (self.judge_id, self.video_id, self.pack_id, self.run_id)


@dataclass
class EvidenceProfile:
    judge_id: str
    n_evals: int
    n_receipts: int
    receipts_per_eval: float
    presence_valid_rate: float | None
    linkage_rate: float | None
    mean_margin: float | None
    shotgun_index: float | None
    pack_rate: float | None
    n_scored: int = 0
    linkage_unavailable: bool = False


@dataclass
class AuditResult:
    audits: list[ReceiptAudit]
    profiles: dict[str, EvidenceProfile]
    linkage_available: bool
    dims: tuple[str, ...]


@dataclass
class ExactMatchReport:
    overall_rate: float
    n_exact: int
    n_receipts: int
    per_judge: dict[str, float]


@dataclass
class SourcePreferenceRow:
    judge_id: str
    n_evals: int
    pack: int
    script: int
    other: int

    @property
    def pack_rate(self) -> float | None:
        total = self.pack + self.script + self.other
        return None if total == 0 else 100.0 * self.pack / total


@dataclass
class HumanAuditMetrics:
    n_total: int
    n_presence_valid: int
    agreement: float
    precision: float | None
    recall: float | None
    false_positives: int
    false_negatives: int
    true_positives: int
    true_negatives: int
    # conditional agreement given the NLI prediction (pilot-style split)
    supported_agreement: float | None = None
    not_supported_agreement: float | None = None


class _SourceCache:
    """Normalized substrate texts, computed once per source document."""

    def __init__(self, corpus: Corpus):
        if not corpus.has_sources():
            raise SourcesUnavailableError(
                "sources unavailable: corpus loaded in redacted mode, receipt audit cannot run")
        self.sources = corpus.sources
        self._norm: dict[tuple[str, str, str], str] = {}

    def norms_for(self, video_id: str, pack_id: str, declared_source: str) -> list[str]:
        key = (video_id, pack_id)
        if key not in self.sources:
            raise SourcesUnavailableError(f"sources unavailable for {key}")
        doc = self.sources[key]
        if declared_source == SOURCE_PACK:
            kinds = ["pack"]
        elif declared_source == SOURCE_SCRIPT:
            kinds = ["script"]
        else:
            kinds = ["pack", "script"]
        out = []
        for kind in kinds:
            ck = (video_id, pack_id, kind)
            if ck not in self._norm:
                raw = doc.pack_text if kind == "pack" else doc.script_text
                self._norm[ck] = normalize_text(raw)
            out.append(self._norm[ck])
        return out


def presence_match(receipt: Receipt, source: SourceDocument,
                   threshold: float = DEFAULT_PRESENCE_THRESHOLD) -> PresenceVerdict:
    """Presence verdict for one receipt against its declared substrate
    (other searches both and keeps the best)."""
    if receipt.declared_source == SOURCE_PACK:
        substrates = [source.pack_text]
    elif receipt.declared_source == SOURCE_SCRIPT:
        substrates = [source.script_text]
    else:
        substrates = [source.pack_text, source.script_text]
    return match_quote(normalize_text(receipt.quote),
                       [normalize_text(s) for s in substrates], threshold)


def linkage_supported(nli: NLIResult, p_threshold: float = DEFAULT_NLI_P,
                      margin_threshold: float = DEFAULT_NLI_MARGIN) -> bool:
    """Two-threshold gate; boundary equality counts as a pass."""
    return nli.p_entail >= p_threshold and (nli.p_entail - nli.p_contradict) >= margin_threshold


def audit_receipts(corpus: Corpus, nli: NLIProvider | None = None,
                   dims: tuple[str, ...] = GROUNDING_DIMENSIONS,
                   presence_threshold: float = DEFAULT_PRESENCE_THRESHOLD,
                   nli_p: float = DEFAULT_NLI_P,
                   nli_margin: float = DEFAULT_NLI_MARGIN) -> AuditResult:
    """Run both audit stages over every receipt on the requested dimensions.

    With no NLI provider (or the null provider) the presence stage still
    completes; linkage fields stay absent and profiles are flagged.
    """
    cache = _SourceCache(corpus)
    linkage_available = nli is not None and not isinstance(nli, NullProvider)

    audits: list[ReceiptAudit] = []
    to_score: list[tuple[int, str, str]] = []  # (audit index, premise, hypothesis)
    for rec in corpus.records:
        for receipt in rec.receipts:
            if receipt.dimension not in dims:
                continue
            verdict = match_quote(
                normalize_text(receipt.quote),
                cache.norms_for(rec.video_id, rec.pack_id, receipt.declared_source),
                presence_threshold)
            justification = rec.justifications.get(receipt.dimension, "")
            audit = ReceiptAudit(
                receipt_id=receipt.receipt_id, judge_id=rec.judge_id,
                video_id=rec.video_id, pack_id=rec.pack_id, run_id=rec.run_id,
                dimension=receipt.dimension, declared_source=receipt.declared_source,
                match_type=verdict.match_type, similarity=verdict.similarity,
                presence_valid=verdict.valid,
                justification_empty=(justification.strip() == ""),
            )
            audits.append(audit)
            if linkage_available and audit.presence_valid and not audit.justification_empty:
                to_score.append((len(audits) - 1, receipt.quote,
                                 justification[:JUSTIFICATION_TRUNCATION]))

    for start in range(0, len(to_score), NLI_BATCH_SIZE):
        batch = to_score[start:start + NLI_BATCH_SIZE]
        results = nli.score_batch([(p, h) for _, p, h in batch])
        for (idx, _, _), res in zip(batch, results):
            audits[idx].nli = res
            audits[idx].supported = linkage_supported(res, nli_p, nli_margin)

    profiles = build_profiles(audits, corpus, dims=dims, linkage_available=linkage_available)
    return AuditResult(audits=audits, profiles=profiles,
                       linkage_available=linkage_available, dims=tuple(dims))


def build_profiles(audits: list[ReceiptAudit], corpus: Corpus,
                   dims: tuple[str, ...] = GROUNDING_DIMENSIONS,
                   linkage_available: bool = True) -> dict[str, EvidenceProfile]:
    """Aggregate audit rows into per-judge evidence profiles. Rates are
    plain ratios of the audited rows, so a recomputation from the rows
    reproduces the profile exactly."""
    n_evals = {j: 0 for j in corpus.judges}
    for rec in corpus.records:
        n_evals[rec.judge_id] += 1

    by_judge: dict[str, list[ReceiptAudit]] = {j: [] for j in corpus.judges}
    for a in audits:
        by_judge.setdefault(a.judge_id, []).append(a)

    profiles = {}
    for judge in corpus.judges:
        rows = by_judge[judge]
        n_receipts = len(rows)
        evals = n_evals[judge]
        rpe = n_receipts / evals if evals else 0.0
        valid = [a for a in rows if a.presence_valid]
        scored = [a for a in rows if a.supported is not None]
        presence_rate = len(valid) / n_receipts if n_receipts else None
        linkage_rate = None
        mean_margin = None
        shotgun = None
        if not linkage_available:
            pass
        elif scored:
            linkage_rate = sum(1 for a in scored if a.supported) / len(scored)
            mean_margin = math.fsum(a.nli.margin for a in scored) / len(scored)
        if n_receipts == 0:
            shotgun = 0.0
        elif linkage_rate is not None:
            shotgun = rpe * (1.0 - linkage_rate)
        pack_rate = (sum(1 for a in rows if a.declared_source == SOURCE_PACK) / n_receipts
                     if n_receipts else None)
        profiles[judge] = EvidenceProfile(
            judge_id=judge, n_evals=evals, n_receipts=n_receipts,
            receipts_per_eval=rpe, presence_valid_rate=presence_rate,
            linkage_rate=linkage_rate, mean_margin=mean_margin,
            shotgun_index=shotgun, pack_rate=pack_rate, n_scored=len(scored),
            linkage_unavailable=not linkage_available,
        )
    return profiles


def exact_match_variant(corpus: Corpus,
                        dims: tuple[str, ...] = GROUNDING_DIMENSIONS) -> ExactMatchReport:
    """Exact-match-only presence validation (threshold 1.0): fuzzy matches
    count as invalid. Reports overall and per-judge exact rates."""
    cache = _SourceCache(corpus)
    counts: dict[str, list[int]] = {j: [0, 0] for j in corpus.judges}  # [exact, total]
    for rec in corpus.records:
        for receipt in rec.receipts:
            if receipt.dimension not in dims:
                continue
            verdict = match_quote(
                normalize_text(receipt.quote),
                cache.norms_for(rec.video_id, rec.pack_id, receipt.declared_source),
                threshold=1.0)
            counts[rec.judge_id][1] += 1
            if verdict.match_type == MATCH_EXACT:
                counts[rec.judge_id][0] += 1
    n_exact = sum(c[0] for c in counts.values())
    n_total = sum(c[1] for c in counts.values())
    per_judge = {j: (c[0] / c[1] if c[1] else float("nan")) for j, c in counts.items()}
    return ExactMatchReport(overall_rate=(n_exact / n_total if n_total else float("nan")),
                            n_exact=n_exact, n_receipts=n_total, per_judge=per_judge)


def source_preference(corpus: Corpus) -> list[SourcePreferenceRow]:
    """Receipt source split (pack vs script vs other) over every rubric
    dimension, per judge; pack_rate is a percentage of all receipts."""
    rows = {j: SourcePreferenceRow(judge_id=j, n_evals=0, pack=0, script=0, other=0)
            for j in corpus.judges}
    for rec in corpus.records:
        row = rows[rec.judge_id]
        row.n_evals += 1
        for receipt in rec.receipts:
            if receipt.declared_source == SOURCE_PACK:
                row.pack += 1
            elif receipt.declared_source == SOURCE_SCRIPT:
                row.script += 1
            else:
                row.other += 1
    return [rows[j] for j in corpus.judges]


def load_human_labels(path) -> dict[str, str]:
    """Human linkage labels, line-delimited JSON {receipt_id, label}."""
    labels = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        label = str(obj["label"]).upper()
        if label not in (LABEL_ENTAILMENT, LABEL_NEUTRAL, LABEL_NONE):
            raise ValueError(f"unknown human label {label!r} for receipt {obj.get('receipt_id')}")
        labels[str(obj["receipt_id"])] = label
    return labels


def human_audit_compare(audits: list[ReceiptAudit], labels: dict[str, str]) -> HumanAuditMetrics:
    """Binary NLI-vs-human comparison on presence-valid labeled receipts.

    NONE labels mark presence-invalid rows and are excluded from the
    binary confusion; agreement is (TP + TN) / n_presence_valid.
    """
    by_id = {a.receipt_id: a for a in audits}
    unknown = [rid for rid in labels if rid not in by_id]
    if unknown:
        raise ValueError(f"labels reference unknown receipt ids: {unknown[:5]}"
                         + ("..." if len(unknown) > 5 else ""))
    tp = tn = fp = fn = 0
    n_pv = 0
    for rid, label in labels.items():
        audit = by_id[rid]
        if label == LABEL_NONE or not audit.presence_valid or audit.supported is None:
            continue
        n_pv += 1
        human_supported = label == LABEL_ENTAILMENT
        if audit.supported and human_supported:
            tp += 1
        elif audit.supported and not human_supported:
            fp += 1
        elif not audit.supported and human_supported:
            fn += 1
        else:
            tn += 1
    agreement = (tp + tn) / n_pv if n_pv else float("nan")
    precision = tp / (tp + fp) if (tp + fp) else None
    recall = tp / (tp + fn) if (tp + fn) else None
    return HumanAuditMetrics(
        n_total=len(labels), n_presence_valid=n_pv, agreement=agreement,
        precision=precision, recall=recall, false_positives=fp, false_negatives=fn,
        true_positives=tp, true_negatives=tn,
        supported_agreement=(tp / (tp + fp) if (tp + fp) else None),
        not_supported_agreement=(tn / (tn + fn) if (tn + fn) else None),
    )
