"""Corpus model: structured judge evaluations, source documents, and the
panel filters every downstream metric relies on.

A corpus directory holds line-delimited JSON records (``records*.jsonl``),
an optional ``sources.jsonl`` with the evidence substrates, and a
``schema.json`` version header. Records failing schema abort in strict
mode and are skipped (with a diagnostic) in lenient mode.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_KIND = "judgeprint-corpus"

# Canonical rubric dimension order; every vectorized feature uses it.
DIMENSIONS = ("intent_angle", "coverage", "faithfulness", "readability", "mechanics")
GROUNDING_DIMENSIONS = ("intent_angle", "coverage", "faithfulness")

SOURCE_PACK = "pack"
SOURCE_SCRIPT = "script"
SOURCE_OTHER = "other"

_PACK_ALIASES = {"pack", "seo_pack", "briefing_pack", "content_pack"}
_SCRIPT_ALIASES = {"script", "transcript", "source_script", "article"}


class CorpusError(ValueError):
    """Malformed, inconsistent, or structurally unusable corpus input."""


class SourcesUnavailableError(CorpusError):
    """Raised when an operation needs source documents and the corpus was
    loaded in redacted mode (no sources)."""


def classify_source(raw) -> str:
    """Map a declared source field to pack/script; anything else is other."""
    if raw is None:
        return SOURCE_OTHER
    s = str(raw).strip().lower()
    if s in _PACK_ALIASES:
        return SOURCE_PACK
    if s in _SCRIPT_ALIASES:
        return SOURCE_SCRIPT
    return SOURCE_OTHER


@dataclass(frozen=True)
class Receipt:
    receipt_id: str
    dimension: str
    quote: str
    declared_source: str  # pack | script | other


@dataclass
class EvaluationRecord:
    judge_id: str
    video_id: str
    pack_id: str
    run_id: int
    dimension_scores: dict[str, int]
    overall_score: float | None
    justifications: dict[str, str]
    receipts: list[Receipt]
    token_count: int
    parse_ok: bool
    variant_id: str | None = None
    temperature: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.judge_id, self.video_id, self.pack_id, self.run_id)

    @property
    def item_key(self) -> tuple[str, str, int]:
        return (self.video_id, self.pack_id, self.run_id)


@dataclass(frozen=True)
class SourceDocument:
    video_id: str
    pack_id: str
    pack_text: str
    script_text: str
    redacted: bool = False


@dataclass
class Corpus:
    records: list[EvaluationRecord]
    sources: dict[tuple[str, str], SourceDocument]
    judges: tuple[str, ...]
    runs_per_item: int

    def __len__(self) -> int:
        return len(self.records)

    def by_judge(self, judge_id: str) -> list[EvaluationRecord]:
        return [r for r in self.records if r.judge_id == judge_id]

    def panels(self) -> dict[tuple[str, str, int], list[EvaluationRecord]]:
        """Group records by (video, pack, run)."""
        out: dict[tuple[str, str, int], list[EvaluationRecord]] = {}
        for r in self.records:
            out.setdefault(r.item_key, []).append(r)
        return out

    def with_records(self, records: list[EvaluationRecord]) -> "Corpus":
        """New corpus with the same sources and a filtered record list."""
        return Corpus(
            records=records,
            sources=self.sources,
            judges=tuple(sorted({r.judge_id for r in records})),
            runs_per_item=len({r.run_id for r in records}),
        )

    def has_sources(self) -> bool:
        return bool(self.sources)


@dataclass
class BalanceReport:
    counts: dict[str, int]
    balanced: bool
    offenders: list[str]


def _require(cond: bool, msg: str):
    if not cond:
        raise CorpusError(msg)


def _parse_record(obj: dict, raw_line: str) -> EvaluationRecord:
    known = {
        "judge_id", "video_id", "pack_id", "run_id", "variant_id", "temperature",
        "dimension_scores", "overall_score", "justifications", "receipts",
        "token_count", "parse_ok",
    }
    for f in ("judge_id", "video_id", "pack_id", "run_id"):
        _require(f in obj, f"record missing required field '{f}': {raw_line[:120]}")
    judge_id = str(obj["judge_id"])
    video_id = str(obj["video_id"])
    pack_id = str(obj["pack_id"])
    run_id = int(obj["run_id"])
    _require(run_id >= 1, f"run_id must be >= 1, got {run_id}")
    parse_ok = bool(obj.get("parse_ok", True))

    dims_raw = obj.get("dimension_scores") or {}
    dims: dict[str, int] = {}
    for k, v in dims_raw.items():
        _require(k in DIMENSIONS, f"unknown dimension key '{k}' in record {judge_id}/{video_id}/{pack_id}/r{run_id}")
        iv = int(v)
        _require(1 <= iv <= 5, f"dimension score out of [1,5]: {k}={v}")
        dims[k] = iv
    if parse_ok:
        missing = [d for d in DIMENSIONS if d not in dims]
        _require(not missing, f"parse_ok record missing dimension scores {missing} "
                              f"({judge_id}/{video_id}/{pack_id}/r{run_id})")

    overall = obj.get("overall_score")
    if overall is not None:
        overall = float(overall)
        _require(1.0 <= overall <= 5.0, f"overall_score out of [1,5]: {overall}")
    elif parse_ok:
        raise CorpusError(f"parse_ok record missing overall_score "
                          f"({judge_id}/{video_id}/{pack_id}/r{run_id})")

    just_raw = obj.get("justifications") or {}
    justifications = {}
    for k, v in just_raw.items():
        _require(k in DIMENSIONS, f"unknown dimension key '{k}' in justifications")
        justifications[k] = str(v)

    receipts = []
    for i, r in enumerate(obj.get("receipts") or []):
        dim = r.get("dimension")
        _require(dim in DIMENSIONS, f"unknown dimension key '{dim}' in receipt")
        quote = str(r.get("quote", ""))
        _require(quote.strip() != "", "receipt quote empty after trimming")
        rid = str(r.get("receipt_id") or f"{judge_id}:{video_id}:{pack_id}:r{run_id}:{i}")
        receipts.append(Receipt(
            receipt_id=rid,
            dimension=dim,
            quote=quote,
            declared_source=classify_source(r.get("declared_source", r.get("source"))),
        ))

    token_count = obj.get("token_count")
    if token_count is None:
        # length proxy: whitespace-separated units of the serialized output
        token_count = len(raw_line.split())
    token_count = int(token_count)
    _require(token_count >= 0, f"token_count must be nonnegative, got {token_count}")

    extra = {k: v for k, v in obj.items() if k not in known}
    temperature = obj.get("temperature")
    return EvaluationRecord(
        judge_id=judge_id, video_id=video_id, pack_id=pack_id, run_id=run_id,
        dimension_scores=dims, overall_score=overall, justifications=justifications,
        receipts=receipts, token_count=token_count, parse_ok=parse_ok,
        variant_id=(None if obj.get("variant_id") is None else str(obj["variant_id"])),
        temperature=(None if temperature is None else float(temperature)),
        extra=extra,
    )


def _parse_source(obj: dict) -> SourceDocument:
    for f in ("video_id", "pack_id"):
        _require(f in obj, f"source document missing '{f}'")
    redacted = bool(obj.get("redacted", False))
    pack_text = str(obj.get("pack_text", ""))
    script_text = str(obj.get("script_text", ""))
    if not redacted:
        _require(pack_text != "" or script_text != "",
                 f"source ({obj['video_id']},{obj['pack_id']}) has no text and is not flagged redacted")
    return SourceDocument(str(obj["video_id"]), str(obj["pack_id"]), pack_text, script_text, redacted)


def load_corpus(path: str | Path, schema_mode: str = "strict") -> Corpus:
    """Load a corpus from a records file or a corpus directory.

    strict: any record failing schema aborts with a diagnostic naming it.
    lenient: invalid lines are skipped and counted. Duplicate
    (judge, video, pack, run) keys and unknown dimension keys are errors
    in both modes.
    """
    if schema_mode not in ("strict", "lenient"):
        raise ValueError(f"schema_mode must be strict|lenient, got {schema_mode!r}")
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus path does not exist: {path}")

    if path.is_dir():
        record_files = sorted(path.glob("records*.jsonl"))
        sources_file = path / "sources.jsonl"
        schema_file = path / "schema.json"
        if schema_file.exists():
            head = json.loads(schema_file.read_text())
            if head.get("schema_version") != SCHEMA_VERSION or head.get("kind") != SCHEMA_KIND:
                raise CorpusError(f"unsupported schema header in {schema_file}: {head}")
        elif schema_mode == "strict":
            raise CorpusError(f"missing schema.json in {path} (strict mode)")
    else:
        record_files = [path]
        sources_file = path.parent / "sources.jsonl"

    records: list[EvaluationRecord] = []
    seen: dict[tuple, str] = {}
    skipped = 0
    for rf in record_files:
        for lineno, line in enumerate(rf.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            where = f"{rf.name}:{lineno}"
            try:
                obj = json.loads(line)
                rec = _parse_record(obj, line)
            except CorpusError as e:
                if "unknown dimension key" in str(e):
                    raise
                if schema_mode == "strict":
                    raise CorpusError(f"{where}: {e}") from e
                skipped += 1
                log.warning("skipping invalid record at %s: %s", where, e)
                continue
            except (json.JSONDecodeError, TypeError, ValueError) as e:
                if schema_mode == "strict":
                    raise CorpusError(f"{where}: unparseable record: {e}") from e
                skipped += 1
                log.warning("skipping unparseable line at %s: %s", where, e)
                continue
            if rec.key in seen:
                raise CorpusError(
                    f"duplicate (judge, video, pack, run) key {rec.key} at {where} "
                    f"(first seen at {seen[rec.key]})")
            seen[rec.key] = where
            records.append(rec)

    sources: dict[tuple[str, str], SourceDocument] = {}
    if sources_file.exists():
        for lineno, line in enumerate(sources_file.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            doc = _parse_source(json.loads(line))
            k = (doc.video_id, doc.pack_id)
            if k in sources:
                raise CorpusError(f"duplicate source document for {k} at sources.jsonl:{lineno}")
            sources[k] = doc
        for rec in records:
            if (rec.video_id, rec.pack_id) not in sources:
                raise CorpusError(f"record references unknown source ({rec.video_id},{rec.pack_id})")

    if skipped:
        log.info("lenient load skipped %d invalid records", skipped)
    return Corpus(
        records=records,
        sources=sources,
        judges=tuple(sorted({r.judge_id for r in records})),
        runs_per_item=len({r.run_id for r in records}),
    )


def save_corpus(corpus: Corpus, path: str | Path):
    """Write a corpus directory in the ingest format (deterministic bytes)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "schema.json").write_text(
        json.dumps({"kind": SCHEMA_KIND, "schema_version": SCHEMA_VERSION}, sort_keys=True) + "\n")
    with open(path / "records.jsonl", "w", encoding="utf-8") as f:
        for r in corpus.records:
            obj = {
                "judge_id": r.judge_id, "video_id": r.video_id, "pack_id": r.pack_id,
                "run_id": r.run_id, "dimension_scores": r.dimension_scores,
                "overall_score": r.overall_score, "justifications": r.justifications,
                "receipts": [
                    {"receipt_id": x.receipt_id, "dimension": x.dimension,
                     "quote": x.quote, "declared_source": x.declared_source}
                    for x in r.receipts
                ],
                "token_count": r.token_count, "parse_ok": r.parse_ok,
            }
            if r.variant_id is not None:
                obj["variant_id"] = r.variant_id
            if r.temperature is not None:
                obj["temperature"] = r.temperature
            obj.update(r.extra)
            f.write(json.dumps(obj, sort_keys=True) + "\n")
    if corpus.sources:
        with open(path / "sources.jsonl", "w", encoding="utf-8") as f:
            for k in sorted(corpus.sources):
                d = corpus.sources[k]
                f.write(json.dumps({
                    "video_id": d.video_id, "pack_id": d.pack_id,
                    "pack_text": d.pack_text, "script_text": d.script_text,
                    "redacted": d.redacted,
                }, sort_keys=True) + "\n")


def compliance_filter(corpus: Corpus) -> Corpus:
    """Keep only parseable, protocol-compliant records (parse_ok)."""
    kept = [r for r in corpus.records if r.parse_ok]
    excluded: dict[str, int] = {}
    for r in corpus.records:
        if not r.parse_ok:
            excluded[r.judge_id] = excluded.get(r.judge_id, 0) + 1
    if excluded:
        log.info("compliance filter excluded %d records: %s", sum(excluded.values()), excluded)
    return corpus.with_records(kept)


def compliance_exclusions(corpus: Corpus) -> dict[str, int]:
    """Per-judge counts of records a compliance filter would drop."""
    out: dict[str, int] = {j: 0 for j in corpus.judges}
    for r in corpus.records:
        if not r.parse_ok:
            out[r.judge_id] += 1
    return out


def intersection_filter(corpus: Corpus) -> Corpus:
    """Restrict to (video, pack, run) triples evaluated by every judge.

    Key uniqueness guarantees at most one record per judge per triple, so
    membership in every judge's key set is the exact condition.
    """
    _require(len(corpus.records) > 0, "cannot intersection-filter an empty corpus")
    per_judge: dict[str, set] = {j: set() for j in corpus.judges}
    for r in corpus.records:
        per_judge[r.judge_id].add(r.item_key)
    common = None
    for keys in per_judge.values():
        common = keys if common is None else (common & keys)
    if not common:
        raise CorpusError("intersection set is empty: panel too sparse to compare")
    kept = [r for r in corpus.records if r.item_key in common]
    log.info("intersection filter retained %d items (%d records)", len(common), len(kept))
    return corpus.with_records(kept)


def balance_audit(corpus: Corpus) -> BalanceReport:
    """Per-judge row counts; balanced iff all counts are equal."""
    counts = {j: 0 for j in corpus.judges}
    for r in corpus.records:
        counts[r.judge_id] += 1
    values = set(counts.values())
    balanced = len(values) <= 1
    offenders: list[str] = []
    if not balanced:
        majority = max(set(counts.values()), key=lambda v: sum(1 for c in counts.values() if c == v))
        offenders = sorted(j for j, c in counts.items() if c != majority)
    return BalanceReport(counts=counts, balanced=balanced, offenders=offenders)
