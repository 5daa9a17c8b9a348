import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from judgeprint.corpus import DIMENSIONS, Corpus, EvaluationRecord


def make_record(judge="j1", video="v1", pack="p1", run=1, scores=None, overall=None,
                receipts=(), justifications=None, token_count=100, parse_ok=True,
                variant=None, temperature=None):
    scores = scores if scores is not None else {d: 3 for d in DIMENSIONS}
    if overall is None:
        overall = sum(scores.values()) / len(scores)
    return EvaluationRecord(
        judge_id=judge, video_id=video, pack_id=pack, run_id=run,
        dimension_scores=scores, overall_score=overall,
        justifications=justifications or {},
        receipts=list(receipts), token_count=token_count, parse_ok=parse_ok,
        variant_id=variant, temperature=temperature)


def make_corpus(records, sources=None):
    return Corpus(records=records, sources=sources or {},
                  judges=tuple(sorted({r.judge_id for r in records})),
                  runs_per_item=len({r.run_id for r in records}))


def panel_corpus(score_table, runs=1):
    """score_table: {judge: {(video, pack): overall}} replicated across runs.
    Dimension scores are set to the rounded overall so panels stay simple."""
    records = []
    for judge, items in score_table.items():
        for (video, pack), overall in items.items():
            for run in range(1, runs + 1):
                s = int(round(overall))
                s = min(5, max(1, s))
                records.append(make_record(judge=judge, video=video, pack=pack, run=run,
                                           scores={d: s for d in DIMENSIONS},
                                           overall=overall))
    return make_corpus(records)
