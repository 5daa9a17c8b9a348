"""Command-line interface.

Exit codes: 0 success, 1 module failure, 2 usage error. Every subcommand
works from explicit inputs; `pipeline` runs the whole measurement suite
from a JSON config into a timestamped output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import agreement, attribution, capability, receipts, reliability, synth
from .attribution import ClassifierConfig
from .corpus import (DIMENSIONS, GROUNDING_DIMENSIONS, balance_audit, compliance_filter,
                     intersection_filter, load_corpus, save_corpus)
from .nli import provider_from_config, save_store
from .pipeline import PipelineConfig, run_pipeline
from .report import verify_manifest, write_csv, write_json

log = logging.getLogger(__name__)


def _add_corpus_args(p: argparse.ArgumentParser):
    p.add_argument("--records", required=True, help="corpus directory or records .jsonl")
    p.add_argument("--schema-mode", choices=["strict", "lenient"], default="strict")
    p.add_argument("--no-compliance", action="store_true",
                   help="keep records that failed parsing")
    p.add_argument("--no-intersection", action="store_true",
                   help="skip restriction to the all-judge intersection set")


def _load(args):
    corpus = load_corpus(args.records, schema_mode=args.schema_mode)
    if not args.no_compliance:
        corpus = compliance_filter(corpus)
    if not args.no_intersection:
        corpus = intersection_filter(corpus)
    return corpus


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest_validate(args) -> int:
    corpus = load_corpus(args.records, schema_mode=args.schema_mode)
    report = balance_audit(corpus)
    print(f"records: {len(corpus.records)}")
    print(f"judges: {len(corpus.judges)}")
    print(f"sources: {len(corpus.sources)}")
    filtered = compliance_filter(corpus)
    print(f"parse_ok records: {len(filtered.records)}")
    for judge, count in sorted(report.counts.items()):
        print(f"  {judge}: {count}")
    print(f"balanced: {report.balanced}")
    return 0


def cmd_agreement(args) -> int:
    corpus = _load(args)
    out = _out_dir(args)
    pairwise = agreement.spearman_pairwise(corpus)
    write_csv(out / "agreement_pairwise.csv", ["judge_a", "judge_b", "spearman_rho"],
              [[a, b, rho] for (a, b), rho in sorted(pairwise.rho.items())])
    report = agreement.alpha_by_dimension(corpus)
    write_csv(out / "alpha_by_dimension.csv", ["dimension", "alpha"],
              [["overall", report.alpha_overall]]
              + [[d, report.alpha_by_dimension[d]] for d in DIMENSIONS])
    s = pairwise.summary
    print(f"spearman mean={s['mean']:.3f} median={s['median']:.3f} "
          f"range=[{s['min']:.3f}, {s['max']:.3f}] over {len(pairwise.rho)} pairs")
    print(f"alpha overall={report.alpha_overall:.3f}")
    return 0


def cmd_stability(args) -> int:
    corpus = _load(args)
    out = _out_dir(args)
    rows = []
    for judge in corpus.judges:
        r = reliability.icc31(corpus, judge)
        rows.append([r.judge_id, r.icc, r.n_items, r.k_runs, r.ms_items, r.ms_error,
                     r.n_dropped_items])
        print(f"{r.judge_id}: icc={r.icc:.3f} (n_items={r.n_items}, k={r.k_runs})")
    write_csv(out / "icc_by_judge.csv",
              ["judge_id", "icc", "n_items", "k_runs", "ms_items", "ms_error",
               "n_dropped_items"], rows)
    return 0


def cmd_disposition(args) -> int:
    corpus = _load(args)
    out = _out_dir(args)
    rows = reliability.harshness_rows(corpus)
    summaries = reliability.harshness_summary(rows, n_boot=args.n_boot, seed=args.seed)
    write_csv(out / "harshness_summary.csv",
              ["judge_id", "mean_harshness", "ci_low", "ci_high", "n_boot", "seed",
               "n_videos", "degenerate"],
              [[s.judge_id, s.mean_harshness, s.ci_low, s.ci_high, s.n_boot, s.seed,
                s.n_videos, s.degenerate] for s in summaries])
    emphasis = reliability.dimension_emphasis(corpus)
    write_csv(out / "dimension_emphasis.csv", ["judge_id", "dimension", "emphasis"],
              [[j, d, v] for (j, d), v in sorted(emphasis.items())])
    for s in summaries:
        print(f"{s.judge_id}: mean={s.mean_harshness:+.3f} "
              f"CI=[{s.ci_low:+.3f}, {s.ci_high:+.3f}]")
    return 0


def cmd_audit_receipts(args) -> int:
    corpus = _load(args)
    out = _out_dir(args)
    provider = provider_from_config(args.nli, store_path=args.nli_store, url=args.nli_url,
                                    cache_path=args.nli_cache)
    result = receipts.audit_receipts(corpus, nli=provider,
                                     presence_threshold=args.presence_threshold)
    write_csv(out / "receipt_audits.csv",
              ["receipt_id", "judge_id", "video_id", "pack_id", "run_id", "dimension",
               "declared_source", "match_type", "similarity", "p_entail", "p_neutral",
               "p_contradict", "supported"],
              [[a.receipt_id, a.judge_id, a.video_id, a.pack_id, a.run_id, a.dimension,
                a.declared_source, a.match_type, a.similarity,
                a.nli.p_entail if a.nli else None,
                a.nli.p_neutral if a.nli else None,
                a.nli.p_contradict if a.nli else None,
                a.supported] for a in result.audits])
    write_csv(out / "evidence_profiles.csv",
              ["judge_id", "n_evals", "n_receipts", "receipts_per_eval",
               "presence_valid_rate", "linkage_rate", "mean_margin", "shotgun_index",
               "pack_rate", "n_scored", "linkage_unavailable"],
              [[p.judge_id, p.n_evals, p.n_receipts, p.receipts_per_eval,
                p.presence_valid_rate, p.linkage_rate, p.mean_margin, p.shotgun_index,
                p.pack_rate, p.n_scored, p.linkage_unavailable]
               for p in result.profiles.values()])
    pref = receipts.source_preference(corpus)
    write_csv(out / "source_preference.csv",
              ["judge_id", "n_evals", "pack", "script", "other", "pack_rate"],
              [[r.judge_id, r.n_evals, r.pack, r.script, r.other, r.pack_rate] for r in pref])
    for p in result.profiles.values():
        link = "n/a" if p.linkage_rate is None else f"{p.linkage_rate:.1%}"
        pres = "n/a" if p.presence_valid_rate is None else f"{p.presence_valid_rate:.1%}"
        print(f"{p.judge_id}: presence={pres} linkage={link} "
              f"receipts/eval={p.receipts_per_eval:.1f}")
    if args.human_labels:
        labels = receipts.load_human_labels(args.human_labels)
        m = receipts.human_audit_compare(result.audits, labels)
        print(f"human audit: agreement={m.agreement:.1%} "
              f"({m.true_positives + m.true_negatives}/{m.n_presence_valid}) "
              f"precision={m.precision:.2f} recall={m.recall:.2f}")
    return 0


def _evidence_for(corpus, args):
    provider = provider_from_config(args.nli, store_path=args.nli_store, url=args.nli_url,
                                    cache_path=args.nli_cache)
    result = receipts.audit_receipts(corpus, nli=provider)
    return attribution.rows_evidence(result.audits,
                                     linkage_available=result.linkage_available)


def cmd_attribute(args) -> int:
    from .pipeline import task_rows
    corpus = _load(args)
    out = _out_dir(args)
    evidence = None
    if args.features in (attribution.FEATURES_DISPOSITION, attribution.FEATURES_COMBINED):
        evidence = _evidence_for(corpus, args)
    rows = task_rows(args.task, corpus, args.features, evidence)
    config = ClassifierConfig(n_estimators=args.trees, seed=args.seed, n_jobs=args.jobs)
    if args.lovo:
        report = attribution.leave_one_video_out(rows, config, feature_set=args.features,
                                                 task=args.task)
    else:
        plan = attribution.grouped_stratified_kfold(rows, k=args.k, seed=args.seed)
        report = attribution.train_eval(plan, rows, config, feature_set=args.features,
                                        task=args.task)
    slug = args.task.replace(":", "_")
    write_csv(out / f"attribution_{slug}_{args.features}.csv", ["metric", "value"],
              [["accuracy", report.accuracy], ["macro_f1", report.macro_f1],
               ["n_rows", report.n_rows], ["k", report.k]]
              + [[f"fold_{i}_accuracy", a] for i, a in enumerate(report.per_fold_accuracies)])
    write_csv(out / f"confusion_{slug}.csv", ["true_label", "predicted_label", "count"],
              [[t, p, int(report.confusion[i, j])]
               for i, t in enumerate(report.classes) for j, p in enumerate(report.classes)])
    print(f"task={args.task} features={args.features} accuracy={report.accuracy:.1%} "
          f"macro_f1={report.macro_f1:.3f} ({'LOVO' if args.lovo else f'{args.k}-fold'})")
    return 0


def cmd_canary(args) -> int:
    corpus = _load(args)
    out = _out_dir(args)
    balance = balance_audit(corpus)
    rows = attribution.corpus_features(corpus, attribution.FEATURES_SCORES)
    plan = attribution.grouped_stratified_kfold(rows, k=args.k, seed=args.seed)
    fold_audit = plan.audit()
    config = ClassifierConfig(n_estimators=args.trees, seed=args.seed, n_jobs=args.jobs)

    tok_rows = attribution.corpus_features(corpus, attribution.FEATURES_TOKENS_ONLY)
    tok = attribution.tokens_only_probe(tok_rows, plan, config)
    chance = 1.0 / len(tok.classes)
    n_rows = len(tok_rows)
    band = 3.0 * float(np.sqrt(chance * (1 - chance) / n_rows))
    tokens_ok = tok.accuracy <= chance + band

    perm = attribution.permutation_test(
        rows, lambda rr: attribution.grouped_stratified_kfold(rr, k=args.k, seed=args.seed),
        n_perm=args.n_perm, seed=args.seed, config=config, n_jobs=args.jobs)
    shuffled_mean = sum(perm.null_accuracies) / len(perm.null_accuracies)
    shuffle_ok = shuffled_mean <= chance + band

    checks = {
        "balance_ok": balance.balanced,
        "fold_audit_ok": fold_audit["ok"],
        "tokens_only_ok": tokens_ok,
        "shuffled_labels_ok": shuffle_ok,
    }
    write_json(out / "canary_report.json", {
        **checks,
        "tokens_only_accuracy": tok.accuracy,
        "shuffled_mean_accuracy": shuffled_mean,
        "observed_accuracy": perm.observed_accuracy,
        "permutation_p": perm.p_value,
        "chance": chance,
        "chance_band": band,
    })
    for name, ok in checks.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    return 0 if all(checks.values()) else 1


def cmd_capability(args) -> int:
    corpus = _load(args)
    out = _out_dir(args)
    diags = capability.variant_diagnostics(corpus, args.clean, args.poisoned,
                                           dimension=args.dimension,
                                           fail_threshold=args.fail_threshold)
    write_csv(out / "hallucination_detection.csv",
              ["judge_id", "clean", "poisoned", "drop", "verdict", "failing_rate",
               "n_clean", "n_poisoned"],
              [[d.judge_id, d.clean_mean, d.poisoned_mean, d.drop, d.verdict,
                d.failing_rate, d.n_clean, d.n_poisoned] for d in diags])
    for d in diags:
        print(f"{d.judge_id}: clean={d.clean_mean:.2f} poisoned={d.poisoned_mean:.2f} "
              f"drop={d.drop:+.2f} -> {d.verdict} (failing {d.failing_rate:.0%})")
    return 0


def cmd_synth(args) -> int:
    if args.profiles == "default9":
        profiles = synth.default_profiles(sigma=args.sigma,
                                          parse_fail_prob=args.parse_fail_prob)
    else:
        profiles = synth.profiles_from_json(json.loads(Path(args.profiles).read_text()))
    corpus, truth = synth.generate_corpus(profiles, n_videos=args.videos,
                                          n_packs=args.packs, n_runs=args.runs,
                                          seed=args.seed)
    out = _out_dir(args)
    save_corpus(corpus, out)
    save_store(truth.nli_entries, out / "nli_store.jsonl")
    header = (["judge_id", "harshness_offset", "noise_sigma", "presence_valid_prob",
               "linkage_prob", "pack_pref", "parse_fail_prob"]
              + [f"emphasis_{d}" for d in DIMENSIONS]
              + [f"receipts_{d}" for d in GROUNDING_DIMENSIONS])
    write_csv(out / "ground_truth.csv", header,
              [[p.judge_id, p.harshness_offset, p.noise_sigma, p.presence_valid_prob,
                p.linkage_prob, p.pack_pref, p.parse_fail_prob]
               + [p.emphasis.get(d, 0.0) for d in DIMENSIONS]
               + [p.receipts_per_dim.get(d, 0.0) for d in GROUNDING_DIMENSIONS]
               for p in profiles])
    print(f"wrote {len(corpus.records)} records, {len(corpus.sources)} sources, "
          f"{len(truth.nli_entries)} NLI triples to {out}")
    return 0


def cmd_pipeline(args) -> int:
    config = PipelineConfig.from_json(args.config)
    run_dir = run_pipeline(config)
    print(f"pipeline complete: {run_dir}")
    return 0


def cmd_self_check(args) -> int:
    problems = verify_manifest(args.run_dir)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 1
    print("manifest verified: all hashes match")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="judgeprint",
                                     description="Fingerprint LLM evaluators from their "
                                                 "structured evaluation outputs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-validate", help="load a corpus and report structure")
    p.add_argument("--records", required=True)
    p.add_argument("--schema-mode", choices=["strict", "lenient"], default="strict")
    p.set_defaults(func=cmd_ingest_validate)

    p = sub.add_parser("agreement", help="pairwise Spearman and interval alpha")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("stability", help="ICC(3,1) per judge")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("disposition", help="harshness and dimension emphasis")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-boot", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_disposition)

    p = sub.add_parser("audit-receipts", help="presence and linkage audit")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--nli", choices=["precomputed", "remote", "null"], default="null")
    p.add_argument("--nli-store")
    p.add_argument("--nli-url")
    p.add_argument("--nli-cache")
    p.add_argument("--presence-threshold", type=float, default=0.90)
    p.add_argument("--human-labels")
    p.set_defaults(func=cmd_audit_receipts)

    p = sub.add_parser("attribute", help="judge attribution probe")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--task", default="exact",
                   help="exact | lineage | within:<lineage> (aliases within_gpt, "
                        "within_claude) | pair:<judge>:<judge> | pack:<pack_id>")
    p.add_argument("--features", choices=list(attribution.FEATURE_SET_KINDS),
                   default=attribution.FEATURES_COMBINED)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--lovo", action="store_true", help="leave-one-video-out folds")
    p.add_argument("--nli", choices=["precomputed", "remote", "null"], default="null")
    p.add_argument("--nli-store")
    p.add_argument("--nli-url")
    p.add_argument("--nli-cache")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("canary", help="shuffled-label, tokens-only, fold and balance checks")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--n-perm", type=int, default=19)
    p.set_defaults(func=cmd_canary)

    p = sub.add_parser("capability", help="clean vs poisoned variant diagnostics")
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--clean", required=True, help="clean variant id")
    p.add_argument("--poisoned", required=True, help="poisoned variant id")
    p.add_argument("--dimension", default="faithfulness")
    p.add_argument("--fail-threshold", type=int, default=3)
    p.set_defaults(func=cmd_capability)

    p = sub.add_parser("synth", help="generate a synthetic corpus with planted dispositions")
    p.add_argument("--profiles", default="default9", help="default9 or a profiles JSON file")
    p.add_argument("--videos", type=int, default=10)
    p.add_argument("--packs", type=int, default=2)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=None,
                   help="override every profile's noise sigma")
    p.add_argument("--parse-fail-prob", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="run the full measurement pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("self-check", help="verify a run directory against its manifest")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_self_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
