"""End-to-end orchestration: ingest, filters, every metric module, the
attribution suite, and consolidated CSV outputs in a timestamped run
directory with a self-verifying manifest."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import agreement, attribution, capability, receipts, reliability
from .attribution import ClassifierConfig
from .corpus import (DIMENSIONS, Corpus, balance_audit, compliance_exclusions,
                     compliance_filter, intersection_filter, load_corpus)
from .nli import provider_from_config
from .report import write_csv, write_json, write_manifest

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    records: str
    schema_mode: str = "strict"
    nli_kind: str = "null"
    nli_store: str | None = None
    nli_url: str | None = None
    nli_cache: str | None = None
    human_labels: str | None = None
    regime: str = "A_video"  # A_video | B_wiki
    variant_clean: str | None = None
    variant_poisoned: str | None = None
    apply_compliance: bool = True
    apply_intersection: bool = True
    run_receipt_audit: bool = True
    seed: int = 0
    n_boot: int = 2000
    k_folds: int = 5
    n_perm: int = 0
    feature_sets: list[str] = field(default_factory=lambda: [
        attribution.FEATURES_SCORES, attribution.FEATURES_SHAPE,
        attribution.FEATURES_DISPOSITION, attribution.FEATURES_COMBINED])
    tasks: list[str] = field(default_factory=lambda: ["exact"])
    run_lovo: bool = False
    run_marginal_strip: bool = False
    run_tokens_only: bool = True
    presence_threshold: float = 0.90
    nli_p_threshold: float = 0.75
    nli_margin_threshold: float = 0.20
    catches_threshold: float = 0.5
    blind_threshold: float = 0.0
    fail_threshold: int = 3
    n_estimators: int = 100
    classifier_jobs: int = 1
    permutation_jobs: int = 1
    lineage_overrides: dict[str, str] = field(default_factory=dict)
    confusion_feature_set: str = attribution.FEATURES_COMBINED
    output_root: str = "."

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        obj = json.loads(Path(path).read_text())
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def validate(self):
        if not Path(self.records).exists():
            raise PipelineError(f"records path does not exist: {self.records}")
        for name in ("nli_store", "nli_cache", "human_labels"):
            v = getattr(self, name)
            if v and not Path(v).exists() and name != "nli_cache":
                raise PipelineError(f"{name} path does not exist: {v}")
        bad = [fs for fs in self.feature_sets if fs not in attribution.FEATURE_SET_KINDS]
        if bad:
            raise PipelineError(f"unknown feature sets: {bad}")
        if self.regime not in ("A_video", "B_wiki"):
            raise PipelineError(f"unknown regime {self.regime!r}")

    def echo(self) -> dict:
        return {k: getattr(self, k) for k in sorted(self.__dataclass_fields__)}


# common within-family shorthands for the lineage behind "within:<lineage>"
_WITHIN_ALIASES = {"within_gpt": "within:openai", "within_claude": "within:anthropic",
                   "within_openai": "within:openai", "within_anthropic": "within:anthropic"}


def task_rows(task: str, corpus: Corpus, kind: str, evidence,
              lineage_overrides: dict[str, str] | None = None) -> list:
    """Feature rows for one attribution task (label mapping or filtering)."""
    task = _WITHIN_ALIASES.get(task, task)
    if task == "exact":
        return attribution.corpus_features(corpus, kind, evidence)
    if task == "lineage":
        label_map = attribution.lineage_label_map(corpus.judges, lineage_overrides)
        return attribution.corpus_features(corpus, kind, evidence, label_map=label_map)
    if task.startswith("within:"):
        label_map = attribution.within_family_map(corpus.judges, task.split(":", 1)[1],
                                                  lineage_overrides)
        return attribution.corpus_features(corpus, kind, evidence, label_map=label_map)
    if task.startswith("pair:"):
        _, a, b = task.split(":", 2)
        label_map = attribution.pair_label_map(corpus.judges, a, b)
        return attribution.corpus_features(corpus, kind, evidence, label_map=label_map)
    if task.startswith("pack:"):
        pack_id = task.split(":", 1)[1]
        sub = corpus.with_records([r for r in corpus.records if r.pack_id == pack_id])
        if not sub.records:
            raise PipelineError(f"task {task!r}: no records with pack_id {pack_id!r}")
        return attribution.corpus_features(sub, kind, evidence)
    raise PipelineError(f"unknown task {task!r} "
                        "(use exact | lineage | within:<lineage> | pair:a:b | pack:id)")


def _task_slug(task: str) -> str:
    return task.replace(":", "_").replace("/", "_")


def run_pipeline(config: PipelineConfig) -> Path:
    """Run every configured stage; returns the run directory. Any stage
    failure writes a partial-output marker and raises PipelineError."""
    config.validate()
    root = Path(config.output_root)
    root.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    run_dir = root / f"run_complete_pipeline_{stamp}"
    suffix = 1
    while run_dir.exists():
        suffix += 1
        run_dir = root / f"run_complete_pipeline_{stamp}_{suffix}"
    run_dir.mkdir()

    audit_report: dict = {"warnings": []}
    try:
        _run_stages(config, run_dir, audit_report)
    except Exception as e:
        (run_dir / "_PARTIAL").write_text(f"pipeline aborted: {e}\n")
        write_json(run_dir / "audit_report.json", audit_report)
        raise PipelineError(f"pipeline aborted: {e}") from e
    write_json(run_dir / "audit_report.json", audit_report)
    write_manifest(run_dir, config_echo=config.echo(),
                   seeds={"seed": config.seed, "n_boot": config.n_boot, "n_perm": config.n_perm})
    return run_dir


def _run_stages(config: PipelineConfig, run_dir: Path, audit_report: dict):
    corpus = load_corpus(config.records, schema_mode=config.schema_mode)
    if not corpus.records:
        raise PipelineError("corpus is empty")
    audit_report["n_records_loaded"] = len(corpus.records)

    if config.apply_compliance:
        exclusions = compliance_exclusions(corpus)
        corpus = compliance_filter(corpus)
        audit_report["compliance"] = {
            "excluded_by_judge": exclusions,
            "total_excluded": sum(exclusions.values()),
        }
    pre = balance_audit(corpus)
    audit_report["balance_pre_intersection"] = {
        "counts": pre.counts, "balanced": pre.balanced, "offenders": pre.offenders}
    if config.apply_intersection:
        corpus = intersection_filter(corpus)
    post = balance_audit(corpus)
    audit_report["balance"] = {
        "counts": post.counts, "balanced": post.balanced, "offenders": post.offenders}
    audit_report["intersection"] = {
        "applied": config.apply_intersection,
        "n_records": len(corpus.records),
        "n_items": len({r.item_key for r in corpus.records}),
    }

    # agreement
    pairwise = agreement.spearman_pairwise(corpus)
    write_csv(run_dir / "agreement_pairwise.csv", ["judge_a", "judge_b", "spearman_rho"],
              [[a, b, rho] for (a, b), rho in sorted(pairwise.rho.items())])
    alpha_report = agreement.alpha_by_dimension(corpus)
    write_csv(run_dir / "alpha_by_dimension.csv", ["dimension", "alpha"],
              [["overall", alpha_report.alpha_overall]]
              + [[d, alpha_report.alpha_by_dimension[d]] for d in DIMENSIONS])
    audit_report["agreement"] = {
        "spearman_summary": pairwise.summary,
        "spearman_undefined_pairs": [list(p) for p in pairwise.undefined_pairs],
        "alpha_overall": alpha_report.alpha_overall,
        "observed_disagreement": alpha_report.observed_disagreement,
        "expected_disagreement": alpha_report.expected_disagreement,
    }

    # stability
    icc_rows = []
    for judge in corpus.judges:
        try:
            r = reliability.icc31(corpus, judge)
            icc_rows.append([r.judge_id, r.icc, r.n_items, r.k_runs, r.ms_items,
                             r.ms_error, r.n_dropped_items])
        except agreement.UndefinedStatisticError as e:
            audit_report["warnings"].append(f"icc31({judge}): {e}")
    write_csv(run_dir / "icc_by_judge.csv",
              ["judge_id", "icc", "n_items", "k_runs", "ms_items", "ms_error", "n_dropped_items"],
              icc_rows)

    # disposition
    rows = reliability.harshness_rows(corpus)
    summaries = reliability.harshness_summary(rows, n_boot=config.n_boot, seed=config.seed)
    write_csv(run_dir / "harshness_summary.csv",
              ["judge_id", "mean_harshness", "ci_low", "ci_high", "n_boot", "seed",
               "n_videos", "degenerate"],
              [[s.judge_id, s.mean_harshness, s.ci_low, s.ci_high, s.n_boot, s.seed,
                s.n_videos, s.degenerate] for s in summaries])
    emphasis = reliability.dimension_emphasis(corpus)
    write_csv(run_dir / "dimension_emphasis.csv", ["judge_id", "dimension", "emphasis"],
              [[j, d, v] for (j, d), v in sorted(emphasis.items())])

    # temperature sensitivity, only when temperatures are recorded
    if any(r.temperature is not None for r in corpus.records):
        anova = reliability.temperature_anova(corpus)
        write_csv(run_dir / "temperature_anova.csv",
                  ["judge_id", "video_id", "f_stat", "p_value", "eta_squared",
                   "significant_bonferroni", "adjusted_alpha", "n_groups", "n_obs", "defined"],
                  [[a.group_key[0], a.group_key[1], a.f_stat, a.p_value, a.eta_squared,
                    a.significant_bonferroni, a.adjusted_alpha, a.n_groups, a.n_obs, a.defined]
                   for a in anova])

    # receipts: provenance + linkage
    evidence = None
    audit_result = None
    if config.run_receipt_audit:
        provider = provider_from_config(config.nli_kind, store_path=config.nli_store,
                                        url=config.nli_url, cache_path=config.nli_cache)
        audit_result = receipts.audit_receipts(
            corpus, nli=provider, presence_threshold=config.presence_threshold,
            nli_p=config.nli_p_threshold, nli_margin=config.nli_margin_threshold)
        write_csv(run_dir / "receipt_audits.csv",
                  ["receipt_id", "judge_id", "video_id", "pack_id", "run_id", "dimension",
                   "declared_source", "match_type", "similarity", "p_entail", "p_neutral",
                   "p_contradict", "supported"],
                  [[a.receipt_id, a.judge_id, a.video_id, a.pack_id, a.run_id, a.dimension,
                    a.declared_source, a.match_type, a.similarity,
                    a.nli.p_entail if a.nli else None,
                    a.nli.p_neutral if a.nli else None,
                    a.nli.p_contradict if a.nli else None,
                    a.supported] for a in audit_result.audits])
        write_csv(run_dir / "evidence_profiles.csv",
                  ["judge_id", "n_evals", "n_receipts", "receipts_per_eval",
                   "presence_valid_rate", "linkage_rate", "mean_margin", "shotgun_index",
                   "pack_rate", "n_scored", "linkage_unavailable"],
                  [[p.judge_id, p.n_evals, p.n_receipts, p.receipts_per_eval,
                    p.presence_valid_rate, p.linkage_rate, p.mean_margin, p.shotgun_index,
                    p.pack_rate, p.n_scored, p.linkage_unavailable]
                   for p in audit_result.profiles.values()])
        if audit_result.linkage_available:
            write_csv(run_dir / "linkage_summary.csv",
                      ["judge_id", "linkage_rate", "mean_margin", "shotgun_index"],
                      [[p.judge_id, p.linkage_rate, p.mean_margin, p.shotgun_index]
                       for p in audit_result.profiles.values()])
        pref = receipts.source_preference(corpus)
        write_csv(run_dir / "source_preference.csv",
                  ["judge_id", "n_evals", "pack", "script", "other", "pack_rate"],
                  [[r.judge_id, r.n_evals, r.pack, r.script, r.other, r.pack_rate] for r in pref])
        exact = receipts.exact_match_variant(corpus)
        write_csv(run_dir / "exact_match_variant.csv", ["judge_id", "exact_rate"],
                  [[j, exact.per_judge[j]] for j in corpus.judges] + [["ALL", exact.overall_rate]])
        audit_report["receipts"] = {
            "linkage_available": audit_result.linkage_available,
            "n_receipts_audited": len(audit_result.audits),
            "exact_overall_rate": exact.overall_rate,
        }
        model_id = getattr(provider, "model_id", None) \
            or getattr(getattr(provider, "inner", None), "model_id", None)
        if model_id:
            audit_report["receipts"]["nli_model_id"] = model_id
        evidence = attribution.rows_evidence(audit_result.audits,
                                             linkage_available=audit_result.linkage_available)
        if config.human_labels:
            labels = receipts.load_human_labels(config.human_labels)
            metrics = receipts.human_audit_compare(audit_result.audits, labels)
            write_json(run_dir / "human_audit_metrics.json", {
                "n_total": metrics.n_total, "n_presence_valid": metrics.n_presence_valid,
                "agreement": metrics.agreement, "precision": metrics.precision,
                "recall": metrics.recall, "false_positives": metrics.false_positives,
                "false_negatives": metrics.false_negatives,
                "supported_agreement": metrics.supported_agreement,
                "not_supported_agreement": metrics.not_supported_agreement,
            })
    else:
        audit_report["receipts"] = {"skipped": "receipt audit disabled in config"}

    # capability diagnostics (controlled variants)
    if config.variant_clean and config.variant_poisoned:
        diags = capability.variant_diagnostics(
            corpus, config.variant_clean, config.variant_poisoned,
            fail_threshold=config.fail_threshold,
            catches_threshold=config.catches_threshold,
            blind_threshold=config.blind_threshold)
        write_csv(run_dir / "hallucination_detection.csv",
                  ["judge_id", "clean", "poisoned", "drop", "verdict", "failing_rate",
                   "n_clean", "n_poisoned"],
                  [[d.judge_id, d.clean_mean, d.poisoned_mean, d.drop, d.verdict,
                    d.failing_rate, d.n_clean, d.n_poisoned] for d in diags])

    # attribution suite
    clf_config = ClassifierConfig(n_estimators=config.n_estimators, seed=config.seed,
                                  n_jobs=config.classifier_jobs)
    needs_evidence = any(fs in (attribution.FEATURES_DISPOSITION, attribution.FEATURES_COMBINED)
                         for fs in config.feature_sets)
    if needs_evidence and evidence is None:
        audit_report["warnings"].append(
            "disposition features requested without a receipt audit; ratios default to "
            "missing-indicator rows")
        evidence = {}
    fold_audits = {}
    fig3_rows = []
    confusions: dict[str, tuple[list[str], list[list[int]]]] = {}
    for task in config.tasks:
        slug = _task_slug(task)
        confusion_written = False
        for fs in config.feature_sets:
            rows_fs = task_rows(task, corpus, fs, evidence, config.lineage_overrides)
            plan = attribution.grouped_stratified_kfold(rows_fs, k=config.k_folds,
                                                        seed=config.seed)
            report = attribution.train_eval(plan, rows_fs, clf_config,
                                            feature_set=fs, task=task)
            fold_audits[f"{slug}/{fs}"] = plan.audit()
            csv_rows = [["accuracy", report.accuracy], ["macro_f1", report.macro_f1],
                        ["n_rows", report.n_rows], ["k", report.k]]
            csv_rows += [[f"fold_{i}_accuracy", a]
                         for i, a in enumerate(report.per_fold_accuracies)]
            write_csv(run_dir / f"attribution_{slug}_{fs}.csv", ["metric", "value"], csv_rows)
            fig3_rows.append([task, fs, report.accuracy])
            wanted = (fs == config.confusion_feature_set
                      or (config.confusion_feature_set not in config.feature_sets
                          and fs == config.feature_sets[-1]))
            if wanted:
                write_csv(run_dir / f"confusion_{slug}.csv",
                          ["true_label", "predicted_label", "count"],
                          [[t, p, int(report.confusion[i, j])]
                           for i, t in enumerate(report.classes)
                           for j, p in enumerate(report.classes)])
                confusions[task] = (report.classes, report.confusion.tolist())
                confusion_written = True
            if config.run_lovo:
                lovo = attribution.leave_one_video_out(rows_fs, clf_config,
                                                       feature_set=fs, task=task)
                write_csv(run_dir / f"attribution_{slug}_{fs}_lovo.csv", ["metric", "value"],
                          [["accuracy", lovo.accuracy], ["macro_f1", lovo.macro_f1],
                           ["n_folds", lovo.k]])
        if not confusion_written and config.feature_sets:
            audit_report["warnings"].append(f"no confusion matrix written for task {task}")

    # canary bundle: shuffled labels, tokens-only, fold audit, balance
    canary: dict = {"balance_ok": post.balanced,
                    "fold_audits_ok": all(a["ok"] for a in fold_audits.values())}
    if config.run_tokens_only and config.tasks:
        tok_rows = task_rows(config.tasks[0], corpus, attribution.FEATURES_TOKENS_ONLY,
                             None, config.lineage_overrides)
        tok_plan = attribution.grouped_stratified_kfold(tok_rows, k=config.k_folds,
                                                        seed=config.seed)
        tok_report = attribution.tokens_only_probe(tok_rows, tok_plan, clf_config,
                                                   task=config.tasks[0])
        chance = 1.0 / len(tok_report.classes)
        canary["tokens_only_accuracy"] = tok_report.accuracy
        canary["chance"] = chance
        write_csv(run_dir / f"attribution_{_task_slug(config.tasks[0])}_tokens_only.csv",
                  ["metric", "value"],
                  [["accuracy", tok_report.accuracy], ["macro_f1", tok_report.macro_f1],
                   ["n_rows", tok_report.n_rows], ["k", tok_report.k]])
    if config.n_perm > 0 and config.tasks:
        task = config.tasks[0]
        fs = (config.confusion_feature_set if config.confusion_feature_set in config.feature_sets
              else config.feature_sets[0])
        rows_fs = task_rows(task, corpus, fs, evidence, config.lineage_overrides)
        perm = attribution.permutation_test(
            rows_fs,
            lambda rr: attribution.grouped_stratified_kfold(rr, k=config.k_folds,
                                                            seed=config.seed),
            n_perm=config.n_perm, seed=config.seed, config=clf_config,
            n_jobs=config.permutation_jobs)
        write_csv(run_dir / f"permutation_null_{_task_slug(task)}.csv",
                  ["iteration", "accuracy"],
                  [[i + 1, a] for i, a in enumerate(perm.null_accuracies)])
        canary["permutation_p"] = perm.p_value
        canary["observed_accuracy"] = perm.observed_accuracy
        canary["shuffled_mean_accuracy"] = (sum(perm.null_accuracies)
                                            / len(perm.null_accuracies))
    if config.run_marginal_strip and config.tasks:
        rows_sc = task_rows(config.tasks[0], corpus, attribution.FEATURES_SCORES,
                            None, config.lineage_overrides)
        plan = attribution.grouped_stratified_kfold(rows_sc, k=config.k_folds, seed=config.seed)
        for mode in (attribution.STRIP_ZSCORE, attribution.STRIP_QUANTILE):
            rep = attribution.oracle_marginal_strip(rows_sc, mode, plan, clf_config,
                                                    task=config.tasks[0])
            write_csv(run_dir / f"attribution_{_task_slug(config.tasks[0])}_strip_{mode}.csv",
                      ["metric", "value"],
                      [["accuracy", rep.accuracy], ["macro_f1", rep.macro_f1]])
    audit_report["fold_audits"] = fold_audits
    audit_report["canary"] = canary

    # figure data
    icc_by_judge = {row[0]: row[1] for row in icc_rows}
    write_csv(run_dir / "fig1_reliability_paradox.csv",
              ["judge_id", "icc", "mean_harshness", "ci_low", "ci_high"],
              [[s.judge_id, icc_by_judge.get(s.judge_id), s.mean_harshness, s.ci_low, s.ci_high]
               for s in summaries])
    if audit_result is not None:
        write_csv(run_dir / "fig2_evidence_behavior.csv",
                  ["judge_id", "presence_valid_rate", "linkage_rate", "receipts_per_eval",
                   "shotgun_index"],
                  [[p.judge_id, p.presence_valid_rate, p.linkage_rate, p.receipts_per_eval,
                    p.shotgun_index] for p in audit_result.profiles.values()])
    if fig3_rows:
        write_csv(run_dir / "fig3_attribution_accuracy.csv",
                  ["task", "feature_set", "accuracy"], fig3_rows)
    within_tasks = [t for t in confusions
                    if t.startswith(("within", "pair:")) or t in _WITHIN_ALIASES]
    if within_tasks:
        classes, cm = confusions[within_tasks[0]]
        write_csv(run_dir / "fig4_within_family_confusion.csv",
                  ["true_label", "predicted_label", "count"],
                  [[t, p, cm[i][j]] for i, t in enumerate(classes)
                   for j, p in enumerate(classes)])
    if "exact" in confusions:
        classes, cm = confusions["exact"]
        write_csv(run_dir / "fig5_exact_confusion.csv",
                  ["true_label", "predicted_label", "count"],
                  [[t, p, cm[i][j]] for i, t in enumerate(classes)
                   for j, p in enumerate(classes)])
    if config.variant_clean and config.variant_poisoned:
        write_csv(run_dir / "fig6_hallucination_drops.csv",
                  ["judge_id", "clean", "poisoned", "drop", "verdict"],
                  [[d.judge_id, d.clean_mean, d.poisoned_mean, d.drop, d.verdict]
                   for d in diags])
