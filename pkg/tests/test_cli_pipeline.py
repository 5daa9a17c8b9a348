import json
import os
from pathlib import Path

import pytest

from judgeprint.cli import main
from judgeprint.nli import save_store
from judgeprint.pipeline import PipelineConfig, PipelineError, run_pipeline
from judgeprint.report import read_csv, sha256_file, verify_manifest, write_csv
from judgeprint.corpus import save_corpus
from judgeprint.synth import default_profiles, generate_corpus


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    """CLI-format synthetic corpus with NLI store, shared across tests."""
    out = tmp_path_factory.mktemp("synthdata")
    rc = main(["synth", "--profiles", "default9", "--videos", "8", "--packs", "2",
               "--runs", "2", "--seed", "5", "--out", str(out)])
    assert rc == 0
    return out


def pipeline_config(synth_dir, out_root, **over):
    cfg = {
        "records": str(synth_dir),
        "nli_kind": "precomputed",
        "nli_store": str(synth_dir / "nli_store.jsonl"),
        "seed": 3,
        "n_boot": 50,
        "k_folds": 4,
        "n_perm": 4,
        "n_estimators": 15,
        "feature_sets": ["scores", "combined"],
        "tasks": ["exact"],
        "output_root": str(out_root),
    }
    cfg.update(over)
    return cfg


class TestSynthCli:
    def test_synth_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["synth", "--profiles", "default9", "--videos", "3", "--packs", "1",
                         "--runs", "2", "--seed", "7", "--out", str(out)]) == 0
        assert (a / "records.jsonl").read_bytes() == (b / "records.jsonl").read_bytes()
        assert (a / "nli_store.jsonl").read_bytes() == (b / "nli_store.jsonl").read_bytes()
        assert (a / "ground_truth.csv").read_bytes() == (b / "ground_truth.csv").read_bytes()

    def test_ingest_validate(self, synth_dir, capsys):
        assert main(["ingest-validate", "--records", str(synth_dir)]) == 0
        out = capsys.readouterr().out
        assert "records: 288" in out
        assert "balanced: True" in out


class TestSubcommands:
    def test_agreement_outputs(self, synth_dir, tmp_path):
        out = tmp_path / "agree"
        assert main(["agreement", "--records", str(synth_dir), "--out", str(out)]) == 0
        header, rows = read_csv(out / "agreement_pairwise.csv")
        assert header == ["judge_a", "judge_b", "spearman_rho"]
        assert len(rows) == 36
        header, rows = read_csv(out / "alpha_by_dimension.csv")
        assert rows[0]["dimension"] == "overall"
        assert len(rows) == 6

    def test_stability_and_disposition(self, synth_dir, tmp_path):
        out = tmp_path / "st"
        assert main(["stability", "--records", str(synth_dir), "--out", str(out)]) == 0
        _, rows = read_csv(out / "icc_by_judge.csv")
        assert len(rows) == 9
        out2 = tmp_path / "disp"
        assert main(["disposition", "--records", str(synth_dir), "--out", str(out2),
                     "--n-boot", "20", "--seed", "1"]) == 0
        _, rows = read_csv(out2 / "harshness_summary.csv")
        assert len(rows) == 9
        assert all(float(r["ci_low"]) <= float(r["ci_high"]) for r in rows)

    def test_audit_receipts_with_store(self, synth_dir, tmp_path):
        out = tmp_path / "aud"
        assert main(["audit-receipts", "--records", str(synth_dir), "--out", str(out),
                     "--nli", "precomputed", "--nli-store",
                     str(synth_dir / "nli_store.jsonl")]) == 0
        header, rows = read_csv(out / "receipt_audits.csv")
        assert "p_entail" in header
        supported = [r for r in rows if r["supported"] == "true"]
        assert supported
        _, profiles = read_csv(out / "evidence_profiles.csv")
        for p in profiles:
            if p["linkage_rate"] and p["shotgun_index"]:
                expected = float(p["receipts_per_eval"]) * (1 - float(p["linkage_rate"]))
                assert abs(float(p["shotgun_index"]) - expected) < 5e-5

    def test_attribute_and_canary(self, synth_dir, tmp_path):
        out = tmp_path / "attr"
        assert main(["attribute", "--records", str(synth_dir), "--out", str(out),
                     "--features", "scores", "--k", "4", "--trees", "15"]) == 0
        _, rows = read_csv(out / "attribution_exact_scores.csv")
        metrics = {r["metric"]: r["value"] for r in rows}
        assert 0.0 <= float(metrics["accuracy"]) <= 1.0
        out2 = tmp_path / "canary"
        rc = main(["canary", "--records", str(synth_dir), "--out", str(out2),
                   "--k", "4", "--trees", "15", "--n-perm", "4"])
        report = json.loads((out2 / "canary_report.json").read_text())
        assert report["balance_ok"] and report["fold_audit_ok"]
        assert rc in (0, 1)  # shuffle/tokens checks are statistical

    def test_capability_roundtrip(self, tmp_path):
        from conftest import make_corpus, make_record
        from judgeprint.corpus import DIMENSIONS
        records = []
        for judge, (clean, poisoned) in {"a": (5, 2), "b": (4, 4)}.items():
            for variant, score in (("11", clean), ("22", poisoned)):
                for i in range(3):
                    dims = {d: 4 for d in DIMENSIONS}
                    dims["faithfulness"] = score
                    records.append(make_record(judge=judge, video=f"v{i}", pack=variant,
                                               run=1, scores=dims, variant=variant))
        d = tmp_path / "vc"
        save_corpus(make_corpus(records), d)
        out = tmp_path / "cap"
        assert main(["capability", "--records", str(d), "--out", str(out),
                     "--clean", "11", "--poisoned", "22", "--no-intersection"]) == 0
        _, rows = read_csv(out / "hallucination_detection.csv")
        verdicts = {r["judge_id"]: r["verdict"] for r in rows}
        assert verdicts == {"a": "catches", "b": "blind"}

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as err:
            main(["agreement"])  # missing required args
        assert err.value.code == 2

    def test_module_error_exit_code(self, tmp_path, capsys):
        assert main(["agreement", "--records", str(tmp_path / "nope"),
                     "--out", str(tmp_path)]) == 1
        assert "error:" in capsys.readouterr().err


class TestPipeline:
    def test_full_pipeline_outputs_and_manifest(self, synth_dir, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(pipeline_config(synth_dir, tmp_path / "runs")))
        assert main(["pipeline", "--config", str(cfg_path)]) == 0
        runs = list((tmp_path / "runs").glob("run_complete_pipeline_*"))
        assert len(runs) == 1
        run = runs[0]
        for name in ("agreement_pairwise.csv", "alpha_by_dimension.csv", "icc_by_judge.csv",
                     "harshness_summary.csv", "dimension_emphasis.csv", "receipt_audits.csv",
                     "evidence_profiles.csv", "source_preference.csv", "exact_match_variant.csv",
                     "linkage_summary.csv", "attribution_exact_scores.csv",
                     "attribution_exact_combined.csv", "confusion_exact.csv",
                     "permutation_null_exact.csv", "audit_report.json", "manifest.json",
                     "fig1_reliability_paradox.csv", "fig2_evidence_behavior.csv",
                     "fig3_attribution_accuracy.csv"):
            assert (run / name).exists(), name
        assert main(["self-check", "--run-dir", str(run)]) == 0
        report = json.loads((run / "audit_report.json").read_text())
        assert report["balance"]["balanced"]
        assert report["canary"]["fold_audits_ok"]

    def test_rerun_identical_hashes(self, synth_dir, tmp_path):
        cfg = PipelineConfig(**pipeline_config(synth_dir, tmp_path / "r1", n_perm=2))
        run1 = run_pipeline(cfg)
        cfg2 = PipelineConfig(**pipeline_config(synth_dir, tmp_path / "r2", n_perm=2))
        run2 = run_pipeline(cfg2)
        m1 = json.loads((run1 / "manifest.json").read_text())["hashes"]
        m2 = json.loads((run2 / "manifest.json").read_text())["hashes"]
        # output roots differ, so compare the per-file content hashes only
        assert m1 == m2

    def test_null_provider_linkage_files_absent_and_flagged(self, synth_dir, tmp_path):
        cfg = PipelineConfig(**pipeline_config(
            synth_dir, tmp_path / "runs", nli_kind="null", nli_store=None,
            feature_sets=["scores"], n_perm=0))
        run = run_pipeline(cfg)
        assert not (run / "linkage_summary.csv").exists()
        report = json.loads((run / "audit_report.json").read_text())
        assert report["receipts"]["linkage_available"] is False
        _, profiles = read_csv(run / "evidence_profiles.csv")
        assert all(p["linkage_rate"] == "" for p in profiles)
        assert all(p["linkage_unavailable"] == "true" for p in profiles)

    def test_redacted_corpus_aborts_receipt_audit(self, synth_dir, tmp_path):
        # corpus without sources: the audit stage must fail loudly, not skip
        redacted = tmp_path / "redacted"
        redacted.mkdir()
        for name in ("schema.json", "records.jsonl"):
            (redacted / name).write_bytes((synth_dir / name).read_bytes())
        cfg = PipelineConfig(**pipeline_config(redacted, tmp_path / "runs",
                                               nli_kind="null", nli_store=None))
        with pytest.raises(PipelineError, match="sources unavailable"):
            run_pipeline(cfg)
        cfg_off = PipelineConfig(**pipeline_config(
            redacted, tmp_path / "runs2", nli_kind="null", nli_store=None,
            run_receipt_audit=False, feature_sets=["scores"], n_perm=0))
        run = run_pipeline(cfg_off)
        assert not (run / "receipt_audits.csv").exists()
        report = json.loads((run / "audit_report.json").read_text())
        assert "skipped" in report["receipts"]

    def test_partial_marker_on_failure(self, synth_dir, tmp_path):
        cfg = PipelineConfig(**pipeline_config(
            synth_dir, tmp_path / "runs",
            nli_kind="precomputed", nli_store=str(synth_dir / "ground_truth.csv")))
        with pytest.raises(PipelineError):
            run_pipeline(cfg)
        runs = list((tmp_path / "runs").glob("run_complete_pipeline_*"))
        assert (runs[0] / "_PARTIAL").exists()

    def test_self_check_detects_tampering(self, synth_dir, tmp_path):
        cfg = PipelineConfig(**pipeline_config(synth_dir, tmp_path / "runs",
                                               n_perm=0, feature_sets=["scores"]))
        run = run_pipeline(cfg)
        target = run / "icc_by_judge.csv"
        target.write_text(target.read_text() + "tampered\n")
        problems = verify_manifest(run)
        assert any("icc_by_judge" in p for p in problems)
        assert main(["self-check", "--run-dir", str(run)]) == 1

    def test_unknown_config_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"records": ".", "bogus": 1}))
        with pytest.raises(PipelineError, match="unknown config keys"):
            PipelineConfig.from_json(path)


class TestCsvRoundTrip:
    def test_emitted_csvs_reparse(self, synth_dir, tmp_path):
        cfg = PipelineConfig(**pipeline_config(synth_dir, tmp_path / "runs",
                                               n_perm=0, feature_sets=["scores"]))
        run = run_pipeline(cfg)
        for csv_path in run.glob("*.csv"):
            header, rows = read_csv(csv_path)
            assert header, csv_path
            for row in rows:
                assert set(row) == set(header)

    def test_write_read_preserves_values(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, ["a", "b", "c"], [[1, 2.5, None], [True, float("nan"), "x"]])
        header, rows = read_csv(path)
        assert rows[0] == {"a": "1", "b": "2.5", "c": ""}
        assert rows[1] == {"a": "true", "b": "nan", "c": "x"}
