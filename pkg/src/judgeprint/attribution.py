"""Judge-attribution probes.

Feature rows are built per evaluation record (scores, row-demeaned shape,
evidence-behavior dispositions, or token count alone), split into
video-grouped stratified folds, and classified with a random forest under
a fixed deterministic configuration. Canary controls (label permutation,
tokens-only probe, fold audits) and the oracle per-judge marginal strip
ride on the same machinery.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed
from sklearn.ensemble import RandomForestClassifier
from sklearn.metrics import confusion_matrix, f1_score

from .corpus import DIMENSIONS, GROUNDING_DIMENSIONS, Corpus
from .receipts import ReceiptAudit

log = logging.getLogger(__name__)

FEATURES_SCORES = "scores"
FEATURES_SHAPE = "shape"
FEATURES_DISPOSITION = "disposition"
FEATURES_COMBINED = "combined"
FEATURES_TOKENS_ONLY = "tokens_only"
FEATURE_SET_KINDS = (FEATURES_SCORES, FEATURES_SHAPE, FEATURES_DISPOSITION,
                     FEATURES_COMBINED, FEATURES_TOKENS_ONLY)

STRIP_ZSCORE = "zscore"
STRIP_QUANTILE = "quantile"

# disposition layout: 3 grounding-dim receipt counts, then the ratio block,
# then one missing indicator per ratio feature
_RATIO_NAMES = ("presence_valid_rate", "linkage_rate", "mean_margin", "pack_fraction")
DISPOSITION_LENGTH = len(GROUNDING_DIMENSIONS) + len(_RATIO_NAMES) + 1 + len(_RATIO_NAMES)


class FeatureBuildError(ValueError):
    pass


class FoldError(ValueError):
    pass


def derive_seed(master: int, *tags) -> int:
    """Stable 32-bit stream seed from (master seed, purpose tags)."""
    blob = repr((int(master),) + tuple(tags)).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:4], "big")


@dataclass
class RowEvidence:
    """Per-record aggregates of the receipt audit, the raw material for
    disposition features. None marks an undefined ratio."""
    receipt_counts: dict[str, int]
    presence_valid_rate: float | None
    linkage_rate: float | None
    mean_margin: float | None
    shotgun: float | None
    pack_fraction: float | None


@dataclass
class FeatureRow:
    label: str
    group: str  # video_id
    values: np.ndarray
    missing_indicators: np.ndarray  # aligned to the ratio features; empty otherwise
    row_key: tuple[str, str, str, int] = ("", "", "", 0)


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray  # row index -> fold index
    groups: list[str]  # group of each row
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def fold_groups(self, fold: int) -> set[str]:
        return {self.groups[i] for i in self.test_indices(fold)}

    def audit(self) -> dict:
        """Coverage, disjointness, and zero group overlap across test folds."""
        n = len(self.assignments)
        covered = np.zeros(n, dtype=int)
        group_folds: dict[str, set[int]] = {}
        for fold in range(self.k):
            idx = self.test_indices(fold)
            covered[idx] += 1
            for i in idx:
                group_folds.setdefault(self.groups[i], set()).add(fold)
        spanning = sorted(g for g, folds in group_folds.items() if len(folds) > 1)
        empty_folds = [f for f in range(self.k) if self.test_indices(f).size == 0]
        ok = bool(np.all(covered == 1)) and not spanning and not empty_folds
        return {"n_rows": n, "k": self.k, "full_coverage": bool(np.all(covered == 1)),
                "pairwise_disjoint": bool(np.all(covered <= 1)),
                "groups_spanning_folds": spanning, "empty_folds": empty_folds, "ok": ok,
                "test_groups_per_fold": [sorted(self.fold_groups(f)) for f in range(self.k)]}


@dataclass
class ClassifierConfig:
    """Fixed random-forest configuration; determinism is part of the
    artifact contract, so every field is pinned and seed-derived."""
    n_estimators: int = 100
    max_depth: int | None = None
    criterion: str = "gini"
    bootstrap: bool = True
    seed: int = 0
    n_jobs: int = 1

    def build(self, n_features: int, stream_seed: int) -> RandomForestClassifier:
        return RandomForestClassifier(
            n_estimators=self.n_estimators, max_depth=self.max_depth,
            criterion=self.criterion, bootstrap=self.bootstrap,
            max_features=int(math.ceil(math.sqrt(n_features))),
            random_state=stream_seed, n_jobs=self.n_jobs)


@dataclass
class AttributionReport:
    feature_set: str
    accuracy: float
    macro_f1: float
    classes: list[str]
    confusion: np.ndarray  # rows true, cols predicted, canonical class order
    per_fold_accuracies: list[float]
    n_rows: int
    k: int
    p_permutation: float | None = None
    task: str = "exact"

    def to_json(self) -> str:
        obj = {
            "task": self.task, "feature_set": self.feature_set,
            "accuracy": self.accuracy, "macro_f1": self.macro_f1,
            "classes": self.classes, "confusion": self.confusion.tolist(),
            "per_fold_accuracies": self.per_fold_accuracies,
            "n_rows": self.n_rows, "k": self.k, "p_permutation": self.p_permutation,
        }
        return json.dumps(obj, sort_keys=True)


@dataclass
class PermutationResult:
    observed_accuracy: float
    p_value: float
    null_accuracies: list[float]
    n_perm: int
    seed: int


def rows_evidence(audits: list[ReceiptAudit],
                  linkage_available: bool = True) -> dict[tuple, RowEvidence]:
    """Collapse audit rows to per-record evidence aggregates."""
    grouped: dict[tuple, list[ReceiptAudit]] = {}
    for a in audits:
        grouped.setdefault(a.record_key, []).append(a)
    out = {}
    for key, rows in grouped.items():
        counts = {d: 0 for d in GROUNDING_DIMENSIONS}
        for a in rows:
            if a.dimension in counts:
                counts[a.dimension] += 1
        n = len(rows)
        valid = sum(1 for a in rows if a.presence_valid)
        scored = [a for a in rows if a.supported is not None]
        presence = valid / n if n else None
        linkage = None
        margin = None
        if linkage_available and scored:
            linkage = sum(1 for a in scored if a.supported) / len(scored)
            margin = math.fsum(a.nli.margin for a in scored) / len(scored)
        if n == 0:
            shotgun = 0.0
        elif linkage is None:
            shotgun = None
        else:
            shotgun = n * (1.0 - linkage)
        pack = (sum(1 for a in rows if a.declared_source == "pack") / n) if n else None
        out[key] = RowEvidence(receipt_counts=counts, presence_valid_rate=presence,
                               linkage_rate=linkage, mean_margin=margin,
                               shotgun=shotgun, pack_fraction=pack)
    return out


_EMPTY_EVIDENCE = RowEvidence(receipt_counts={d: 0 for d in GROUNDING_DIMENSIONS},
                              presence_valid_rate=None, linkage_rate=None,
                              mean_margin=None, shotgun=0.0, pack_fraction=None)


def _disposition_vector(ev: RowEvidence) -> tuple[np.ndarray, np.ndarray]:
    ratios = [ev.presence_valid_rate, ev.linkage_rate, ev.mean_margin, ev.pack_fraction]
    indicators = np.array([r is None for r in ratios], dtype=bool)
    filled = [0.0 if r is None else float(r) for r in ratios]
    shotgun = 0.0 if ev.shotgun is None else float(ev.shotgun)
    values = np.array(
        [float(ev.receipt_counts[d]) for d in GROUNDING_DIMENSIONS]
        + filled + [shotgun] + list(indicators.astype(float)),
        dtype=float)
    return values, indicators


def build_features(record, evidence: RowEvidence | None, kind: str) -> FeatureRow:
    """One feature row for one evaluation record.

    scores: the 5 dimension scores in canonical order. shape: scores minus
    the row mean. disposition: receipt counts, per-row rates and margins
    with explicit missing indicators (undefined ratios become 0.0 with the
    indicator set). combined: scores then disposition. tokens_only: the
    output-length proxy alone.
    """
    if kind not in FEATURE_SET_KINDS:
        raise FeatureBuildError(f"unknown feature set {kind!r}")
    empty_ind = np.zeros(0, dtype=bool)
    if kind in (FEATURES_SCORES, FEATURES_SHAPE, FEATURES_COMBINED):
        missing = [d for d in DIMENSIONS if d not in record.dimension_scores]
        if missing:
            raise FeatureBuildError(f"record {record.key} lacks dimension scores {missing}")
        scores = np.array([float(record.dimension_scores[d]) for d in DIMENSIONS])
    if kind == FEATURES_SCORES:
        values, ind = scores, empty_ind
    elif kind == FEATURES_SHAPE:
        values, ind = scores - scores.mean(), empty_ind
    elif kind == FEATURES_TOKENS_ONLY:
        if record.token_count is None:
            raise FeatureBuildError(f"record {record.key} lacks token_count")
        values, ind = np.array([float(record.token_count)]), empty_ind
    else:
        if evidence is None:
            raise FeatureBuildError(
                f"{kind} features need receipt-audit aggregates for record {record.key}")
        disp, ind = _disposition_vector(evidence)
        values = np.concatenate([scores, disp]) if kind == FEATURES_COMBINED else disp
    return FeatureRow(label=record.judge_id, group=record.video_id, values=values,
                      missing_indicators=ind, row_key=record.key)


def corpus_features(corpus: Corpus, kind: str,
                    evidence: dict[tuple, RowEvidence] | None = None,
                    label_map: dict[str, str] | None = None) -> list[FeatureRow]:
    """Feature rows for every record, in corpus order. label_map relabels
    judges (e.g. provider lineage); records mapping to None are dropped."""
    rows = []
    for rec in corpus.records:
        ev = None
        if kind in (FEATURES_DISPOSITION, FEATURES_COMBINED):
            ev = (evidence or {}).get(rec.key, _EMPTY_EVIDENCE)
        row = build_features(rec, ev, kind)
        if label_map is not None:
            label = label_map.get(rec.judge_id)
            if label is None:
                continue
            row = replace(row, label=label)
        rows.append(row)
    return rows


def grouped_stratified_kfold(rows: list[FeatureRow], k: int = 5, seed: int = 0) -> FoldPlan:
    """Assign whole groups (videos) to k folds, greedily balancing per-fold
    class counts first and fold sizes second.

    Groups are shuffled (seeded) for tie order, then placed largest-first
    into the fold that minimizes the squared deviation of fold class
    counts from the fold-size-proportional expectation.
    """
    if not rows:
        raise FoldError("no rows to split")
    groups: dict[str, list[int]] = {}
    for i, r in enumerate(rows):
        groups.setdefault(r.group, []).append(i)
    if len(groups) < k:
        raise FoldError(f"need >= {k} groups, got {len(groups)}")
    classes = sorted({r.label for r in rows})
    cidx = {c: i for i, c in enumerate(classes)}
    names = sorted(groups)
    rng = np.random.default_rng(derive_seed(seed, "fold-shuffle"))
    order = list(rng.permutation(len(names)))
    names = [names[i] for i in order]
    names.sort(key=lambda g: -len(groups[g]))  # stable: keeps shuffled tie order

    total_counts = np.zeros(len(classes))
    for r in rows:
        total_counts[cidx[r.label]] += 1
    frac = total_counts / total_counts.sum()

    fold_counts = np.zeros((k, len(classes)))
    fold_sizes = np.zeros(k)
    fold_groups = np.zeros(k, dtype=int)
    assignments = np.full(len(rows), -1, dtype=int)
    for gidx, g in enumerate(names):
        gcount = np.zeros(len(classes))
        for i in groups[g]:
            gcount[cidx[rows[i].label]] += 1
        gsize = len(groups[g])
        # feasibility: every fold must receive at least one group
        empty = [f for f in range(k) if fold_groups[f] == 0]
        remaining = len(names) - gidx
        candidates = empty if (empty and remaining <= len(empty)) else range(k)
        best_fold, best_cost = -1, None
        for f in candidates:
            new_counts = fold_counts[f] + gcount
            new_size = fold_sizes[f] + gsize
            cost = float(((new_counts - new_size * frac) ** 2).sum())
            key_tuple = (cost, fold_sizes[f], f)
            if best_cost is None or key_tuple < best_cost:
                best_cost, best_fold = key_tuple, f
        fold_counts[best_fold] += gcount
        fold_sizes[best_fold] += gsize
        fold_groups[best_fold] += 1
        for i in groups[g]:
            assignments[i] = best_fold
    return FoldPlan(k=k, assignments=assignments, groups=[r.group for r in rows], seed=seed)


def lovo_plan(rows: list[FeatureRow]) -> FoldPlan:
    """Leave-one-video-out: one fold per group, sorted group order."""
    names = sorted({r.group for r in rows})
    if len(names) < 2:
        raise FoldError("leave-one-video-out needs >= 2 videos")
    fold_of = {g: i for i, g in enumerate(names)}
    assignments = np.array([fold_of[r.group] for r in rows], dtype=int)
    plan = FoldPlan(k=len(names), assignments=assignments,
                    groups=[r.group for r in rows], seed=0)
    for f in range(plan.k):
        held = plan.fold_groups(f)
        if len(held) != 1:
            raise FoldError(f"LOVO fold {f} holds out {sorted(held)}, expected exactly one video")
    return plan


def train_eval(plan: FoldPlan, rows: list[FeatureRow],
               config: ClassifierConfig | None = None,
               feature_set: str = "", task: str = "exact") -> AttributionReport:
    """Fit per fold, pool held-out predictions, and score them.

    Prediction is the argmax of averaged tree votes; ties resolve to the
    first class in canonical (sorted) label order via the classifier's
    class ordering.
    """
    config = config or ClassifierConfig()
    audit = plan.audit()
    if not audit["ok"]:
        raise FoldError(f"fold plan fails audit: {audit}")
    X = np.stack([r.values for r in rows]).astype(np.float64)
    y = np.array([r.label for r in rows])
    classes = sorted(set(y))
    if len(classes) < 2:
        raise FoldError(f"attribution needs >= 2 classes, got {classes}")

    y_true_all = np.empty(len(rows), dtype=object)
    y_pred_all = np.empty(len(rows), dtype=object)
    per_fold = []
    for f in range(plan.k):
        tr, te = plan.train_indices(f), plan.test_indices(f)
        train_classes = set(y[tr])
        lacking = [c for c in classes if c not in train_classes]
        if lacking:
            raise FoldError(f"fold {f} training set lacks classes {lacking}")
        clf = config.build(X.shape[1], derive_seed(config.seed, "fold", f))
        clf.fit(X[tr], y[tr])
        pred = clf.predict(X[te])
        y_true_all[te] = y[te]
        y_pred_all[te] = pred
        per_fold.append(float(np.mean(pred == y[te])))

    y_true = y_true_all.astype(str)
    y_pred = y_pred_all.astype(str)
    acc = float(np.mean(y_true == y_pred))
    f1 = float(f1_score(y_true, y_pred, labels=classes, average="macro", zero_division=0))
    cm = confusion_matrix(y_true, y_pred, labels=classes)
    return AttributionReport(feature_set=feature_set, accuracy=acc, macro_f1=f1,
                             classes=classes, confusion=cm, per_fold_accuracies=per_fold,
                             n_rows=len(rows), k=plan.k, task=task)


def leave_one_video_out(rows: list[FeatureRow], config: ClassifierConfig | None = None,
                        feature_set: str = "", task: str = "exact") -> AttributionReport:
    return train_eval(lovo_plan(rows), rows, config, feature_set=feature_set, task=task)


def permutation_test(rows: list[FeatureRow], plan_builder, n_perm: int = 300,
                     seed: int = 0, config: ClassifierConfig | None = None,
                     n_jobs: int = 1) -> PermutationResult:
    """Label-shuffle null for the attribution accuracy.

    Labels are permuted uniformly over all rows; groups stay attached to
    their rows so fold construction remains leakage-free. p-value is
    (1 + #{null >= observed}) / (n_perm + 1), never zero.
    """
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    config = config or ClassifierConfig()
    observed = train_eval(plan_builder(rows), rows, config).accuracy
    labels = [r.label for r in rows]

    def one(i: int) -> float:
        rng = np.random.default_rng(derive_seed(seed, "perm", i))
        perm = rng.permutation(len(rows))
        shuffled = [replace(r, label=labels[j]) for r, j in zip(rows, perm)]
        cfg = replace(config, seed=derive_seed(config.seed, "perm-fit", i))
        return train_eval(plan_builder(shuffled), shuffled, cfg).accuracy

    if n_jobs == 1:
        null = [one(i) for i in range(n_perm)]
    else:
        null = Parallel(n_jobs=n_jobs, backend="threading")(delayed(one)(i) for i in range(n_perm))
    c = sum(1 for a in null if a >= observed)
    return PermutationResult(observed_accuracy=observed, p_value=(1 + c) / (n_perm + 1),
                             null_accuracies=list(null), n_perm=n_perm, seed=seed)


def tokens_only_probe(rows: list[FeatureRow], plan: FoldPlan,
                      config: ClassifierConfig | None = None,
                      task: str = "exact") -> AttributionReport:
    """Length-shortcut canary: classify from token counts alone."""
    if any(r.values.shape != (1,) for r in rows):
        raise FeatureBuildError("tokens_only probe expects single-feature rows")
    return train_eval(plan, rows, config, feature_set=FEATURES_TOKENS_ONLY, task=task)


def oracle_marginal_strip(rows: list[FeatureRow], mode: str, plan: FoldPlan,
                          config: ClassifierConfig | None = None,
                          task: str = "exact") -> AttributionReport:
    """Oracle-conditioned control: remove per-judge scoring marginals.

    Within each fold, per-(judge, dimension) parameters are fit on the
    training rows only, then applied to that judge's train and test rows
    (the transform conditions on the true label, hence 'oracle').
    zscore: (x - mean) / std, population std; a zero-variance feature
    collapses to 0.0 for that judge. quantile: within-judge empirical CDF
    rank in [0, 1].
    """
    if mode not in (STRIP_ZSCORE, STRIP_QUANTILE):
        raise ValueError(f"unknown strip mode {mode!r}")
    config = config or ClassifierConfig()
    audit = plan.audit()
    if not audit["ok"]:
        raise FoldError(f"fold plan fails audit: {audit}")
    y = np.array([r.label for r in rows])
    classes = sorted(set(y))

    y_true_all = np.empty(len(rows), dtype=object)
    y_pred_all = np.empty(len(rows), dtype=object)
    per_fold = []
    for f in range(plan.k):
        Xt, tr, te = strip_transform_for_fold(rows, plan, f, mode)
        lacking = [c for c in classes if c not in set(y[tr])]
        if lacking:
            raise FoldError(f"fold {f} training set lacks classes {lacking}")
        clf = config.build(Xt.shape[1], derive_seed(config.seed, "strip", mode, f))
        clf.fit(Xt[tr], y[tr])
        pred = clf.predict(Xt[te])
        y_true_all[te] = y[te]
        y_pred_all[te] = pred
        per_fold.append(float(np.mean(pred == y[te])))

    y_true = y_true_all.astype(str)
    y_pred = y_pred_all.astype(str)
    acc = float(np.mean(y_true == y_pred))
    f1 = float(f1_score(y_true, y_pred, labels=classes, average="macro", zero_division=0))
    cm = confusion_matrix(y_true, y_pred, labels=classes)
    return AttributionReport(feature_set=f"scores_{mode}", accuracy=acc, macro_f1=f1,
                             classes=classes, confusion=cm, per_fold_accuracies=per_fold,
                             n_rows=len(rows), k=plan.k, task=task)


def strip_transform_for_fold(rows: list[FeatureRow], plan: FoldPlan, fold: int,
                             mode: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(transformed X, train idx, test idx) for one fold of the marginal
    strip; exposed so the moment contract is directly checkable."""
    X = np.stack([r.values for r in rows]).astype(np.float64)
    y = np.array([r.label for r in rows])
    tr, te = plan.train_indices(fold), plan.test_indices(fold)
    Xt = X.copy()
    for judge in sorted(set(y)):
        jtr = tr[y[tr] == judge]
        jall = np.flatnonzero(y == judge)
        for col in range(X.shape[1]):
            train_vals = X[jtr, col]
            if mode == STRIP_ZSCORE:
                sd = train_vals.std()
                if round(sd, 12) == 0.0:
                    log.warning("zero training std for (%s, col %d); feature zeroed", judge, col)
                    Xt[jall, col] = 0.0
                else:
                    Xt[jall, col] = (X[jall, col] - train_vals.mean()) / sd
            else:
                sorted_vals = np.sort(train_vals)
                Xt[jall, col] = np.searchsorted(sorted_vals, X[jall, col], side="right") / len(sorted_vals)
    return Xt, tr, te


def infer_lineage(judge_id: str) -> str:
    """Provider lineage from the judge name; config can override."""
    s = judge_id.lower()
    for token, lineage in (("claude", "anthropic"), ("gpt", "openai"),
                           ("gemini", "google"), ("grok", "xai"),
                           ("deepseek", "deepseek"), ("llama", "meta"),
                           ("mistral", "mistral")):
        if token in s:
            return lineage
    return "other"


def lineage_label_map(judges: tuple[str, ...],
                      overrides: dict[str, str] | None = None) -> dict[str, str]:
    out = {j: infer_lineage(j) for j in judges}
    if overrides:
        out.update(overrides)
    return out


def pair_label_map(judges: tuple[str, ...], a: str, b: str) -> dict[str, str]:
    """Keep only two judges (a within-family 2-way task)."""
    missing = [j for j in (a, b) if j not in judges]
    if missing:
        raise ValueError(f"unknown judges for pair task: {missing}")
    return {a: a, b: b}


def within_family_map(judges: tuple[str, ...], lineage: str,
                      overrides: dict[str, str] | None = None) -> dict[str, str]:
    """2-way task over the two judges of one provider lineage."""
    lineages = lineage_label_map(judges, overrides)
    members = sorted(j for j, lin in lineages.items() if lin == lineage)
    if len(members) != 2:
        raise ValueError(f"within-family task needs exactly 2 judges in lineage "
                         f"{lineage!r}, found {members}")
    return {j: j for j in members}
