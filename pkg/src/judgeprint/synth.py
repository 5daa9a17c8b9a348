"""Synthetic corpora with planted judge dispositions.

Every downstream metric has a generative ground truth here: latent item
quality plus per-judge offset, per-dimension emphasis, and noise produce
the scores; receipts are copied spans (planted valid) or mutated beyond
the fuzzy threshold (planted invalid); entailment triples are drawn to
pass or fail the two-threshold gate and exported as a precomputed store.
Identical (profiles, sizes, seed) give identical corpora byte for byte.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

from .corpus import (DIMENSIONS, GROUNDING_DIMENSIONS, SOURCE_PACK, SOURCE_SCRIPT,
                     Corpus, EvaluationRecord, Receipt, SourceDocument)
from .nli import NLIResult, pair_key, text_hash
from .receipts import JUSTIFICATION_TRUNCATION
from .textmatch import normalize_text, window_similarity
from .attribution import derive_seed

INVALID_SIMILARITY_CEILING = 0.85  # mutate until below this, clear of the 0.90 gate


@dataclass
class JudgeProfile:
    judge_id: str
    harshness_offset: float = 0.0
    emphasis: dict[str, float] = field(default_factory=dict)
    noise_sigma: float = 0.3
    receipts_per_dim: dict[str, float] = field(default_factory=dict)
    presence_valid_prob: float = 1.0
    linkage_prob: float = 0.5
    pack_pref: float = 0.75
    parse_fail_prob: float = 0.0
    # center of the entailment-probability band for supported receipts;
    # judges differ in how decisively their evidence entails
    margin_center: float = 0.87

    def __post_init__(self):
        for name in ("presence_valid_prob", "linkage_prob", "pack_pref", "parse_fail_prob"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} out of [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not (0.76 <= self.margin_center <= 0.97):
            raise ValueError("margin_center must stay inside [0.76, 0.97] so supported "
                             "triples always clear the linkage gate")


@dataclass
class ReceiptPlant:
    valid: bool
    supported: bool | None  # None when never scored (invalid receipt)


@dataclass
class GroundTruth:
    profiles: list[JudgeProfile]
    receipt_plants: dict[str, ReceiptPlant]
    nli_entries: dict[str, dict]  # store rows keyed by pair hash
    nli_results: dict[str, NLIResult]
    seed: int

    def planted_relative_harshness(self) -> dict[str, float]:
        """Offsets are panel-relative once measured: subtract the mean."""
        mean = sum(p.harshness_offset for p in self.profiles) / len(self.profiles)
        return {p.judge_id: p.harshness_offset - mean for p in self.profiles}


# dispositions mirror a realistic nine-judge panel: distinct offsets,
# emphasis shapes (zero-mean, so the offset stays the overall harshness),
# stability, evidence volume and its split across grounding dimensions,
# validity, grounding, and source preference
_DEFAULT9 = [
    # (offset, sigma, receipts/eval, grounding-dim allocation, presence,
    #  linkage, pack, margin center, emphasis shape)
    ("judge_01", -0.429, 0.25, 10.7, (0.30, 0.35, 0.35), 0.985, 0.254, 0.7145, 0.79, {}),
    ("judge_02", -0.340, 0.35, 11.8, (0.60, 0.25, 0.15), 0.968, 0.306, 0.7088, 0.83,
     {"readability": -1.00, "mechanics": 1.00}),
    ("judge_03", -0.256, 0.22, 11.0, (0.15, 0.15, 0.70), 0.984, 0.371, 0.8050, 0.87,
     {"faithfulness": -0.384, "intent_angle": 0.096, "coverage": 0.096,
      "readability": 0.096, "mechanics": 0.096}),
    ("judge_04", 0.003, 0.45, 9.2, (0.45, 0.45, 0.10), 0.974, 0.397, 0.7868, 0.93,
     {"mechanics": -1.40, "readability": 0.70, "intent_angle": 0.70}),
    ("judge_05", 0.164, 0.55, 9.7, (0.25, 0.60, 0.15), 0.938, 0.154, 0.7477, 0.78,
     {"coverage": 1.30, "faithfulness": -1.30}),
    ("judge_06", 0.192, 0.30, 11.5, (0.10, 0.25, 0.65), 0.941, 0.442, 0.7474, 0.96,
     {"readability": 1.40, "intent_angle": -1.40}),
    ("judge_07", 0.198, 0.70, 6.1, (0.65, 0.20, 0.15), 0.803, 0.259, 0.7081, 0.81,
     {"intent_angle": 1.10, "mechanics": -1.10}),
    ("judge_08", 0.206, 0.60, 7.6, (0.30, 0.10, 0.60), 0.964, 0.436, 0.8622, 0.91,
     {"coverage": -1.30, "readability": 1.30}),
    ("judge_09", 0.262, 0.18, 9.3, (0.40, 0.40, 0.20), 0.920, 0.177, 0.7045, 0.85,
     {"mechanics": 1.50, "faithfulness": -1.50}),
]


def default_profiles(sigma: float | None = None,
                     parse_fail_prob: float = 0.0) -> list[JudgeProfile]:
    """The built-in nine-judge panel; sigma overrides every judge's noise."""
    profiles = []
    for judge, off, sg, rpe, alloc, pres, link, pack, margin, emph in _DEFAULT9:
        per_dim = {d: rpe * frac for d, frac in zip(GROUNDING_DIMENSIONS, alloc)}
        profiles.append(JudgeProfile(
            judge_id=judge, harshness_offset=off, emphasis=dict(emph),
            noise_sigma=sg if sigma is None else sigma,
            receipts_per_dim=per_dim, presence_valid_prob=pres,
            linkage_prob=link, pack_pref=pack, parse_fail_prob=parse_fail_prob,
            margin_center=margin))
    return profiles


def _rng(seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, "synth", *tags))


_LETTERS = np.array(list(string.ascii_lowercase))


def _words(rng: np.random.Generator, n: int) -> list[str]:
    lengths = rng.integers(3, 9, n)
    return ["".join(rng.choice(_LETTERS, L)) for L in lengths]


def _token_slice(rng: np.random.Generator, tokens: list[str]) -> str:
    L = int(rng.integers(4, 10))
    start = int(rng.integers(0, max(1, len(tokens) - L)))
    return " ".join(tokens[start:start + L])


def _mutate_until_invalid(rng: np.random.Generator, quote: str,
                          substrates: list[str]) -> str:
    """Character-level mutation until similarity drops safely below the
    presence gate against every substrate."""
    subs = [normalize_text(s) for s in substrates]
    chars = list(quote)
    while True:
        if max(window_similarity(normalize_text("".join(chars)), s) for s in subs) \
                < INVALID_SIMILARITY_CEILING:
            return "".join(chars)
        n_mut = max(1, len(chars) // 4)
        for _ in range(n_mut):
            pos = int(rng.integers(0, len(chars)))
            chars[pos] = str(rng.choice(_LETTERS))


def _supported_triple(rng: np.random.Generator, center: float) -> NLIResult:
    p_e = float(rng.uniform(max(0.7551, center - 0.035), min(0.985, center + 0.035)))
    p_c = float(rng.uniform(0.0, 0.012))
    return NLIResult(p_entail=p_e, p_neutral=1.0 - p_e - p_c, p_contradict=p_c)


def _unsupported_triple(rng: np.random.Generator) -> NLIResult:
    p_e = float(rng.uniform(0.30, 0.45))
    p_c = float(rng.uniform(0.22, 0.35))
    return NLIResult(p_entail=p_e, p_neutral=1.0 - p_e - p_c, p_contradict=p_c)


def generate_corpus(profiles: list[JudgeProfile], n_videos: int, n_packs: int,
                    n_runs: int, seed: int = 0) -> tuple[Corpus, GroundTruth]:
    """Synthesize a full judge x video x pack x run grid.

    Latent quality is uniform on [2.0, 4.5] per (video, pack) with
    per-dimension jitter N(0, 0.3); a judge's score is the clamped,
    rounded sum of quality, offset, emphasis, and N(0, sigma) noise.
    """
    if not profiles:
        raise ValueError("need at least one judge profile")
    if n_videos < 1:
        raise ValueError("need at least one video")
    videos = [f"v{i:03d}" for i in range(1, n_videos + 1)]
    packs = [f"p{i:02d}" for i in range(1, n_packs + 1)]

    quality: dict[tuple[str, str], np.ndarray] = {}
    sources: dict[tuple[str, str], SourceDocument] = {}
    pack_tokens: dict[tuple[str, str], list[str]] = {}
    script_tokens: dict[tuple[str, str], list[str]] = {}
    for vi, v in enumerate(videos):
        for pi, p in enumerate(packs):
            rng = _rng(seed, "item", vi, pi)
            base = rng.uniform(2.0, 4.5)
            quality[(v, p)] = base + rng.normal(0.0, 0.3, len(DIMENSIONS))
            pack_tokens[(v, p)] = _words(rng, 180)
            script_tokens[(v, p)] = _words(rng, 220)
            sources[(v, p)] = SourceDocument(
                video_id=v, pack_id=p,
                pack_text=" ".join(pack_tokens[(v, p)]),
                script_text=" ".join(script_tokens[(v, p)]))

    records: list[EvaluationRecord] = []
    plants: dict[str, ReceiptPlant] = {}
    nli_entries: dict[str, dict] = {}
    nli_results: dict[str, NLIResult] = {}

    for jdx, prof in enumerate(profiles):
        rng = _rng(seed, "judge", jdx)
        for v in videos:
            for p in packs:
                qd = quality[(v, p)]
                for run in range(1, n_runs + 1):
                    scores = {}
                    for di, d in enumerate(DIMENSIONS):
                        x = qd[di] + prof.harshness_offset + prof.emphasis.get(d, 0.0) \
                            + rng.normal(0.0, prof.noise_sigma)
                        scores[d] = int(np.clip(np.rint(x), 1, 5))
                    overall = float(np.mean(list(scores.values())))
                    justifications = {
                        d: f"{prof.judge_id} finds {v} {p} {d} " + " ".join(_words(rng, 10))
                        for d in DIMENSIONS
                    }
                    receipts: list[Receipt] = []
                    used_quotes: set[str] = set()
                    for d in DIMENSIONS:
                        expected = prof.receipts_per_dim.get(d, 0.0)
                        count = int(rng.poisson(expected)) if expected > 0 else 0
                        for k in range(count):
                            rid = f"{prof.judge_id}-{v}-{p}-r{run}-{d}-{k:03d}"
                            use_pack = bool(rng.uniform() < prof.pack_pref)
                            tokens = pack_tokens[(v, p)] if use_pack else script_tokens[(v, p)]
                            declared = SOURCE_PACK if use_pack else SOURCE_SCRIPT
                            valid = bool(rng.uniform() < prof.presence_valid_prob)
                            quote = _token_slice(rng, tokens)
                            while quote in used_quotes:
                                quote = _token_slice(rng, tokens)
                            if not valid:
                                quote = _mutate_until_invalid(
                                    rng, quote,
                                    [sources[(v, p)].pack_text, sources[(v, p)].script_text])
                            used_quotes.add(quote)
                            receipts.append(Receipt(receipt_id=rid, dimension=d,
                                                    quote=quote, declared_source=declared))
                            supported = None
                            if valid and d in GROUNDING_DIMENSIONS:
                                supported = bool(rng.uniform() < prof.linkage_prob)
                                triple = (_supported_triple(rng, prof.margin_center)
                                          if supported else _unsupported_triple(rng))
                                hyp = justifications[d][:JUSTIFICATION_TRUNCATION]
                                key = pair_key(quote, hyp)
                                nli_results[key] = triple
                                nli_entries[key] = {
                                    "premise_hash": text_hash(quote),
                                    "hypothesis_hash": text_hash(hyp),
                                    "p_entail": triple.p_entail,
                                    "p_neutral": triple.p_neutral,
                                    "p_contradict": triple.p_contradict,
                                }
                            plants[rid] = ReceiptPlant(valid=valid, supported=supported)
                    records.append(EvaluationRecord(
                        judge_id=prof.judge_id, video_id=v, pack_id=p, run_id=run,
                        dimension_scores=scores, overall_score=overall,
                        justifications=justifications, receipts=receipts,
                        token_count=int(rng.integers(350, 700)),
                        parse_ok=not bool(rng.uniform() < prof.parse_fail_prob)))

    corpus = Corpus(records=records, sources=sources,
                    judges=tuple(sorted(p.judge_id for p in profiles)),
                    runs_per_item=n_runs)
    truth = GroundTruth(profiles=list(profiles), receipt_plants=plants,
                        nli_entries=nli_entries, nli_results=nli_results, seed=seed)
    return corpus, truth


def profiles_from_json(obj: list[dict]) -> list[JudgeProfile]:
    """Profiles from a JSON list (the --profiles file format)."""
    out = []
    for item in obj:
        out.append(JudgeProfile(
            judge_id=str(item["judge_id"]),
            harshness_offset=float(item.get("harshness_offset", 0.0)),
            emphasis={k: float(v) for k, v in (item.get("emphasis") or {}).items()},
            noise_sigma=float(item.get("noise_sigma", 0.3)),
            receipts_per_dim={k: float(v) for k, v in (item.get("receipts_per_dim") or {}).items()},
            presence_valid_prob=float(item.get("presence_valid_prob", 1.0)),
            linkage_prob=float(item.get("linkage_prob", 0.5)),
            pack_pref=float(item.get("pack_pref", 0.75)),
            parse_fail_prob=float(item.get("parse_fail_prob", 0.0)),
            margin_center=float(item.get("margin_center", 0.87)),
        ))
    return out
