/**
 * Scoring backends for the entailment sidecar.
 *
 * Every backend is deterministic and pinned by a content hash exposed as
 * its model_id, so identical requests yield identical triples across
 * restarts and hosts. The store backend replays a precomputed score file
 * (the zero-inference reproduction path); the lexical backend is a
 * self-contained surrogate cross-encoder used where no score store or
 * model checkpoint is available.
 */

import { createHash } from "crypto";
import { readFileSync } from "fs";

export interface Triple {
  p_entail: number;
  p_neutral: number;
  p_contradict: number;
}

export interface Scorer {
  readonly modelId: string;
  score(premise: string, hypothesis: string): Triple;
}

export class ScoreError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export const HYPOTHESIS_MAX_CHARS = 200;

export function truncateHypothesis(hypothesis: string): string {
  return hypothesis.slice(0, HYPOTHESIS_MAX_CHARS);
}

function sha256Hex(data: string | Buffer): string {
  return createHash("sha256").update(data).digest("hex");
}

/** Content address of a (premise, hypothesis) pair; must match the
 * toolkit's store keying: sha256(hex(sha256(p)) + ":" + hex(sha256(h))). */
export function pairKey(premise: string, hypothesis: string): string {
  const p = sha256Hex(Buffer.from(premise, "utf8"));
  const h = sha256Hex(Buffer.from(hypothesis, "utf8"));
  return sha256Hex(`${p}:${h}`);
}

/** Serves triples from a line-delimited precomputed score store. */
export class StoreScorer implements Scorer {
  readonly modelId: string;
  private readonly store = new Map<string, Triple>();

  constructor(storePath: string) {
    const raw = readFileSync(storePath);
    this.modelId = `score-store+sha256:${sha256Hex(raw).slice(0, 16)}`;
    for (const line of raw.toString("utf8").split("\n")) {
      if (!line.trim()) continue;
      const row = JSON.parse(line);
      this.store.set(row.key_hash, {
        p_entail: row.p_entail,
        p_neutral: row.p_neutral,
        p_contradict: row.p_contradict,
      });
    }
  }

  get size(): number {
    return this.store.size;
  }

  score(premise: string, hypothesis: string): Triple {
    const key = pairKey(premise, hypothesis);
    const hit = this.store.get(key);
    if (!hit) {
      throw new ScoreError(`no precomputed score for pair ${key}`, 422);
    }
    return hit;
  }
}

const LEXICAL_PARAMS = {
  version: 1,
  entail: { coverage: 5.0, jaccard: 2.0, bias: -2.5 },
  contradict: { negation: 3.0, coverage: -2.0, bias: -2.0 },
  neutral: { bias: 0.0 },
  negations: ["not", "no", "never", "none", "cannot", "nothing", "neither", "nor"],
};

function tokens(text: string): string[] {
  return text.toLowerCase().split(/[^a-z0-9]+/).filter((t) => t.length > 0);
}

function softmax(logits: number[]): number[] {
  const m = Math.max(...logits);
  const exps = logits.map((x) => Math.exp(x - m));
  const total = exps.reduce((a, b) => a + b, 0);
  return exps.map((x) => x / total);
}

/**
 * Deterministic lexical entailment surrogate: hypothesis coverage and
 * token overlap drive the entailment logit, a one-sided negation cue
 * drives contradiction. Not a trained model; a stand-in with the same
 * wire contract, pinned by the hash of its parameters.
 */
export class LexicalScorer implements Scorer {
  readonly modelId =
    `lexical-entailment/v${LEXICAL_PARAMS.version}+sha256:` +
    sha256Hex(JSON.stringify(LEXICAL_PARAMS)).slice(0, 16);

  score(premise: string, hypothesis: string): Triple {
    const p = tokens(premise);
    const h = tokens(hypothesis);
    const pSet = new Set(p);
    const hSet = new Set(h);
    let inter = 0;
    for (const t of hSet) if (pSet.has(t)) inter += 1;
    const union = new Set([...pSet, ...hSet]).size;
    const coverage = hSet.size === 0 ? 0 : inter / hSet.size;
    const jaccard = union === 0 ? 0 : inter / union;
    const negP = LEXICAL_PARAMS.negations.some((n) => pSet.has(n));
    const negH = LEXICAL_PARAMS.negations.some((n) => hSet.has(n));
    const negMismatch = negP !== negH ? 1 : 0;

    const w = LEXICAL_PARAMS;
    const logitE = w.entail.coverage * coverage + w.entail.jaccard * jaccard + w.entail.bias;
    const logitN = w.neutral.bias;
    const logitC = w.contradict.negation * negMismatch + w.contradict.coverage * coverage
      + w.contradict.bias;
    const [pe, pn, pc] = softmax([logitE, logitN, logitC]);
    return { p_entail: pe, p_neutral: pn, p_contradict: pc };
  }
}
