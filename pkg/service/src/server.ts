/**
 * HTTP surface: POST /score takes a batch of premise/hypothesis pairs and
 * returns one probability triple per pair, aligned by index, with the
 * backing model's id echoed in every response. GET /health reports 200
 * once the scorer is loaded, 503 before that.
 */

import express, { Express, Request, Response } from "express";
import { z } from "zod";
import { Scorer, ScoreError, truncateHypothesis } from "./scorer";

const scoreRequestSchema = z.object({
  pairs: z
    .array(
      z.object({
        premise: z.string(),
        hypothesis: z.string(),
      }),
    )
    .min(1),
});

export interface ServerOptions {
  maxBatch?: number;
  maxInflight?: number;
}

export function createApp(scorer: Scorer | null, options: ServerOptions = {}): Express {
  const maxBatch = options.maxBatch ?? 8192;
  const maxInflight = options.maxInflight ?? 8;
  let inflight = 0;

  const app = express();
  app.use(express.json({ limit: "64mb" }));

  app.get("/health", (_req: Request, res: Response) => {
    if (!scorer) {
      res.status(503).json({ status: "loading" });
      return;
    }
    res.status(200).json({ status: "ok", model_id: scorer.modelId });
  });

  app.post("/score", (req: Request, res: Response) => {
    if (!scorer) {
      res.status(503).json({ error: "model not loaded" });
      return;
    }
    if (inflight >= maxInflight) {
      res.status(429).set("Retry-After", "1").json({ error: "overloaded" });
      return;
    }
    const parsed = scoreRequestSchema.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: "malformed request", detail: parsed.error.message });
      return;
    }
    const pairs = parsed.data.pairs;
    if (pairs.length > maxBatch) {
      res.status(400).json({ error: `batch too large (max ${maxBatch})` });
      return;
    }
    inflight += 1;
    try {
      const results = pairs.map((pair) =>
        scorer.score(pair.premise, truncateHypothesis(pair.hypothesis)),
      );
      res.status(200).json({ model_id: scorer.modelId, results });
    } catch (err) {
      if (err instanceof ScoreError) {
        res.status(err.status).json({ error: err.message });
      } else {
        res.status(500).json({ error: String(err) });
      }
    } finally {
      inflight -= 1;
    }
  });

  // express 5 returns JSON parse failures as thrown errors; map them to 400
  app.use((err: Error, _req: Request, res: Response, next: (e?: Error) => void) => {
    if (res.headersSent) {
      next(err);
      return;
    }
    res.status(400).json({ error: "malformed body", detail: err.message });
  });

  return app;
}
