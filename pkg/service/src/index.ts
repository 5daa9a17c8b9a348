/** CLI entry: start the scoring sidecar on a port, optionally backed by a
 * precomputed score store (replay mode). */

import { createApp } from "./server";
import { LexicalScorer, Scorer, StoreScorer } from "./scorer";

function parseArgs(argv: string[]): { port: number; store?: string; maxInflight?: number } {
  const out: { port: number; store?: string; maxInflight?: number } = { port: 8787 };
  for (let i = 0; i < argv.length; i += 1) {
    const arg = argv[i];
    if (arg === "--port") out.port = Number(argv[++i]);
    else if (arg === "--store") out.store = argv[++i];
    else if (arg === "--max-inflight") out.maxInflight = Number(argv[++i]);
    else {
      console.error(`unknown argument: ${arg}`);
      process.exit(2);
    }
  }
  if (!Number.isInteger(out.port) || out.port < 0 || out.port > 65535) {
    console.error(`invalid port: ${out.port}`);
    process.exit(2);
  }
  return out;
}

function main(): void {
  const args = parseArgs(process.argv.slice(2));
  const scorer: Scorer = args.store ? new StoreScorer(args.store) : new LexicalScorer();
  const app = createApp(scorer, { maxInflight: args.maxInflight });
  const server = app.listen(args.port, () => {
    const address = server.address();
    const port = typeof address === "object" && address ? address.port : args.port;
    console.log(`listening on ${port} model=${scorer.modelId}`);
  });
  process.on("SIGTERM", () => server.close(() => process.exit(0)));
  process.on("SIGINT", () => server.close(() => process.exit(0)));
}

main();
