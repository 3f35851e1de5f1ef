// Embedding sidecar: POST /embed (single or token-level vectors), GET /health.
//
// The model tag comes from EMBED_MODEL (default "hash-64"). Tags of the form
// hash-<dim> use the deterministic hash embedder; any other tag is treated as
// an unloadable model and the service answers 503, which the retrieval core
// maps to its dense-unavailable error.

import express from "express";
import { z } from "zod";
import { hashTokenVectors, hashVector } from "./hashEmbed.js";

const EmbedRequest = z.object({
  mode: z.enum(["single", "tokens"]),
  texts: z.array(z.string()).min(1),
  normalize: z.boolean().optional().default(true),
});

export interface ModelConfig {
  tag: string;
  dim: number | null; // null = model failed to load
}

export function resolveModel(tag: string): ModelConfig {
  const match = /^hash-(\d+)$/.exec(tag);
  if (!match) return { tag, dim: null };
  const dim = parseInt(match[1], 10);
  if (!Number.isFinite(dim) || dim < 1 || dim > 4096) return { tag, dim: null };
  return { tag, dim };
}

const allFinite = (values: number[]) => values.every(Number.isFinite);

export function createApp(modelTag: string) {
  const model = resolveModel(modelTag);
  const app = express();
  app.use(express.json({ limit: "16mb" }));

  app.get("/health", (_req, res) => {
    if (model.dim === null) {
      res.status(503).json({ status: "unavailable", model: model.tag });
      return;
    }
    res.json({ status: "ok", model: model.tag, dim: model.dim });
  });

  app.post("/embed", (req, res) => {
    if (model.dim === null) {
      res.status(503).json({ error: `model ${model.tag} is not loadable` });
      return;
    }
    const parsed = EmbedRequest.safeParse(req.body);
    if (!parsed.success) {
      const issue = parsed.error.issues[0];
      res.status(400).json({ error: `bad field ${issue.path.join(".") || "body"}: ${issue.message}` });
      return;
    }
    const { mode, texts, normalize } = parsed.data;
    const dim = model.dim;

    if (mode === "single") {
      const embeddings = texts.map((t) => hashVector(t, dim, normalize));
      if (!embeddings.every(allFinite)) {
        res.status(500).json({ error: "non-finite embedding produced" });
        return;
      }
      res.json({ model: model.tag, dim, mode, embeddings });
      return;
    }

    const embeddings = texts.map((t) => hashTokenVectors(t, dim, normalize));
    if (!embeddings.every((doc) => doc.every(allFinite))) {
      res.status(500).json({ error: "non-finite embedding produced" });
      return;
    }
    res.json({ model: model.tag, dim, mode, embeddings });
  });

  return app;
}

const isMain = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isMain) {
  const port = parseInt(process.env.PORT ?? "8519", 10);
  const tag = process.env.EMBED_MODEL ?? "hash-64";
  createApp(tag).listen(port, () => {
    console.log(`embed sidecar on :${port} (model ${tag})`);
  });
}
