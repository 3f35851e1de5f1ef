// Deterministic pseudo-embeddings derived from text hashes. No ML weights:
// the point is a fully reproducible vector source so the retrieval core and
// its tests can exercise the dense path end to end.

import { createHash } from "node:crypto";

// mulberry32: tiny seeded PRNG, identical output for identical seeds
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function seedOf(text: string): number {
  const digest = createHash("sha256").update(text, "utf8").digest();
  return digest.readUInt32BE(0);
}

export function hashVector(text: string, dim: number, normalize: boolean): number[] {
  const rand = mulberry32(seedOf(text));
  const vec = new Array<number>(dim);
  for (let i = 0; i < dim; i++) {
    // Box-Muller for roughly gaussian components
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    vec[i] = Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  }
  if (normalize) {
    const norm = Math.sqrt(vec.reduce((s, x) => s + x * x, 0)) || 1;
    for (let i = 0; i < dim; i++) vec[i] /= norm;
  }
  return vec;
}

// Token-level mode embeds whitespace tokens independently; empty input
// degrades to one vector over the raw text so arity is never zero.
export function hashTokenVectors(text: string, dim: number, normalize: boolean): number[][] {
  const tokens = text.split(/\s+/).filter((t) => t.length > 0);
  if (tokens.length === 0) return [hashVector(text, dim, normalize)];
  return tokens.map((t) => hashVector(t, dim, normalize));
}
