/**
 * Beam and temperature-sampling decoders over a TokenScorer.
 *
 * Reported token_logprobs are the model's base (temperature-independent)
 * log-probabilities, so cumulative log-likelihoods are comparable across
 * temperatures; cum_logprob is always their exact sum.
 */

import { TokenScorer, fnv1a, mulberry32 } from "./model.js";

export interface WireCandidate {
  text: string;
  tokens: string[];
  token_logprobs: number[];
  cum_logprob: number;
}

interface Hypothesis {
  tokens: string[];
  logprobs: number[];
  cum: number;
}

function toCandidate(h: Hypothesis): WireCandidate {
  return {
    text: h.tokens.join(" "),
    tokens: h.tokens,
    token_logprobs: h.logprobs,
    cum_logprob: h.cum,
  };
}

function byScoreThenTokens(a: Hypothesis, b: Hypothesis): number {
  if (a.cum !== b.cum) return b.cum - a.cum;
  const ta = a.tokens.join(" ");
  const tb = b.tokens.join(" ");
  return ta < tb ? -1 : ta > tb ? 1 : 0;
}

/** Top-B sequences by cumulative log-probability under frontier pruning. */
export function beamDecode(
  model: TokenScorer,
  context: string,
  beamWidth: number,
  maxTokens: number
): WireCandidate[] {
  if (beamWidth < 1) throw new Error("beam width must be >= 1");
  let frontier: Hypothesis[] = [{ tokens: [], logprobs: [], cum: 0 }];
  for (let step = 0; step < maxTokens; step++) {
    const extensions = model.nextTokenLogprobs(context, frontier[0].tokens);
    if (extensions.length === 0) break; // all hypotheses complete at the same length
    const expanded: Hypothesis[] = [];
    for (const h of frontier) {
      for (const { token, logprob } of model.nextTokenLogprobs(context, h.tokens)) {
        expanded.push({
          tokens: [...h.tokens, token],
          logprobs: [...h.logprobs, logprob],
          cum: h.cum + logprob,
        });
      }
    }
    expanded.sort(byScoreThenTokens);
    frontier = expanded.slice(0, beamWidth);
  }
  return frontier.sort(byScoreThenTokens).map(toCandidate);
}

/** n independent samples; temperature 0 is greedy and fully deterministic. */
export function sampleDecode(
  model: TokenScorer,
  context: string,
  temperature: number,
  n: number,
  maxTokens: number
): WireCandidate[] {
  if (n < 1) throw new Error("n must be >= 1");
  const out: WireCandidate[] = [];
  for (let i = 0; i < n; i++) {
    const rng = mulberry32(fnv1a(`sample|${context}|${temperature}|${i}`));
    const h: Hypothesis = { tokens: [], logprobs: [], cum: 0 };
    for (let step = 0; step < maxTokens; step++) {
      const extensions = model.nextTokenLogprobs(context, h.tokens);
      if (extensions.length === 0) break;
      const pick = temperature <= 0 ? argmax(extensions) : sampleIndex(extensions, temperature, rng);
      const { token, logprob } = extensions[pick];
      h.tokens.push(token);
      h.logprobs.push(logprob);
      h.cum += logprob;
    }
    out.push(toCandidate(h));
  }
  return out;
}

function argmax(extensions: { token: string; logprob: number }[]): number {
  let best = 0;
  for (let i = 1; i < extensions.length; i++) {
    const better =
      extensions[i].logprob > extensions[best].logprob ||
      (extensions[i].logprob === extensions[best].logprob &&
        extensions[i].token < extensions[best].token);
    if (better) best = i;
  }
  return best;
}

function sampleIndex(
  extensions: { token: string; logprob: number }[],
  temperature: number,
  rng: () => number
): number {
  // reshape: q_i proportional to exp(logprob_i / temperature)
  const scaled = extensions.map((e) => e.logprob / temperature);
  const peak = Math.max(...scaled);
  const weights = scaled.map((s) => Math.exp(s - peak));
  const total = weights.reduce((a, b) => a + b, 0);
  let u = rng() * total;
  for (let i = 0; i < weights.length; i++) {
    u -= weights[i];
    if (u <= 0) return i;
  }
  return weights.length - 1;
}
