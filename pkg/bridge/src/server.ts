/**
 * HTTP server for the gateway wire protocol.
 *
 * POST /v1/generate accepts {model, audio_b64, sample_rate, prompt,
 * decode:{mode, temperature, n, beams, max_tokens}, want_logprobs} and
 * returns {candidates:[{text, tokens, token_logprobs, cum_logprob}],
 * model, latency_ms}. GET /healthz reports the model id and capabilities.
 */

import express, { Express } from "express";
import { z } from "zod";

import { beamDecode, sampleDecode } from "./decode.js";
import { TokenScorer, loadModel } from "./model.js";

export interface BridgeConfig {
  modelId: string;
  port: number;
  device: string;
  maxBeamWidth: number;
  maxTokens: number;
  expectedSampleRate: number;
}

export const DEFAULT_CONFIG: BridgeConfig = {
  modelId: "sim-audio-1",
  port: 8077,
  device: "cpu",
  maxBeamWidth: 8,
  maxTokens: 64,
  expectedSampleRate: 16000,
};

const decodeSchema = z.object({
  mode: z.enum(["sample", "beam"]),
  temperature: z.number().min(0).max(2).default(0),
  n: z.number().int().min(1).default(1),
  beams: z.number().int().min(1).default(1),
  max_tokens: z.number().int().min(1).default(64),
});

const generateSchema = z.object({
  model: z.string().min(1),
  audio_b64: z.string().default(""),
  sample_rate: z.number().int().nonnegative().default(0),
  prompt: z.string().min(1),
  decode: decodeSchema,
  want_logprobs: z.boolean().default(true),
});

const BASE64_RE = /^[A-Za-z0-9+/]*={0,2}$/;

function isValidBase64(text: string): boolean {
  return text.length % 4 === 0 && BASE64_RE.test(text);
}

export function createApp(config: BridgeConfig = DEFAULT_CONFIG, model?: TokenScorer): Express {
  const backbone = model ?? loadModel(config.modelId);
  const app = express();
  app.use(express.json({ limit: "64mb" }));

  app.get("/healthz", (_req, res) => {
    res.json({
      model: backbone.modelId,
      capabilities: { sample: true, beam: true, logprobs: true },
      device: config.device,
      max_beam_width: config.maxBeamWidth,
      expected_sample_rate: config.expectedSampleRate,
    });
  });

  app.post("/v1/generate", (req, res) => {
    const started = process.hrtime.bigint();
    const parsed = generateSchema.safeParse(req.body);
    if (!parsed.success) {
      const issue = parsed.error.issues[0];
      res.status(400).json({ error: `${issue.path.join(".")}: ${issue.message}` });
      return;
    }
    const body = parsed.data;
    if (!isValidBase64(body.audio_b64)) {
      res.status(400).json({ error: "audio_b64: not valid base64" });
      return;
    }
    if (body.decode.mode === "beam" && body.decode.beams > config.maxBeamWidth) {
      res.status(400).json({
        error: `decode.beams: ${body.decode.beams} exceeds configured limit ${config.maxBeamWidth}`,
      });
      return;
    }
    const maxTokens = Math.min(body.decode.max_tokens, config.maxTokens);
    const context = `${backbone.modelId}|${body.audio_b64}|${body.prompt}`;
    const candidates =
      body.decode.mode === "beam"
        ? beamDecode(backbone, context, body.decode.beams, maxTokens)
        : sampleDecode(backbone, context, body.decode.temperature, body.decode.n, maxTokens);
    const latencyMs = Number(process.hrtime.bigint() - started) / 1e6;
    res.json({ candidates, model: backbone.modelId, latency_ms: latencyMs });
  });

  return app;
}
