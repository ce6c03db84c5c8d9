/**
 * Typed client for the prediction service. The fetch implementation is
 * injected so tests can run against a mock transport and the browser build
 * uses window.fetch unchanged.
 */

import { base64ToBytes, bytesToBase64 } from "./png.js";

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ status: number; json(): Promise<unknown> }>;

export interface PredictOptions {
  numSamples: number;
  guidanceScale: number;
  seed: number;
  steps?: number;
}

export interface Gallery {
  samples: Uint8Array[]; // PNG bytes, exactly as received
  samplesB64: string[]; // verbatim payload strings for byte-fidelity checks
  seeds: number[];
  fingerprint: string;
  warnings: string[];
}

export interface HealthInfo {
  status: string;
  model: string;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(`[${status}] ${code}: ${detail}`);
  }
}

export class PredictClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike,
  ) {}

  async health(): Promise<HealthInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/health`);
    if (resp.status !== 200) throw new ServiceError(resp.status, "unhealthy", "health check failed");
    return (await resp.json()) as HealthInfo;
  }

  async predict(
    imagePng: Uint8Array,
    maskCurrentPng: Uint8Array,
    maskQueryPng: Uint8Array,
    opts: PredictOptions,
  ): Promise<Gallery> {
    const body = JSON.stringify({
      image: bytesToBase64(imagePng),
      mask_current: bytesToBase64(maskCurrentPng),
      mask_query: bytesToBase64(maskQueryPng),
      num_samples: opts.numSamples,
      guidance_scale: opts.guidanceScale,
      seed: opts.seed,
      steps: opts.steps ?? null,
    });
    const resp = await this.fetchFn(`${this.baseUrl}/predict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body,
    });
    const payload = (await resp.json()) as Record<string, unknown>;
    if (resp.status !== 200) {
      throw new ServiceError(resp.status, String(payload.error ?? "unknown"), String(payload.detail ?? ""));
    }
    const samplesB64 = payload.samples as string[];
    return {
      samples: samplesB64.map(base64ToBytes),
      samplesB64,
      seeds: payload.seeds as number[],
      fingerprint: String(payload.model_fingerprint),
      warnings: (payload.warnings as string[]) ?? [],
    };
  }

  async segment(imagePng: Uint8Array, bbox?: [number, number, number, number]): Promise<Uint8Array> {
    const resp = await this.fetchFn(`${this.baseUrl}/segment`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image: bytesToBase64(imagePng), bbox: bbox ?? null }),
    });
    const payload = (await resp.json()) as Record<string, unknown>;
    if (resp.status !== 200) {
      throw new ServiceError(resp.status, String(payload.error ?? "unknown"), String(payload.detail ?? ""));
    }
    return base64ToBytes(String(payload.mask));
  }
}
