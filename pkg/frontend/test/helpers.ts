/** Test-side inflate (node zlib) and a deterministic in-memory mock of the
 * prediction service speaking the real wire schema. */

import { inflateSync } from "node:zlib";
import { FetchLike } from "../src/api.js";
import { base64ToBytes, bytesToBase64, decodePng, encodeGrayPng } from "../src/png.js";

export const nodeInflate = async (data: Uint8Array): Promise<Uint8Array> =>
  new Uint8Array(inflateSync(data));

function fnv1a(bytes: Uint8Array, seedText: string): number {
  let h = 0x811c9dc5;
  for (const ch of seedText) {
    h = Math.imul(h ^ ch.charCodeAt(0), 0x01000193) >>> 0;
  }
  for (const b of bytes) {
    h = Math.imul(h ^ b, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

export interface MockCall {
  image: string;
  mask_current: string;
  mask_query: string;
  num_samples: number;
  guidance_scale: number;
  seed: number;
}

/**
 * Pure function of (inputs, seed) -> PNG, like the real model: a gray image
 * whose pixels hash the exact request bytes, so any input or seed change
 * changes the "prediction" and identical requests are byte-identical.
 */
export function makeMockService(fingerprint = "mock-model-0001") {
  const calls: MockCall[] = [];

  const fetchFn: FetchLike = async (url, init) => {
    if (url.endsWith("/health")) {
      return { status: 200, json: async () => ({ status: "ok", model: fingerprint }) };
    }
    if (url.endsWith("/predict")) {
      const req = JSON.parse(init!.body!) as MockCall;
      calls.push(req);
      const srcMask = base64ToBytes(req.mask_query);
      const img = await decodePng(srcMask, nodeInflate);
      const samples: string[] = [];
      const seeds: number[] = [];
      for (let j = 0; j < req.num_samples; j++) {
        const seed = req.seed + j;
        const material = `${req.image}|${req.mask_current}|${req.mask_query}|${req.guidance_scale}|${seed}`;
        const px = new Uint8Array(img.width * img.height);
        let h = fnv1a(new Uint8Array(0), material);
        for (let i = 0; i < px.length; i++) {
          h = Math.imul(h ^ (i & 0xff), 0x01000193) >>> 0;
          px[i] = h & 0xff;
        }
        samples.push(bytesToBase64(encodeGrayPng(img.width, img.height, px)));
        seeds.push(seed);
      }
      return {
        status: 200,
        json: async () => ({
          samples,
          seeds,
          model_fingerprint: fingerprint,
          timing_ms: 1.0,
          warnings: [],
        }),
      };
    }
    if (url.endsWith("/segment")) {
      const req = JSON.parse(init!.body!) as { image: string };
      const img = await decodePng(base64ToBytes(req.image), nodeInflate);
      const px = new Uint8Array(img.width * img.height);
      for (let i = 0; i < px.length; i++) px[i] = i % 7 === 0 ? 255 : 0;
      return {
        status: 200,
        json: async () => ({ mask: bytesToBase64(encodeGrayPng(img.width, img.height, px)) }),
      };
    }
    return { status: 404, json: async () => ({ error: "not_found", detail: url }) };
  };

  return { fetchFn, calls };
}

export function grayTestImage(width: number, height: number): Uint8Array {
  const px = new Uint8Array(width * height);
  for (let i = 0; i < px.length; i++) px[i] = (i * 31) % 256;
  return encodeGrayPng(width, height, px);
}
