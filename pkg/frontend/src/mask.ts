/**
 * A paintable mask layer. Strokes accumulate antialiased coverage in 0..255;
 * export thresholds at 128 into a strictly binary {0, 255} grayscale PNG at
 * the image's resolution, so what the server receives is exactly what
 * re-importing the export reproduces.
 */

import { decodePng, encodeGrayPng, Inflate } from "./png.js";

export interface Point {
  x: number;
  y: number;
}

export class MaskLayer {
  readonly width: number;
  readonly height: number;
  alpha: Uint8Array; // antialiased coverage 0..255

  constructor(width: number, height: number, alpha?: Uint8Array) {
    this.width = width;
    this.height = height;
    this.alpha = alpha ? alpha.slice() : new Uint8Array(width * height);
  }

  clone(): MaskLayer {
    return new MaskLayer(this.width, this.height, this.alpha);
  }

  clear(): void {
    this.alpha.fill(0);
  }

  isEmpty(): boolean {
    return this.alpha.every((v) => v < 128);
  }

  /** Stamp one brush dab: hard disk with a ~1px antialiased rim. */
  dab(cx: number, cy: number, radius: number, erase = false): void {
    const r = Math.max(0.5, radius);
    const x0 = Math.max(0, Math.floor(cx - r - 1));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + r + 1));
    const y0 = Math.max(0, Math.floor(cy - r - 1));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + r + 1));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const d = Math.hypot(x + 0.5 - cx, y + 0.5 - cy);
        const coverage = Math.max(0, Math.min(1, r - d + 0.5));
        if (coverage <= 0) continue;
        const idx = y * this.width + x;
        const value = Math.round(coverage * 255);
        if (erase) {
          this.alpha[idx] = Math.min(this.alpha[idx], 255 - value);
        } else {
          this.alpha[idx] = Math.max(this.alpha[idx], value);
        }
      }
    }
  }

  /** Stamp dabs along a segment at sub-pixel spacing. */
  stroke(from: Point, to: Point, radius: number, erase = false): void {
    const dist = Math.hypot(to.x - from.x, to.y - from.y);
    const steps = Math.max(1, Math.ceil(dist / 0.75));
    for (let s = 0; s <= steps; s++) {
      const t = s / steps;
      this.dab(from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t, radius, erase);
    }
  }

  /** Binary view: 1 where coverage >= 128. */
  toBinary(): Uint8Array {
    const out = new Uint8Array(this.alpha.length);
    for (let i = 0; i < this.alpha.length; i++) out[i] = this.alpha[i] >= 128 ? 1 : 0;
    return out;
  }

  binaryArea(): number {
    let n = 0;
    for (const v of this.alpha) if (v >= 128) n++;
    return n;
  }

  /** Deterministic binary PNG export ({0, 255} grayscale). */
  exportPng(): Uint8Array {
    const bin = this.toBinary();
    const px = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) px[i] = bin[i] ? 255 : 0;
    return encodeGrayPng(this.width, this.height, px);
  }

  static fromBinary(width: number, height: number, binary: Uint8Array): MaskLayer {
    const layer = new MaskLayer(width, height);
    for (let i = 0; i < binary.length; i++) layer.alpha[i] = binary[i] ? 255 : 0;
    return layer;
  }

  static async importPng(bytes: Uint8Array, inflate: Inflate): Promise<MaskLayer> {
    const img = await decodePng(bytes, inflate);
    if (img.channels !== 1) throw new Error("mask PNG must be grayscale");
    const layer = new MaskLayer(img.width, img.height);
    for (let i = 0; i < img.data.length; i++) layer.alpha[i] = img.data[i] >= 128 ? 255 : 0;
    return layer;
  }
}
