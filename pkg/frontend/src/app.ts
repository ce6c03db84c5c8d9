/**
 * Browser wiring: canvas stack (image, current-mask overlay, query-mask
 * overlay, brush cursor), pointer-event brush tools, gallery rendering, and
 * the continue/undo loop. All state logic lives in Session/MaskLayer; this
 * file only binds it to the DOM.
 */

import { PredictClient, FetchLike } from "./api.js";
import { MaskLayer } from "./mask.js";
import { decodePng } from "./png.js";
import { Session } from "./session.js";

const browserInflate = async (data: Uint8Array): Promise<Uint8Array> => {
  const ds = new DecompressionStream("deflate");
  const stream = new Blob([data.buffer as ArrayBuffer]).stream().pipeThrough(ds);
  return new Uint8Array(await new Response(stream).arrayBuffer());
};

type Layer = "current" | "query";

const LAYER_COLORS: Record<Layer, string> = { current: "rgba(60,160,255,0.55)", query: "rgba(255,120,40,0.55)" };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class StudioApp {
  private session: Session;
  private client: PredictClient;
  private activeLayer: Layer = "query";
  private brushRadius = 6;
  private erasing = false;
  private drawing = false;
  private lastPoint: { x: number; y: number } | null = null;
  private pending = false;

  private imageCanvas = el<HTMLCanvasElement>("image-canvas");
  private overlayCanvas = el<HTMLCanvasElement>("overlay-canvas");
  private gallery = el<HTMLDivElement>("gallery");
  private statusLine = el<HTMLDivElement>("status");

  constructor(endpoint: string) {
    this.client = new PredictClient(endpoint, fetch.bind(window) as FetchLike);
    this.session = new Session(this.client);
    this.bindControls();
    void this.pollHealth();
  }

  private bindControls(): void {
    el<HTMLInputElement>("file-input").addEventListener("change", (ev) => {
      const file = (ev.target as HTMLInputElement).files?.[0];
      if (file) void this.loadFile(file);
    });
    el<HTMLSelectElement>("layer-select").addEventListener("change", (ev) => {
      this.activeLayer = (ev.target as HTMLSelectElement).value as Layer;
    });
    el<HTMLInputElement>("brush-radius").addEventListener("input", (ev) => {
      this.brushRadius = Number((ev.target as HTMLInputElement).value);
    });
    el<HTMLInputElement>("erase-toggle").addEventListener("change", (ev) => {
      this.erasing = (ev.target as HTMLInputElement).checked;
    });
    el<HTMLButtonElement>("clear-layer").addEventListener("click", () => {
      this.layer()?.clear();
      this.renderOverlay();
    });
    el<HTMLButtonElement>("auto-mask").addEventListener("click", () => void this.autoMask());
    el<HTMLButtonElement>("request-futures").addEventListener("click", () => void this.requestFutures());
    el<HTMLButtonElement>("undo").addEventListener("click", () => void this.undo());

    const canvas = this.overlayCanvas;
    canvas.addEventListener("pointerdown", (ev) => {
      this.drawing = true;
      this.lastPoint = this.canvasPoint(ev);
      this.applyStroke(this.lastPoint, this.lastPoint);
    });
    canvas.addEventListener("pointermove", (ev) => {
      if (!this.drawing || !this.lastPoint) return;
      const p = this.canvasPoint(ev);
      this.applyStroke(this.lastPoint, p);
      this.lastPoint = p;
    });
    const stop = () => {
      this.drawing = false;
      this.lastPoint = null;
    };
    canvas.addEventListener("pointerup", stop);
    canvas.addEventListener("pointerleave", stop);
  }

  private layer(): MaskLayer | null {
    return this.activeLayer === "current" ? this.session.currentMask : this.session.queryMask;
  }

  private canvasPoint(ev: PointerEvent): { x: number; y: number } {
    const rect = this.overlayCanvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - rect.left) / rect.width) * this.session.width,
      y: ((ev.clientY - rect.top) / rect.height) * this.session.height,
    };
  }

  private applyStroke(from: { x: number; y: number }, to: { x: number; y: number }): void {
    const layer = this.layer();
    if (!layer || this.pending) return;
    layer.stroke(from, to, this.brushRadius, this.erasing);
    this.renderOverlay();
  }

  private async loadFile(file: File): Promise<void> {
    const bytes = new Uint8Array(await file.arrayBuffer());
    const decoded = await decodePng(bytes, browserInflate);
    this.session.loadImage(bytes, decoded.width, decoded.height);
    this.imageCanvas.width = this.overlayCanvas.width = decoded.width;
    this.imageCanvas.height = this.overlayCanvas.height = decoded.height;
    await this.drawPngTo(this.imageCanvas, bytes);
    this.renderOverlay();
    this.gallery.replaceChildren();
    this.setStatus(`loaded ${decoded.width}x${decoded.height}`);
  }

  private async drawPngTo(canvas: HTMLCanvasElement, png: Uint8Array): Promise<void> {
    const blob = new Blob([png.buffer as ArrayBuffer], { type: "image/png" });
    const bitmap = await createImageBitmap(blob);
    const ctx = canvas.getContext("2d")!;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(bitmap, 0, 0, canvas.width, canvas.height);
  }

  private renderOverlay(): void {
    const ctx = this.overlayCanvas.getContext("2d")!;
    ctx.clearRect(0, 0, this.overlayCanvas.width, this.overlayCanvas.height);
    for (const [name, layer] of [
      ["current", this.session.currentMask],
      ["query", this.session.queryMask],
    ] as const) {
      if (!layer) continue;
      ctx.fillStyle = LAYER_COLORS[name];
      for (let y = 0; y < layer.height; y++) {
        for (let x = 0; x < layer.width; x++) {
          if (layer.alpha[y * layer.width + x] >= 128) ctx.fillRect(x, y, 1, 1);
        }
      }
    }
  }

  private async autoMask(): Promise<void> {
    if (!this.session.imagePng) return;
    this.setStatus("segmenting...");
    try {
      const maskPng = await this.client.segment(this.session.imagePng);
      this.session.currentMask = await MaskLayer.importPng(maskPng, browserInflate);
      this.renderOverlay();
      this.setStatus("current mask from segmenter");
    } catch (e) {
      this.setStatus(`segment failed: ${(e as Error).message}`);
    }
  }

  private controlsDisabled(disabled: boolean): void {
    this.pending = disabled;
    for (const id of ["request-futures", "undo", "auto-mask", "clear-layer"]) {
      el<HTMLButtonElement>(id).disabled = disabled;
    }
  }

  private async requestFutures(): Promise<void> {
    if (this.pending) return;
    const k = Number(el<HTMLInputElement>("k-input").value);
    const guidance = Number(el<HTMLInputElement>("guidance-input").value);
    const seedRaw = el<HTMLInputElement>("seed-input").value.trim();
    const seed = seedRaw === "" ? Math.floor(Math.random() * 2 ** 31) : Number(seedRaw);
    this.controlsDisabled(true);
    this.setStatus(`sampling ${k} futures...`);
    try {
      const gallery = await this.session.requestFutures({ numSamples: k, guidanceScale: guidance, seed });
      await this.renderGallery(gallery.samples, gallery.seeds);
      const warn = gallery.warnings.length ? ` (${gallery.warnings.join("; ")})` : "";
      this.setStatus(`futures ready${warn}`);
    } catch (e) {
      this.setStatus(`predict failed: ${(e as Error).message} - retry when ready`);
    } finally {
      this.controlsDisabled(false);
    }
  }

  private async renderGallery(samples: Uint8Array[], seeds: number[]): Promise<void> {
    this.gallery.replaceChildren();
    for (let i = 0; i < samples.length; i++) {
      const tile = document.createElement("div");
      tile.className = "tile";
      const canvas = document.createElement("canvas");
      canvas.width = this.session.width;
      canvas.height = this.session.height;
      await this.drawPngTo(canvas, samples[i]);
      const label = document.createElement("div");
      label.textContent = `seed ${seeds[i]}`;
      const btn = document.createElement("button");
      btn.textContent = "continue";
      btn.addEventListener("click", () => void this.continueFrom(i));
      tile.append(canvas, label, btn);
      this.gallery.append(tile);
    }
  }

  private async continueFrom(index: number): Promise<void> {
    const chosen = this.session.gallery?.samples[index];
    this.session.continueFrom(index);
    if (chosen) await this.drawPngTo(this.imageCanvas, chosen);
    this.renderOverlay();
    this.gallery.replaceChildren();
    this.setStatus("continued; query mask promoted to current");
  }

  private async undo(): Promise<void> {
    if (!this.session.canUndo()) return;
    await this.session.undo(browserInflate);
    if (this.session.imagePng) await this.drawPngTo(this.imageCanvas, this.session.imagePng);
    this.renderOverlay();
    const gallery = this.session.gallery;
    if (gallery) await this.renderGallery(gallery.samples, gallery.seeds);
    this.setStatus("undone");
  }

  private async pollHealth(): Promise<void> {
    const banner = el<HTMLDivElement>("offline-banner");
    try {
      const info = await this.client.health();
      banner.style.display = "none";
      el<HTMLSpanElement>("model-fp").textContent = info.model.slice(0, 12);
    } catch {
      banner.style.display = "block";
    }
    setTimeout(() => void this.pollHealth(), 5000);
  }

  private setStatus(text: string): void {
    this.statusLine.textContent = text;
  }
}

const params = new URLSearchParams(window.location.search);
const endpoint = params.get("endpoint") ?? (window as unknown as { MASK_STUDIO_ENDPOINT?: string }).MASK_STUDIO_ENDPOINT ?? "http://127.0.0.1:8008";
new StudioApp(endpoint);
