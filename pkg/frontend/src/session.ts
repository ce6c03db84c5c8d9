/**
 * The what-if loop: current image + two mask layers (the actor's current
 * mask and the sketched query mask), a gallery of candidate futures, and a
 * history stack. "Continue" promotes a chosen future to be the next input
 * and the query mask becomes the next current mask (the action just taken
 * is where the actor now is). Every history entry stores the seeds and
 * model fingerprint, so the whole trajectory replays bit-for-bit against
 * the same checkpoint.
 */

import { Gallery, PredictClient, PredictOptions } from "./api.js";
import { MaskLayer } from "./mask.js";

export interface HistoryEntry {
  imagePng: Uint8Array;
  currentMaskPng: Uint8Array;
  queryMaskPng: Uint8Array;
  options: PredictOptions;
  gallery: Gallery;
  chosenIndex: number;
}

export class Session {
  imagePng: Uint8Array | null = null;
  width = 0;
  height = 0;
  currentMask: MaskLayer | null = null;
  queryMask: MaskLayer | null = null;
  gallery: Gallery | null = null;
  lastOptions: PredictOptions | null = null;
  readonly history: HistoryEntry[] = [];
  private readonly redoStack: HistoryEntry[] = [];

  constructor(private readonly client: PredictClient) {}

  loadImage(png: Uint8Array, width: number, height: number): void {
    this.imagePng = png;
    this.width = width;
    this.height = height;
    this.currentMask = new MaskLayer(width, height);
    this.queryMask = new MaskLayer(width, height);
    this.gallery = null;
    this.history.length = 0;
    this.redoStack.length = 0;
  }

  private requireLoaded(): void {
    if (!this.imagePng || !this.currentMask || !this.queryMask) {
      throw new Error("no image loaded");
    }
  }

  async requestFutures(options: PredictOptions): Promise<Gallery> {
    this.requireLoaded();
    if (this.currentMask!.isEmpty() || this.queryMask!.isEmpty()) {
      throw new Error("both masks must be drawn before requesting futures");
    }
    const gallery = await this.client.predict(
      this.imagePng!,
      this.currentMask!.exportPng(),
      this.queryMask!.exportPng(),
      options,
    );
    this.gallery = gallery;
    this.lastOptions = { ...options };
    return gallery;
  }

  /** Adopt gallery sample ``index`` as the new present; query becomes current. */
  continueFrom(index: number): void {
    this.requireLoaded();
    if (!this.gallery || !this.lastOptions) throw new Error("no gallery to continue from");
    if (index < 0 || index >= this.gallery.samples.length) throw new Error("bad sample index");
    this.history.push({
      imagePng: this.imagePng!,
      currentMaskPng: this.currentMask!.exportPng(),
      queryMaskPng: this.queryMask!.exportPng(),
      options: this.lastOptions,
      gallery: this.gallery,
      chosenIndex: index,
    });
    this.redoStack.length = 0;
    this.imagePng = this.gallery.samples[index];
    this.currentMask = this.queryMask!.clone();
    this.queryMask = new MaskLayer(this.width, this.height);
    this.gallery = null;
    this.lastOptions = null;
  }

  canUndo(): boolean {
    return this.history.length > 0;
  }

  /** Restore the exact state prior to the last continue. */
  async undo(inflate: (d: Uint8Array) => Promise<Uint8Array>): Promise<void> {
    const entry = this.history.pop();
    if (!entry) throw new Error("nothing to undo");
    this.redoStack.push(entry);
    this.imagePng = entry.imagePng;
    this.currentMask = await MaskLayer.importPng(entry.currentMaskPng, inflate);
    this.queryMask = await MaskLayer.importPng(entry.queryMaskPng, inflate);
    this.gallery = entry.gallery;
    this.lastOptions = entry.options;
  }

  /** Re-apply the last undone continue, restoring its exact outcome. */
  async redo(inflate: (d: Uint8Array) => Promise<Uint8Array>): Promise<void> {
    const entry = this.redoStack.pop();
    if (!entry) throw new Error("nothing to redo");
    this.history.push(entry);
    this.imagePng = entry.gallery.samples[entry.chosenIndex];
    this.currentMask = await MaskLayer.importPng(entry.queryMaskPng, inflate);
    this.queryMask = new MaskLayer(this.width, this.height);
    this.gallery = null;
    this.lastOptions = null;
  }

  /**
   * Re-execute every history entry with its stored inputs and seeds.
   * Returns per-entry booleans: gallery payloads byte-identical AND the
   * serving model fingerprint unchanged.
   */
  async replay(client?: PredictClient): Promise<boolean[]> {
    const target = client ?? this.client;
    const results: boolean[] = [];
    for (const entry of this.history) {
      const fresh = await target.predict(
        entry.imagePng,
        entry.currentMaskPng,
        entry.queryMaskPng,
        entry.options,
      );
      const same =
        fresh.fingerprint === entry.gallery.fingerprint &&
        fresh.samplesB64.length === entry.gallery.samplesB64.length &&
        fresh.samplesB64.every((s, i) => s === entry.gallery.samplesB64[i]);
      results.push(same);
    }
    return results;
  }
}
