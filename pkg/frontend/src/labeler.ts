import type { ApiClient } from "./api.js";
import { SEGMENT_ALPHA, SEGMENT_TINT, blendTint, paintRgba } from "./masks.js";
import { decodeRle } from "./rle.js";
import { LabelSession } from "./state.js";
import type { LabelValue, Manifest } from "./types.js";

/**
 * Segment labeling screen: steps through the query scene's segments with the
 * current mask superimposed, reference scene alongside. Keys: A = anomaly,
 * N = normal, arrows = navigate, S = save. Choices are local until saved.
 */
export class LabelerScreen {
  readonly root: HTMLElement;
  session: LabelSession | null = null;
  private manifest: Manifest | null = null;
  private status: HTMLElement;
  private canvas: HTMLCanvasElement;
  private referenceImg: HTMLImageElement;
  private summary: HTMLElement;
  private saveButton: HTMLButtonElement;
  private keyHandler = (event: KeyboardEvent) => this.onKey(event);

  constructor(private api: ApiClient, private querySceneId: string,
              private referenceSceneId: string) {
    this.root = document.createElement("section");
    this.root.className = "labeler-screen";
    this.canvas = document.createElement("canvas");
    this.canvas.className = "labeler-canvas";
    this.referenceImg = document.createElement("img");
    this.referenceImg.className = "reference-image";
    this.referenceImg.alt = `reference scene ${referenceSceneId}`;
    this.status = document.createElement("p");
    this.status.className = "labeler-status";
    this.summary = document.createElement("p");
    this.summary.className = "labeler-summary";
    this.saveButton = document.createElement("button");
    this.saveButton.textContent = "Save labels (S)";
    this.saveButton.addEventListener("click", () => void this.save());

    const panes = document.createElement("div");
    panes.className = "labeler-panes";
    panes.append(this.canvas, this.referenceImg);
    this.root.append(this.status, panes, this.summary, this.saveButton);
    document.addEventListener("keydown", this.keyHandler);
  }

  dispose(): void {
    document.removeEventListener("keydown", this.keyHandler);
  }

  async load(): Promise<void> {
    this.manifest = await this.api.segments(this.querySceneId);
    const saved = await this.api.labels(this.querySceneId);
    this.session = new LabelSession(
      this.manifest.segments.map((s) => s.id), saved.labels);
    this.referenceImg.onerror = () => undefined;
    this.referenceImg.src = this.api.imageUrl(this.referenceSceneId);
    this.render();
  }

  onKey(event: KeyboardEvent): void {
    if (!this.session) return;
    const key = event.key.toLowerCase();
    if (key === "a") this.applyLabel("anomaly");
    else if (key === "n") this.applyLabel("normal");
    else if (event.key === "ArrowRight") { this.session.next(); this.render(); }
    else if (event.key === "ArrowLeft") { this.session.prev(); this.render(); }
    else if (key === "s") void this.save();
  }

  applyLabel(value: LabelValue): void {
    if (!this.session) return;
    this.session.label(value);
    this.render();
  }

  async save(): Promise<void> {
    if (!this.session) return;
    const doc = this.session.toDocument(this.querySceneId, this.referenceSceneId);
    this.saveButton.disabled = true;
    try {
      await this.api.postLabels(this.querySceneId, doc);
      this.session.markSaved();
      this.status.textContent = `saved ${doc.labels.length} labels`;
    } catch (err) {
      this.status.textContent = `save failed: ${String(err)}`;
    } finally {
      this.saveButton.disabled = false;
      this.render();
    }
  }

  render(): void {
    const session = this.session;
    const manifest = this.manifest;
    if (!session || !manifest) return;
    const counts = session.counts();
    if (session.complete) {
      this.summary.textContent =
        `Pass complete: ${counts.anomaly} anomaly / ${counts.normal} normal` +
        (counts.unlabeled ? ` (${counts.unlabeled} skipped)` : "");
    } else {
      const current = session.currentSegmentId;
      const chosen = current ? session.labelOf(current) : undefined;
      this.summary.textContent =
        `Segment ${session.cursor + 1}/${session.size}` +
        (chosen ? ` [${chosen}]` : "") +
        ` | ${counts.anomaly} anomaly, ${counts.normal} normal so far`;
      this.paintCurrent();
    }
    const dirty = session.unsaved ? " (unsaved changes)" : "";
    this.status.textContent =
      `${this.querySceneId} vs ${this.referenceSceneId}${dirty}`;
  }

  private paintCurrent(): void {
    const session = this.session;
    const manifest = this.manifest;
    if (!session || !manifest) return;
    const segment = manifest.segments.find(
      (s) => s.id === session.currentSegmentId);
    if (!segment) return;
    const { width, height } = manifest;
    const base = new Uint8ClampedArray(4 * width * height);
    for (let i = 0; i < width * height; i++) {
      base[4 * i] = base[4 * i + 1] = base[4 * i + 2] = 96;
      base[4 * i + 3] = 255;
    }
    blendTint(base, decodeRle(segment.rle, width, height), SEGMENT_TINT,
              SEGMENT_ALPHA);
    paintRgba(this.canvas, base, width, height);
    this.paintSceneUnderlay(segment.rle);
  }

  private paintSceneUnderlay(rle: number[]): void {
    const manifest = this.manifest;
    if (!manifest) return;
    const img = new Image();
    img.onload = () => {
      const ctx = this.canvas.getContext("2d");
      if (!ctx) return;
      ctx.drawImage(img, 0, 0, manifest.width, manifest.height);
      const frame = ctx.getImageData(0, 0, manifest.width, manifest.height);
      blendTint(frame.data, decodeRle(rle, manifest.width, manifest.height),
                SEGMENT_TINT, SEGMENT_ALPHA);
      ctx.putImageData(frame, 0, 0);
    };
    img.onerror = () => undefined;
    img.src = this.api.imageUrl(this.querySceneId);
  }
}
