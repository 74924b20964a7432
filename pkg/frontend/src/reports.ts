import type { ApiClient } from "./api.js";
import { ANOMALY_ALPHA, ANOMALY_TINT, blendTint, paintRgba } from "./masks.js";
import { decodeRle } from "./rle.js";
import type { Manifest, Report } from "./types.js";

/**
 * Client-side re-thresholding of server-reported probabilities. The UI never
 * recomputes features or probabilities; it only compares them to the slider.
 */
export function tintedSegmentIds(report: Report, threshold: number): string[] {
  return report.entries
    .filter((e) => e.probability >= threshold)
    .map((e) => e.segment_id);
}

/** Report review screen: red overlay, probability list, threshold slider. */
export class ReportScreen {
  readonly root: HTMLElement;
  private report: Report | null = null;
  private manifest: Manifest | null = null;
  private baseImage: HTMLImageElement | null = null;
  threshold = 0.5;

  constructor(private api: ApiClient, private pairId: string,
              private queryScene: string) {
    this.root = document.createElement("section");
    this.root.className = "report-screen";
  }

  async load(): Promise<void> {
    try {
      this.report = await this.api.report(this.pairId);
    } catch {
      this.root.innerHTML =
        `<p class="empty-state">No report for <b>${this.pairId}</b> yet. ` +
        `Run <code>scenewatch detect</code> to create one.</p>`;
      return;
    }
    this.manifest = await this.api.segments(this.queryScene);
    this.threshold = this.report.threshold;
    this.render();
  }

  setThreshold(value: number): void {
    this.threshold = value;
    this.render();
  }

  tintedIds(): string[] {
    return this.report ? tintedSegmentIds(this.report, this.threshold) : [];
  }

  render(): void {
    if (!this.report || !this.manifest) return;
    const tinted = new Set(this.tintedIds());
    this.root.innerHTML = "";

    const controls = document.createElement("div");
    controls.className = "report-controls";
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = "0";
    slider.max = "1";
    slider.step = "0.01";
    slider.value = String(this.threshold);
    slider.addEventListener("input", () => this.setThreshold(Number(slider.value)));
    const readout = document.createElement("span");
    readout.textContent = `threshold ${this.threshold.toFixed(2)}: ` +
      `${tinted.size}/${this.report.entries.length} flagged`;
    controls.append(slider, readout);
    this.root.append(controls);

    const canvas = document.createElement("canvas");
    canvas.className = "report-canvas";
    this.paintOverlay(canvas, tinted);
    this.root.append(canvas);

    const list = document.createElement("ul");
    list.className = "segment-list";
    for (const entry of this.report.entries) {
      const item = document.createElement("li");
      item.dataset.segmentId = entry.segment_id;
      item.classList.toggle("tinted", tinted.has(entry.segment_id));
      item.title = `cosine ${entry.features.cosine.toFixed(4)}, ` +
        `disparity ${entry.features.disparity.toFixed(6)}, ` +
        `area_diff ${entry.features.area_diff.toFixed(4)}` +
        (entry.low_confidence ? " (low confidence)" : "");
      item.textContent =
        `${entry.segment_id}: p=${entry.probability.toFixed(3)} (${entry.decision})`;
      list.append(item);
    }
    this.root.append(list);
  }

  private paintOverlay(canvas: HTMLCanvasElement, tinted: Set<string>): void {
    const manifest = this.manifest;
    if (!manifest) return;
    const { width, height } = manifest;
    // opaque mid-gray base when the scene image is not yet decodable
    const base = new Uint8ClampedArray(4 * width * height);
    for (let i = 0; i < width * height; i++) {
      base[4 * i] = base[4 * i + 1] = base[4 * i + 2] = 96;
      base[4 * i + 3] = 255;
    }
    for (const segment of manifest.segments) {
      if (!tinted.has(segment.id)) continue;
      blendTint(base, decodeRle(segment.rle, width, height), ANOMALY_TINT,
                ANOMALY_ALPHA);
    }
    paintRgba(canvas, base, width, height);
    this.loadSceneImage(canvas, tinted);
  }

  private loadSceneImage(canvas: HTMLCanvasElement, tinted: Set<string>): void {
    const manifest = this.manifest;
    if (!manifest) return;
    const img = new Image();
    img.onload = () => {
      const ctx = canvas.getContext("2d");
      if (!ctx) return;
      ctx.drawImage(img, 0, 0, manifest.width, manifest.height);
      const frame = ctx.getImageData(0, 0, manifest.width, manifest.height);
      for (const segment of manifest.segments) {
        if (!tinted.has(segment.id)) continue;
        blendTint(frame.data, decodeRle(segment.rle, manifest.width, manifest.height),
                  ANOMALY_TINT, ANOMALY_ALPHA);
      }
      ctx.putImageData(frame, 0, 0);
    };
    img.onerror = () => undefined; // keep the gray composite
    img.src = this.api.imageUrl(this.queryScene);
    this.baseImage = img;
  }
}
