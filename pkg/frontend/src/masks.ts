/**
 * Pure pixel-buffer helpers for mask rendering. Kept canvas-free so they run
 * (and are tested) in any JS runtime; the screens feed the buffers into
 * ImageData when a real 2d context exists.
 */

export type Rgb = [number, number, number];

/** Opaque RGBA pixel buffer backed by a plain ArrayBuffer. */
export type PixelBuffer = Uint8ClampedArray<ArrayBuffer>;

export const SEGMENT_TINT: Rgb = [64, 156, 255];
export const SEGMENT_ALPHA = 0.55;

// identical to the server's overlay arithmetic: 0.5*red + 0.5*base, truncated
export const ANOMALY_TINT: Rgb = [255, 0, 0];
export const ANOMALY_ALPHA = 0.5;

/** RGBA buffer with the tint wherever the mask bit is set, transparent elsewhere. */
export function maskToRgba(bits: Uint8Array, width: number, height: number,
                           tint: Rgb, alpha: number): PixelBuffer {
  const out = new Uint8ClampedArray(4 * width * height);
  const a = Math.round(alpha * 255);
  for (let i = 0; i < bits.length; i++) {
    if (bits[i]) {
      const j = 4 * i;
      out[j] = tint[0];
      out[j + 1] = tint[1];
      out[j + 2] = tint[2];
      out[j + 3] = a;
    }
  }
  return out;
}

/** Alpha-blend the tint into an opaque RGBA buffer in place over mask pixels. */
export function blendTint(base: PixelBuffer, bits: Uint8Array,
                          tint: Rgb, alpha: number): PixelBuffer {
  for (let i = 0; i < bits.length; i++) {
    if (!bits[i]) continue;
    const j = 4 * i;
    base[j] = Math.floor(alpha * tint[0] + (1 - alpha) * base[j]);
    base[j + 1] = Math.floor(alpha * tint[1] + (1 - alpha) * base[j + 1]);
    base[j + 2] = Math.floor(alpha * tint[2] + (1 - alpha) * base[j + 2]);
  }
  return base;
}

/** Draw an RGBA buffer onto a canvas; silently no-ops without a 2d context. */
export function paintRgba(canvas: HTMLCanvasElement, rgba: PixelBuffer,
                          width: number, height: number): void {
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.putImageData(new ImageData(rgba, width, height), 0, 0);
}
