/**
 * Run-length mask codec matching the manifest schema: alternating counts in
 * row-major order, first count covering 0-pixels (possibly zero).
 */

export function decodeRle(runs: number[], width: number, height: number): Uint8Array {
  const total = runs.reduce((a, b) => a + b, 0);
  if (total !== width * height) {
    throw new Error(`rle runs sum to ${total}, expected ${width * height}`);
  }
  const bits = new Uint8Array(width * height);
  let offset = 0;
  let value = 0;
  for (const run of runs) {
    if (run < 0) throw new Error(`negative run count ${run}`);
    if (value === 1) bits.fill(1, offset, offset + run);
    offset += run;
    value = 1 - value;
  }
  return bits;
}

export function maskArea(bits: Uint8Array): number {
  let area = 0;
  for (let i = 0; i < bits.length; i++) area += bits[i];
  return area;
}
