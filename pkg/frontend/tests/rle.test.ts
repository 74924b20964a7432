import { describe, expect, it } from "vitest";

import { decodeRle, maskArea } from "../src/rle";

describe("decodeRle", () => {
  it("decodes an all-zero raster", () => {
    const bits = decodeRle([16], 4, 4);
    expect(maskArea(bits)).toBe(0);
    expect(bits.length).toBe(16);
  });

  it("decodes alternating runs row-major", () => {
    expect(Array.from(decodeRle([1, 2, 1], 2, 2))).toEqual([0, 1, 1, 0]);
  });

  it("handles a leading zero run for masks starting with 1", () => {
    expect(Array.from(decodeRle([0, 2, 1], 3, 1))).toEqual([1, 1, 0]);
  });

  it("rejects run sums that do not match dimensions", () => {
    expect(() => decodeRle([5], 2, 2)).toThrow(/sum/);
  });

  it("round-trips areas from alternating run positions", () => {
    // odd-indexed runs are the 1-runs
    const runs = [3, 4, 2, 1, 6];
    const bits = decodeRle(runs, 4, 4);
    expect(maskArea(bits)).toBe(4 + 1);
  });
});
