/**
 * Absolute per-pixel difference between two same-size RGBA buffers,
 * rendered as a heatmap (black through red to yellow to white). Used by
 * the before/after viewer's difference toggle.
 */
export function diffHeatmap(
  before: Uint8ClampedArray,
  after: Uint8ClampedArray,
  out?: Uint8ClampedArray,
): Uint8ClampedArray {
  if (before.length !== after.length || before.length % 4 !== 0) {
    throw new Error("diff inputs must be equal-length RGBA buffers");
  }
  const result = out ?? new Uint8ClampedArray(before.length);
  if (result.length !== before.length) {
    throw new Error("diff output buffer size mismatch");
  }
  for (let i = 0; i < before.length; i += 4) {
    const d =
      (Math.abs(before[i] - after[i]) +
        Math.abs(before[i + 1] - after[i + 1]) +
        Math.abs(before[i + 2] - after[i + 2])) /
      3;
    const v = d / 255;
    // piecewise ramp: black -> red -> yellow -> white
    result[i] = Math.round(255 * Math.min(1, v * 3));
    result[i + 1] = Math.round(255 * Math.min(1, Math.max(0, v * 3 - 1)));
    result[i + 2] = Math.round(255 * Math.min(1, Math.max(0, v * 3 - 2)));
    result[i + 3] = 255;
  }
  return result;
}

/** Mean absolute difference across RGB channels, in [0, 255]. */
export function meanAbsDiff(before: Uint8ClampedArray, after: Uint8ClampedArray): number {
  if (before.length !== after.length || before.length % 4 !== 0) {
    throw new Error("diff inputs must be equal-length RGBA buffers");
  }
  let total = 0;
  const pixels = before.length / 4;
  for (let i = 0; i < before.length; i += 4) {
    total +=
      (Math.abs(before[i] - after[i]) +
        Math.abs(before[i + 1] - after[i + 1]) +
        Math.abs(before[i + 2] - after[i + 2])) /
      3;
  }
  return pixels ? total / pixels : 0;
}
