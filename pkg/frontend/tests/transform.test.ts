import { describe, expect, it } from 'vitest';

import { ViewTransform } from '../src/transform.js';

describe('ViewTransform', () => {
  it('preserves the 770:550 aspect ratio exactly', () => {
    for (const [w, h] of [
      [960, 686],
      [1900, 1080],
      [500, 2000],
      [777, 555],
    ] as const) {
      const vt = new ViewTransform(w, h);
      const [x0, y0] = vt.mmToCss([0, 0]);
      const [x1, y1] = vt.mmToCss([770, 550]);
      expect((x1 - x0) / (y1 - y0)).toBeCloseTo(770 / 550, 12);
    }
  });

  it('letterboxes a wide viewport horizontally', () => {
    const vt = new ViewTransform(2000, 550);
    expect(vt.scale).toBe(1);
    expect(vt.offsetX).toBe((2000 - 770) / 2);
    expect(vt.offsetY).toBe(0);
  });

  it('letterboxes a tall viewport vertically', () => {
    const vt = new ViewTransform(770, 1100);
    expect(vt.scale).toBe(1);
    expect(vt.offsetX).toBe(0);
    expect(vt.offsetY).toBe((1100 - 550) / 2);
  });

  it('round-trips css and mm coordinates', () => {
    const vt = new ViewTransform(1234, 987);
    for (const p of [
      [0, 0],
      [385, 275],
      [770, 550],
      [123.456, 321.987],
    ] as const) {
      const [x, y] = vt.cssToMm(vt.mmToCss([p[0], p[1]]));
      expect(x).toBeCloseTo(p[0], 9);
      expect(y).toBeCloseTo(p[1], 9);
    }
  });

  it('classifies css points against the table area', () => {
    const vt = new ViewTransform(2000, 550);
    expect(vt.containsCss(vt.mmToCss([385, 275]))).toBe(true);
    expect(vt.containsCss([10, 275])).toBe(false); // letterbox band
  });

  it('rejects empty viewports', () => {
    expect(() => new ViewTransform(0, 100)).toThrow();
  });
});
