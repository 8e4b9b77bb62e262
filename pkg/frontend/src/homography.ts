/** Minimal 3x3 projective-map helpers for the emulated camera pose. */

export type Mat3 = [
  number, number, number,
  number, number, number,
  number, number, number,
];

export const IDENTITY: Mat3 = [1, 0, 0, 0, 1, 0, 0, 0, 1];

const W_EPSILON = 1e-12;

export function apply(m: Mat3, x: number, y: number): [number, number] {
  const w = m[6] * x + m[7] * y + m[8];
  if (Math.abs(w) < W_EPSILON) {
    throw new Error(`point (${x}, ${y}) maps to infinity`);
  }
  return [
    (m[0] * x + m[1] * y + m[2]) / w,
    (m[3] * x + m[4] * y + m[5]) / w,
  ];
}

export function invert(m: Mat3): Mat3 {
  const [a, b, c, d, e, f, g, h, i] = m;
  const A = e * i - f * h;
  const B = c * h - b * i;
  const C = b * f - c * e;
  const det = a * A + d * B + g * C;
  if (Math.abs(det) < W_EPSILON) {
    throw new Error('homography is not invertible');
  }
  const inv: Mat3 = [
    A / det, B / det, C / det,
    (f * g - d * i) / det, (a * i - c * g) / det, (c * d - a * f) / det,
    (d * h - e * g) / det, (b * g - a * h) / det, (a * e - b * d) / det,
  ];
  // Match the hub convention: scale so the last entry is 1.
  const s = inv[8];
  return Math.abs(s) > W_EPSILON
    ? (inv.map((v) => v / s) as Mat3)
    : inv;
}

/** Similarity + small perspective terms, same parameterization the
 * simulator uses for ground-truth camera poses (table mm -> scene px). */
export function poseMatrix(
  scalePxPerMm: number,
  rotationRad: number,
  translatePx: [number, number],
  perspective: [number, number] = [0, 0],
): Mat3 {
  const c = Math.cos(rotationRad) * scalePxPerMm;
  const s = Math.sin(rotationRad) * scalePxPerMm;
  return [
    c, -s, translatePx[0],
    s, c, translatePx[1],
    perspective[0], perspective[1], 1,
  ];
}
