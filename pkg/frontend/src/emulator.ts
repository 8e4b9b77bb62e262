/**
 * Mouse-as-gaze emulation.  The cursor position in table millimeters is
 * pushed through the source's ground-truth camera pose into scene-camera
 * pixels, with all six marker corner sets forward-projected through the
 * same pose, so hub-side mapping runs the full homography path.
 */

import { apply, IDENTITY, invert, Mat3 } from './homography.js';
import { GazeSamplePayload, MarkerDetectionWire, Vec2 } from './protocol.js';

export interface MarkerSpecWire {
  id: number;
  center_mm: Vec2;
  side_mm: number;
}

/** Mirrors the hub's default layout: four tags 60 mm outside the view
 * corners plus two at the midpoints of the long edges, 85 mm each. */
export function defaultMarkers(): MarkerSpecWire[] {
  const w = 770;
  const h = 550;
  const off = 60;
  const side = 85;
  const centers: Vec2[] = [
    [-off, -off],
    [w + off, -off],
    [w + off, h + off],
    [-off, h + off],
    [w / 2, -off],
    [w / 2, h + off],
  ];
  return centers.map((center, id) => ({ id, center_mm: center, side_mm: side }));
}

function markerCornersMm(spec: MarkerSpecWire): Vec2[] {
  const [cx, cy] = spec.center_mm;
  const half = spec.side_mm / 2;
  return [
    [cx - half, cy - half],
    [cx + half, cy - half],
    [cx + half, cy + half],
    [cx - half, cy + half],
  ];
}

export interface EmulatedSourceOptions {
  participantId: string;
  sampleRateHz?: number;
  /** Ground-truth table->scene pose; identity-like by default. */
  pose?: Mat3;
  jitterSigmaPx?: number;
  markers?: MarkerSpecWire[];
  /** Uniform RNG injection point, for deterministic tests. */
  random?: () => number;
}

export class EmulatedSource {
  readonly participantId: string;
  readonly sampleRateHz: number;
  readonly pose: Mat3;
  readonly poseInverse: Mat3;
  jitterSigmaPx: number;
  private markers: MarkerSpecWire[];
  private markerCornersPx: MarkerDetectionWire[];
  private lastMm: Vec2 = [385, 275];
  private random: () => number;
  private spare: number | null = null;

  constructor(opts: EmulatedSourceOptions) {
    this.participantId = opts.participantId;
    this.sampleRateHz = opts.sampleRateHz ?? 60;
    this.pose = opts.pose ?? IDENTITY;
    this.poseInverse = invert(this.pose);
    this.jitterSigmaPx = opts.jitterSigmaPx ?? 0;
    this.markers = opts.markers ?? defaultMarkers();
    this.random = opts.random ?? Math.random;
    // The pose is fixed for the session, so marker projections are too.
    this.markerCornersPx = this.markers.map((spec) => ({
      id: spec.id,
      corners_px: markerCornersMm(spec).map(([x, y]) => apply(this.pose, x, y)),
    }));
  }

  /** Latest cursor position in table millimeters; held between events. */
  setPositionMm(p: Vec2): void {
    this.lastMm = p;
  }

  private gaussian(): number {
    if (this.spare !== null) {
      const v = this.spare;
      this.spare = null;
      return v;
    }
    let u = 0;
    let v = 0;
    while (u === 0) u = this.random();
    while (v === 0) v = this.random();
    const mag = Math.sqrt(-2 * Math.log(u));
    this.spare = mag * Math.sin(2 * Math.PI * v);
    return mag * Math.cos(2 * Math.PI * v);
  }

  /** One gaze payload at the held position. */
  samplePayload(): GazeSamplePayload {
    let [gx, gy] = apply(this.pose, this.lastMm[0], this.lastMm[1]);
    if (this.jitterSigmaPx > 0) {
      gx += this.gaussian() * this.jitterSigmaPx;
      gy += this.gaussian() * this.jitterSigmaPx;
    }
    return {
      participant_id: this.participantId,
      gaze_px: [gx, gy],
      confidence: 1.0,
      markers: this.markerCornersPx,
    };
  }

  /**
   * Emit payloads at the sample rate regardless of mouse-event rate.
   * Returns a stop function; callers pause emission by stopping while
   * disconnected.
   */
  start(
    send: (payload: GazeSamplePayload) => void,
    timer: {
      setInterval: (fn: () => void, ms: number) => unknown;
      clearInterval: (h: unknown) => void;
    } = globalThis as never,
  ): () => void {
    const handle = timer.setInterval(
      () => send(this.samplePayload()),
      1000 / this.sampleRateHz,
    );
    return () => timer.clearInterval(handle);
  }
}
