/**
 * Wire protocol mirror, version 1: newline-free JSON envelopes carried
 * one per WebSocket text frame (the TCP side of the hub adds newlines).
 *
 * Every message this module emits must decode on the hub side, so the
 * validators here are deliberately strict.
 */

export const PROTOCOL_VERSION = 1;

export type Vec2 = [number, number];

export interface Envelope<P = unknown> {
  v: number;
  type: string;
  seq: number;
  t_mono_s: number;
  payload: P;
}

export interface MarkerDetectionWire {
  id: number;
  corners_px: Vec2[];
}

export interface HelloPayload {
  role: 'gaze-source' | 'detector' | 'renderer';
  participant_id: string | null;
}

export interface GrantPayload {
  session_token: string;
  tick_hz: number;
  layout_hash: string;
}

export interface RejectPayload {
  reason: string;
  detail: string;
}

export interface GazeSamplePayload {
  participant_id: string;
  gaze_px: Vec2;
  confidence: number;
  markers: MarkerDetectionWire[];
}

export interface GridSnapshot {
  rows: number;
  cols: number;
  reveal_threshold_s: number;
  dwell_cap_s: number;
  intensity: number[];
}

export interface TrailSnapshot {
  participant_id: string;
  pos_mm: Vec2;
  heading_rad: number;
  target_cell: [number, number] | null;
  history: Vec2[];
}

export interface ArcSnapshot {
  participant_id: string;
  fraction: number;
}

export interface HighlightSnapshot {
  object_id: string;
  center_mm: Vec2;
  radius_mm: number;
  arcs: ArcSnapshot[];
}

export interface HintSnapshot {
  object_id: string;
  active: boolean;
  neighbors: string[];
}

export interface BroadcastPayload {
  tick: number;
  server_t_s: number;
  participants: string[];
  grid: GridSnapshot | null;
  trails: TrailSnapshot[] | null;
  highlights: HighlightSnapshot[] | null;
  hints: HintSnapshot[] | null;
}

export class MalformedMessage extends Error {}
export class UnsupportedVersion extends Error {}

function isFiniteNumber(x: unknown): x is number {
  return typeof x === 'number' && Number.isFinite(x);
}

function isVec2(x: unknown): x is Vec2 {
  return (
    Array.isArray(x) && x.length === 2 && isFiniteNumber(x[0]) && isFiniteNumber(x[1])
  );
}

export function validateGazePayload(p: GazeSamplePayload): void {
  if (!p.participant_id) throw new MalformedMessage('missing participant id');
  if (!isVec2(p.gaze_px)) throw new MalformedMessage('gaze_px must be a finite pair');
  if (!isFiniteNumber(p.confidence) || p.confidence < 0 || p.confidence > 1) {
    throw new MalformedMessage('confidence must be in [0,1]');
  }
  for (const marker of p.markers) {
    if (!Number.isInteger(marker.id)) throw new MalformedMessage('marker id');
    if (marker.corners_px.length !== 4 || !marker.corners_px.every(isVec2)) {
      throw new MalformedMessage('marker needs 4 finite corners');
    }
  }
}

export function encodeEnvelope(
  type: string,
  seq: number,
  tMonoS: number,
  payload: unknown,
): string {
  if (type === 'gaze') validateGazePayload(payload as GazeSamplePayload);
  return JSON.stringify({ v: PROTOCOL_VERSION, type, seq, t_mono_s: tMonoS, payload });
}

export function decodeLine(line: string): Envelope {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch (err) {
    throw new MalformedMessage(`bad json: ${err}`);
  }
  if (typeof obj !== 'object' || obj === null) {
    throw new MalformedMessage('envelope must be an object');
  }
  const env = obj as Record<string, unknown>;
  if (!isFiniteNumber(env.v)) throw new MalformedMessage('missing version');
  if (env.v !== PROTOCOL_VERSION) {
    throw new UnsupportedVersion(`protocol v${env.v} unsupported`);
  }
  if (typeof env.type !== 'string') throw new MalformedMessage('missing type');
  if (!isFiniteNumber(env.seq) || !isFiniteNumber(env.t_mono_s)) {
    throw new MalformedMessage('missing seq/t_mono_s');
  }
  return {
    v: env.v,
    type: env.type,
    seq: env.seq,
    t_mono_s: env.t_mono_s,
    payload: env.payload,
  };
}

export function isBroadcast(env: Envelope): env is Envelope<BroadcastPayload> {
  return env.type === 'broadcast';
}

export function isGrant(env: Envelope): env is Envelope<GrantPayload> {
  return env.type === 'grant';
}

export function isReject(env: Envelope): env is Envelope<RejectPayload> {
  return env.type === 'reject';
}
