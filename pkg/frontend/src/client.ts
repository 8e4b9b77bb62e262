/**
 * Hub connection: handshake over the renderer WebSocket endpoint, a
 * latest-wins broadcast slot (no queue growth when rendering lags), and
 * sequence-stamped outgoing envelopes.
 */

import {
  BroadcastPayload,
  encodeEnvelope,
  decodeLine,
  GrantPayload,
  isBroadcast,
  isGrant,
  isReject,
} from './protocol.js';

export const STALE_AFTER_MS = 1000;

/** The subset of the WebSocket API the client needs; lets node tests
 * substitute the 'ws' implementation. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: 'open' | 'close', listener: () => void): void;
  addEventListener(
    type: 'message',
    listener: (event: { data: unknown }) => void,
  ): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface HubClientOptions {
  url: string;
  role: 'gaze-source' | 'renderer' | 'detector';
  participantId?: string;
  socketFactory?: SocketFactory;
  now?: () => number;
}

export class HubClient {
  readonly role: string;
  readonly participantId: string | null;
  grant: GrantPayload | null = null;
  latestBroadcast: BroadcastPayload | null = null;
  lastBroadcastAtMs: number | null = null;
  connected = false;
  rejection: string | null = null;
  onGrant: ((grant: GrantPayload) => void) | null = null;
  onBroadcast: ((b: BroadcastPayload) => void) | null = null;
  onClose: (() => void) | null = null;

  private socket: SocketLike;
  private seq = 0;
  private readonly now: () => number;

  constructor(opts: HubClientOptions) {
    this.role = opts.role;
    this.participantId = opts.participantId ?? null;
    this.now = opts.now ?? (() => Date.now());
    const factory: SocketFactory =
      opts.socketFactory ??
      ((url) => new WebSocket(url) as unknown as SocketLike);
    this.socket = factory(opts.url);
    this.socket.addEventListener('open', () => {
      this.send('hello', {
        role: this.role,
        participant_id: this.participantId,
      });
    });
    this.socket.addEventListener('message', (event) => {
      this.handleLine(String(event.data));
    });
    this.socket.addEventListener('close', () => {
      this.connected = false;
      this.onClose?.();
    });
  }

  private handleLine(line: string): void {
    let env;
    try {
      env = decodeLine(line);
    } catch {
      return; // skip malformed/unknown, never fatal
    }
    if (isGrant(env)) {
      this.grant = env.payload;
      this.connected = true;
      this.onGrant?.(env.payload);
    } else if (isReject(env)) {
      this.rejection = env.payload.reason;
      this.connected = false;
    } else if (isBroadcast(env)) {
      this.latestBroadcast = env.payload; // latest wins, no queue
      this.lastBroadcastAtMs = this.now();
      this.onBroadcast?.(env.payload);
    }
  }

  send(type: string, payload: unknown): void {
    this.seq += 1;
    this.socket.send(encodeEnvelope(type, this.seq, this.now() / 1000, payload));
  }

  isStale(nowMs: number = this.now()): boolean {
    return (
      this.lastBroadcastAtMs === null ||
      nowMs - this.lastBroadcastAtMs > STALE_AFTER_MS
    );
  }

  close(): void {
    this.socket.close();
  }
}
