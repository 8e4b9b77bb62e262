/**
 * Browser entry point.  URL query parameters:
 *   participant=<id>   gaze-source identity (default a random tag)
 *   role=renderer      view-only, no gaze emission
 *   jitter=<sigma_px>  Gaussian gaze noise in scene pixels (default 0)
 *   hub=<host:port>    renderer WebSocket endpoint (default host:9471)
 *
 * Every open tab with a distinct participant id is one live gaze source
 * steering the shared session.
 */

import { HubClient } from './client.js';
import { EmulatedSource } from './emulator.js';
import { renderFrame, Ctx2D } from './render.js';
import { ViewTransform } from './transform.js';

function param(name: string): string | null {
  return new URLSearchParams(window.location.search).get(name);
}

const canvas = document.getElementById('table') as HTMLCanvasElement;
const status = document.getElementById('status') as HTMLElement;
const ctx = canvas.getContext('2d') as unknown as Ctx2D;

const role = param('role') === 'renderer' ? 'renderer' : 'gaze-source';
const participantId =
  param('participant') ?? `web-${Math.random().toString(36).slice(2, 7)}`;
const jitter = Number(param('jitter') ?? '0');
const hubAddress = param('hub') ?? `${window.location.hostname || '127.0.0.1'}:9471`;

let vt = new ViewTransform(canvas.clientWidth || 960, canvas.clientHeight || 686);

function resize(): void {
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  vt = new ViewTransform(canvas.width, canvas.height);
}
window.addEventListener('resize', resize);

const client = new HubClient({
  url: `ws://${hubAddress}`,
  role,
  participantId: role === 'gaze-source' ? participantId : undefined,
});

let stopEmitting: (() => void) | null = null;

if (role === 'gaze-source') {
  const source = new EmulatedSource({
    participantId,
    jitterSigmaPx: jitter,
  });
  canvas.addEventListener('pointermove', (event) => {
    const rect = canvas.getBoundingClientRect();
    const css: [number, number] = [
      event.clientX - rect.left,
      event.clientY - rect.top,
    ];
    source.setPositionMm(vt.cssToMm(css));
  });
  client.onGrant = () => {
    status.textContent = `${participantId} connected (tick ${client.grant?.tick_hz} Hz)`;
    stopEmitting?.();
    stopEmitting = source.start((payload) => client.send('gaze', payload));
  };
  client.onClose = () => {
    stopEmitting?.(); // emission pauses while disconnected
    stopEmitting = null;
    status.textContent = `${participantId} disconnected`;
  };
} else {
  client.onGrant = () => {
    status.textContent = 'renderer connected';
  };
}

function frame(): void {
  renderFrame(ctx, client.latestBroadcast, vt, client.isStale());
  requestAnimationFrame(frame);
}

resize();
requestAnimationFrame(frame);
