// Device panel view model: current values with quality, write gating,
// pending writes, and a 60-second sparkline buffer per numeric item.
// Pure state + update functions; the DOM layer only renders it.

import type { WireNode, WireValue, Scalar, DaDataType } from './da.js';
import type { Quality, SessionMode } from './types.js';

export const SPARKLINE_WINDOW_S = 60;

export interface PanelItem {
  path: string;
  dataType: DaDataType | null;
  access: 'READ' | 'WRITE' | 'READ_WRITE' | null;
  unit: string;
  lo: number | null;
  hi: number | null;
  value: Scalar | null;
  quality: Quality;
  timestamp: number;
  pendingWrite: Scalar | null;
  lastRejection: string | null;
  history: { t: number; v: number }[];
}

export interface PanelModel {
  deviceId: string | null;
  mode: SessionMode;
  items: Map<string, PanelItem>;
  connected: boolean;
}

export function emptyPanel(): PanelModel {
  return { deviceId: null, mode: 'QUEUED', items: new Map(), connected: true };
}

export function resetDevice(panel: PanelModel, deviceId: string | null, nodes: WireNode[]): void {
  panel.deviceId = deviceId;
  panel.items = new Map(
    nodes
      .filter((n) => n.kind === 'item')
      .map((n) => [
        n.path,
        {
          path: n.path,
          dataType: n.dataType,
          access: n.access,
          unit: n.unit,
          lo: n.lo,
          hi: n.hi,
          value: null,
          quality: 'BAD' as Quality,
          timestamp: 0,
          pendingWrite: null,
          lastRejection: null,
          history: [],
        },
      ]),
  );
}

export function applyValues(panel: PanelModel, values: WireValue[]): void {
  for (const value of values) {
    const item = panel.items.get(value.path);
    if (!item) continue;
    item.value = value.value;
    item.quality = value.quality;
    item.timestamp = value.timestamp;
    if (typeof value.value === 'number' && Number.isFinite(value.value)) {
      item.history.push({ t: value.timestamp, v: value.value });
      const horizon = value.timestamp - SPARKLINE_WINDOW_S;
      while (item.history.length > 0 && item.history[0].t < horizon) {
        item.history.shift();
      }
    }
    if (item.pendingWrite !== null && item.value === item.pendingWrite) {
      item.pendingWrite = null; // confirmed by refresh
    }
  }
}

/** Write controls are enabled only on writable items of a live session. */
export function writeEnabled(panel: PanelModel, path: string): boolean {
  const item = panel.items.get(path);
  if (!item) return false;
  const writable = item.access === 'WRITE' || item.access === 'READ_WRITE';
  return writable && (panel.mode === 'REAL' || panel.mode === 'SHADOW');
}

/**
 * Client-side validation before anything is sent: out-of-range and
 * type-invalid values never leave the console.
 */
export function validateWrite(panel: PanelModel, path: string, raw: string):
  | { ok: true; value: Scalar; dataType: DaDataType }
  | { ok: false; reason: string } {
  const item = panel.items.get(path);
  if (!item || !item.dataType) return { ok: false, reason: 'unknown item' };
  if (!writeEnabled(panel, path)) return { ok: false, reason: 'write not available' };
  let value: Scalar;
  switch (item.dataType) {
    case 'FLOAT': {
      value = Number(raw);
      if (!Number.isFinite(value)) return { ok: false, reason: 'not a number' };
      break;
    }
    case 'INT': {
      value = parseInt(raw, 10);
      if (!Number.isInteger(value)) return { ok: false, reason: 'not an integer' };
      break;
    }
    case 'BOOL': {
      if (raw !== 'true' && raw !== 'false') return { ok: false, reason: 'true/false expected' };
      value = raw === 'true';
      break;
    }
    default:
      value = raw;
  }
  if (typeof value === 'number' && item.lo !== null && item.hi !== null) {
    if (value < item.lo || value > item.hi) {
      return { ok: false, reason: `out of range [${item.lo}, ${item.hi}]` };
    }
  }
  return { ok: true, value, dataType: item.dataType };
}

export function markPending(panel: PanelModel, path: string, value: Scalar): void {
  const item = panel.items.get(path);
  if (item) {
    item.pendingWrite = value;
    item.lastRejection = null;
  }
}

export function markRejected(panel: PanelModel, path: string, reason: string | null): void {
  const item = panel.items.get(path);
  if (item) {
    item.pendingWrite = null;
    item.lastRejection = reason ?? 'rejected';
  }
}

/** Points scaled into a width x height box, oldest to newest. */
export function sparklinePoints(
  item: PanelItem,
  width: number,
  height: number,
): { x: number; y: number }[] {
  if (item.history.length < 2) return [];
  const t0 = item.history[0].t;
  const t1 = item.history[item.history.length - 1].t;
  const values = item.history.map((p) => p.v);
  const vMin = Math.min(...values);
  const vMax = Math.max(...values);
  const span = t1 - t0 || 1;
  const vSpan = vMax - vMin || 1;
  return item.history.map((p) => ({
    x: ((p.t - t0) / span) * width,
    y: height - ((p.v - vMin) / vSpan) * height,
  }));
}
