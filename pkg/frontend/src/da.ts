// Client side of the XML data-access protocol (POST /da).

import { parseXml, renderElement, XmlElement } from './xml.js';
import type { Quality } from './types.js';

export type DaDataType = 'FLOAT' | 'INT' | 'BOOL' | 'STRING';
export type Scalar = number | boolean | string;

export interface WireValue {
  path: string;
  dataType: DaDataType | null;
  value: Scalar | null;
  quality: Quality;
  timestamp: number;
}

export interface WireNode {
  path: string;
  kind: 'folder' | 'item';
  dataType: DaDataType | null;
  access: 'READ' | 'WRITE' | 'READ_WRITE' | null;
  unit: string;
  lo: number | null;
  hi: number | null;
}

export interface WriteOutcome {
  path: string;
  accepted: boolean;
  reason: string | null;
}

export class DaFaultError extends Error {
  constructor(
    public code: string,
    message: string,
  ) {
    super(`${code}: ${message}`);
  }
}

function encodeScalar(value: Scalar, dataType: DaDataType): string {
  if (dataType === 'BOOL') return value ? 'true' : 'false';
  return String(value);
}

function decodeScalar(raw: string, dataType: DaDataType): Scalar {
  if (dataType === 'FLOAT') return Number(raw);
  if (dataType === 'INT') return parseInt(raw, 10);
  if (dataType === 'BOOL') return raw === 'true';
  return raw;
}

function wireValue(el: XmlElement): WireValue {
  const dataType = (el.attrs['type'] as DaDataType | undefined) ?? null;
  const raw = el.attrs['value'];
  return {
    path: el.attrs['path'],
    dataType,
    value: raw !== undefined && dataType ? decodeScalar(raw, dataType) : null,
    quality: el.attrs['quality'] as Quality,
    timestamp: Number(el.attrs['timestamp']),
  };
}

export function browseRequest(device: string, path: string): string {
  return renderElement('DaRequest', { op: 'Browse', device, path });
}

export function readRequest(device: string, paths: string[]): string {
  return renderElement(
    'DaRequest',
    { op: 'Read', device },
    paths.map((p) => renderElement('Item', { path: p })),
  );
}

export function writeRequest(
  device: string,
  writes: { path: string; dataType: DaDataType; value: Scalar }[],
): string {
  return renderElement(
    'DaRequest',
    { op: 'Write', device },
    writes.map((w) =>
      renderElement('Item', { path: w.path, type: w.dataType, value: encodeScalar(w.value, w.dataType) }),
    ),
  );
}

export function subscribeRequest(
  device: string,
  items: { path: string; deadband: number }[],
  ttl = 60,
): string {
  return renderElement(
    'DaRequest',
    { op: 'Subscribe', device, ttl: String(ttl) },
    items.map((i) => renderElement('Item', { path: i.path, deadband: String(i.deadband) })),
  );
}

export function refreshRequest(handle: string): string {
  return renderElement('DaRequest', { op: 'SubscriptionPolledRefresh', handle });
}

export function cancelRequest(handle: string): string {
  return renderElement('DaRequest', { op: 'SubscriptionCancel', handle });
}

export interface DaResponse {
  op: string;
  handle?: string;
  values: WireValue[];
  nodes: WireNode[];
  results: WriteOutcome[];
}

/** Decode a /da response body; throws DaFaultError on DaFault documents. */
export function decodeResponse(text: string): DaResponse {
  const root = parseXml(text);
  if (root.tag === 'DaFault') {
    throw new DaFaultError(root.attrs['code'] ?? 'UNKNOWN', root.attrs['message'] ?? '');
  }
  if (root.tag !== 'DaResponse') {
    throw new Error(`unexpected root element ${root.tag}`);
  }
  const values = root.children.filter((c) => c.tag === 'Item').map(wireValue);
  const nodes = root.children
    .filter((c) => c.tag === 'Node')
    .map((el) => ({
      path: el.attrs['path'],
      kind: el.attrs['kind'] as 'folder' | 'item',
      dataType: (el.attrs['type'] as DaDataType | undefined) ?? null,
      access: (el.attrs['access'] as WireNode['access'] | undefined) ?? null,
      unit: el.attrs['unit'] ?? '',
      lo: el.attrs['lo'] !== undefined ? Number(el.attrs['lo']) : null,
      hi: el.attrs['hi'] !== undefined ? Number(el.attrs['hi']) : null,
    }));
  const results = root.children
    .filter((c) => c.tag === 'Result')
    .map((el) => ({
      path: el.attrs['path'],
      accepted: el.attrs['accepted'] === 'true',
      reason: el.attrs['reason'] ?? null,
    }));
  return { op: root.attrs['op'], handle: root.attrs['handle'], values, nodes, results };
}
