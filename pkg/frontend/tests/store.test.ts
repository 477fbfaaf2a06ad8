// Store-level behavior against a scripted fake service: subscription
// bootstrap, poll updates, device hand-over on promotion, write outcomes.

import { describe, expect, it } from 'vitest';

import type { ElabClient } from '../src/api.js';
import type { DaResponse, WireNode, WireValue } from '../src/da.js';
import { parseXml } from '../src/xml.js';
import { ConsoleStore } from '../src/store.js';
import type { SessionView, VisibleActivity } from '../src/types.js';

const TANK_NODES: WireNode[] = [
  { path: 'actuators', kind: 'folder', dataType: null, access: null, unit: '', lo: null, hi: null },
  { path: 'sensors', kind: 'folder', dataType: null, access: null, unit: '', lo: null, hi: null },
];

const LEAVES: Record<string, WireNode[]> = {
  actuators: [
    {
      path: 'actuators/q_in',
      kind: 'item',
      dataType: 'FLOAT',
      access: 'READ_WRITE',
      unit: 'm3/s',
      lo: 0,
      hi: 0.2,
    },
  ],
  sensors: [
    {
      path: 'sensors/level',
      kind: 'item',
      dataType: 'FLOAT',
      access: 'READ',
      unit: 'm',
      lo: 0,
      hi: 2,
    },
  ],
};

class FakeService {
  mode: SessionView['mode'] = 'REAL';
  deviceId: string | null = 'tank-1';
  values: Record<string, number> = { 'actuators/q_in': 0, 'sensors/level': 0 };
  pendingChanges: WireValue[] = [];
  subscribes = 0;
  rejectNextWrite: string | null = null;
  activitiesResult: VisibleActivity[] = [];

  sessionView(): SessionView {
    return {
      session_id: 's-1',
      booking_id: 'b-1',
      run_id: 'run-1',
      user: 'ana',
      device_class: 'tank',
      mode: this.mode,
      device_id: this.deviceId,
      da_endpoint: '/da',
      queue_position: null,
    };
  }

  asClient(): ElabClient {
    const self = this;
    return {
      async session() {
        return self.sessionView();
      },
      async activities() {
        return self.activitiesResult;
      },
      async runStatus() {
        return {
          run_id: 'run-1',
          status: 'ACTIVE',
          plays: [],
          users: [],
          queues: { tank: [] },
        };
      },
      async complete() {
        return {};
      },
      async notify() {
        return {};
      },
      async da(xml: string): Promise<DaResponse> {
        const root = parseXml(xml);
        const op = root.attrs['op'];
        if (op === 'Browse') {
          const path = root.attrs['path'] ?? '';
          const nodes = path === '' ? TANK_NODES : LEAVES[path] ?? [];
          return { op, values: [], nodes, results: [] };
        }
        if (op === 'Subscribe') {
          self.subscribes += 1;
          const values = root.children.map((c) => ({
            path: c.attrs['path'],
            dataType: 'FLOAT' as const,
            value: self.values[c.attrs['path']] ?? 0,
            quality: 'GOOD' as const,
            timestamp: 0,
          }));
          return { op, handle: `sub-${self.subscribes}`, values, nodes: [], results: [] };
        }
        if (op === 'SubscriptionPolledRefresh') {
          const changed = self.pendingChanges;
          self.pendingChanges = [];
          return { op, handle: root.attrs['handle'], values: changed, nodes: [], results: [] };
        }
        if (op === 'SubscriptionCancel') {
          return { op, handle: root.attrs['handle'], values: [], nodes: [], results: [] };
        }
        if (op === 'Write') {
          const item = root.children[0];
          const path = item.attrs['path'];
          if (self.rejectNextWrite) {
            const reason = self.rejectNextWrite;
            self.rejectNextWrite = null;
            return { op, values: [], nodes: [], results: [{ path, accepted: false, reason }] };
          }
          self.values[path] = Number(item.attrs['value']);
          return { op, values: [], nodes: [], results: [{ path, accepted: true, reason: null }] };
        }
        if (op === 'Read') {
          const values = root.children.map((c) => ({
            path: c.attrs['path'],
            dataType: 'FLOAT' as const,
            value: self.values[c.attrs['path']] ?? 0,
            quality: 'GOOD' as const,
            timestamp: 1,
          }));
          return { op, values, nodes: [], results: [] };
        }
        throw new Error(`fake service: unhandled op ${op}`);
      },
    } as unknown as ElabClient;
  }
}

function makeStore(fake: FakeService): ConsoleStore {
  return new ConsoleStore(
    {
      apiBaseUrl: 'http://svc.test',
      token: 'anatok',
      user: 'ana',
      kind: 'LEARNER',
      runId: 'run-1',
      sessionId: 's-1',
      eventCursor: 0,
    },
    fake.asClient(),
  );
}

describe('console store', () => {
  it('bootstraps the panel from browse + subscribe', async () => {
    const fake = new FakeService();
    const store = makeStore(fake);
    await store.bootstrap();
    expect(store.panel.deviceId).toBe('tank-1');
    expect([...store.panel.items.keys()].sort()).toEqual(['actuators/q_in', 'sensors/level']);
    expect(store.panel.items.get('sensors/level')!.quality).toBe('GOOD');
    expect(fake.subscribes).toBe(1);
  });

  it('applies refresh deltas on poll', async () => {
    const fake = new FakeService();
    const store = makeStore(fake);
    await store.bootstrap();
    fake.pendingChanges = [
      { path: 'sensors/level', dataType: 'FLOAT', value: 0.42, quality: 'GOOD', timestamp: 2 },
    ];
    await store.pollDevice();
    expect(store.panel.items.get('sensors/level')!.value).toBe(0.42);
  });

  it('resubscribes when a promotion moves the session to another device', async () => {
    const fake = new FakeService();
    fake.mode = 'SHADOW';
    fake.deviceId = 'tank-twin-1';
    const store = makeStore(fake);
    await store.bootstrap();
    expect(store.panel.deviceId).toBe('tank-twin-1');
    fake.mode = 'REAL';
    fake.deviceId = 'tank-1';
    await store.pollDevice();
    expect(store.panel.deviceId).toBe('tank-1');
    expect(store.panel.mode).toBe('REAL');
    expect(fake.subscribes).toBe(2);
  });

  it('sends valid writes and confirms via read-back', async () => {
    const fake = new FakeService();
    const store = makeStore(fake);
    await store.bootstrap();
    const accepted = await store.submitWrite('actuators/q_in', '0.05');
    expect(accepted).toBe(true);
    expect(store.panel.items.get('actuators/q_in')!.value).toBe(0.05);
    expect(store.panel.items.get('actuators/q_in')!.pendingWrite).toBeNull();
  });

  it('never sends out-of-range writes', async () => {
    const fake = new FakeService();
    const store = makeStore(fake);
    await store.bootstrap();
    const sent = await store.submitWrite('actuators/q_in', '9.9');
    expect(sent).toBe(false);
    expect(store.panel.items.get('actuators/q_in')!.lastRejection).toContain('out of range');
    expect(fake.values['actuators/q_in']).toBe(0); // nothing reached the wire
  });

  it('surfaces server rejections verbatim', async () => {
    const fake = new FakeService();
    const store = makeStore(fake);
    await store.bootstrap();
    fake.rejectNextWrite = 'RESTORING';
    const accepted = await store.submitWrite('actuators/q_in', '0.05');
    expect(accepted).toBe(false);
    expect(store.panel.items.get('actuators/q_in')!.lastRejection).toBe('RESTORING');
  });

  it('marks the panel disconnected when polling fails, and recovers', async () => {
    const fake = new FakeService();
    const store = makeStore(fake);
    await store.bootstrap();
    const client = store.client as unknown as { session: () => Promise<SessionView> };
    const healthy = client.session;
    client.session = async () => {
      throw new Error('boom');
    };
    await store.pollDevice();
    expect(store.connected).toBe(false);
    client.session = healthy;
    await store.pollDevice();
    expect(store.connected).toBe(true);
  });
});
