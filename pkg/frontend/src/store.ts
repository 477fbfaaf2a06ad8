// Console store: the headless half of every view. It owns the API
// client, the event cursor, the 1 Hz device polling loop, and the
// learner/instructor view models; the DOM layer subscribes and renders.
// Holding no state the server cannot reconstruct, a page reload rebuilds
// everything from /runs, /sessions, and /events.

import { ElabClient } from './api.js';
import {
  browseRequest,
  cancelRequest,
  readRequest,
  refreshRequest,
  subscribeRequest,
  writeRequest,
  DaFaultError,
} from './da.js';
import { EventStream } from './events.js';
import {
  PanelModel,
  applyValues,
  emptyPanel,
  markPending,
  markRejected,
  resetDevice,
  validateWrite,
} from './panel.js';
import type {
  ActorKind,
  RunStatusView,
  ServiceEvent,
  SessionView,
  VisibleActivity,
} from './types.js';

export interface ConsoleSession {
  apiBaseUrl: string;
  token: string;
  user: string;
  kind: ActorKind;
  runId: string | null;
  sessionId: string | null;
  eventCursor: number;
}

export interface StoreSnapshot {
  session: ConsoleSession;
  activities: VisibleActivity[];
  runStatus: RunStatusView | null;
  sessionView: SessionView | null;
  panel: PanelModel;
  connected: boolean;
  lastError: string | null;
}

type Listener = (snapshot: StoreSnapshot) => void;

export class ConsoleStore {
  readonly client: ElabClient;
  session: ConsoleSession;
  activities: VisibleActivity[] = [];
  runStatus: RunStatusView | null = null;
  sessionView: SessionView | null = null;
  panel: PanelModel = emptyPanel();
  connected = true;
  lastError: string | null = null;

  private listeners: Listener[] = [];
  private stream: EventStream | null = null;
  private streamDone: Promise<void> | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private subscriptionHandle: string | null = null;
  private subscribedDevice: string | null = null;

  constructor(
    session: ConsoleSession,
    client?: ElabClient,
    private pollPeriodMs = 1000,
  ) {
    this.session = session;
    this.client = client ?? new ElabClient(session.apiBaseUrl, session.token);
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    const snapshot = this.snapshot();
    for (const listener of this.listeners) listener(snapshot);
  }

  snapshot(): StoreSnapshot {
    return {
      session: this.session,
      activities: this.activities,
      runStatus: this.runStatus,
      sessionView: this.sessionView,
      panel: this.panel,
      connected: this.connected,
      lastError: this.lastError,
    };
  }

  // -- lifecycle --------------------------------------------------------------

  /** Load every view from the server (also what a page reload does). */
  async bootstrap(): Promise<void> {
    if (this.session.runId) {
      await this.refreshRun();
    }
    if (this.session.sessionId) {
      await this.attachSession(this.session.sessionId);
    }
    this.emit();
  }

  startEventLoop(): void {
    if (this.stream) return;
    this.stream = new EventStream({
      baseUrl: this.session.apiBaseUrl,
      token: this.session.token,
      since: this.session.eventCursor,
      onEvent: (event) => this.onEvent(event),
      onStateChange: (state) => {
        this.connected = state === 'connected';
        this.panel.connected = this.connected;
        this.emit();
      },
    });
    this.streamDone = this.stream.run();
  }

  startDevicePolling(): void {
    if (this.pollTimer) return;
    this.pollTimer = setInterval(() => {
      void this.pollDevice();
    }, this.pollPeriodMs);
  }

  async stop(): Promise<void> {
    if (this.pollTimer) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
    this.stream?.stop();
    if (this.streamDone) await this.streamDone;
    this.stream = null;
  }

  // -- run views ---------------------------------------------------------------

  async refreshRun(): Promise<void> {
    if (!this.session.runId) return;
    const [activities, status] = await Promise.all([
      this.session.kind === 'LEARNER'
        ? this.client.activities(this.session.runId, this.session.user)
        : Promise.resolve([] as VisibleActivity[]),
      this.client.runStatus(this.session.runId),
    ]);
    this.activities = activities;
    this.runStatus = status;
    this.emit();
  }

  async completeActivity(activityId: string): Promise<void> {
    if (!this.session.runId) throw new Error('no active run');
    try {
      await this.client.complete(this.session.runId, this.session.user, activityId);
      this.lastError = null;
    } catch (err) {
      this.lastError = err instanceof Error ? err.message : String(err);
    }
    await this.refreshRun();
  }

  async notify(targetRole: string, activityId: string): Promise<void> {
    if (!this.session.runId) throw new Error('no active run');
    await this.client.notify(this.session.runId, targetRole, activityId);
    await this.refreshRun();
  }

  // -- device panel ---------------------------------------------------------------

  async attachSession(sessionId: string): Promise<void> {
    this.session.sessionId = sessionId;
    this.sessionView = await this.client.session(sessionId);
    this.panel.mode = this.sessionView.mode;
    const device = this.sessionView.device_id;
    if (device && device !== this.subscribedDevice) {
      await this.subscribeDevice(device);
    }
    this.emit();
  }

  private async subscribeDevice(deviceId: string): Promise<void> {
    if (this.subscriptionHandle && this.subscribedDevice) {
      try {
        await this.client.da(cancelRequest(this.subscriptionHandle));
      } catch {
        // the old twin may already be gone; nothing to clean up
      }
    }
    // walk the item tree breadth-first; the descriptor trees are shallow
    const itemNodes = [];
    const pending = [''];
    while (pending.length > 0) {
      const listing = await this.client.da(browseRequest(deviceId, pending.shift() as string));
      for (const node of listing.nodes) {
        if (node.kind === 'folder') pending.push(node.path);
        else itemNodes.push(node);
      }
    }
    resetDevice(this.panel, deviceId, itemNodes);
    const subscription = await this.client.da(
      subscribeRequest(deviceId, itemNodes.map((n) => ({ path: n.path, deadband: 0.001 }))),
    );
    this.subscriptionHandle = subscription.handle ?? null;
    this.subscribedDevice = deviceId;
    applyValues(this.panel, subscription.values);
    this.emit();
  }

  /** One poll tick: session mode + changed values (and resubscribe after
   * promotions/demotions moved us to a different device). */
  async pollDevice(): Promise<void> {
    if (!this.session.sessionId) return;
    try {
      this.sessionView = await this.client.session(this.session.sessionId);
      this.panel.mode = this.sessionView.mode;
      const device = this.sessionView.device_id;
      if (device && device !== this.subscribedDevice) {
        await this.subscribeDevice(device);
      } else if (device && this.subscriptionHandle) {
        try {
          // refresh responses carry exactly the changed items
          const refresh = await this.client.da(refreshRequest(this.subscriptionHandle));
          applyValues(this.panel, refresh.values);
        } catch (err) {
          if (err instanceof DaFaultError && err.code === 'UNKNOWN_HANDLE') {
            await this.subscribeDevice(device); // expired: start over
          } else {
            throw err;
          }
        }
      }
      this.connected = true;
      this.lastError = null;
    } catch (err) {
      this.connected = false;
      this.lastError = err instanceof Error ? err.message : String(err);
    }
    this.panel.connected = this.connected;
    this.emit();
  }

  /** Validate locally, send, surface the outcome on the panel. */
  async submitWrite(path: string, raw: string): Promise<boolean> {
    const device = this.sessionView?.device_id;
    if (!device) {
      markRejected(this.panel, path, 'no device');
      this.emit();
      return false;
    }
    const check = validateWrite(this.panel, path, raw);
    if (!check.ok) {
      markRejected(this.panel, path, check.reason);
      this.emit();
      return false;
    }
    markPending(this.panel, path, check.value);
    const response = await this.client.da(
      writeRequest(device, [{ path, dataType: check.dataType, value: check.value }]),
    );
    const outcome = response.results[0];
    if (!outcome?.accepted) {
      markRejected(this.panel, path, outcome?.reason ?? 'rejected');
      this.emit();
      return false;
    }
    const read = await this.client.da(readRequest(device, [path]));
    applyValues(this.panel, read.values);
    this.emit();
    return true;
  }

  // -- events --------------------------------------------------------------------

  private onEvent(event: ServiceEvent): void {
    this.session.eventCursor = event.seq;
    if (event.stream === 'RUN' && event.stream_id === this.session.runId) {
      // any run event may change visibility or fractions
      void this.refreshRun();
    }
    if (event.stream === 'SESSION' && event.stream_id === this.session.sessionId) {
      void this.pollDevice();
    }
    this.emit();
  }
}
