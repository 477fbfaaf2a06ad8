// Entry point: read connection settings from the login form (or the URL),
// build the store, and wire the three views.

import { ConsoleStore, ConsoleSession } from './store.js';
import { renderActivityList, renderDevicePanel, renderInstructorMonitor } from './ui.js';
import type { ActorKind } from './types.js';

function param(name: string): string | null {
  return new URLSearchParams(window.location.search).get(name);
}

function must<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function start(session: ConsoleSession): Promise<void> {
  const store = new ConsoleStore(session);
  const activityRoot = must<HTMLElement>('activities');
  const panelRoot = must<HTMLElement>('device');
  const monitorRoot = must<HTMLElement>('monitor');

  store.subscribe((snapshot) => {
    if (session.kind === 'LEARNER') {
      renderActivityList(activityRoot, snapshot, store);
      renderDevicePanel(panelRoot, snapshot, store);
      monitorRoot.hidden = true;
    } else {
      activityRoot.hidden = true;
      panelRoot.hidden = session.sessionId === null;
      renderInstructorMonitor(monitorRoot, snapshot, store);
      if (session.sessionId !== null) renderDevicePanel(panelRoot, snapshot, store);
    }
  });

  await store.bootstrap();
  store.startEventLoop();
  store.startDevicePolling();
  must<HTMLElement>('login').hidden = true;
  must<HTMLElement>('console').hidden = false;
}

function wireLogin(): void {
  const form = must<HTMLFormElement>('login-form');
  form.addEventListener('submit', (submit) => {
    submit.preventDefault();
    const data = new FormData(form);
    const session: ConsoleSession = {
      apiBaseUrl: (data.get('base') as string) || window.location.origin,
      token: data.get('token') as string,
      user: data.get('user') as string,
      kind: (data.get('kind') as ActorKind) || 'LEARNER',
      runId: (data.get('run') as string) || null,
      sessionId: (data.get('session') as string) || null,
      eventCursor: 0,
    };
    start(session).catch((err) => {
      must<HTMLElement>('login-error').textContent = String(err);
    });
  });

  // allow ?token=...&user=...&kind=...&run=...&session=... bootstrapping
  if (param('token') && param('user')) {
    const session: ConsoleSession = {
      apiBaseUrl: param('base') ?? window.location.origin,
      token: param('token') as string,
      user: param('user') as string,
      kind: (param('kind') as ActorKind) ?? 'LEARNER',
      runId: param('run'),
      sessionId: param('session'),
      eventCursor: 0,
    };
    start(session).catch((err) => {
      must<HTMLElement>('login-error').textContent = String(err);
    });
  }
}

wireLogin();
