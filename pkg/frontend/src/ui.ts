// DOM rendering over the store. Everything below is re-rendered from the
// store snapshot, so views survive reloads and reconnects unchanged.

import { sparklinePoints } from './panel.js';
import type { StoreSnapshot } from './store.js';
import { ConsoleStore } from './store.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function qualityClass(quality: string): string {
  return `value quality-${quality.toLowerCase()}`;
}

export function renderActivityList(
  root: HTMLElement,
  snapshot: StoreSnapshot,
  store: ConsoleStore,
): void {
  root.replaceChildren();
  const heading = el('h2', undefined, 'Your activities');
  root.append(heading);
  if (snapshot.activities.length === 0) {
    root.append(el('p', 'muted', 'Nothing to do right now.'));
    return;
  }
  const list = el('ul', 'activities');
  for (const activity of snapshot.activities) {
    const item = el('li', activity.actionable ? 'actionable' : 'done');
    item.append(el('span', 'title', activity.title));
    if (activity.environment?.device_classes.length) {
      item.append(el('span', 'badge', activity.environment.device_classes.join(', ')));
    }
    if (activity.actionable) {
      const button = el('button', undefined, 'Mark complete');
      button.addEventListener('click', () => void store.completeActivity(activity.activity_id));
      item.append(button);
    } else {
      item.append(el('span', 'badge badge-ok', 'completed'));
    }
    list.append(item);
  }
  root.append(list);
}

export function renderDevicePanel(
  root: HTMLElement,
  snapshot: StoreSnapshot,
  store: ConsoleStore,
): void {
  root.replaceChildren();
  const headingRow = el('div', 'panel-heading');
  headingRow.append(el('h2', undefined, 'Device'));
  const mode = snapshot.sessionView?.mode ?? 'NONE';
  headingRow.append(el('span', `badge mode-${mode.toLowerCase()}`, mode));
  if (snapshot.sessionView?.queue_position) {
    headingRow.append(el('span', 'badge', `queue #${snapshot.sessionView.queue_position}`));
  }
  if (!snapshot.connected) {
    headingRow.append(el('span', 'badge badge-error', 'disconnected — retrying'));
  }
  root.append(headingRow);
  if (snapshot.lastError) {
    root.append(el('p', 'error', snapshot.lastError));
  }

  const table = el('table', 'items');
  for (const item of snapshot.panel.items.values()) {
    const row = el('tr');
    row.append(el('td', 'path', item.path));
    const valueText =
      item.value === null ? '—' : typeof item.value === 'number'
        ? item.value.toPrecision(4)
        : String(item.value);
    row.append(el('td', qualityClass(item.quality), `${valueText} ${item.unit}`));

    const spark = el('td', 'spark');
    const canvas = el('canvas');
    canvas.width = 120;
    canvas.height = 24;
    const points = sparklinePoints(item, canvas.width, canvas.height);
    const context = canvas.getContext('2d');
    if (context && points.length > 1) {
      context.strokeStyle = '#4a90d9';
      context.beginPath();
      context.moveTo(points[0].x, points[0].y);
      for (const p of points.slice(1)) context.lineTo(p.x, p.y);
      context.stroke();
    }
    spark.append(canvas);
    row.append(spark);

    const writeCell = el('td', 'write');
    const writable = item.access === 'WRITE' || item.access === 'READ_WRITE';
    if (writable) {
      const input = el('input');
      input.placeholder = item.lo !== null ? `[${item.lo}, ${item.hi}]` : '';
      const button = el('button', undefined, 'Write');
      const enabled = mode === 'REAL' || mode === 'SHADOW';
      input.disabled = !enabled;
      button.disabled = !enabled;
      button.addEventListener('click', () => void store.submitWrite(item.path, input.value));
      writeCell.append(input, button);
      if (item.pendingWrite !== null) {
        writeCell.append(el('span', 'badge', 'pending'));
      }
      if (item.lastRejection) {
        writeCell.append(el('span', 'badge badge-error', item.lastRejection));
      }
    }
    row.append(writeCell);
    table.append(row);
  }
  root.append(table);
}

export function renderInstructorMonitor(
  root: HTMLElement,
  snapshot: StoreSnapshot,
  store: ConsoleStore,
): void {
  root.replaceChildren();
  root.append(el('h2', undefined, 'Run monitor'));
  const status = snapshot.runStatus;
  if (!status) {
    root.append(el('p', 'muted', 'No run loaded.'));
    return;
  }
  root.append(el('p', undefined, `Run ${status.run_id}: ${status.status}`));

  const plays = el('ul', 'plays');
  for (const play of status.plays) {
    plays.append(
      el(
        'li',
        undefined,
        play.done
          ? `${play.play_id}: done`
          : `${play.play_id}: act ${play.current_act_id} (#${play.current_act_index})`,
      ),
    );
  }
  root.append(plays);

  const table = el('table', 'fractions');
  for (const user of status.users) {
    const row = el('tr');
    row.append(el('td', undefined, user.user));
    const bar = el('td', 'bar');
    const fill = el('div', 'bar-fill');
    fill.style.width = `${Math.round(user.fraction * 100)}%`;
    bar.append(fill, el('span', undefined, `${user.completed}/${user.total}`));
    row.append(bar);
    table.append(row);
  }
  root.append(table);

  const queues = el('p', 'muted');
  const queueText = Object.entries(status.queues)
    .map(([cls, waiting]) => `${cls}: ${waiting.length ? waiting.join(' → ') : 'idle'}`)
    .join('  ·  ');
  queues.textContent = `Queues — ${queueText}`;
  root.append(queues);

  const notifyRow = el('div', 'notify');
  const role = el('input');
  role.placeholder = 'target role id';
  const activity = el('input');
  activity.placeholder = 'hidden activity id';
  const button = el('button', undefined, 'Notify');
  button.addEventListener('click', () => void store.notify(role.value, activity.value));
  notifyRow.append(role, activity, button);
  root.append(notifyRow);
}
