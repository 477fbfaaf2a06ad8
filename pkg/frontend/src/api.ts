// JSON + /da client for the elab service. fetch is injectable so the
// store layer runs under vitest with a stub, and in node against a live
// server for end-to-end checks.

import { DaResponse, decodeResponse } from './da.js';
import type {
  HealthView,
  RunStatusView,
  RunView,
  SessionView,
  VisibleActivity,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class ElabClient {
  constructor(
    public baseUrl: string,
    public token: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const headers = new Headers(init.headers);
    headers.set('Authorization', `Bearer ${this.token}`);
    const response = await this.fetchImpl(this.baseUrl + path, { ...init, headers });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response;
  }

  private async json<T>(path: string, init: RequestInit = {}): Promise<T> {
    return (await this.request(path, init)).json() as Promise<T>;
  }

  health(): Promise<HealthView> {
    return this.json('/health');
  }

  uploadPackage(archive: ArrayBuffer | Uint8Array): Promise<{ package_id: string }> {
    const body = archive instanceof Uint8Array
      ? archive.slice().buffer as ArrayBuffer
      : archive;
    return this.json('/packages', {
      method: 'POST',
      body,
      headers: { 'content-type': 'application/zip' },
    });
  }

  createRun(packageId: string, assignments: Record<string, string[]>): Promise<RunView> {
    return this.json('/runs', {
      method: 'POST',
      body: JSON.stringify({ package_id: packageId, assignments }),
      headers: { 'content-type': 'application/json' },
    });
  }

  run(runId: string): Promise<RunView> {
    return this.json(`/runs/${runId}`);
  }

  activities(runId: string, user: string): Promise<VisibleActivity[]> {
    return this.json(`/runs/${runId}/activities?user=${encodeURIComponent(user)}`);
  }

  complete(runId: string, user: string, activityId: string): Promise<RunView> {
    return this.json(`/runs/${runId}/complete`, {
      method: 'POST',
      body: JSON.stringify({ user, activity_id: activityId }),
      headers: { 'content-type': 'application/json' },
    });
  }

  notify(runId: string, targetRole: string, activityId: string): Promise<RunView> {
    return this.json(`/runs/${runId}/notify`, {
      method: 'POST',
      body: JSON.stringify({ target_role: targetRole, activity_id: activityId }),
      headers: { 'content-type': 'application/json' },
    });
  }

  runStatus(runId: string): Promise<RunStatusView> {
    return this.json(`/runs/${runId}/status`);
  }

  openSession(runId: string, user: string, deviceClass: string): Promise<SessionView> {
    return this.json('/sessions', {
      method: 'POST',
      body: JSON.stringify({ run_id: runId, user, device_class: deviceClass }),
      headers: { 'content-type': 'application/json' },
    });
  }

  session(sessionId: string): Promise<SessionView> {
    return this.json(`/sessions/${sessionId}`);
  }

  closeSession(sessionId: string): Promise<unknown> {
    return this.json(`/sessions/${sessionId}`, { method: 'DELETE' });
  }

  /** POST an encoded DaRequest; throws DaFaultError on fault responses. */
  async da(requestXml: string): Promise<DaResponse> {
    const response = await this.request('/da', {
      method: 'POST',
      body: requestXml,
      headers: { 'content-type': 'application/xml' },
    });
    return decodeResponse(await response.text());
  }
}
