// Thin client over the annotation service HTTP API. The service is the
// source of truth; this module holds no state.

import type { AnnotationTask, ReplayRecord, Stage1Payload, Stage2Payload, SubmitAck, TaskKind } from './types.js';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  const body = await resp.json();
  if (!resp.ok) {
    throw new ApiError(resp.status, (body as { error?: string }).error ?? resp.statusText);
  }
  return body as T;
}

export class Client {
  constructor(private base: string) {
    this.base = base.replace(/\/$/, '');
  }

  health(): Promise<{ status: string; pending: number; claimed: number; done: number }> {
    return request(`${this.base}/api/health`);
  }

  /** Claim the oldest pending task; null when the queue is empty. */
  async nextTask(kind: TaskKind): Promise<AnnotationTask | null> {
    const body = await request<AnnotationTask | { none_pending: true }>(
      `${this.base}/api/tasks/next?kind=${kind}`,
    );
    return 'none_pending' in body ? null : body;
  }

  getTask(id: string): Promise<AnnotationTask & { result?: SubmitAck }> {
    return request(`${this.base}/api/tasks/${id}`);
  }

  submit(id: string, payload: Stage1Payload | Stage2Payload): Promise<SubmitAck> {
    return request(`${this.base}/api/tasks/${id}/annotation`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  getReplay(episode: number): Promise<{ episode: number; records: ReplayRecord[] }> {
    return request(`${this.base}/api/replay/${episode}`);
  }
}
