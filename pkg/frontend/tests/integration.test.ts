// Acceptance: a scripted browser session claims a stage-2 task, submits a
// ranking through the UI state machine + API client, and the service's
// stored record carries the closed-form pair count; retrying the submit
// produces no duplicate record.
//
// The annotation service runs as a child process (the real Python
// implementation, not a mock).

import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { spawn, ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { dirname, join, resolve } from 'node:path';
import { fileURLToPath } from 'node:url';

import { Client } from '../src/api.js';
import { ViewState, expectedPairCount } from '../src/state.js';
import type { AnnotationTask } from '../src/types.js';

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO = resolve(HERE, '..', '..');
const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let dataDir = '';

async function waitForHealth(client: Client, tries = 50): Promise<void> {
  for (let i = 0; i < tries; i++) {
    try {
      await client.health();
      return;
    } catch {
      await new Promise((r) => setTimeout(r, 200));
    }
  }
  throw new Error('annotation service did not come up');
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), 'pam-ui-'));
  server = spawn(
    'python3',
    ['-m', 'pam.cli', 'serve', '--host', '127.0.0.1', '--port', String(PORT),
     '--data-dir', join(dataDir, 'ann')],
    { env: { ...process.env, PYTHONPATH: join(REPO, 'src') }, stdio: 'inherit' },
  );
  await waitForHealth(new Client(BASE));
}, 30_000);

afterAll(() => {
  server?.kill();
});

function enqueueTask(): Promise<AnnotationTask> {
  // the rollout CLI normally enqueues; the test does it directly
  const obs = Array.from({ length: 64 }, (_, i) => [
    (((i * 37) % 64) + 0.5) / 64,
    (((i * 17) % 64) + 0.5) / 64,
  ]);
  const candidates = Array.from({ length: 8 }, (_, i) => ({
    kind: 'sweep',
    params: [0.1 + 0.08 * i, 0.25, 0.55, 0.6],
  }));
  return fetch(`${BASE}/api/tasks`, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify({
      kind: 'stage2_ranking', task: 'granular', episode: 0, step: 0,
      obs, candidates,
    }),
  }).then((r) => r.json() as Promise<AnnotationTask>);
}

describe('scripted annotation session', () => {
  it('claims, ranks, submits; pair count matches; retry does not duplicate', async () => {
    const client = new Client(BASE);
    await enqueueTask();

    const task = await client.nextTask('stage2_ranking');
    expect(task).not.toBeNull();
    expect(task!.candidates).toHaveLength(8);

    // scripted interaction through the real view-state machine
    const view = new ViewState(task!);
    for (const i of [6, 2, 0, 4, 1]) view.markRankable(i);
    for (const i of [3, 5, 7]) view.markUnrankable(i);
    view.moveRank(4, 0); // drag-sort: candidate 4 to the top
    view.clickWorkspace(0.3, 0.35);
    view.clickWorkspace(0.72, 0.66);
    expect(view.canSubmit()).toBe(true);
    const payload = view.buildPayload();

    const ack = await client.submit(task!.id, payload);
    expect(ack.record_type).toBe('pl');
    expect(ack.pairs).toBe(expectedPairCount(8, 5)); // C(5,2) + 5*3 + 8 = 33

    // duplicate submission: same ack, still exactly one stored record
    const again = await client.submit(task!.id, payload);
    expect(again).toEqual(ack);
    const lines = readFileSync(join(dataDir, 'ann', 'pl_records.jsonl'), 'utf-8')
      .trim().split('\n');
    expect(lines).toHaveLength(1);
    const record = JSON.parse(lines[0]);
    expect(record.pairs).toBe(33);
    expect(record.ranking.ordering).toEqual([4, 6, 2, 0, 1]);

    // done task is visible with its result
    const info = await client.getTask(task!.id);
    expect(info.status).toBe('done');
  }, 30_000);

  it('server rejects a hand-built partition violation with a 4xx error', async () => {
    // bypass the state machine on purpose: the raw API must still refuse
    const obs = Array.from({ length: 64 }, () => [0.5, 0.5]);
    const candidates = Array.from({ length: 3 }, (_, i) => ({
      kind: 'sweep', params: [0.1 * (i + 1), 0.2, 0.6, 0.7],
    }));
    await fetch(`${BASE}/api/tasks`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ kind: 'stage2_ranking', task: 'granular', episode: 1, step: 0, obs, candidates }),
    });
    const client = new Client(BASE);
    const task = await client.nextTask('stage2_ranking');
    expect(task).not.toBeNull();
    const bad = {
      optimal: { kind: 'sweep', params: [0.4, 0.4, 0.6, 0.6] },
      ordering: [0, 1],
      unrankable: [1, 2],
    };
    await expect(client.submit(task!.id, bad)).rejects.toThrow(/partition/);
  }, 30_000);
});
