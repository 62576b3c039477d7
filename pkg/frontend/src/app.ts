// Browser wiring: fetch-claim-annotate loop plus a replay browser.
//
// Interaction model: click an arrow repeatedly to cycle its group
// (unassigned -> rankable -> unrankable -> unassigned); drag within the
// ranked list in the sidebar to sort; click twice on empty canvas to
// place the optimal action; submit posts and auto-claims the next task.

import { Client, ApiError } from './api.js';
import { ViewState } from './state.js';
import { pickCandidate, renderScene } from './render.js';
import { defaultViewport, toWorkspace, zoomAt } from './transform.js';
import type { ReplayRecord, TaskKind } from './types.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(): void {
  const canvas = el<HTMLCanvasElement>('scene');
  const ctx = canvas.getContext('2d')!;
  const status = el<HTMLDivElement>('status');
  const rankList = el<HTMLOListElement>('rank-list');
  const submitBtn = el<HTMLButtonElement>('submit');
  const claimBtn = el<HTMLButtonElement>('claim');
  const kindSel = el<HTMLSelectElement>('kind');
  const replayInput = el<HTMLInputElement>('replay-episode');
  const replayBtn = el<HTMLButtonElement>('replay-load');

  const client = new Client(
    new URLSearchParams(location.search).get('service') ?? 'http://127.0.0.1:8765',
  );
  let viewport = defaultViewport(Math.min(canvas.width, canvas.height));
  let state: ViewState | null = null;
  let replay: ReplayRecord | null = null;
  let dragIndex: number | null = null;

  function draw(): void {
    if (state) renderScene(ctx, viewport, state, replay);
    submitBtn.disabled = !(state && state.canSubmit());
    renderRankList();
  }

  function renderRankList(): void {
    rankList.innerHTML = '';
    if (!state) return;
    state.rankedOrder.forEach((index, pos) => {
      const li = document.createElement('li');
      li.textContent = `candidate #${index}`;
      li.draggable = true;
      li.addEventListener('dragstart', () => {
        dragIndex = index;
      });
      li.addEventListener('dragover', (e) => e.preventDefault());
      li.addEventListener('drop', (e) => {
        e.preventDefault();
        if (dragIndex !== null && state) {
          state.moveRank(dragIndex, pos);
          dragIndex = null;
          draw();
        }
      });
      rankList.appendChild(li);
    });
  }

  async function claim(): Promise<void> {
    replay = null;
    const task = await client.nextTask(kindSel.value as TaskKind);
    if (!task) {
      status.textContent = 'no tasks pending';
      state = null;
      draw();
      return;
    }
    state = new ViewState(task);
    status.textContent = `task ${task.id}: ${task.candidates.length} candidates`;
    draw();
  }

  canvas.addEventListener('click', (e) => {
    if (!state) return;
    const rect = canvas.getBoundingClientRect();
    const sx = ((e.clientX - rect.left) * canvas.width) / rect.width;
    const sy = ((e.clientY - rect.top) * canvas.height) / rect.height;
    const picked = pickCandidate(viewport, state.task.candidates, sx, sy);
    if (picked !== null && state.task.kind === 'stage2_ranking') {
      const group = state.groupOf(picked);
      if (group === 'unassigned') state.markRankable(picked);
      else if (group === 'rankable') state.markUnrankable(picked);
      else state.clearAssignment(picked);
    } else {
      const [wx, wy] = toWorkspace(viewport, sx, sy);
      state.clickWorkspace(wx, wy);
    }
    draw();
  });

  canvas.addEventListener('mousemove', (e) => {
    if (!state) return;
    const rect = canvas.getBoundingClientRect();
    const sx = ((e.clientX - rect.left) * canvas.width) / rect.width;
    const sy = ((e.clientY - rect.top) * canvas.height) / rect.height;
    state.hovered = pickCandidate(viewport, state.task.candidates, sx, sy);
    draw();
  });

  canvas.addEventListener('wheel', (e) => {
    e.preventDefault();
    const rect = canvas.getBoundingClientRect();
    const sx = ((e.clientX - rect.left) * canvas.width) / rect.width;
    const sy = ((e.clientY - rect.top) * canvas.height) / rect.height;
    viewport = zoomAt(viewport, sx, sy, e.deltaY < 0 ? 1.15 : 1 / 1.15);
    draw();
  });

  submitBtn.addEventListener('click', async () => {
    if (!state || !state.canSubmit()) return;
    try {
      const ack = await client.submit(state.task.id, state.buildPayload());
      status.textContent = ack.pairs !== undefined
        ? `submitted ${state.task.id}: ${ack.pairs} pairs`
        : `submitted ${state.task.id}`;
      await claim();
    } catch (err) {
      // field-level rejection: keep the view state so nothing is lost
      status.textContent = err instanceof ApiError ? `rejected: ${err.message}` : String(err);
    }
  });

  claimBtn.addEventListener('click', () => void claim());

  replayBtn.addEventListener('click', async () => {
    const episode = Number(replayInput.value);
    try {
      const body = await client.getReplay(episode);
      const record = body.records[0];
      replay = record ?? null;
      status.textContent = `replay episode ${episode}: ${body.records.length} steps`;
      if (state) draw();
    } catch (err) {
      status.textContent = err instanceof ApiError ? `replay: ${err.message}` : String(err);
    }
  });

  void claim();
}

if (typeof document !== 'undefined' && document.getElementById('scene')) {
  startApp();
}
