// Annotation view-state machine.
//
// Group-then-sort semantics: each candidate is assigned to the rankable
// list (ordered, best first) or the unrankable bin; the optimal action
// is placed with two workspace clicks. The submit payload is built
// from a single assignment structure, so it cannot express anything but
// a partition of the candidate indices: every index lives in exactly
// one of the two containers at all times.

import type { ActionJson, AnnotationTask, Stage1Payload, Stage2Payload } from './types.js';
import { clampWorkspace } from './transform.js';

export type Group = 'rankable' | 'unrankable' | 'unassigned';

export interface PendingPlacement {
  start: [number, number] | null;
}

export class ViewState {
  readonly task: AnnotationTask;
  private ranked: number[] = [];
  private unrankable = new Set<number>();
  optimal: ActionJson | null = null;
  auxiliary: ActionJson[] = [];
  placement: PendingPlacement = { start: null };
  hovered: number | null = null;

  constructor(task: AnnotationTask) {
    this.task = task;
  }

  private forget(index: number): void {
    this.ranked = this.ranked.filter((i) => i !== index);
    this.unrankable.delete(index);
  }

  private checkIndex(index: number): void {
    if (!Number.isInteger(index) || index < 0 || index >= this.task.candidates.length) {
      throw new RangeError(`candidate index ${index} out of range`);
    }
  }

  groupOf(index: number): Group {
    this.checkIndex(index);
    if (this.ranked.includes(index)) return 'rankable';
    if (this.unrankable.has(index)) return 'unrankable';
    return 'unassigned';
  }

  /** Append to the rankable order (worst position); re-assigning moves it. */
  markRankable(index: number): void {
    this.checkIndex(index);
    this.forget(index);
    this.ranked.push(index);
  }

  markUnrankable(index: number): void {
    this.checkIndex(index);
    this.forget(index);
    this.unrankable.add(index);
  }

  clearAssignment(index: number): void {
    this.checkIndex(index);
    this.forget(index);
  }

  get rankedOrder(): readonly number[] {
    return this.ranked;
  }

  get unrankableSet(): ReadonlySet<number> {
    return this.unrankable;
  }

  /** Drag-sort: move the candidate to a new position in the ranked list. */
  moveRank(index: number, position: number): void {
    const from = this.ranked.indexOf(index);
    if (from < 0) throw new RangeError(`candidate ${index} is not in the rankable group`);
    const clamped = Math.min(Math.max(position, 0), this.ranked.length - 1);
    this.ranked.splice(from, 1);
    this.ranked.splice(clamped, 0, index);
  }

  /** Two-click optimal-action placement; endpoints clamp to the workspace. */
  clickWorkspace(x: number, y: number): void {
    const [cx, cy] = clampWorkspace(x, y);
    if (this.placement.start === null) {
      this.placement.start = [cx, cy];
      return;
    }
    const [sx, sy] = this.placement.start;
    const kind = this.task.candidates[0]?.kind ?? (this.task.task === 'rope' ? 'pick_place' : 'sweep');
    this.optimal = { kind, params: [sx, sy, cx, cy] };
    this.placement.start = null;
  }

  addAuxiliary(action: ActionJson): void {
    const params = action.params.map((v) => Math.min(1, Math.max(0, v)));
    this.auxiliary.push({ kind: action.kind, params });
  }

  removeAuxiliary(i: number): void {
    this.auxiliary.splice(i, 1);
  }

  /** Submit gate: all candidates assigned and the optimal action placed. */
  canSubmit(): boolean {
    if (this.optimal === null) return false;
    if (this.task.kind === 'stage1_optimal') return true;
    return this.ranked.length + this.unrankable.size === this.task.candidates.length;
  }

  buildPayload(): Stage1Payload | Stage2Payload {
    if (!this.canSubmit()) {
      throw new Error('annotation incomplete: assign every candidate and place the optimal action');
    }
    if (this.task.kind === 'stage1_optimal') {
      return { optimal: this.optimal!, auxiliary: [...this.auxiliary] };
    }
    return {
      optimal: this.optimal!,
      ordering: [...this.ranked],
      unrankable: [...this.unrankable].sort((a, b) => a - b),
    };
  }
}

/** Closed-form count of preference pairs a stage-2 payload will produce. */
export function expectedPairCount(nCandidates: number, nRankable: number): number {
  const u = nCandidates - nRankable;
  return (nRankable * (nRankable - 1)) / 2 + nRankable * u + nCandidates;
}
