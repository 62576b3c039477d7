// Wire types mirroring the annotation service JSON schemas.

export type TaskKind = 'stage1_optimal' | 'stage2_ranking';

export interface ActionJson {
  kind: string;
  params: number[]; // [x0, y0, x1, y1] in workspace coordinates
}

export interface AnnotationTask {
  id: string;
  kind: TaskKind;
  task: string; // environment name
  episode: number;
  step: number;
  obs: number[][]; // M x 2 workspace points
  candidates: ActionJson[];
  status: 'pending' | 'claimed' | 'done';
}

export interface Stage2Payload {
  optimal: ActionJson;
  ordering: number[];
  unrankable: number[];
}

export interface Stage1Payload {
  optimal: ActionJson;
  auxiliary: ActionJson[];
}

export interface SubmitAck {
  ok: boolean;
  id: string;
  record_type: 'sl' | 'pl';
  pairs?: number;
  record: unknown;
}

export interface ReplayRecord {
  trial: number;
  step: number;
  n: number;
  actions: number[][];
  rewards: number[];
  rewards_norm: number[];
  selected: number;
}
