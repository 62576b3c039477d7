"""Stage orchestration: data collection, training wrappers, rollouts,
and the five-way method evaluation harness.

Every command is deterministic per seed: all randomness flows through
keyed substreams of the command seed, outputs carry no timestamps, and
floats serialize with round-trip precision, so two runs with the same
arguments produce byte-identical files. Dataset writes are resumable:
states regenerate deterministically and records already on disk are
skipped, never rewritten.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from pam import config, datastore, oracle, policy, preference, ras
from pam.datastore import PLRecord, SLRecord
from pam.envs import get_task
from pam.rng import Rng

log = logging.getLogger(__name__)


def obs_hash(obs) -> str:
    return hashlib.sha256(obs.points.tobytes()).hexdigest()[:12]


def _hyperparams(task: str, **extras) -> dict:
    hp = config.Hyperparams(task=task)
    body = hp.to_dict()
    body["extras"].update(extras)
    return body


# --- stage 1: expert data collection ---

def collect_stage1(task_name: str, num_states: int, k: int, seed: int, out_path,
                   source: str = "oracle", service=None) -> dict:
    """Roll scripted-expert episodes until num_states (obs, a0, K aux)
    records exist in out_path. Resumable and byte-deterministic."""
    if num_states < 1:
        raise ValueError("num_states must be >= 1")
    task = get_task(task_name)
    existing = len(datastore.load_dataset(out_path, "sl")) if os.path.exists(out_path) else 0
    root = Rng(seed)
    produced = 0
    episode = 0
    while produced < num_states:
        ep_rng = root.spawn(episode)
        state = task.reset(ep_rng.spawn(0))
        noise = ep_rng.spawn(1)
        step = 0
        while produced < num_states:
            obs = task.observe(state)
            if source == "oracle":
                a0 = oracle.expert_action(task, state)
                aux = oracle.aux_actions(task, state, k=k, rng=ep_rng.spawn(100 + step))
                rec = SLRecord(obs=obs, optimal=a0, auxiliary=aux, task=task_name,
                               episode=episode, step=step)
                if produced >= existing:
                    datastore.append_record(out_path, rec)
            else:
                rec = service.annotate_stage1(task_name, episode, step, obs)
                a0 = rec.optimal
            produced += 1
            state = task.step(state, a0, noise)
            step += 1
            if task.measure(state).emd <= task.done_emd or step >= task.max_steps:
                break
        episode += 1
    manifest = datastore.write_manifest(
        str(out_path) + ".manifest.json", task=task_name, stage="collect",
        seeds={"seed": seed}, hyperparams=_hyperparams(task_name, num_states=num_states, k=k),
        checkpoint_hashes={}, inputs={"out": os.path.basename(str(out_path))})
    return manifest


# --- training wrappers ---

def train_sl(dataset_paths, epochs: int, seed: int, out_ckpt, pl_paths=(),
             lr: float = config.SL_LR) -> dict:
    """Supervised training over one or more SL datasets; PL datasets may
    contribute their annotated optimal actions (the retrained baseline)."""
    records = []
    for p in dataset_paths:
        records.extend(datastore.load_dataset(p, "sl"))
    for p in pl_paths:
        for rec in datastore.load_dataset(p, "pl"):
            records.append(SLRecord(obs=rec.obs, optimal=rec.ranking.optimal_action,
                                    auxiliary=[], task=rec.task, episode=rec.episode,
                                    step=rec.step))
    if not records:
        raise ValueError("no training records found")
    task_name = records[0].task
    if any(r.task != task_name for r in records):
        raise ValueError("mixed tasks in training data")
    task = get_task(task_name)
    net = policy.new_policy(task.action_kind, Rng(seed))
    curve = policy.train_supervised(net, records, epochs=epochs, rng=Rng(seed).spawn(10), lr=lr)
    datastore.save_policy_checkpoint(out_ckpt, net, role="reference", seed=seed, task=task_name,
                                     extra={"epochs": epochs, "pairs": len(records)})
    _write_curve_file(str(out_ckpt) + ".losses.jsonl", curve)
    manifest = datastore.write_manifest(
        str(out_ckpt) + ".manifest.json", task=task_name, stage="train-sl",
        seeds={"seed": seed},
        hyperparams=_hyperparams(task_name, epochs=epochs, lr=lr,
                                 datasets=[os.path.basename(str(p)) for p in dataset_paths],
                                 pl_datasets=[os.path.basename(str(p)) for p in pl_paths]),
        checkpoint_hashes={"out": datastore.file_hash(out_ckpt)})
    return manifest


def _write_curve_file(path, curve) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, v in enumerate(curve):
            fh.write(json.dumps({"epoch": i, "loss": v}) + "\n")


# --- stage 2: on-policy rollout with preference annotation ---

def rollout_stage2(task_name: str, ref_ckpt, num_states: int, n: int, seed: int,
                   out_path, source: str = "oracle", service=None) -> dict:
    """Run the supervised policy, record N candidates per state with a
    ranked annotation, execute the annotated optimal action."""
    task = get_task(task_name)
    net, header = datastore.load_policy_checkpoint(ref_ckpt, expected_role="reference",
                                                   expected_task=task_name)
    existing = len(datastore.load_dataset(out_path, "pl")) if os.path.exists(out_path) else 0
    root = Rng(seed)
    produced = 0
    episode = 0
    while produced < num_states:
        ep_rng = root.spawn(episode)
        state = task.reset(ep_rng.spawn(0))
        noise = ep_rng.spawn(1)
        step = 0
        while produced < num_states:
            obs = task.observe(state)
            candidates = policy.predict_actions(net, obs, n, ep_rng.spawn(100 + step))
            if source == "oracle":
                ranking = oracle.oracle_rank(task, state, candidates)
                pairs = preference.build_pairs(ranking, candidates, obs)
                rec = PLRecord(obs=obs, candidates=candidates, ranking=ranking,
                               task=task_name, episode=episode, step=step, pairs=len(pairs))
                if produced >= existing:
                    datastore.append_record(out_path, rec)
            else:
                rec = service.annotate_stage2(task_name, episode, step, obs, candidates)
                ranking = rec.ranking
            produced += 1
            state = task.step(state, ranking.optimal_action, noise)
            step += 1
            if task.measure(state).emd <= task.done_emd or step >= task.max_steps:
                break
        episode += 1
    manifest = datastore.write_manifest(
        str(out_path) + ".manifest.json", task=task_name, stage="rollout",
        seeds={"seed": seed},
        hyperparams=_hyperparams(task_name, num_states=num_states, n=n, source=source),
        checkpoint_hashes={"reference": datastore.file_hash(ref_ckpt)},
        inputs={"reference": os.path.basename(str(ref_ckpt))})
    return manifest


def pairs_from_dataset(dpl_path) -> list:
    pairs = []
    for rec in datastore.load_dataset(dpl_path, "pl"):
        pairs.extend(preference.build_pairs(rec.ranking, rec.candidates, rec.obs))
    return pairs


def train_dpo_cmd(dpl_path, ref_ckpt, beta: float, epochs: int, seed: int, out_ckpt,
                  lr: float = config.DPO_LR) -> dict:
    reference, header = datastore.load_policy_checkpoint(ref_ckpt, expected_role="reference")
    task_name = header["task"]
    pairs = pairs_from_dataset(dpl_path)
    ft, curve = preference.train_dpo(reference, pairs, beta=beta, epochs=epochs,
                                     rng=Rng(seed), lr=lr)
    datastore.save_policy_checkpoint(out_ckpt, ft, role="finetuned", seed=seed, task=task_name,
                                     extra={"beta": beta, "epochs": epochs, "pairs": len(pairs)})
    _write_curve_file(str(out_ckpt) + ".losses.jsonl", curve)
    return datastore.write_manifest(
        str(out_ckpt) + ".manifest.json", task=task_name, stage="train-dpo",
        seeds={"seed": seed},
        hyperparams=_hyperparams(task_name, beta=beta, epochs=epochs, lr=lr,
                                 pairs=len(pairs)),
        checkpoint_hashes={"reference": datastore.file_hash(ref_ckpt),
                           "out": datastore.file_hash(out_ckpt)})


def train_explicit_cmd(dpl_path, ref_ckpt, epochs: int, seed: int, out_ckpt,
                       lr: float = config.EXPLICIT_LR) -> dict:
    reference, header = datastore.load_policy_checkpoint(ref_ckpt, expected_role="reference")
    task_name = header["task"]
    pairs = pairs_from_dataset(dpl_path)
    head = preference.new_reward_head(Rng(seed))
    curve = preference.train_explicit_reward(reference, head, pairs, epochs=epochs,
                                             rng=Rng(seed).spawn(1), lr=lr)
    datastore.save_reward_checkpoint(out_ckpt, head, seed=seed, task=task_name,
                                     reference_hash=datastore.file_hash(ref_ckpt),
                                     extra={"epochs": epochs, "pairs": len(pairs)})
    _write_curve_file(str(out_ckpt) + ".losses.jsonl", curve)
    return datastore.write_manifest(
        str(out_ckpt) + ".manifest.json", task=task_name, stage="train-explicit",
        seeds={"seed": seed},
        hyperparams=_hyperparams(task_name, epochs=epochs, lr=lr, pairs=len(pairs)),
        checkpoint_hashes={"reference": datastore.file_hash(ref_ckpt),
                           "out": datastore.file_hash(out_ckpt)})


# --- evaluation harness ---

@dataclass
class EvalCurve:
    """Per-step metric statistics across trials for one method."""

    method: str
    task: str
    trials: int
    failed_trials: int
    max_steps: int
    n: int
    iou_mean: list
    iou_std: list
    coverage_mean: list
    coverage_std: list
    emd_mean: list
    emd_std: list

    def __post_init__(self):
        want = self.max_steps + 1
        for name in ("iou_mean", "iou_std", "coverage_mean", "coverage_std",
                     "emd_mean", "emd_std"):
            if len(getattr(self, name)) != want:
                raise ValueError(f"{name} must have length max_steps+1 = {want}")
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        if self.method not in config.METHOD_TAGS:
            raise ValueError(f"unknown method tag {self.method!r}")

    def to_json(self) -> dict:
        return {"schema": datastore.SCHEMA_MAJOR, "kind": "curve", "method": self.method,
                "task": self.task, "trials": self.trials, "failed_trials": self.failed_trials,
                "max_steps": self.max_steps, "n": self.n,
                "iou_mean": self.iou_mean, "iou_std": self.iou_std,
                "coverage_mean": self.coverage_mean, "coverage_std": self.coverage_std,
                "emd_mean": self.emd_mean, "emd_std": self.emd_std}


def should_stop(emds, delta: float = config.EARLY_STOP_EMD_DELTA,
                patience: int = config.EARLY_STOP_PATIENCE) -> bool:
    """Plateau rule: the last `patience` step-over-step improvements all
    fell below `delta`. Pure function of the EMD sequence."""
    if len(emds) < patience + 1:
        return False
    recent = [emds[i - 1] - emds[i] for i in range(len(emds) - patience, len(emds))]
    return all(imp < delta for imp in recent)


class MethodRunner:
    """Per-step action selection for one method tag."""

    def __init__(self, method: str, task, n: int, sampler: policy.PolicyNet,
                 finetuned=None, reward_head=None, beta: float = config.DPO_BETA):
        if method not in config.METHOD_TAGS:
            raise ValueError(f"unknown method tag {method!r}")
        self.method = method
        self.task = task
        self.n = 1 if method in ("SL", "SL+SL") else n
        self.sampler = sampler
        self.finetuned = finetuned
        self.reward_head = reward_head
        self.beta = beta
        if method in ("SL+ImplicitRAS", "DPO+ImplicitRAS") and finetuned is None:
            raise ValueError(f"{method} requires a finetuned checkpoint")
        if method == "SL+ExplicitRAS" and reward_head is None:
            raise ValueError(f"{method} requires an explicit reward checkpoint")

    def _scorer(self):
        if self.method in ("SL+ImplicitRAS", "DPO+ImplicitRAS"):
            return lambda acts, obs, rng: ras.implicit_rewards(
                self.finetuned, self._reference, acts, obs, beta=self.beta, rng=rng)
        if self.method == "SL+ExplicitRAS":
            return lambda acts, obs, rng: ras.explicit_rewards(self._reference, self.reward_head, acts, obs)
        return None

    def set_reference(self, reference) -> None:
        # the supervised reference anchors the reward even when the
        # finetuned model does the sampling
        self._reference = reference

    def step(self, obs, rng):
        scorer = self._scorer()
        if scorer is None:
            action = policy.predict_actions(self.sampler, obs, 1, rng.spawn(0))[0]
            return action, None
        best, scored = ras.infer_with_ras(self.sampler, obs, self.n, rng, scorer)
        return best.action, scored


def evaluate(task_name: str, method: str, trials: int, n: int, seed: int, out_dir,
             reference_path=None, finetuned_path=None, reward_path=None,
             max_steps: int | None = None, beta: float = config.DPO_BETA) -> dict:
    """Seeded trials for one method; writes curve, per-trial log, final-state
    heatmap, inference log (for selection methods), and a manifest."""
    task = get_task(task_name)
    max_steps = task.max_steps if max_steps is None else max_steps
    os.makedirs(out_dir, exist_ok=True)
    tag = method.replace("+", "_")

    reference = finetuned = head = None
    hashes = {}
    if reference_path:
        reference, _ = datastore.load_policy_checkpoint(reference_path, expected_role="reference",
                                                        expected_task=task_name)
        hashes["reference"] = datastore.file_hash(reference_path)
    if finetuned_path:
        finetuned, _ = datastore.load_policy_checkpoint(finetuned_path, expected_role="finetuned",
                                                        expected_task=task_name)
        hashes["finetuned"] = datastore.file_hash(finetuned_path)
    if reward_path:
        head, _ = datastore.load_reward_checkpoint(reward_path, expected_task=task_name)
        hashes["reward"] = datastore.file_hash(reward_path)
    if reference is None:
        raise ValueError("a reference checkpoint is required")

    sampler = finetuned if method == "DPO+ImplicitRAS" else reference
    runner = MethodRunner(method, task, n, sampler, finetuned=finetuned, reward_head=head,
                          beta=beta)
    runner.set_reference(reference)

    # manifest first: every evaluation output references it by config hash
    manifest = datastore.write_manifest(
        os.path.join(out_dir, f"manifest_{tag}.json"), task=task_name, stage="eval",
        seeds={"seed": seed},
        hyperparams=_hyperparams(task_name, method=method, trials=trials, n=runner.n,
                                 max_steps=max_steps, beta=beta),
        checkpoint_hashes=hashes)
    mhash = manifest["config_hash"]

    trials_path = os.path.join(out_dir, f"trials_{tag}.jsonl")
    log_path = os.path.join(out_dir, f"inference_log_{tag}.jsonl")
    for p in (trials_path, log_path):
        if os.path.exists(p):
            os.remove(p)

    per_trial_metrics = []
    heat = np.zeros((config.GRID_SIZE, config.GRID_SIZE), dtype=np.int64)
    failed = 0
    for trial in range(trials):
        trial_rng = Rng(seed).spawn(trial)
        try:
            rows, final_state = _run_trial(task, runner, trial_rng, max_steps,
                                           trial, method, log_path, mhash)
        except Exception:
            log.exception("trial %d failed", trial)
            failed += 1
            continue
        per_trial_metrics.append(rows)
        heat += task.raster(final_state).astype(np.int64)
        datastore.append_json_line(trials_path, {
            "schema": datastore.SCHEMA_MAJOR, "type": "trial", "method": method,
            "trial": trial, "steps": len(rows) - 1, "manifest": mhash,
            "metrics": [m.to_dict() for m in rows]})
    if not per_trial_metrics:
        raise RuntimeError(f"all {trials} trials failed")

    padded = {"iou": [], "coverage": [], "emd": []}
    for rows in per_trial_metrics:
        vals = {k: [getattr(m, k) for m in rows] for k in padded}
        for k in padded:
            seq = vals[k] + [vals[k][-1]] * (max_steps + 1 - len(vals[k]))
            padded[k].append(seq)
    arr = {k: np.array(v) for k, v in padded.items()}
    curve = EvalCurve(
        method=method, task=task_name, trials=len(per_trial_metrics), failed_trials=failed,
        max_steps=max_steps, n=runner.n,
        iou_mean=arr["iou"].mean(axis=0).tolist(), iou_std=arr["iou"].std(axis=0).tolist(),
        coverage_mean=arr["coverage"].mean(axis=0).tolist(),
        coverage_std=arr["coverage"].std(axis=0).tolist(),
        emd_mean=arr["emd"].mean(axis=0).tolist(), emd_std=arr["emd"].std(axis=0).tolist())

    curve_path = os.path.join(out_dir, f"curve_{tag}.json")
    with open(curve_path, "w", encoding="utf-8") as fh:
        body = curve.to_json()
        body["manifest"] = mhash
        json.dump(body, fh, sort_keys=True)
        fh.write("\n")
    heat_path = os.path.join(out_dir, f"heatmap_{tag}.csv")
    with open(heat_path, "w", encoding="utf-8") as fh:
        for row in heat:
            fh.write(",".join(str(int(v)) for v in row) + "\n")
    return {"curve": curve, "curve_path": curve_path, "heatmap_path": heat_path,
            "trials_path": trials_path, "log_path": log_path, "manifest": manifest,
            "failed_trials": failed}


def _run_trial(task, runner: MethodRunner, trial_rng: Rng, max_steps: int,
               trial: int, method: str, log_path, manifest_hash: str):
    state = task.reset(trial_rng.spawn(0))
    noise = trial_rng.spawn(1)
    rows = [task.measure(state)]
    emds = [rows[0].emd]
    for step in range(1, max_steps + 1):
        obs = task.observe(state)
        action, scored = runner.step(obs, trial_rng.spawn(10 + step))
        if scored is not None:
            rewards = [s.reward for s in scored]
            rnorm = ras.normalized_rewards(rewards)
            selected = int(np.argmax(rewards))
            datastore.append_json_line(log_path, {
                "schema": datastore.SCHEMA_MAJOR, "type": "ras_step", "method": method,
                "trial": trial, "step": step, "n": len(scored), "obs_id": obs_hash(obs),
                "actions": [s.action.params.tolist() for s in scored],
                "rewards": rewards, "rewards_norm": rnorm.tolist(), "selected": selected,
                "manifest": manifest_hash})
        state = task.step(state, action, noise)
        m = task.measure(state)
        rows.append(m)
        emds.append(m.emd)
        if should_stop(emds):
            break
    return rows, state
