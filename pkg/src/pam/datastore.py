"""Persistence: JSONL datasets, binary checkpoints, run manifests.

Every pipeline stage communicates only through these artifacts. JSONL
records carry a schema version on every line (strict major match at
load); floats serialize with full round-trip precision. Checkpoints are
a self-describing binary container: magic, JSON header (architecture
descriptor, schedule, role, seed), then the raw float64 parameter
block, so parameter round-trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass

import numpy as np

from pam import config, nn
from pam.actions import ActionPrimitive, PointSet, in_workspace
from pam.diffusion import NoiseSchedule
from pam.oracle import OracleRanking
from pam.policy import PolicyNet

log = logging.getLogger(__name__)

SCHEMA_MAJOR = 1
CHECKPOINT_MAGIC = b"PAMCKPT1"
ROLES = ("reference", "finetuned", "explicit-reward")


class SchemaError(ValueError):
    pass


# --- JSON helpers ---

def _action_to_json(a: ActionPrimitive) -> dict:
    return {"kind": a.kind, "params": a.params.tolist()}


def _action_from_json(payload: dict) -> ActionPrimitive:
    return ActionPrimitive(kind=payload["kind"], params=np.array(payload["params"], dtype=np.float64))


def _obs_to_json(obs: PointSet) -> list:
    return obs.points.tolist()


def _obs_from_json(payload) -> PointSet:
    return PointSet(np.array(payload, dtype=np.float64))


def _ranking_to_json(r: OracleRanking) -> dict:
    return {
        "ordering": list(r.ordering),
        "unrankable": list(r.unrankable),
        "optimal": _action_to_json(r.optimal_action),
    }


def _ranking_from_json(payload: dict) -> OracleRanking:
    return OracleRanking(
        ordering=tuple(payload["ordering"]),
        unrankable=tuple(payload["unrankable"]),
        optimal_action=_action_from_json(payload["optimal"]),
    )


# --- records ---

@dataclass
class SLRecord:
    """One supervised example: observation, annotated optimal action,
    K auxiliary actions."""

    obs: PointSet
    optimal: ActionPrimitive
    auxiliary: list
    task: str
    episode: int
    step: int

    def validate(self, aux_cap: int | None = None) -> None:
        cap = config.AUX_ACTIONS_K if aux_cap is None else aux_cap
        if len(self.auxiliary) > cap:
            raise ValueError(f"{len(self.auxiliary)} auxiliary actions exceed the cap {cap}")
        for a in [self.optimal] + list(self.auxiliary):
            if not in_workspace(a.params):
                raise ValueError("action outside workspace")

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_MAJOR,
            "type": "sl",
            "task": self.task,
            "episode": self.episode,
            "step": self.step,
            "obs": _obs_to_json(self.obs),
            "optimal": _action_to_json(self.optimal),
            "auxiliary": [_action_to_json(a) for a in self.auxiliary],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "SLRecord":
        rec = cls(
            obs=_obs_from_json(payload["obs"]),
            optimal=_action_from_json(payload["optimal"]),
            auxiliary=[_action_from_json(a) for a in payload["auxiliary"]],
            task=payload["task"],
            episode=int(payload["episode"]),
            step=int(payload["step"]),
        )
        rec.validate()
        return rec


@dataclass
class PLRecord:
    """One preference example: observation, N policy candidates, and the
    (oracle or human) ranked annotation; pairs counts the derived pairs."""

    obs: PointSet
    candidates: list
    ranking: OracleRanking
    task: str
    episode: int
    step: int
    pairs: int = 0

    def validate(self, n_expected: int | None = None) -> None:
        n = len(self.candidates)
        if n_expected is not None and n != n_expected:
            raise ValueError(f"expected {n_expected} candidates, got {n}")
        indices = set(self.ranking.ordering) | set(self.ranking.unrankable)
        if indices != set(range(n)):
            raise ValueError("ranking does not partition the candidate set")
        for a in list(self.candidates) + [self.ranking.optimal_action]:
            if not in_workspace(a.params):
                raise ValueError("action outside workspace")

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_MAJOR,
            "type": "pl",
            "task": self.task,
            "episode": self.episode,
            "step": self.step,
            "obs": _obs_to_json(self.obs),
            "candidates": [_action_to_json(a) for a in self.candidates],
            "ranking": _ranking_to_json(self.ranking),
            "pairs": self.pairs,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PLRecord":
        rec = cls(
            obs=_obs_from_json(payload["obs"]),
            candidates=[_action_from_json(a) for a in payload["candidates"]],
            ranking=_ranking_from_json(payload["ranking"]),
            task=payload["task"],
            episode=int(payload["episode"]),
            step=int(payload["step"]),
            pairs=int(payload.get("pairs", 0)),
        )
        rec.validate()
        return rec


_RECORD_TYPES = {"sl": SLRecord, "pl": PLRecord}


def append_record(path, record) -> None:
    """Validate and append one record as a single JSONL line."""
    record.validate()
    line = json.dumps(record.to_json(), separators=(",", ":"), sort_keys=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()


def append_json_line(path, payload: dict) -> None:
    """Append a raw JSON object (logs, curves) with stable key order."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, separators=(",", ":"), sort_keys=True) + "\n")
        fh.flush()


def load_dataset(path, expected_type: str) -> list:
    """Parse and validate every line; a partial trailing line is skipped
    with a warning, any other damage is fatal."""
    cls = _RECORD_TYPES[expected_type]
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped:
            continue
        last = i == len(lines) - 1
        try:
            payload = json.loads(stripped)
        except json.JSONDecodeError:
            if last and not line.endswith("\n"):
                log.warning("skipping partial trailing line in %s", path)
                continue
            raise ValueError(f"{path}:{i + 1}: corrupt record")
        major = int(payload.get("schema", -1))
        if major != SCHEMA_MAJOR:
            raise SchemaError(
                f"{path}:{i + 1}: schema version {major} does not match reader version {SCHEMA_MAJOR}")
        if payload.get("type") != expected_type:
            raise ValueError(f"{path}:{i + 1}: expected {expected_type!r} record, got {payload.get('type')!r}")
        records.append(cls.from_json(payload))
    return records


def load_json_lines(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


# --- checkpoints ---

def _schedule_meta(s: NoiseSchedule) -> dict:
    # full alpha list: JSON floats round-trip exactly, so loading rebuilds
    # the identical schedule regardless of how it was constructed
    return {"t_steps": s.T, "alphas": s.alphas.tolist()}


def _write_container(path, header: dict, params: np.ndarray) -> None:
    blob = json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8")
    data = params.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", params.size))
        fh.write(data)


def _read_container(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        (n,) = struct.unpack("<Q", fh.read(8))
        params = np.frombuffer(fh.read(n * 8), dtype="<f8").astype(np.float64)
        if params.size != n:
            raise ValueError(f"{path}: truncated parameter block")
    return header, params


def save_policy_checkpoint(path, net: PolicyNet, role: str, seed: int, task: str,
                           extra: dict | None = None) -> None:
    if role not in ("reference", "finetuned"):
        raise ValueError(f"policy checkpoints must be reference or finetuned, got {role!r}")
    header = {
        "schema": SCHEMA_MAJOR,
        "kind": "policy",
        "role": role,
        "seed": int(seed),
        "task": task,
        "descriptor": net.descriptor(),
        "schedule": _schedule_meta(net.schedule),
        "extra": extra or {},
    }
    params = np.concatenate([nn.flatten_params(net.encoder), nn.flatten_params(net.head)])
    _write_container(path, header, params)


def load_policy_checkpoint(path, expected_role: str | None = None,
                           expected_task: str | None = None):
    """Returns (PolicyNet, header). Role and architecture are enforced."""
    header, params = _read_container(path)
    if header.get("kind") != "policy":
        raise ValueError(f"{path}: not a policy checkpoint (kind={header.get('kind')!r})")
    role = header.get("role")
    if role not in ("reference", "finetuned"):
        raise ValueError(f"{path}: invalid role {role!r}")
    if expected_role is not None and role != expected_role:
        raise ValueError(f"{path}: role {role!r} refused where {expected_role!r} is required")
    if expected_task is not None and header.get("task") != expected_task:
        raise ValueError(f"{path}: checkpoint task {header.get('task')!r} does not match {expected_task!r}")
    desc = header["descriptor"]
    enc_dims = tuple(desc["encoder_dims"])
    head_dims = tuple(desc["head_dims"])
    n_enc = sum((a + 1) * b for a, b in zip(enc_dims[:-1], enc_dims[1:]))
    n_head = sum((a + 1) * b for a, b in zip(head_dims[:-1], head_dims[1:]))
    if params.size != n_enc + n_head:
        raise ValueError(f"{path}: parameter count {params.size} does not match descriptor")
    alphas = np.array(header["schedule"]["alphas"], dtype=np.float64)
    schedule = NoiseSchedule(alphas=alphas, alpha_bars=np.cumprod(alphas))
    net = PolicyNet(
        encoder=nn.unflatten_params(params[:n_enc], enc_dims),
        head=nn.unflatten_params(params[n_enc:], head_dims),
        action_kind=desc["action_kind"],
        schedule=schedule,
    )
    return net, header


def save_reward_checkpoint(path, head: nn.Mlp, seed: int, task: str,
                           reference_hash: str, extra: dict | None = None) -> None:
    header = {
        "schema": SCHEMA_MAJOR,
        "kind": "reward",
        "role": "explicit-reward",
        "seed": int(seed),
        "task": task,
        "descriptor": {"head_dims": list(head.dims)},
        "reference_hash": reference_hash,
        "extra": extra or {},
    }
    _write_container(path, header, nn.flatten_params(head))


def load_reward_checkpoint(path, expected_task: str | None = None):
    header, params = _read_container(path)
    if header.get("kind") != "reward" or header.get("role") != "explicit-reward":
        raise ValueError(f"{path}: not an explicit-reward checkpoint")
    if expected_task is not None and header.get("task") != expected_task:
        raise ValueError(f"{path}: checkpoint task {header.get('task')!r} does not match {expected_task!r}")
    dims = tuple(header["descriptor"]["head_dims"])
    return nn.unflatten_params(params, dims), header


def file_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


# --- manifests ---

def write_manifest(path, task: str, stage: str, seeds: dict, hyperparams: dict,
                   checkpoint_hashes: dict, inputs: dict | None = None) -> dict:
    body = {
        "schema": SCHEMA_MAJOR,
        "task": task,
        "stage": stage,
        "seeds": seeds,
        "hyperparams": hyperparams,
        "checkpoint_hashes": checkpoint_hashes,
        "inputs": inputs or {},
    }
    canonical = json.dumps(body, separators=(",", ":"), sort_keys=True)
    body["config_hash"] = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return body


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
