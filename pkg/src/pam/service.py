"""Annotation HTTP service and its client.

Exposes pending observation states so a human can annotate optimal
actions (stage 1) or candidate rankings (stage 2), writing the exact
same dataset files the scripted-oracle path writes. Pull-based
claim/lease queue; no authentication (trusted LAN tool).

Endpoints (JSON over HTTP):
    GET  /api/health
    GET  /api/tasks/next?kind=stage1_optimal|stage2_ranking
    POST /api/tasks                     (enqueue; used by the rollout CLI)
    GET  /api/tasks/{id}                (status + finished record)
    POST /api/tasks/{id}/annotation
    GET  /api/replay/{episode}          (per-step inference log records)

Tasks and finished annotations are file-backed; a restart loses claims
(they simply return to pending) but never loses done work.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from pam import config, datastore, preference
from pam.actions import ActionPrimitive, PointSet
from pam.datastore import PLRecord, SLRecord
from pam.oracle import OracleRanking

log = logging.getLogger(__name__)

KINDS = ("stage1_optimal", "stage2_ranking")


class AnnotationError(ValueError):
    """Invalid payload; maps to a 4xx response."""

    status = 400


class UnknownTask(AnnotationError):
    status = 404


class StaleLease(AnnotationError):
    status = 409


class ConflictingAnnotation(AnnotationError):
    status = 409


class ServiceUnreachable(RuntimeError):
    pass


def _payload_hash(payload: dict) -> str:
    blob = json.dumps(payload, separators=(",", ":"), sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class AnnotationTask:
    id: str
    kind: str
    task: str                  # env name
    episode: int
    step: int
    obs: PointSet
    candidates: list = field(default_factory=list)
    status: str = "pending"    # pending -> claimed -> done
    lease_expiry: float = 0.0
    payload_hash: str = ""
    result: dict | None = None

    def public_json(self) -> dict:
        return {
            "id": self.id, "kind": self.kind, "task": self.task,
            "episode": self.episode, "step": self.step,
            "obs": self.obs.points.tolist(),
            "candidates": [{"kind": a.kind, "params": a.params.tolist()}
                           for a in self.candidates],
            "status": self.status,
        }


def _parse_action(payload) -> ActionPrimitive:
    try:
        return ActionPrimitive(kind=payload["kind"],
                               params=np.array(payload["params"], dtype=np.float64))
    except (KeyError, TypeError, ValueError) as exc:
        raise AnnotationError(f"bad action payload: {exc}")


class TaskQueue:
    """File-backed claim/lease queue. All mutations run under one lock;
    annotation validation is the same code the oracle path uses."""

    def __init__(self, data_dir, lease_seconds: float = 600.0, clock=time.time):
        self.data_dir = str(data_dir)
        os.makedirs(self.data_dir, exist_ok=True)
        self.lease_seconds = lease_seconds
        self.clock = clock
        self.lock = threading.Lock()
        self.tasks: dict[str, AnnotationTask] = {}
        self.order: list[str] = []
        self._tasks_path = os.path.join(self.data_dir, "tasks.jsonl")
        self._done_path = os.path.join(self.data_dir, "done.jsonl")
        self._sl_path = os.path.join(self.data_dir, "sl_records.jsonl")
        self._pl_path = os.path.join(self.data_dir, "pl_records.jsonl")
        self._reload()

    def dataset_path(self, kind: str) -> str:
        return self._sl_path if kind == "stage1_optimal" else self._pl_path

    def _reload(self) -> None:
        if os.path.exists(self._tasks_path):
            for payload in datastore.load_json_lines(self._tasks_path):
                t = AnnotationTask(
                    id=payload["id"], kind=payload["kind"], task=payload["task"],
                    episode=payload["episode"], step=payload["step"],
                    obs=PointSet(np.array(payload["obs"], dtype=np.float64)),
                    candidates=[_parse_action(a) for a in payload["candidates"]],
                )
                if t.id not in self.tasks:
                    self.tasks[t.id] = t
                    self.order.append(t.id)
        if os.path.exists(self._done_path):
            for payload in datastore.load_json_lines(self._done_path):
                t = self.tasks.get(payload["id"])
                if t is not None:
                    t.status = "done"
                    t.payload_hash = payload["payload_hash"]
                    t.result = payload["result"]

    def enqueue(self, kind: str, task_name: str, episode: int, step: int,
                obs: PointSet, candidates) -> AnnotationTask:
        if kind not in KINDS:
            raise AnnotationError(f"unknown task kind {kind!r}")
        if kind == "stage2_ranking" and not candidates:
            raise AnnotationError("stage-2 tasks need candidates")
        task_id = f"{task_name}-e{episode}-s{step}"
        with self.lock:
            if task_id in self.tasks:
                return self.tasks[task_id]
            t = AnnotationTask(id=task_id, kind=kind, task=task_name, episode=episode,
                               step=step, obs=obs, candidates=list(candidates))
            self.tasks[task_id] = t
            self.order.append(task_id)
            datastore.append_json_line(self._tasks_path, t.public_json())
            return t

    def claim_next(self, kind: str):
        """Oldest pending task of the kind, leased to the caller."""
        now = self.clock()
        with self.lock:
            for task_id in self.order:
                t = self.tasks[task_id]
                if t.kind != kind or t.status == "done":
                    continue
                if t.status == "claimed" and t.lease_expiry > now:
                    continue
                t.status = "claimed"
                t.lease_expiry = now + self.lease_seconds
                return t
        return None

    def get(self, task_id: str):
        with self.lock:
            return self.tasks.get(task_id)

    def submit(self, task_id: str, payload: dict) -> dict:
        """Validate and persist an annotation. Retrying with an identical
        payload returns the stored ack without writing a second record."""
        phash = _payload_hash(payload)
        with self.lock:
            t = self.tasks.get(task_id)
            if t is None:
                raise UnknownTask(f"unknown task {task_id!r}")
            if t.status == "done":
                if t.payload_hash == phash:
                    return t.result
                raise ConflictingAnnotation(f"task {task_id} already has a different annotation")
            now = self.clock()
            if t.status != "claimed" or t.lease_expiry <= now:
                raise StaleLease(f"task {task_id} is not under an active claim; re-claim it first")
            record, result = self._build_record(t, payload)
            datastore.append_record(self.dataset_path(t.kind), record)
            t.status = "done"
            t.payload_hash = phash
            t.result = result
            datastore.append_json_line(self._done_path, {
                "id": t.id, "payload_hash": phash, "result": result})
            return result

    def _build_record(self, t: AnnotationTask, payload: dict):
        env_kind = t.candidates[0].kind if t.candidates else None
        try:
            optimal = _parse_action(payload["optimal"])
        except KeyError:
            raise AnnotationError("payload is missing the optimal action")
        if env_kind is not None and optimal.kind != env_kind:
            raise AnnotationError(f"optimal action kind {optimal.kind!r} does not match candidates")
        if t.kind == "stage1_optimal":
            auxiliary = [_parse_action(a) for a in payload.get("auxiliary", [])]
            record = SLRecord(obs=t.obs, optimal=optimal, auxiliary=auxiliary,
                              task=t.task, episode=t.episode, step=t.step)
            record.validate()
            return record, {"ok": True, "id": t.id, "record_type": "sl",
                            "record": record.to_json()}
        ordering = payload.get("ordering")
        unrankable = payload.get("unrankable")
        if ordering is None or unrankable is None:
            raise AnnotationError("payload needs 'ordering' and 'unrankable'")
        n = len(t.candidates)
        combined = list(ordering) + list(unrankable)
        if sorted(combined) != list(range(n)):
            raise AnnotationError(
                f"ordering+unrankable must partition candidate indices 0..{n - 1}")
        ranking = OracleRanking(ordering=tuple(int(i) for i in ordering),
                                unrankable=tuple(int(i) for i in unrankable),
                                optimal_action=optimal)
        pairs = preference.build_pairs(ranking, t.candidates, t.obs)
        record = PLRecord(obs=t.obs, candidates=t.candidates, ranking=ranking,
                          task=t.task, episode=t.episode, step=t.step, pairs=len(pairs))
        record.validate()
        return record, {"ok": True, "id": t.id, "record_type": "pl",
                        "pairs": len(pairs), "record": record.to_json()}

    def counts(self) -> dict:
        now = self.clock()
        with self.lock:
            pending = claimed = done = 0
            for t in self.tasks.values():
                if t.status == "done":
                    done += 1
                elif t.status == "claimed" and t.lease_expiry > now:
                    claimed += 1
                else:
                    pending += 1
        return {"pending": pending, "claimed": claimed, "done": done}


class _Handler(BaseHTTPRequestHandler):
    queue: TaskQueue = None
    replay_log: str | None = None

    def log_message(self, fmt, *args):
        log.debug("http: " + fmt, *args)

    def _send(self, status: int, payload: dict) -> None:
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(blob)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length).decode("utf-8"))
        except json.JSONDecodeError:
            raise AnnotationError("request body is not valid JSON")

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def do_GET(self):
        try:
            path, _, query = self.path.partition("?")
            if path == "/api/health":
                self._send(200, {"status": "ok", **self.queue.counts()})
            elif path == "/api/tasks/next":
                params = dict(q.split("=", 1) for q in query.split("&") if "=" in q)
                kind = params.get("kind", "stage2_ranking")
                if kind not in KINDS:
                    raise AnnotationError(f"unknown task kind {kind!r}")
                t = self.queue.claim_next(kind)
                if t is None:
                    self._send(200, {"none_pending": True, "kind": kind})
                else:
                    self._send(200, t.public_json())
            elif path.startswith("/api/tasks/"):
                task_id = path[len("/api/tasks/"):]
                t = self.queue.get(task_id)
                if t is None:
                    raise UnknownTask(f"unknown task {task_id!r}")
                body = t.public_json()
                if t.status == "done":
                    body["result"] = t.result
                self._send(200, body)
            elif path.startswith("/api/replay/"):
                episode = path[len("/api/replay/"):]
                self._replay(episode)
            else:
                self._send(404, {"error": f"no such endpoint {path!r}"})
        except AnnotationError as exc:
            self._send(exc.status, {"error": str(exc)})
        except Exception as exc:
            log.exception("GET failed")
            self._send(500, {"error": str(exc)})

    def _replay(self, episode: str) -> None:
        if self.replay_log is None or not os.path.exists(self.replay_log):
            raise UnknownTask("no replay log configured")
        try:
            wanted = int(episode)
        except ValueError:
            raise UnknownTask(f"bad episode id {episode!r}")
        records = [r for r in datastore.load_json_lines(self.replay_log)
                   if r.get("trial") == wanted]
        if not records:
            raise UnknownTask(f"no replay records for episode {episode}")
        records.sort(key=lambda r: r["step"])
        self._send(200, {"episode": wanted, "records": records})

    def do_POST(self):
        try:
            if self.path == "/api/tasks":
                body = self._body()
                obs = PointSet(np.array(body["obs"], dtype=np.float64))
                cands = [_parse_action(a) for a in body.get("candidates", [])]
                t = self.queue.enqueue(body["kind"], body["task"], int(body["episode"]),
                                       int(body["step"]), obs, cands)
                payload = t.public_json()
                if t.status == "done":
                    payload["result"] = t.result
                self._send(200, payload)
            elif self.path.startswith("/api/tasks/") and self.path.endswith("/annotation"):
                task_id = self.path[len("/api/tasks/"):-len("/annotation")]
                result = self.queue.submit(task_id, self._body())
                self._send(200, result)
            else:
                self._send(404, {"error": f"no such endpoint {self.path!r}"})
        except AnnotationError as exc:
            self._send(exc.status, {"error": str(exc)})
        except (KeyError, TypeError, ValueError) as exc:
            self._send(400, {"error": f"bad request: {exc}"})
        except Exception as exc:
            log.exception("POST failed")
            self._send(500, {"error": str(exc)})


class AnnotationServer:
    """ThreadingHTTPServer wrapper owning one TaskQueue."""

    def __init__(self, host="127.0.0.1", port=0, data_dir="annotations",
                 lease_seconds=600.0, clock=time.time, replay_log=None):
        self.queue = TaskQueue(data_dir, lease_seconds=lease_seconds, clock=clock)
        handler = type("BoundHandler", (_Handler,), {"queue": self.queue,
                                                     "replay_log": replay_log})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self.host = host
        self.port = self._httpd.server_address[1]
        self._thread = None

    def start_background(self) -> "AnnotationServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"


class ServiceClient:
    """HTTP client used by collect/rollout in serve mode: enqueue a state,
    block until a human (or test harness) annotates it."""

    def __init__(self, base_url: str, poll_interval: float = 0.2,
                 retries: int = 3, backoff: float = 0.5, timeout: float = 10.0):
        self.base = base_url.rstrip("/")
        self.poll_interval = poll_interval
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        data = json.dumps(payload).encode("utf-8") if payload is not None else None
        req = urllib.request.Request(self.base + path, data=data, method=method,
                                     headers={"Content-Type": "application/json"})
        delay = self.backoff
        for attempt in range(self.retries):
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                body = exc.read().decode("utf-8", "replace")
                raise RuntimeError(f"{method} {path} -> {exc.code}: {body}")
            except (urllib.error.URLError, ConnectionError, TimeoutError):
                if attempt == self.retries - 1:
                    raise ServiceUnreachable(
                        f"annotation service at {self.base} unreachable after {self.retries} tries; "
                        "progress is checkpointed, rerun to resume")
                time.sleep(delay)
                delay *= 2

    def health(self) -> dict:
        return self._request("GET", "/api/health")

    def _annotate(self, kind: str, task_name: str, episode: int, step: int,
                  obs: PointSet, candidates):
        body = {
            "kind": kind, "task": task_name, "episode": episode, "step": step,
            "obs": obs.points.tolist(),
            "candidates": [{"kind": a.kind, "params": a.params.tolist()} for a in candidates],
        }
        status = self._request("POST", "/api/tasks", body)
        task_id = status["id"]
        while status.get("status") != "done":
            time.sleep(self.poll_interval)
            status = self._request("GET", f"/api/tasks/{task_id}")
        return status["result"]["record"]

    def annotate_stage1(self, task_name, episode, step, obs) -> SLRecord:
        record = self._annotate("stage1_optimal", task_name, episode, step, obs, [])
        return SLRecord.from_json(record)

    def annotate_stage2(self, task_name, episode, step, obs, candidates) -> PLRecord:
        record = self._annotate("stage2_ranking", task_name, episode, step, obs, candidates)
        return PLRecord.from_json(record)
