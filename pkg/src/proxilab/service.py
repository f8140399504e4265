"""HTTP session service for the interactive personalization loop.

One session = one participant run: the sampler proposes approach angles, the
client (web UI or scripted driver) reports where the user stopped the robot
and which dialogue answer they chose, and the service converts stops into
labels, periodically retrains the domain discriminator, fine-tunes a
per-session copy of the base model on demand, and serves discomfort
heatmaps.

Persistence is a write-ahead JSONL event log per session (appended and
flushed before a request is acknowledged). Session state is reconstructed
from the log by deterministic replay, so restarting the service loses
nothing, and an exported log re-imports to an identical session.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import atl
from .geometry import (
    GeometryError,
    Pose2D,
    RoomPolygon,
    extract_features,
    normalize_angle,
)
from .nnmodel import (
    ProxemicsNetwork,
    evaluate_mae,
    fine_tune,
    model_from_dict,
    model_to_dict,
    predict_batch,
)

DEFAULT_SPEED_MPS = 0.33
HELD_OUT_FRACTION = 0.25
MIN_RESOLUTION, MAX_RESOLUTION = 8, 256


class SessionError(HTTPException):
    def __init__(self, status_code: int, message: str):
        super().__init__(status_code=status_code, detail=message)


@dataclass
class ApproachRecord:
    approach_id: str
    angle: float
    start_position: tuple
    start_distance: float
    dialogue_index: int
    started_ts: float
    stop_distance: float | None = None
    answer_index: int | None = None
    response: str | None = None
    stopped_ts: float | None = None


@dataclass
class Session:
    session_id: str
    room: RoomPolygon
    user_pose: Pose2D
    strategy: str
    seed: int
    created_at: float
    sampler: atl.SamplerState
    k: int
    approaches: list = field(default_factory=list)
    pending: ApproachRecord | None = None
    dialogue_cursor: int = 0
    queue: list = field(default_factory=list)
    served_in_batch: int = 0
    fine_tuned: ProxemicsNetwork | None = None
    fine_tune_result: dict | None = None
    seq: int = 0
    lock: threading.RLock = field(default_factory=threading.RLock)

    @property
    def stops_recorded(self) -> int:
        return sum(1 for a in self.approaches if a.stop_distance is not None)


class SessionStore:
    """Append-only JSONL event logs plus per-session model files."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def session_path(self, session_id: str) -> Path:
        return self.root / f"session-{session_id}.jsonl"

    def model_path(self, session_id: str) -> Path:
        return self.root / f"model-{session_id}.json"

    def append(self, session_id: str, event: dict) -> None:
        with self.session_path(session_id).open("a") as fh:
            fh.write(json.dumps(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read_events(self, session_id: str) -> list[dict]:
        path = self.session_path(session_id)
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]

    def list_sessions(self) -> list[str]:
        return sorted(
            p.stem.removeprefix("session-") for p in self.root.glob("session-*.jsonl")
        )


class SessionManager:
    """Owns all live sessions; reloads persisted ones from the store lazily."""

    def __init__(self, base_model: ProxemicsNetwork, dialogue: list[dict], store: SessionStore,
                 grid: atl.SamplerGrid | None = None, k: int = 3,
                 training_sample=None, speed_mps: float = DEFAULT_SPEED_MPS):
        for item in dialogue:
            if len(item["answers"]) != 2 or len(item["responses"]) != 2:
                raise ValueError(f"dialogue item {item.get('object')!r} needs exactly two answers and responses")
        self.base_model = base_model
        self.dialogue = dialogue
        self.store = store
        self.grid = grid or atl.SamplerGrid()
        self.k = k
        self.training_sample = list(training_sample or [])
        self.speed_mps = speed_mps
        self.sessions: dict[str, Session] = {}
        self.registry_lock = threading.Lock()

    # -- event plumbing ----------------------------------------------------

    def _emit(self, session: Session, kind: str, data: dict) -> dict:
        event = {"seq": session.seq, "event": kind, "data": data}
        session.seq += 1
        self.store.append(session.session_id, event)
        return event

    def _drain_sampler_events(self, session: Session) -> None:
        for ev in session.sampler.events:
            self._emit(session, ev["event"], {k: v for k, v in ev.items() if k != "event"})
        session.sampler.events.clear()

    # -- session lifecycle -------------------------------------------------

    def create_session(self, room_doc, pose_doc, strategy, seed, session_id=None,
                       now=None) -> Session:
        if strategy not in ("atl", "random"):
            raise SessionError(400, f"unknown strategy {strategy!r}")
        try:
            room = RoomPolygon.from_dict(room_doc)
            pose = Pose2D.from_dict(pose_doc)
        except (GeometryError, KeyError, TypeError, ValueError) as exc:
            raise SessionError(400, f"invalid geometry: {exc}") from exc
        if not room.contains_point(pose.x, pose.y):
            raise SessionError(400, "user pose is not strictly inside the room")
        session_id = session_id or uuid.uuid4().hex[:12]
        with self.registry_lock:
            if session_id in self.sessions or self.store.session_path(session_id).exists():
                raise SessionError(409, f"session {session_id!r} already exists")
            session = self._build_session(session_id, room, pose, strategy, seed,
                                          created_at=now if now is not None else time.time())
            self.sessions[session_id] = session
        self._emit(session, "session_created", {
            "session_id": session_id,
            "room": room.to_dict(),
            "user_pose": pose.to_dict(),
            "strategy": strategy,
            "seed": seed,
            "created_at": session.created_at,
            "k": self.k,
            "grid": self.grid.to_dict(),
        })
        self._drain_sampler_events(session)
        return session

    def _build_session(self, session_id, room, pose, strategy, seed, created_at) -> Session:
        try:
            sampler = atl.init_session(
                room, pose, self.grid, strategy,
                self.training_sample if strategy == "atl" else [],
                seed=seed, k=self.k,
            )
        except (GeometryError, ValueError) as exc:
            raise SessionError(400, f"cannot initialize sampler: {exc}") from exc
        return Session(
            session_id=session_id, room=room, user_pose=pose, strategy=strategy,
            seed=seed, created_at=created_at, sampler=sampler, k=self.k,
        )

    def get_session(self, session_id: str) -> Session:
        with self.registry_lock:
            session = self.sessions.get(session_id)
            if session is not None:
                return session
            events = self.store.read_events(session_id)
            if not events:
                raise SessionError(404, f"unknown session {session_id!r}")
            session = self._replay(events)
            self.sessions[session_id] = session
            return session

    # -- approach state machine ---------------------------------------------

    def _next_approach_params(self, session: Session):
        if not session.queue:
            if session.strategy == "atl":
                selection = atl.next_selection(session.sampler)
                session.queue = list(zip(selection.angles, selection.start_positions,
                                         selection.start_distances))
            else:
                selection = atl.random_selection(
                    session.sampler.grid, 1, session.sampler.rng,
                    room=session.room, user_pose=session.user_pose)
                session.queue = list(zip(selection.angles, selection.start_positions,
                                         selection.start_distances))
            session.served_in_batch = 0
        return session.queue.pop(0)

    def start_approach(self, session_id: str, now=None) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            if session.pending is not None:
                raise SessionError(409, "an approach is already pending; record its stop first")
            angle, start_pos, start_dist = self._next_approach_params(session)
            record = ApproachRecord(
                approach_id=f"a{len(session.approaches):04d}",
                angle=float(angle),
                start_position=tuple(start_pos),
                start_distance=float(start_dist),
                dialogue_index=session.dialogue_cursor % len(self.dialogue),
                started_ts=now if now is not None else time.time(),
            )
            session.dialogue_cursor += 1
            session.approaches.append(record)
            session.pending = record
            self._drain_sampler_events(session)
            self._emit(session, "approach_started", {
                "approach_id": record.approach_id,
                "angle": record.angle,
                "start_position": list(record.start_position),
                "start_distance": record.start_distance,
                "dialogue_index": record.dialogue_index,
                "ts": record.started_ts,
            })
            return self._approach_payload(record)

    def _approach_payload(self, record: ApproachRecord) -> dict:
        item = self.dialogue[record.dialogue_index]
        return {
            "approach_id": record.approach_id,
            "angle": record.angle,
            "start_position": list(record.start_position),
            "start_distance": record.start_distance,
            "speed_mps": self.speed_mps,
            "dialogue": item,
        }

    def record_stop(self, session_id: str, approach_id: str, stop_distance: float,
                    answer_index: int, now=None) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            if session.pending is None:
                raise SessionError(409, "no approach is pending")
            if session.pending.approach_id != approach_id:
                raise SessionError(409, f"stale approach_id {approach_id!r}")
            if not isinstance(answer_index, int) or answer_index not in (0, 1):
                raise SessionError(400, "answer_index must be 0 or 1")
            record = session.pending
            if not 0.0 < stop_distance <= record.start_distance:
                raise SessionError(
                    400, f"stop_distance must lie in (0, {record.start_distance}]")
            item = self.dialogue[record.dialogue_index]
            record.stop_distance = float(stop_distance)
            record.answer_index = answer_index
            record.response = item["responses"][answer_index]
            record.stopped_ts = now if now is not None else time.time()
            atl.record_stop(session.sampler, record.angle, record.stop_distance)
            session.served_in_batch += 1
            retrained = False
            if session.strategy == "atl" and not session.queue:
                atl.retrain(session.sampler)
                session.sampler.rounds_completed += 1
                retrained = True
            session.pending = None
            self._drain_sampler_events(session)
            self._emit(session, "approach_stopped", {
                "approach_id": record.approach_id,
                "stop_distance": record.stop_distance,
                "answer_index": answer_index,
                "response": record.response,
                "retrained": retrained,
                "ts": record.stopped_ts,
            })
            return {"robot_response": record.response}

    # -- model operations ----------------------------------------------------

    def run_fine_tune(self, session_id: str) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            labeled = session.sampler.labeled
            if not labeled or session.stops_recorded == 0:
                raise SessionError(409, "no recorded stops to fine-tune on")
            perm = np.random.default_rng(session.seed + 9999).permutation(len(labeled))
            n_held_out = max(1, int(round(HELD_OUT_FRACTION * len(labeled))))
            held_out = [labeled[i] for i in perm[:n_held_out]]
            train_part = [labeled[i] for i in perm[n_held_out:]] or held_out
            tuned = fine_tune(self.base_model, train_part, seed=session.seed)
            result = {
                "pre_mae": evaluate_mae(self.base_model, held_out),
                "post_mae": evaluate_mae(tuned, held_out),
                "model_ref": self.store.model_path(session_id).name,
                "n_train": len(train_part),
                "n_held_out": len(held_out),
            }
            self.store.model_path(session_id).write_text(json.dumps(model_to_dict(tuned)))
            session.fine_tuned = tuned
            session.fine_tune_result = result
            self._emit(session, "finetuned", dict(result))
            return result

    def heatmap(self, session_id: str, resolution: int) -> dict:
        session = self.get_session(session_id)
        if not MIN_RESOLUTION <= resolution <= MAX_RESOLUTION:
            raise SessionError(
                400, f"resolution must lie in [{MIN_RESOLUTION}, {MAX_RESOLUTION}]")
        with session.lock:
            model = session.fine_tuned or self.base_model
            xmin, ymin, xmax, ymax = session.room.bounding_box
            xs = xmin + (np.arange(resolution) + 0.5) * (xmax - xmin) / resolution
            ys = ymin + (np.arange(resolution) + 0.5) * (ymax - ymin) / resolution
            gx, gy = np.meshgrid(xs, ys)
            flat_x, flat_y = gx.ravel(), gy.ravel()
            inside = session.room.contains(flat_x, flat_y)
            cells = np.full(flat_x.shape, np.nan)
            idx, X = _robot_at_cell_features(session.room, session.user_pose,
                                             flat_x, flat_y, inside)
            if idx.size:
                cells[idx] = np.clip(predict_batch(model, X, smooth=True), 0.0, 100.0)
            grid = [
                [None if np.isnan(v) else float(v) for v in row]
                for row in cells.reshape(resolution, resolution)
            ]
            return {
                "resolution": resolution,
                "bbox": [xmin, ymin, xmax, ymax],
                "model": "fine-tuned" if session.fine_tuned is not None else "base",
                "cells": grid,
            }

    # -- export / import / replay ---------------------------------------------

    def export_session(self, session_id: str) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            events = self.store.read_events(session_id)
            model_doc = None
            model_path = self.store.model_path(session_id)
            if model_path.exists():
                model_doc = json.loads(model_path.read_text())
            return {
                "session_id": session_id,
                "events": events,
                "model_ref": model_path.name if model_doc is not None else None,
                "model": model_doc,
            }

    def import_session(self, export_doc: dict) -> Session:
        session_id = export_doc["session_id"]
        events = export_doc["events"]
        if not events:
            raise SessionError(400, "export document has no events")
        with self.registry_lock:
            if session_id in self.sessions or self.store.session_path(session_id).exists():
                raise SessionError(409, f"session {session_id!r} already exists")
            path = self.store.session_path(session_id)
            with path.open("w") as fh:
                for ev in events:
                    fh.write(json.dumps(ev) + "\n")
            if export_doc.get("model") is not None:
                self.store.model_path(session_id).write_text(json.dumps(export_doc["model"]))
            try:
                session = self._replay(events)
            except Exception:
                path.unlink(missing_ok=True)
                self.store.model_path(session_id).unlink(missing_ok=True)
                raise
            self.sessions[session_id] = session
            return session

    def _replay(self, events: list[dict]) -> Session:
        """Rebuild a session by re-running the deterministic logic against the
        logged inputs, verifying the log's recorded outputs along the way."""
        created = events[0]
        if created["event"] != "session_created":
            raise SessionError(400, "corrupt log: first event is not session_created")
        data = created["data"]
        room = RoomPolygon.from_dict(data["room"])
        pose = Pose2D.from_dict(data["user_pose"])
        session = self._build_session(data["session_id"], room, pose,
                                      data["strategy"], data["seed"], data["created_at"])
        session.sampler.events.clear()
        session.seq = len(events)
        for ev in events:
            kind, d = ev["event"], ev["data"]
            if kind == "approach_started":
                angle, start_pos, start_dist = self._next_approach_params(session)
                if abs(angle - d["angle"]) > 1e-9:
                    raise SessionError(500, f"replay mismatch at {d['approach_id']}: "
                                            f"angle {angle} != logged {d['angle']}")
                record = ApproachRecord(
                    approach_id=d["approach_id"], angle=d["angle"],
                    start_position=tuple(d["start_position"]),
                    start_distance=d["start_distance"],
                    dialogue_index=d["dialogue_index"], started_ts=d["ts"],
                )
                session.dialogue_cursor += 1
                session.approaches.append(record)
                session.pending = record
            elif kind == "approach_stopped":
                record = session.pending
                if record is None or record.approach_id != d["approach_id"]:
                    raise SessionError(500, "corrupt log: stop without matching approach")
                record.stop_distance = d["stop_distance"]
                record.answer_index = d["answer_index"]
                record.response = d["response"]
                record.stopped_ts = d["ts"]
                atl.record_stop(session.sampler, record.angle, record.stop_distance)
                session.served_in_batch += 1
                if d.get("retrained"):
                    atl.retrain(session.sampler)
                    session.sampler.rounds_completed += 1
                session.pending = None
            elif kind == "finetuned":
                model_path = self.store.model_path(session.session_id)
                if model_path.exists():
                    session.fine_tuned = model_from_dict(json.loads(model_path.read_text()))
                session.fine_tune_result = dict(d)
            session.sampler.events.clear()
        return session


def _facing(user_pose: Pose2D, x: float, y: float) -> float:
    return normalize_angle(math.atan2(user_pose.y - y, user_pose.x - x))


def _robot_at_cell_features(room: RoomPolygon, user_pose: Pose2D,
                            xs: np.ndarray, ys: np.ndarray,
                            inside: np.ndarray):
    """Feature rows for a robot standing at each interior cell facing the
    user, built with the batch kernels (the per-request hot path).

    Returns (kept indices into xs/ys, N x 14 feature matrix). Matches
    geometry.extract_features: facing the user means the relative heading is
    bearing + pi, so its encodings are the negated bearing encodings.
    """
    from . import _kernels
    from .geometry import EPS_POS, _boundary_distances_batch

    dx = xs - user_pose.x
    dy = ys - user_pose.y
    dist = np.hypot(dx, dy)
    keep = inside & (dist >= EPS_POS)
    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        return idx, np.empty((0, 14))
    dx, dy, dist = dx[idx], dy[idx], dist[idx]
    ch, sh = math.cos(user_pose.heading), math.sin(user_pose.heading)
    bearing = np.arctan2(-sh * dx + ch * dy, ch * dx + sh * dy)
    hr_sin, hr_cos = np.sin(bearing), np.cos(bearing)
    h_n, h_s, h_w, h_e = _boundary_distances_batch(
        np.array([user_pose.x]), np.array([user_pose.y]), room)[0]
    robot_rays = _kernels.ray_distances(
        np.ascontiguousarray(xs[idx]), np.ascontiguousarray(ys[idx]),
        room.vertices[:, 0], room.vertices[:, 1])
    n = idx.size
    X = np.column_stack([
        dist, hr_sin, hr_cos, -hr_sin, -hr_cos,
        np.full(n, h_n), np.full(n, h_s), np.full(n, h_w), np.full(n, h_e),
        robot_rays[:, 0], robot_rays[:, 1], robot_rays[:, 2], robot_rays[:, 3],
        np.full(n, room.area),
    ])
    return idx, X


def create_app(base_model: ProxemicsNetwork, dialogue: list[dict], store_dir,
               training_sample=None, grid: atl.SamplerGrid | None = None,
               k: int = 3, static_dir=None) -> FastAPI:
    manager = SessionManager(base_model, dialogue, SessionStore(store_dir),
                             grid=grid, k=k, training_sample=training_sample)
    app = FastAPI(title="proxilab session service")
    app.state.manager = manager

    @app.exception_handler(HTTPException)
    async def _http_error(request: Request, exc: HTTPException):
        return JSONResponse(status_code=exc.status_code,
                            content={"code": exc.status_code, "message": str(exc.detail)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(manager.sessions)}

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        try:
            session = manager.create_session(
                body["room"], body["user_pose"], body.get("strategy", "atl"),
                int(body.get("seed", 0)), session_id=body.get("session_id"))
        except KeyError as exc:
            raise SessionError(400, f"missing field {exc}") from exc
        return {"session_id": session.session_id}

    @app.get("/sessions/{session_id}/next")
    def next_approach(session_id: str):
        return manager.start_approach(session_id)

    @app.post("/sessions/{session_id}/stop")
    def stop(session_id: str, body: dict):
        try:
            approach_id = body["approach_id"]
            stop_distance = float(body["stop_distance"])
            answer_index = body["answer_index"]
        except (KeyError, TypeError, ValueError) as exc:
            raise SessionError(400, f"invalid stop payload: {exc}") from exc
        return manager.record_stop(session_id, approach_id, stop_distance, answer_index)

    @app.post("/sessions/{session_id}/finetune")
    def finetune(session_id: str):
        return manager.run_fine_tune(session_id)

    @app.get("/sessions/{session_id}/heatmap")
    def heatmap(session_id: str, resolution: int = 64):
        return manager.heatmap(session_id, resolution)

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str):
        return manager.export_session(session_id)

    @app.post("/sessions/import", status_code=201)
    def import_session(body: dict):
        session = manager.import_session(body)
        return {"session_id": session.session_id}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
