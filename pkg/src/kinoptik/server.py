"""Web viewer backend: live re-solving over a WebSocket protocol.

One solver worker thread owns the optimization state; connection handlers
only pass messages. Client edits (weight changes, target drags, obstacle
moves) are queued; the worker drains every pending edit, applies them in
order, runs one warm-started solve, and broadcasts a single state message.
That drop-intermediate policy bounds latency during slider scrubbing while
guaranteeing the final value of every edited field is reflected in some
state message.

Protocol (JSON text frames, versioned "v": 1):
  client -> server: {"type": "set_weight", "name": ..., "value": ...}
                    {"type": "set_target", "pose": {"wxyz": ..., "pos": ...}}
                    {"type": "move_obstacle", "index": ..., "pose": {...}}
                    {"type": "reset"}      restore the initial session state
                    {"type": "reseed"}     full multi-seed IK from scratch
  server -> client: {"type": "model", ...}   once per connection
                    {"type": "state", ...}   after every solve
                    {"type": "error", "detail": ...}   connection stays open
"""

from __future__ import annotations

import asyncio
import itertools
import json
import os
import queue
import threading
import time
import xml.etree.ElementTree as ET

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, HTMLResponse
from fastapi.staticfiles import StaticFiles

from . import costs as ck
from .collision import WorldModel, transform_primitive
from .liegroups import Transform3
from .robot import RobotModel, fk_arrays, link_transform, load_robot
from .solver import Problem, SolveOptions, SolveReport, VariableSet, solve
from .tasks import IkRequest, solve_ik_beam

WARM_SOLVE_OPTIONS = SolveOptions(
    max_iterations=50, gradient_tolerance=1e-12, step_tolerance=1e-14
)


def viewer_costs(
    model: RobotModel,
    link: str,
    weights: ck.CostWeights,
    target: Transform3,
    world: WorldModel,
    include_zero_weight: bool = True,
):
    """The interactive-solve cost set; zero-weight terms may be kept or dropped."""
    entries = []

    def want(value):
        return include_zero_weight or value > 0.0

    if want(weights.pose_position) or want(weights.pose_orientation):
        entries.append(
            (
                "pose",
                ck.pose_cost(
                    model, "q", link, target,
                    position_weight=weights.pose_position,
                    orientation_weight=weights.pose_orientation,
                ),
            )
        )
    if want(weights.limit):
        entries.append(("limit", ck.limit_cost(model, "q", weight=weights.limit)))
    if want(weights.rest):
        entries.append(("rest", ck.rest_cost("q", model.rest_pose, weight=weights.rest)))
    if weights.manipulability > 0.0:
        entries.append(
            (
                "manipulability",
                ck.manipulability_cost(model, "q", link, weight=weights.manipulability),
            )
        )
    if world.obstacles and want(weights.world_collision):
        entries.append(
            (
                "world_collision",
                ck.world_collision_cost(model, "q", world, weight=weights.world_collision),
            )
        )
    if model.self_collision_pairs and weights.self_collision > 0.0:
        entries.append(
            (
                "self_collision",
                ck.self_collision_cost(model, "q", weight=weights.self_collision),
            )
        )
    return entries


def viewer_solve(
    model: RobotModel,
    link: str,
    weights: ck.CostWeights,
    target: Transform3,
    world: WorldModel,
    q0: np.ndarray,
    include_zero_weight: bool = True,
) -> tuple[np.ndarray, SolveReport, dict]:
    """One warm-started solve; returns (q, report, per-family cost breakdown)."""
    entries = viewer_costs(model, link, weights, target, world, include_zero_weight)
    problem = Problem(VariableSet.of(q=q0.copy()), [cost for _, cost in entries])
    report = solve(problem, WARM_SOLVE_OPTIONS)
    q = report.final_values.value("q")
    breakdown = {}
    for family, cost in entries:
        r = cost.weight * cost.raw_residual([q])
        breakdown[family] = float(r @ r)
    return q, report, breakdown


def _parse_visuals(urdf_text: str) -> dict:
    """Box/cylinder/sphere <visual> primitives per link, for client rendering."""
    out = {}
    root = ET.fromstring(urdf_text)
    for link in root.findall("link"):
        shapes = []
        for vis in link.findall("visual"):
            origin = vis.find("origin")
            xyz = (origin.get("xyz", "0 0 0") if origin is not None else "0 0 0").split()
            rpy = (origin.get("rpy", "0 0 0") if origin is not None else "0 0 0").split()
            geom = vis.find("geometry")
            if geom is None:
                continue
            entry = {"origin_xyz": [float(v) for v in xyz], "origin_rpy": [float(v) for v in rpy]}
            if (box := geom.find("box")) is not None:
                entry.update(kind="box", size=[float(v) for v in box.get("size").split()])
            elif (cyl := geom.find("cylinder")) is not None:
                entry.update(
                    kind="cylinder", radius=float(cyl.get("radius")), length=float(cyl.get("length"))
                )
            elif (sph := geom.find("sphere")) is not None:
                entry.update(kind="sphere", radius=float(sph.get("radius")))
            else:
                continue
            shapes.append(entry)
        if shapes:
            out[link.get("name")] = shapes
    return out


class ViewerSession:
    """Owns the optimization state and the solver worker thread."""

    def __init__(
        self,
        model: RobotModel,
        link: str,
        urdf_text: str = "",
        world: WorldModel | None = None,
        weights: ck.CostWeights | None = None,
        target: Transform3 | None = None,
    ):
        self.model = model
        self.link = link
        self.visuals = _parse_visuals(urdf_text) if urdf_text else {}
        self._initial_world = world or WorldModel()
        self._initial_weights = weights or ck.CostWeights()
        self._initial_target = target or link_transform(model, model.rest_pose, link)

        self.weights = ck.CostWeights.from_json(self._initial_weights.to_json())
        self.world = WorldModel(list(self._initial_world.obstacles))
        self.target = self._initial_target
        self.q = model.rest_pose.copy()

        self._edits: queue.Queue = queue.Queue()
        self._clients: dict[int, callable] = {}
        self._client_ids = itertools.count()
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._worker = threading.Thread(target=self._run, daemon=True)

        self._last_stats = {"iterations": 0, "final_cost": 0.0, "ms": 0.0}
        self._breakdown: dict = {}
        self._solve_once()
        self._worker.start()

    # -- client registry ----------------------------------------------------

    def register(self, push) -> int:
        with self._lock:
            client_id = next(self._client_ids)
            self._clients[client_id] = push
        return client_id

    def unregister(self, client_id: int):
        with self._lock:
            self._clients.pop(client_id, None)

    def _broadcast(self, message: dict):
        with self._lock:
            pushes = list(self._clients.values())
        for push in pushes:
            push(message)

    # -- protocol data ------------------------------------------------------

    def model_message(self) -> dict:
        return {
            "type": "model",
            "v": 1,
            "links": self.model.link_names,
            "target_link": self.link,
            "visuals": self.visuals,
            "collision_spheres": {
                link: [{"center": s.center.tolist(), "radius": s.radius} for s in spheres]
                for link, spheres in self.model.collision_spheres.items()
            },
        }

    def state_message(self) -> dict:
        quat, pos, _, _ = fk_arrays(self.model, self.q)
        link_poses = {
            name: {"wxyz": quat[i].tolist(), "pos": pos[i].tolist()}
            for i, name in enumerate(self.model.link_names)
        }
        from .robot import link_jacobian

        jac = link_jacobian(self.model, self.q, self.link)[:3]
        eigenvalues, axes = np.linalg.eigh(jac @ jac.T)
        return {
            "type": "state",
            "v": 1,
            "q": self.q.tolist(),
            "link_poses": link_poses,
            "weights": self.weights.to_json(),
            "target_pose": self.target.to_json(),
            "obstacles": self.world.to_json(),
            "cost_breakdown": self._breakdown,
            "solve_stats": self._last_stats,
            "manipulability": {
                "eigenvalues": eigenvalues.tolist(),
                "axes": axes.T.tolist(),
            },
        }

    # -- edits ---------------------------------------------------------------

    def validate(self, msg) -> str | None:
        """Returns an error detail for malformed messages, None when valid."""
        if not isinstance(msg, dict) or "type" not in msg:
            return "message must be an object with a 'type' field"
        kind = msg["type"]
        if kind == "set_weight":
            if msg.get("name") not in ck.CostWeights.names():
                return f"unknown weight name {msg.get('name')!r}"
            if not isinstance(msg.get("value"), (int, float)) or msg["value"] < 0:
                return "weight value must be a nonnegative number"
        elif kind == "set_target":
            pose = msg.get("pose")
            if not isinstance(pose, dict) or "wxyz" not in pose or "pos" not in pose:
                return "set_target needs a pose with wxyz and pos"
        elif kind == "move_obstacle":
            index = msg.get("index")
            if not isinstance(index, int) or not 0 <= index < len(self._initial_world.obstacles):
                return f"obstacle index {index!r} out of range"
            pose = msg.get("pose")
            if not isinstance(pose, dict) or "wxyz" not in pose or "pos" not in pose:
                return "move_obstacle needs a pose with wxyz and pos"
        elif kind not in ("reset", "reseed"):
            return f"unknown message type {kind!r}"
        return None

    def submit(self, msg: dict):
        self._edits.put(msg)

    def _apply(self, msg: dict):
        kind = msg["type"]
        if kind == "set_weight":
            setattr(self.weights, msg["name"], float(msg["value"]))
        elif kind == "set_target":
            self.target = Transform3.from_json(msg["pose"])
        elif kind == "move_obstacle":
            pose = Transform3.from_json(msg["pose"])
            original = self._initial_world.obstacles[msg["index"]]
            self.world.obstacles[msg["index"]] = transform_primitive(pose, original)
        elif kind == "reset":
            self.weights = ck.CostWeights.from_json(self._initial_weights.to_json())
            self.world = WorldModel(list(self._initial_world.obstacles))
            self.target = self._initial_target
            self.q = self.model.rest_pose.copy()
        elif kind == "reseed":
            result = solve_ik_beam(
                IkRequest(
                    model=self.model,
                    target_link=self.link,
                    target_pose=self.target,
                    weights=self.weights,
                )
            )
            self.q = result.q

    def _solve_once(self):
        start = time.perf_counter()
        q, report, breakdown = viewer_solve(
            self.model, self.link, self.weights, self.target, self.world, self.q
        )
        self.q = q
        self._breakdown = breakdown
        self._last_stats = {
            "iterations": report.iterations_run,
            "final_cost": report.final_cost,
            "ms": (time.perf_counter() - start) * 1e3,
        }

    def _run(self):
        while not self._stop.is_set():
            try:
                first = self._edits.get(timeout=0.1)
            except queue.Empty:
                continue
            pending = [first]
            while True:
                try:
                    pending.append(self._edits.get_nowait())
                except queue.Empty:
                    break
            # apply every pending edit in arrival order, then solve once:
            # intermediates are dropped, final values always land in a state
            for msg in pending:
                self._apply(msg)
            self._solve_once()
            self._broadcast(self.state_message())

    def close(self):
        self._stop.set()
        self._worker.join(timeout=2.0)


_FALLBACK_PAGE = """<!doctype html>
<html><head><title>kinoptik viewer</title></head>
<body style="font-family: sans-serif; margin: 3em;">
<h1>kinoptik viewer backend</h1>
<p>The WebSocket endpoint is live at <code>/ws</code>, but the viewer frontend
bundle was not found. Build it with:</p>
<pre>cd frontend && npm install && npm run build</pre>
<p>then restart, or set <code>KINOPTIK_VIEWER_DIST</code> to the build directory.</p>
</body></html>"""


def find_frontend_dist() -> str | None:
    env = os.environ.get("KINOPTIK_VIEWER_DIST")
    candidates = [env] if env else []
    here = os.path.dirname(os.path.abspath(__file__))
    candidates.append(os.path.join(here, "..", "..", "frontend", "dist"))
    candidates.append(os.path.join(os.getcwd(), "frontend", "dist"))
    for cand in candidates:
        if cand and os.path.isfile(os.path.join(cand, "index.html")):
            return os.path.abspath(cand)
    return None


def create_app(session: ViewerSession, static_dir: str | None = None):
    app = FastAPI(title="kinoptik viewer")
    app.state.session = session
    static_dir = static_dir or find_frontend_dist()

    @app.get("/")
    async def index():
        if static_dir:
            return FileResponse(os.path.join(static_dir, "index.html"))
        return HTMLResponse(_FALLBACK_PAGE)

    if static_dir:
        # vite emits hashed bundles under <dist>/assets with base "/assets/"
        assets = os.path.join(static_dir, "assets")
        if os.path.isdir(assets):
            app.mount("/assets", StaticFiles(directory=assets), name="assets")

    @app.websocket("/ws")
    async def ws(websocket: WebSocket):
        await websocket.accept()
        loop = asyncio.get_running_loop()
        outbound: asyncio.Queue = asyncio.Queue()
        client_id = session.register(
            lambda msg: loop.call_soon_threadsafe(outbound.put_nowait, msg)
        )

        async def pump():
            while True:
                await websocket.send_json(await outbound.get())

        sender = asyncio.create_task(pump())
        try:
            # reconnects get the current state verbatim (session is the truth)
            await websocket.send_json(session.model_message())
            await websocket.send_json(session.state_message())
            while True:
                raw = await websocket.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await websocket.send_json({"type": "error", "detail": "invalid JSON"})
                    continue
                detail = session.validate(msg)
                if detail is not None:
                    await websocket.send_json({"type": "error", "detail": detail})
                    continue
                session.submit(msg)
        except WebSocketDisconnect:
            pass
        finally:
            session.unregister(client_id)
            sender.cancel()

    return app


def serve(urdf: str, sidecar: str | None, link: str | None, host: str, port: int, task: str):
    import uvicorn

    model = load_robot(urdf, sidecar)
    with open(urdf) as f:
        urdf_text = f.read()
    session = ViewerSession(model, link or model.link_names[-1], urdf_text=urdf_text)
    app = create_app(session)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        session.close()
