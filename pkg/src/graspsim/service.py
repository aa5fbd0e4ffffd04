"""Interactive grasp-manipulation session server.

JSON control messages over a websocket; displacement payloads ride as
base64 little-endian float32 so a 10k-node frame stays ~120 KB.

Protocol, client -> server:
    {"t": "hello"}
    {"t": "set_mode", "mode": "kelvinlet" | "neural" | "fem"}
    {"t": "set_grasps", "grasps": [{"node": int, "u": [x, y, z]}, ...]}
    {"t": "clear"}
server -> client:
    {"t": "mesh", ...}
    {"t": "field", "seq": int, "mode": str, "u_b64": str, "compute_ms": float, ...}
    {"t": "progress", "seq": int, "stage": str}
    {"t": "err", "code": int, "msg": str}

Per session, grasp updates are single-flight: while one field is being
computed, newer set_grasps overwrite the pending request, so only the
newest state is ever answered.
"""

from __future__ import annotations

import asyncio
import base64
import json
import time

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import fem, kelvinlet, metrics, neural
from .kelvinlet import Grasp, KelvinletParams
from .mesh import TetMesh

MAX_GRASPS = 2

ERR_BAD_MODE = 100
ERR_BAD_GRASPS = 101
ERR_NO_CKPT = 102
ERR_SOLVER = 103
ERR_BAD_MESSAGE = 104


def encode_field(u: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(u, dtype="<f4").tobytes()).decode()


def decode_field(b64: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(b64), dtype="<f4").reshape(-1, 3)


class Session:
    """Single-writer session state with single-flight compute."""

    def __init__(self, app_state, ws: WebSocket):
        self.state = app_state
        self.ws = ws
        self.mode = "kelvinlet"
        self.seq = 0
        self.pending: tuple[int, list[Grasp]] | None = None
        self.wake = asyncio.Event()
        self.closed = False
        self.latency_ms: list[float] = []
        self.last_field: tuple[str, str, np.ndarray] | None = None  # mode, grasps key, u

    async def worker(self):
        """Answers only the newest pending grasp state."""
        while not self.closed:
            await self.wake.wait()
            self.wake.clear()
            while self.pending is not None:
                seq, grasps = self.pending
                self.pending = None
                mode = self.mode
                if mode == "fem":
                    await self.ws.send_text(
                        json.dumps({"t": "progress", "seq": seq, "stage": "fem-solve",
                                    "realtime": False})
                    )
                t0 = time.perf_counter()
                try:
                    u = await asyncio.to_thread(
                        compute_field, self.state, mode, grasps
                    )
                except (fem.FemError, kelvinlet.KelvinletError, neural.NeuralError) as e:
                    await self.ws.send_text(
                        json.dumps({"t": "err", "code": ERR_SOLVER, "msg": str(e)})
                    )
                    continue
                ms = (time.perf_counter() - t0) * 1000.0
                if self.pending is not None and self.pending[0] > seq:
                    continue  # stale: a newer request arrived while computing
                self.latency_ms.append(ms)
                reply = {
                    "t": "field",
                    "seq": seq,
                    "mode": mode,
                    "u_b64": encode_field(u),
                    "compute_ms": ms,
                    "realtime": mode != "fem",
                }
                # after a mode switch on unchanged grasps, report how well the
                # new backend captures the previous one's field
                key = json.dumps([[g.node_index, g.displacement.tolist()] for g in grasps])
                if self.last_field is not None:
                    prev_mode, prev_key, prev_u = self.last_field
                    if prev_mode != mode and prev_key == key:
                        w = self.state.mesh.lumped_volume
                        denom = metrics.field_norm(u, w)
                        if denom > 0:
                            reply["dcm_vs_prev_mode"] = 100.0 * (
                                1.0 - metrics.field_norm(prev_u - u, w) / denom
                            )
                self.last_field = (mode, key, u)
                await self.ws.send_text(json.dumps(reply))


class AppState:
    def __init__(self, mesh: TetMesh, net: neural.NetworkParams | None,
                 params: KelvinletParams | None = None,
                 material: fem.MaterialParams | None = None):
        self.mesh = mesh
        self.net = net
        self.kelvinlet = params or KelvinletParams()
        self.material = material or fem.MaterialParams(
            model=fem.Model.LINEAR, mu=690.0, nu=0.45
        )


def compute_field(state: AppState, mode: str, grasps: list[Grasp]) -> np.ndarray:
    """Exactly the library call the CLI paths use; the service adds nothing."""
    if not grasps or all(np.linalg.norm(g.displacement) == 0 for g in grasps):
        if mode != "neural" or state.net is None:
            return np.zeros((state.mesh.n_nodes, 3))
    if mode == "kelvinlet":
        return kelvinlet.grasp_field(state.mesh, grasps, state.kelvinlet)
    if mode == "neural":
        if state.net is None:
            raise neural.NeuralError("no checkpoint loaded")
        return neural.predict(state.net, state.mesh, grasps)
    if mode == "fem":
        bc = fem.fixed_region_bc(
            state.mesh, {g.node_index: g.displacement for g in grasps}
        )
        return fem.solve_linear(state.mesh, state.material, bc)
    raise ValueError(f"unknown mode {mode!r}")


def create_app(mesh: TetMesh, net: neural.NetworkParams | None = None,
               params: KelvinletParams | None = None) -> FastAPI:
    app = FastAPI()
    state = AppState(mesh, net, params)
    app.state.graspsim = state

    @app.websocket("/session")
    async def session(ws: WebSocket):
        await ws.accept()
        sess = Session(state, ws)
        worker = asyncio.create_task(sess.worker())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send_text(json.dumps(
                        {"t": "err", "code": ERR_BAD_MESSAGE, "msg": "malformed JSON"}
                    ))
                    await ws.close(code=1003)  # malformed JSON closes the session
                    break
                await handle_message(sess, msg)
        except WebSocketDisconnect:
            pass
        finally:
            sess.closed = True
            worker.cancel()

    return app


async def handle_message(sess: Session, msg: dict) -> None:
    state = sess.state
    t = msg.get("t")
    if t == "hello":
        from collections import Counter

        await sess.ws.send_text(json.dumps({
            "t": "mesh",
            "nodes": state.mesh.n_nodes,
            "positions_b64": encode_field(state.mesh.nodes),
            "surface_tris": state.mesh.surface_tris.ravel().tolist(),
            "regions": dict(Counter(state.mesh.region_of_node.values())),
            "unit": "m",
            "modes": ["kelvinlet"] + (["neural"] if state.net else []) + ["fem"],
        }))
    elif t == "set_mode":
        mode = msg.get("mode")
        if mode not in ("kelvinlet", "neural", "fem"):
            await sess.ws.send_text(json.dumps(
                {"t": "err", "code": ERR_BAD_MODE, "msg": f"unknown mode {mode!r}"}
            ))
            return
        if mode == "neural" and state.net is None:
            await sess.ws.send_text(json.dumps(
                {"t": "err", "code": ERR_NO_CKPT, "msg": "no checkpoint loaded"}
            ))
            return
        sess.mode = mode
        await sess.ws.send_text(json.dumps(
            {"t": "mode", "mode": mode, "realtime": mode != "fem"}
        ))
    elif t == "set_grasps":
        try:
            raw = msg["grasps"]
            if len(raw) > MAX_GRASPS:
                raise ValueError(f"at most {MAX_GRASPS} grasps")
            grasps = [
                Grasp(
                    state.mesh.nodes[int(g["node"])],
                    np.asarray(g["u"], dtype=float),
                    node_index=int(g["node"]),
                )
                for g in raw
            ]
        except (KeyError, ValueError, TypeError, IndexError) as e:
            await sess.ws.send_text(json.dumps(
                {"t": "err", "code": ERR_BAD_GRASPS, "msg": f"bad grasps: {e}"}
            ))
            return
        sess.seq += 1
        sess.pending = (sess.seq, grasps)
        sess.wake.set()
    elif t == "clear":
        sess.seq += 1
        sess.pending = (sess.seq, [])
        sess.wake.set()
    else:
        await sess.ws.send_text(json.dumps(
            {"t": "err", "code": ERR_BAD_MESSAGE, "msg": f"unknown message {t!r}"}
        ))
