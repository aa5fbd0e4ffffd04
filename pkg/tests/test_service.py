import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from graspsim import kelvinlet, mesh as meshmod, sampling, service, shapes
from graspsim.kelvinlet import Grasp, KelvinletParams


@pytest.fixture(scope="module")
def organ_module():
    m = shapes.organ_mesh(7)
    specs = sampling.make_region_specs(4)
    return meshmod.assign_regions(
        m, specs, fixed_direction=(0.0, -1.0, 0.0), fixed_half_angle=0.5
    )


@pytest.fixture(scope="module")
def client(organ_module):
    app = service.create_app(organ_module, params=KelvinletParams(eps=0.02, lam=1e-6))
    with TestClient(app) as c:
        yield c


def recv_until(ws, kind, limit=200):
    for _ in range(limit):
        msg = json.loads(ws.receive_text())
        if msg["t"] == kind:
            return msg
    raise AssertionError(f"no {kind!r} message within {limit} messages")


def test_hello_returns_mesh_metadata(client, organ_module):
    with client.websocket_connect("/session") as ws:
        ws.send_text(json.dumps({"t": "hello"}))
        msg = recv_until(ws, "mesh")
        assert msg["nodes"] == organ_module.n_nodes
        pos = service.decode_field(msg["positions_b64"])
        np.testing.assert_allclose(
            pos, organ_module.nodes.astype(np.float32), atol=0
        )
        assert len(msg["surface_tris"]) == organ_module.surface_tris.size
        assert "kelvinlet" in msg["modes"] and "fem" in msg["modes"]


def test_set_grasps_field_matches_library(client, organ_module):
    with client.websocket_connect("/session") as ws:
        grasps = [{"node": 20, "u": [0.01, 0.0, -0.004]}]
        ws.send_text(json.dumps({"t": "set_grasps", "grasps": grasps}))
        msg = recv_until(ws, "field")
        got = service.decode_field(msg["u_b64"])
        expect = kelvinlet.grasp_field(
            organ_module,
            [Grasp(organ_module.nodes[20], np.array([0.01, 0.0, -0.004]), node_index=20)],
            KelvinletParams(eps=0.02, lam=1e-6),
        )
        assert got.tobytes() == expect.astype("<f4").tobytes()
        assert msg["mode"] == "kelvinlet"
        assert msg["realtime"] is True


def test_mode_switch_reports_cross_model_agreement(client):
    with client.websocket_connect("/session") as ws:
        grasps = [{"node": 20, "u": [0.005, 0.0, 0.0]}]
        ws.send_text(json.dumps({"t": "set_grasps", "grasps": grasps}))
        recv_until(ws, "field")
        ws.send_text(json.dumps({"t": "set_mode", "mode": "fem"}))
        recv_until(ws, "mode")
        ws.send_text(json.dumps({"t": "set_grasps", "grasps": grasps}))
        msg = recv_until(ws, "field")
        assert msg["mode"] == "fem"
        assert msg["realtime"] is False
        assert "dcm_vs_prev_mode" in msg
        assert msg["dcm_vs_prev_mode"] <= 100.0


def test_fem_mode_sends_progress_first(client):
    with client.websocket_connect("/session") as ws:
        ws.send_text(json.dumps({"t": "set_mode", "mode": "fem"}))
        recv_until(ws, "mode")
        ws.send_text(json.dumps(
            {"t": "set_grasps", "grasps": [{"node": 20, "u": [0.002, 0, 0]}]}
        ))
        msg = json.loads(ws.receive_text())
        assert msg["t"] == "progress"
        msg = json.loads(ws.receive_text())
        assert msg["t"] == "field"


def test_error_codes(client):
    with client.websocket_connect("/session") as ws:
        ws.send_text(json.dumps({"t": "set_mode", "mode": "warp"}))
        assert json.loads(ws.receive_text())["code"] == service.ERR_BAD_MODE
        ws.send_text(json.dumps({"t": "set_mode", "mode": "neural"}))
        assert json.loads(ws.receive_text())["code"] == service.ERR_NO_CKPT
        too_many = [{"node": i, "u": [0, 0, 0]} for i in (1, 2, 3)]
        ws.send_text(json.dumps({"t": "set_grasps", "grasps": too_many}))
        assert json.loads(ws.receive_text())["code"] == service.ERR_BAD_GRASPS
        ws.send_text(json.dumps({"t": "frobnicate"}))
        assert json.loads(ws.receive_text())["code"] == service.ERR_BAD_MESSAGE


def test_malformed_json_closes_session(client):
    with client.websocket_connect("/session") as ws:
        ws.send_text("{not json")
        assert json.loads(ws.receive_text())["code"] == service.ERR_BAD_MESSAGE
        with pytest.raises(Exception):
            ws.receive_text()


def test_clear_returns_zero_field(client, organ_module):
    with client.websocket_connect("/session") as ws:
        ws.send_text(json.dumps(
            {"t": "set_grasps", "grasps": [{"node": 20, "u": [0.01, 0, 0]}]}
        ))
        recv_until(ws, "field")
        ws.send_text(json.dumps({"t": "clear"}))
        msg = recv_until(ws, "field")
        u = service.decode_field(msg["u_b64"])
        assert np.abs(u).max() == 0.0


def test_rapid_updates_are_coalesced_in_fem_mode(client, organ_module):
    # fem solves take tens of milliseconds, so a burst of updates must be
    # answered by far fewer field responses, the last reflecting the final
    # grasp state
    with client.websocket_connect("/session") as ws:
        ws.send_text(json.dumps({"t": "set_mode", "mode": "fem"}))
        recv_until(ws, "mode")
        n = 20
        for i in range(n):
            u = [0.0005 * (i + 1), 0.0, 0.0]
            ws.send_text(json.dumps(
                {"t": "set_grasps", "grasps": [{"node": 20, "u": u}]}
            ))
        fields = []
        for _ in range(200):
            msg = json.loads(ws.receive_text())
            if msg["t"] == "field":
                fields.append(msg)
                if msg["seq"] == n:
                    break
        assert fields[-1]["seq"] == n
        assert len(fields) < n
        # final answer corresponds to the final grasp displacement
        u = service.decode_field(fields[-1]["u_b64"])
        np.testing.assert_allclose(
            u[20], np.array([0.0005 * n, 0.0, 0.0], dtype=np.float32), atol=1e-9
        )
