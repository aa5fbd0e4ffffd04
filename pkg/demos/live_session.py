"""Scripted interactive session: drag a node over a websocket.

Starts the session service in-process, floods it with a quick drag gesture,
and shows how the single-flight worker coalesces the updates.

Run:  python3 demos/live_session.py
"""

import json

import numpy as np
from fastapi.testclient import TestClient

from graspsim import mesh as meshmod, sampling, service, shapes
from graspsim.kelvinlet import KelvinletParams


def main():
    organ = shapes.organ_mesh(7)
    specs = sampling.make_region_specs(4)
    organ = meshmod.assign_regions(
        organ, specs, fixed_direction=(0.0, -1.0, 0.0), fixed_half_angle=0.5
    )
    app = service.create_app(organ, params=KelvinletParams(eps=0.02, lam=1e-6))

    with TestClient(app) as client, client.websocket_connect("/session") as ws:
        ws.send_text(json.dumps({"t": "hello"}))
        mesh_msg = json.loads(ws.receive_text())
        print(f"connected: {mesh_msg['nodes']} nodes, "
              f"modes {mesh_msg['modes']}")

        # switch to the (slow) fem backend and send a 40-step drag gesture
        ws.send_text(json.dumps({"t": "set_mode", "mode": "fem"}))
        json.loads(ws.receive_text())
        node = 20
        steps = 40
        for i in range(steps):
            u = [0.012 * (i + 1) / steps, 0.0, 0.0]
            ws.send_text(json.dumps(
                {"t": "set_grasps", "grasps": [{"node": node, "u": u}]}
            ))

        fields = []
        while True:
            msg = json.loads(ws.receive_text())
            if msg["t"] == "field":
                fields.append(msg)
                if msg["seq"] == steps:
                    break
        print(f"sent {steps} drag updates, received {len(fields)} fields "
              f"(coalesced away {steps - len(fields)})")
        last = service.decode_field(fields[-1]["u_b64"])
        print(f"final handle displacement {last[node].round(4)} "
              f"computed in {fields[-1]['compute_ms']:.0f} ms")


if __name__ == "__main__":
    main()
