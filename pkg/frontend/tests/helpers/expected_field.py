"""Direct library computation of a grasp field, printed as base64 f32.

This is the oracle the e2e test compares websocket replies against: the same
call the server makes, performed without the server.

Usage: python3 expected_field.py MESH_PATH MODE NODE U_JSON
"""

import json
import sys

import numpy as np

from graspsim import fem, kelvinlet, mesh as meshmod, service
from graspsim.kelvinlet import Grasp, KelvinletParams


def main():
    mesh_path, mode, node, u_json = sys.argv[1:5]
    m = meshmod.load_mesh(mesh_path)
    node = int(node)
    u = np.asarray(json.loads(u_json), dtype=float)
    if mode == "kelvinlet":
        g = Grasp(m.nodes[node], u, node_index=node)
        field = kelvinlet.grasp_field(m, [g], KelvinletParams())
    elif mode == "fem":
        mat = fem.MaterialParams(model=fem.Model.LINEAR, mu=690.0, nu=0.45)
        field = fem.solve_linear(m, mat, fem.fixed_region_bc(m, {node: u}))
    else:
        raise SystemExit(f"unknown mode {mode}")
    print(service.encode_field(field))


if __name__ == "__main__":
    main()
