"""Elastic brush on a ball: pull one node, then two, and look at the field.

Run:  python3 demos/brush_basics.py
"""

import numpy as np

from graspsim import kelvinlet, shapes
from graspsim.kelvinlet import Grasp, KelvinletParams


def main():
    mesh = shapes.icosphere_ball(2, radius=0.08)
    print(f"ball mesh: {mesh.n_nodes} nodes, {len(mesh.tets)} tets")

    params = KelvinletParams(nu=0.45, eps=0.02, lam=1e-6)

    # pull the north pole up by 1 cm
    top = int(np.argmax(mesh.nodes[:, 2]))
    pull = Grasp(mesh.nodes[top], np.array([0.0, 0.0, 0.01]), node_index=top)
    u = kelvinlet.grasp_field(mesh, [pull], params)
    print(f"\nsingle grasp at node {top}:")
    print(f"  handle moves {np.linalg.norm(u[top]) * 1000:.2f} mm "
          f"(requested 10.00 mm)")

    # the response falls off with distance from the handle
    dist = np.linalg.norm(mesh.nodes - mesh.nodes[top], axis=1)
    for radius in (0.02, 0.05, 0.10):
        ring = (dist > radius - 0.01) & (dist < radius + 0.01)
        if ring.any():
            mean_mm = np.linalg.norm(u[ring], axis=1).mean() * 1000
            print(f"  mean response {mean_mm:5.2f} mm at ~{radius * 100:.0f} cm away")

    # two opposing grasps: the solve balances both handles at once
    bottom = int(np.argmin(mesh.nodes[:, 2]))
    squeeze = [
        Grasp(mesh.nodes[top], np.array([0.0, 0.0, -0.005]), node_index=top),
        Grasp(mesh.nodes[bottom], np.array([0.0, 0.0, 0.005]), node_index=bottom),
    ]
    sol = kelvinlet.solve_coefficients(squeeze, params)
    u2 = kelvinlet.eval_field(mesh, sol)
    print(f"\ntwo-grasp squeeze (coefficients {sol.coefficients.round(4)}):")
    print(f"  top handle     {u2[top].round(5)}")
    print(f"  bottom handle  {u2[bottom].round(5)}")
    equator = np.abs(mesh.nodes[:, 2]) < 0.01
    bulge = np.linalg.norm(u2[equator, :2], axis=1).max() * 1000
    print(f"  max sideways bulge at the equator: {bulge:.2f} mm")


if __name__ == "__main__":
    main()
