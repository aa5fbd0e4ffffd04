"""Finite element ground truth: gravity preload, then a grasp pull.

Solves the hyperelastic organ model twice (with and without the grasp) and
compares against the linear model and the analytic brush.

Run:  python3 demos/ground_truth.py
"""

import numpy as np

from graspsim import fem, kelvinlet, mesh as meshmod, metrics, sampling, shapes
from graspsim.kelvinlet import Grasp, KelvinletParams


def main():
    organ = shapes.organ_mesh(7)
    specs = sampling.make_region_specs(4)
    organ = meshmod.assign_regions(
        organ, specs, fixed_direction=(0.0, -1.0, 0.0), fixed_half_angle=0.9
    )
    n_fixed = sum(1 for r in organ.region_of_node.values() if r == "fixed")
    print(f"organ mesh: {organ.n_nodes} nodes, {len(organ.tets)} tets, "
          f"{n_fixed} anchored")

    mat = fem.MaterialParams(
        model=fem.Model.MOONEY_RIVLIN, c10=1620.0, c01=1970.0, nu=0.45,
        rho=1000.0, gravity=(0.0, -9.81, 0.0),
    )

    # gravity preload alone
    rep = fem.SolverReport()
    u_g = fem.solve_nonlinear(organ, mat, fem.fixed_region_bc(organ, {}), report=rep)
    print(f"\ngravity preload: sag {-u_g[:, 1].min() * 1000:.2f} mm, "
          f"{rep.newton_steps} Newton steps, {rep.wall_time_s:.1f} s")

    # add a 1.5 cm pull at the node furthest from the anchor
    node = max(
        (n for n, r in organ.region_of_node.items() if r != "fixed"),
        key=lambda n: organ.nodes[n][1],
    )
    drag = np.array([0.008, 0.010, -0.006])
    bc = fem.fixed_region_bc(organ, {node: drag})
    rep = fem.SolverReport()
    u = fem.solve_nonlinear(organ, mat, bc, report=rep)
    print(f"grasp at node {node}, |u_s| = {np.linalg.norm(drag) * 1000:.1f} mm: "
          f"{rep.newton_steps} Newton steps, {rep.wall_time_s:.1f} s")
    print(f"  load-step energies: "
          f"{[round(e, 5) for e in rep.notes['increment_energies']]}")

    # how far off are the cheaper models?
    w = organ.lumped_volume
    lin = fem.linearized_material(mat)
    lin = fem.MaterialParams(
        model=lin.model, mu=lin.mu, nu=lin.nu, rho=0.0
    )
    u_lin = fem.solve_linear(organ, lin, bc)
    brush = kelvinlet.grasp_field(
        organ, [Grasp(organ.nodes[node], drag, node_index=node)],
        KelvinletParams(nu=0.45, eps=0.02, lam=1e-6),
    )
    for name, approx in (("linear fem", u_lin), ("kelvinlet brush", brush)):
        score = metrics.dcm([approx], [u], w)[0]
        print(f"  {name:16s} DCM vs nonlinear truth: {score:6.2f}")


if __name__ == "__main__":
    main()
