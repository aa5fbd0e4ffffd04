"""Write the demo organ mesh for the e2e session test.

Prints a JSON line with the mesh path and a draggable (non-anchored) surface
node so the TypeScript side does not hardcode mesh details.

Usage: python3 setup_mesh.py OUT_PATH
"""

import json
import sys

from graspsim import mesh as meshmod, sampling, shapes


def main():
    out = sys.argv[1]
    m = shapes.organ_mesh(7)
    specs = sampling.make_region_specs(4)
    m = meshmod.assign_regions(
        m, specs, fixed_direction=(0.0, -1.0, 0.0), fixed_half_angle=0.5
    )
    meshmod.save_mesh_json(m, out)
    free = [
        int(n) for n in m.surface_nodes if m.region_of_node[int(n)] != "fixed"
    ]
    node = max(free, key=lambda n: m.nodes[n][1])
    print(json.dumps({"mesh": out, "node": node, "nodes": m.n_nodes}))


if __name__ == "__main__":
    main()
