import json

import numpy as np
import pytest

from graspsim import mesh as meshmod
from graspsim import sampling, shapes
from graspsim.mesh import MeshError


def test_single_tet_volume():
    m = shapes.single_tet(2.0)
    vols = meshmod.tet_signed_volumes(m.nodes, m.tets)
    assert vols.shape == (1,)
    edge = np.linalg.norm(m.nodes[0] - m.nodes[1])
    assert abs(edge - 2.0) < 1e-12
    # regular tetrahedron: V = edge^3 / (6 sqrt(2))
    assert abs(vols[0] - 8.0 / (6.0 * np.sqrt(2.0))) < 1e-12


def test_cube_decompositions_fill_volume():
    assert abs(meshmod.tet_signed_volumes(
        shapes.unit_cube_5tet().nodes, shapes.unit_cube_5tet().tets).sum() - 1.0) < 1e-12
    g = shapes.cube_grid(4, size=2.0)
    assert abs(meshmod.tet_signed_volumes(g.nodes, g.tets).sum() - 8.0) < 1e-10


def test_all_tets_positively_oriented(organ):
    vols = meshmod.tet_signed_volumes(organ.nodes, organ.tets)
    assert vols.min() > 0


def test_degenerate_tet_rejected():
    nodes = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.5, 0.5, 0.0]], dtype=float)
    with pytest.raises(MeshError):
        meshmod.build_mesh(nodes, np.array([[0, 1, 2, 3]]))


def test_lumped_volumes_sum_to_total(grid3):
    w = meshmod.lumped_volumes(grid3.nodes, grid3.tets)
    total = meshmod.tet_signed_volumes(grid3.nodes, grid3.tets).sum()
    assert abs(w.sum() - total) < 1e-12
    assert w.min() > 0


def test_surface_extraction_is_watertight(grid3):
    # every surface edge is shared by exactly two boundary triangles
    tris = grid3.surface_tris
    edges = {}
    for t in tris:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    assert set(edges.values()) == {2}


def test_surface_triangles_face_outward(grid3):
    center = grid3.nodes.mean(axis=0)
    p = grid3.nodes[grid3.surface_tris]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    outward = np.einsum("ij,ij->i", n, p.mean(axis=1) - center)
    assert (outward > 0).all()


def test_surface_normals_unit_and_outward(organ):
    center = organ.nodes.mean(axis=0)
    normals = meshmod.surface_normals(organ)
    assert len(normals) == len(set(organ.surface_tris.ravel()))
    for node, n in normals.items():
        assert abs(np.linalg.norm(n) - 1.0) < 1e-12
        assert n @ (organ.nodes[node] - center) > 0


def test_surface_normal_rejects_interior_node(grid3):
    interior = set(range(grid3.n_nodes)) - set(grid3.surface_tris.ravel())
    with pytest.raises(MeshError):
        meshmod.surface_normal(grid3, next(iter(interior)))


def test_icosphere_normals_near_radial():
    m = shapes.icosphere_ball(2)
    normals = meshmod.surface_normals(m)
    worst = 0.0
    for node, n in normals.items():
        r = m.nodes[node] / np.linalg.norm(m.nodes[node])
        worst = max(worst, np.degrees(np.arccos(np.clip(n @ r, -1, 1))))
    assert worst < 3.0


def test_organ_mesh_dimensions():
    m = shapes.organ_mesh(7, radii=(0.09, 0.06, 0.07))
    assert m.n_nodes == 512
    ext = m.nodes.max(axis=0) - m.nodes.min(axis=0)
    assert np.all(ext < 2 * np.array([0.09, 0.06, 0.07]) + 1e-9)
    assert np.all(ext > np.array([0.09, 0.06, 0.07]))


def test_region_assignment_covers_surface(organ):
    labels = set(organ.region_of_node.values())
    assert "fixed" in labels
    surface_labels = {
        organ.region_of_node[n] for n in set(organ.surface_tris.ravel())
    }
    assert surface_labels == {"fixed", "r0", "r1", "r2", "r3"}
    surface = set(organ.surface_tris.ravel())
    assert surface <= set(organ.region_of_node)


def test_mesh_json_round_trip(tmp_path, organ):
    path = str(tmp_path / "organ.json")
    meshmod.save_mesh_json(organ, path)
    m2 = meshmod.load_mesh(path)
    np.testing.assert_allclose(m2.nodes, organ.nodes)
    np.testing.assert_array_equal(m2.tets, organ.tets)
    assert m2.region_of_node == organ.region_of_node
    # hash is stable for identical content
    assert meshmod.mesh_content_hash(path) == meshmod.mesh_content_hash(path)


def test_load_mesh_unit_scale(tmp_path, cube5):
    path = str(tmp_path / "cube.json")
    meshmod.save_mesh_json(cube5, path)
    mm = meshmod.load_mesh(path, unit_scale=0.001)
    np.testing.assert_allclose(mm.nodes, cube5.nodes * 0.001)


def test_load_gmsh_tet(tmp_path):
    msh = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
2
1 15 2 0 1 1
2 4 2 0 1 1 2 3 4
$EndElements
"""
    path = tmp_path / "tet.msh"
    path.write_text(msh)
    m = meshmod.load_mesh(str(path))
    assert m.n_nodes == 4
    assert m.tets.shape == (1, 4)
    vols = meshmod.tet_signed_volumes(m.nodes, m.tets)
    assert abs(vols[0] - 1.0 / 6.0) < 1e-12
