"""Synthetic mesh generators for tests, demos, and benchmarks.

Nothing here depends on external mesh files: cubes come from structured
grids, organ-like blobs from a cube-to-ball map, spheres from subdivided
icosahedra.
"""

from __future__ import annotations

import numpy as np

from .mesh import TetMesh, build_mesh

# 5-tet decomposition of a hexahedron with corners indexed x + 2y + 4z
_CUBE5 = [(0, 1, 3, 5), (0, 3, 2, 6), (0, 5, 6, 4), (3, 7, 6, 5), (0, 3, 6, 5)]

# Kuhn 6-tet decomposition along the (0,0,0)-(1,1,1) diagonal; conforming
# across neighboring cells without parity flips
_KUHN_PATHS = [
    (0, 1, 3, 7), (0, 1, 5, 7), (0, 2, 3, 7),
    (0, 2, 6, 7), (0, 4, 5, 7), (0, 4, 6, 7),
]


def single_tet(edge: float = 1.0) -> TetMesh:
    """One regular tetrahedron with the given edge length."""
    nodes = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
    ) * (edge / (2 * np.sqrt(2)))
    return build_mesh(nodes, np.array([[0, 1, 2, 3]]))


def unit_cube_5tet() -> TetMesh:
    nodes = np.array(
        [[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float
    )
    return build_mesh(nodes, np.array(_CUBE5))


def cube_grid(n: int, size: float = 1.0, origin=(0.0, 0.0, 0.0)) -> TetMesh:
    """Cube of n x n x n cells, each split into 6 Kuhn tets."""
    nodes, tets = _grid_arrays(n)
    return build_mesh(np.asarray(origin) + nodes * size, tets)


def _grid_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    m = n + 1
    g = np.mgrid[0:m, 0:m, 0:m].astype(float) / n
    nodes = np.stack([g[0], g[1], g[2]], axis=-1).reshape(-1, 3)

    def nid(i, j, k):
        return (i * m + j) * m + k

    tets = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                c = [nid(i + (b & 1), j + ((b >> 1) & 1), k + (b >> 2)) for b in range(8)]
                for path in _KUHN_PATHS:
                    tets.append([c[p] for p in path])
    return nodes, np.array(tets, dtype=int)


def _cube_to_ball(p: np.ndarray) -> np.ndarray:
    """Radial map sending nested cubes [-1,1]^3 to nested balls."""
    linf = np.max(np.abs(p), axis=1)
    l2 = np.linalg.norm(p, axis=1)
    scale = np.divide(linf, l2, out=np.ones_like(l2), where=l2 > 0)
    return p * scale[:, None]


def organ_mesh(n: int = 7, radii=(0.09, 0.06, 0.07), taper: float = 0.25) -> TetMesh:
    """Organ-like solid ellipsoid, tapered along +x, (n+1)^3 nodes.

    Default radii give a roughly liver-sized body (~18 cm across).
    """
    nodes, tets = _grid_arrays(n)
    p = _cube_to_ball(nodes * 2.0 - 1.0)
    x = p[:, 0]
    shrink = 1.0 - taper * (x + 1.0) / 2.0
    q = np.column_stack([x * radii[0], p[:, 1] * radii[1] * shrink, p[:, 2] * radii[2] * shrink])
    return build_mesh(q, tets)


def bench_mesh(n: int = 21) -> TetMesh:
    """~10k-node organ-like mesh for latency benchmarks (22^3 = 10648 nodes)."""
    return organ_mesh(n=n)


def icosphere_ball(subdiv: int = 2, radius: float = 1.0) -> TetMesh:
    """Solid ball: subdivided icosahedron surface fanned to the center."""
    verts, faces = _icosphere(subdiv)
    nodes = np.vstack([verts * radius, [[0.0, 0.0, 0.0]]])
    center = len(nodes) - 1
    tets = np.column_stack([faces, np.full(len(faces), center)])
    return build_mesh(nodes, tets)


def _icosphere(subdiv: int) -> tuple[np.ndarray, np.ndarray]:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=int,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdiv):
        verts, faces = _subdivide(verts, faces)
    return verts, faces


def _subdivide(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    verts = list(verts)
    midpoint: dict[tuple[int, int], int] = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            v = (np.asarray(verts[a]) + verts[b]) / 2.0
            verts.append(v / np.linalg.norm(v))
            midpoint[key] = len(verts) - 1
        return midpoint[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), np.array(out, dtype=int)
