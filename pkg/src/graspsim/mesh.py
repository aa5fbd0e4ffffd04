"""Tetrahedral mesh loading, validation, and annotation.

All geometry is in SI units (meters). Loaders take an explicit unit_scale
so that millimeter meshes can be imported without silent 1000x errors.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

DEGENERATE_VOL = 1e-12  # relative to the largest tet, below this is degenerate


class MeshError(ValueError):
    """Raised for malformed or degenerate mesh input."""


@dataclass(frozen=True)
class TetMesh:
    """Immutable tetrahedral mesh with derived surface and volume weights.

    nodes          : (N, 3) float64 positions in meters
    tets           : (M, 4) int node indices, positively oriented
    surface_tris   : (S, 3) int, outward-wound boundary triangles
    region_of_node : node index -> region id ("fixed", "interior", or a
                     surface region id)
    lumped_volume  : (N,) per-node volume weights, sums to total volume
    """

    nodes: np.ndarray
    tets: np.ndarray
    surface_tris: np.ndarray
    region_of_node: dict[int, str]
    lumped_volume: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def surface_nodes(self) -> np.ndarray:
        return np.unique(self.surface_tris)

    @property
    def total_volume(self) -> float:
        return float(self.lumped_volume.sum())

    def centroid(self) -> np.ndarray:
        return self.nodes.mean(axis=0)

    def nodes_in_region(self, region_id: str) -> np.ndarray:
        idx = [i for i, r in self.region_of_node.items() if r == region_id]
        return np.array(sorted(idx), dtype=int)


@dataclass(frozen=True)
class RegionSpec:
    """One surface region of the grasp-sampling mixture.

    mu is the unit direction of the region center from the mesh centroid,
    kappa the directional concentration, weight the mixture prior.
    """

    region_id: str
    mu: np.ndarray
    kappa: float
    weight: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        n = np.linalg.norm(mu)
        if n == 0:
            raise ValueError("region center direction must be nonzero")
        object.__setattr__(self, "mu", mu / n)
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")


def tet_signed_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    a, b, c, d = (nodes[tets[:, i]] for i in range(4))
    return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a) / 6.0


def _oriented_tets(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Flip tets with negative signed volume; reject degenerate ones."""
    tets = tets.copy()
    vols = tet_signed_volumes(nodes, tets)
    neg = vols < 0
    tets[neg] = tets[neg][:, [0, 1, 3, 2]]
    vols = np.abs(vols)
    # degeneracy is judged relative to the mesh's own volume scale so that
    # fine meshes of small objects are not rejected by an absolute cutoff
    tol = max(DEGENERATE_VOL * float(vols.max()), 0.0)
    if np.any(vols <= tol):
        bad = int(np.argmin(vols))
        raise MeshError(f"degenerate tet {bad} (|volume| = {vols[bad]:.3e} m^3)")
    return tets


def _boundary_faces(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Faces belonging to exactly one tet, wound so normals point outward."""
    # face opposite each local vertex, with the opposite vertex recorded
    opp = np.empty((len(tets) * 4,), dtype=int)
    faces = np.empty((len(tets) * 4, 3), dtype=int)
    local = [(1, 2, 3, 0), (0, 3, 2, 1), (0, 1, 3, 2), (0, 2, 1, 3)]
    for k, (i, j, l, o) in enumerate(local):
        faces[k::4] = tets[:, [i, j, l]]
        opp[k::4] = tets[:, o]
    key = np.sort(faces, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    boundary = counts[inv] == 1
    tris = faces[boundary]
    opposite = opp[boundary]
    # enforce outward winding: normal away from the opposite tet vertex
    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    n = np.cross(p1 - p0, p2 - p0)
    inward = np.einsum("ij,ij->i", n, nodes[opposite] - p0) > 0
    tris[inward] = tris[inward][:, [0, 2, 1]]
    return tris


def lumped_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Each tet spreads its volume equally over its 4 nodes."""
    vols = np.abs(tet_signed_volumes(nodes, tets))
    w = np.zeros(len(nodes))
    np.add.at(w, tets.ravel(), np.repeat(vols / 4.0, 4))
    return w


def build_mesh(
    nodes: np.ndarray,
    tets: np.ndarray,
    regions: dict[int, str] | None = None,
) -> TetMesh:
    """Validate raw arrays and derive surface, orientation, and weights."""
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    tets = np.ascontiguousarray(tets, dtype=np.int64)
    if nodes.ndim != 2 or nodes.shape[1] != 3 or len(nodes) == 0:
        raise MeshError("nodes must be a nonempty (N, 3) array")
    if tets.ndim != 2 or tets.shape[1] != 4 or len(tets) == 0:
        raise MeshError("tets must be a nonempty (M, 4) array")
    if tets.min() < 0 or tets.max() >= len(nodes):
        raise MeshError("tet index out of range")
    if not np.all(np.isfinite(nodes)):
        raise MeshError("non-finite node coordinate")
    tets = _oriented_tets(nodes, tets)
    tris = _boundary_faces(nodes, tets)
    region_map = dict(regions) if regions else {}
    surface = set(np.unique(tris).tolist())
    for i in range(len(nodes)):
        if i not in region_map:
            region_map[i] = "surface" if i in surface else "interior"
    return TetMesh(
        nodes=nodes,
        tets=tets,
        surface_tris=tris,
        region_of_node=region_map,
        lumped_volume=lumped_volumes(nodes, tets),
    )


def load_mesh(path: str, unit_scale: float = 1.0) -> TetMesh:
    """Load a mesh from native JSON or Gmsh MSH v2.2 ASCII.

    unit_scale converts file units to meters (e.g. 0.001 for mm files).
    """
    with open(path, "rb") as f:
        head = f.read(64)
    if head.lstrip().startswith(b"{"):
        return _load_json(path, unit_scale)
    if head.startswith(b"$MeshFormat"):
        return _load_gmsh22(path, unit_scale)
    raise MeshError(f"unrecognized mesh format: {path}")


def _load_json(path: str, unit_scale: float) -> TetMesh:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise MeshError(f"mesh JSON parse failure: {e}") from e
    try:
        nodes = np.asarray(doc["nodes"], dtype=float) * unit_scale
        tets = np.asarray(doc["tets"], dtype=int)
    except (KeyError, TypeError, ValueError) as e:
        raise MeshError(f"mesh JSON missing or malformed nodes/tets: {e}") from e
    regions = {int(k): str(v) for k, v in doc.get("regions", {}).items()}
    return build_mesh(nodes, tets, regions)


def save_mesh_json(mesh: TetMesh, path: str) -> None:
    doc = {
        "nodes": mesh.nodes.tolist(),
        "tets": mesh.tets.tolist(),
        "regions": {str(k): v for k, v in mesh.region_of_node.items()},
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def _load_gmsh22(path: str, unit_scale: float) -> TetMesh:
    nodes = []
    tets = []
    node_ids = {}
    with open(path) as f:
        lines = iter(f.read().splitlines())
    try:
        for line in lines:
            if line.strip() == "$Nodes":
                count = int(next(lines))
                for _ in range(count):
                    parts = next(lines).split()
                    node_ids[int(parts[0])] = len(nodes)
                    nodes.append([float(p) for p in parts[1:4]])
            elif line.strip() == "$Elements":
                count = int(next(lines))
                for _ in range(count):
                    parts = next(lines).split()
                    etype = int(parts[1])
                    ntags = int(parts[2])
                    conn = parts[3 + ntags :]
                    if etype == 4:  # 4-node tetrahedron
                        tets.append([node_ids[int(c)] for c in conn])
                    elif etype in (1, 2, 15):  # lines, triangles, points: skip
                        continue
                    else:
                        raise MeshError(f"non-tet element (gmsh type {etype})")
    except (StopIteration, ValueError, KeyError) as e:
        raise MeshError(f"gmsh parse failure: {e}") from e
    if not nodes or not tets:
        raise MeshError("gmsh file has no nodes or no tet elements")
    return build_mesh(np.array(nodes) * unit_scale, np.array(tets, dtype=int))


def surface_normals(mesh: TetMesh) -> dict[int, np.ndarray]:
    """Outward unit normal per surface node.

    Area-weighted average of incident boundary-triangle normals (the cross
    product of an outward-wound triangle is already area-scaled).
    """
    if len(mesh.surface_tris) == 0:
        raise MeshError("mesh has no surface")
    tris = mesh.surface_tris
    p0, p1, p2 = (mesh.nodes[tris[:, i]] for i in range(3))
    tri_n = np.cross(p1 - p0, p2 - p0)  # outward, |.| = 2 * area
    acc = np.zeros_like(mesh.nodes)
    for i in range(3):
        np.add.at(acc, tris[:, i], tri_n)
    out = {}
    for n in mesh.surface_nodes:
        mag = np.linalg.norm(acc[n])
        if mag < 1e-300:
            raise MeshError(f"degenerate surface patch at node {n}")
        out[int(n)] = acc[n] / mag
    return out


def surface_normal(mesh: TetMesh, node: int) -> np.ndarray:
    if node not in set(mesh.surface_nodes.tolist()):
        raise MeshError(f"node {node} is not a surface node")
    return surface_normals(mesh)[node]


def node_directions(mesh: TetMesh, nodes: np.ndarray | None = None) -> np.ndarray:
    """Unit directions of nodes from the mesh centroid (zero stays zero)."""
    idx = mesh.surface_nodes if nodes is None else nodes
    d = mesh.nodes[idx] - mesh.centroid()
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return d / norms


def assign_regions(
    mesh: TetMesh,
    regions: list[RegionSpec],
    fixed_direction: np.ndarray | None = None,
    fixed_half_angle: float = 0.9,
) -> TetMesh:
    """Directional Voronoi partition of the surface into the given regions.

    Surface nodes whose centroid direction lies within fixed_half_angle
    (radians) of fixed_direction are labeled "fixed" and excluded from the
    sampling regions. Remaining surface nodes go to the region whose center
    direction has the largest dot product; ties break to the lowest region
    index. Interior nodes are labeled "interior".
    """
    surf = mesh.surface_nodes
    dirs = node_directions(mesh, surf)
    labels = {int(i): "interior" for i in range(mesh.n_nodes)}
    fixed_mask = np.zeros(len(surf), dtype=bool)
    if fixed_direction is not None:
        fd = np.asarray(fixed_direction, dtype=float)
        fd = fd / np.linalg.norm(fd)
        fixed_mask = dirs @ fd >= np.cos(fixed_half_angle)
    dots = np.stack([dirs @ r.mu for r in regions], axis=1)
    best = np.argmax(dots, axis=1)  # argmax takes the first (lowest) on ties
    for k, n in enumerate(surf):
        labels[int(n)] = "fixed" if fixed_mask[k] else regions[best[k]].region_id
    return TetMesh(
        nodes=mesh.nodes,
        tets=mesh.tets,
        surface_tris=mesh.surface_tris,
        region_of_node=labels,
        lumped_volume=mesh.lumped_volume,
    )


def mesh_content_hash(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
