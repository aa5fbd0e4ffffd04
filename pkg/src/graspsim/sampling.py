"""Grasp sampling distributions.

Training distribution p: pick a surface region by its prior weight, then a
surface node by a discrete von Mises-Fisher law over node directions from
the mesh centroid; imposed displacements are uniform in a cuboid. The
two-grasper conditional zeroes the first grasp's region and renormalizes.
Regularization distribution q: uniform surface node, displacement uniform
in a cone about the outward normal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .kelvinlet import Grasp
from .mesh import RegionSpec, TetMesh, node_directions, surface_normals


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingConfig:
    regions: tuple[RegionSpec, ...]
    cuboid: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]
    alpha_max: float = np.pi / 3.0  # radians, cone half-angle for q
    u_max: float = 0.09             # meters, q displacement magnitude cap
    seed: int = 0

    def __post_init__(self):
        for lo, hi in self.cuboid:
            if lo > hi:
                raise SamplingError("cuboid bounds must satisfy lo <= hi")
        if not 0.0 < self.alpha_max <= np.pi / 2.0:
            raise SamplingError("alpha_max must be in (0, pi/2]")
        if self.u_max < 0:
            raise SamplingError("u_max must be nonnegative")
        total = sum(r.weight for r in self.regions)
        if self.regions and abs(total - 1.0) > 1e-12:
            raise SamplingError(f"region weights must sum to 1, got {total}")

    def to_json(self) -> dict:
        return {
            "regions": [
                {"id": r.region_id, "mu": r.mu.tolist(), "kappa": r.kappa, "weight": r.weight}
                for r in self.regions
            ],
            "cuboid": [list(b) for b in self.cuboid],
            "alpha_max": self.alpha_max,
            "u_max": self.u_max,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(doc: dict) -> "SamplingConfig":
        regions = tuple(
            RegionSpec(r["id"], np.asarray(r["mu"], dtype=float), r["kappa"], r["weight"])
            for r in doc["regions"]
        )
        return SamplingConfig(
            regions=regions,
            cuboid=tuple(tuple(b) for b in doc["cuboid"]),
            alpha_max=float(doc.get("alpha_max", np.pi / 3.0)),
            u_max=float(doc.get("u_max", 0.09)),
            seed=int(doc["seed"]),
        )


def load_config(path: str) -> SamplingConfig:
    with open(path) as f:
        return SamplingConfig.from_json(json.load(f))


# displacement-target cuboid for a full-size organ: (-90,50) x (-90,50) x (-60,90) mm
FULL_SCALE_CUBOID = ((-0.090, 0.050), (-0.090, 0.050), (-0.060, 0.090))


class GraspSampler:
    """Owns its RNG; one sampler per thread. Streams are reproducible given
    the config seed."""

    def __init__(self, mesh: TetMesh, cfg: SamplingConfig, seed: int | None = None):
        self.mesh = mesh
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self._surface = mesh.surface_nodes
        self._dirs = node_directions(mesh, self._surface)
        self._normals_map = surface_normals(mesh)
        # candidate node pools per region, restricted to non-fixed surface nodes
        self._region_nodes: dict[str, np.ndarray] = {}
        for r in cfg.regions:
            mask = np.array(
                [mesh.region_of_node[int(n)] == r.region_id for n in self._surface]
            )
            self._region_nodes[r.region_id] = np.where(mask)[0]
        self._q_pool = np.array(
            [k for k, n in enumerate(self._surface)
             if mesh.region_of_node[int(n)] != "fixed"]
        )

    # -- training distribution p ------------------------------------------

    def sample_source(self, region_weights: np.ndarray | None = None) -> int:
        """One surface node index from the region mixture."""
        w = (
            np.array([r.weight for r in self.cfg.regions])
            if region_weights is None
            else np.asarray(region_weights, dtype=float)
        )
        if w.sum() <= 0:
            raise SamplingError("no positively weighted region")
        w = w / w.sum()
        ridx = self.rng.choice(len(self.cfg.regions), p=w)
        region = self.cfg.regions[ridx]
        pool = self._region_nodes[region.region_id]
        if len(pool) == 0:
            raise SamplingError(f"region {region.region_id} has no candidate nodes")
        logits = region.kappa * (self._dirs[pool] @ region.mu)
        p = np.exp(logits - logits.max())
        p /= p.sum()
        return int(self._surface[self.rng.choice(pool, p=p)])

    def sample_displacement_p(self) -> np.ndarray:
        lo = np.array([b[0] for b in self.cfg.cuboid])
        hi = np.array([b[1] for b in self.cfg.cuboid])
        return self.rng.uniform(lo, hi)

    def sample_multi(self) -> tuple[int, int]:
        """Two sources from distinct regions: the second draw zeroes the
        first node's region weight and renormalizes."""
        positive = [r for r in self.cfg.regions if r.weight > 0]
        if len(positive) < 2:
            raise SamplingError("need at least two positively weighted regions")
        n1 = self.sample_source()
        region1 = self.mesh.region_of_node[n1]
        w = np.array(
            [0.0 if r.region_id == region1 else r.weight for r in self.cfg.regions]
        )
        n2 = self.sample_source(region_weights=w)
        return n1, n2

    def sample_grasps(self, arity: int) -> list[Grasp]:
        if arity == 1:
            nodes = [self.sample_source()]
        elif arity == 2:
            nodes = list(self.sample_multi())
        else:
            raise SamplingError(f"unsupported grasp arity {arity}")
        return [
            Grasp(self.mesh.nodes[n], self.sample_displacement_p(), node_index=n)
            for n in nodes
        ]

    # -- regularization distribution q ------------------------------------

    def sample_q(self) -> Grasp:
        """Uniform surface node; displacement in a cone about its normal."""
        if len(self._q_pool) == 0:
            raise SamplingError("mesh has no surface nodes to sample")
        k = int(self.rng.choice(self._q_pool))
        node = int(self._surface[k])
        n = self._normals_map[node]
        # uniform on the spherical cap: cos(theta) ~ U[cos(alpha_max), 1]
        cos_t = self.rng.uniform(np.cos(self.cfg.alpha_max), 1.0)
        phi = self.rng.uniform(0.0, 2.0 * np.pi)
        sin_t = np.sqrt(max(0.0, 1.0 - cos_t**2))
        e1 = _any_orthonormal(n)
        e2 = np.cross(n, e1)
        direction = cos_t * n + sin_t * (np.cos(phi) * e1 + np.sin(phi) * e2)
        mag = self.rng.uniform(0.0, self.cfg.u_max)
        return Grasp(self.mesh.nodes[node], mag * direction, node_index=node)


def _any_orthonormal(v: np.ndarray) -> np.ndarray:
    helper = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e = np.cross(v, helper)
    return e / np.linalg.norm(e)


# ---------------------------------------------------------------------------
# presets


def _fibonacci_directions(k: int) -> np.ndarray:
    """k well-spread unit directions, biased away from -y (the fixed cap)."""
    i = np.arange(k)
    golden = (1 + 5**0.5) / 2
    # cos(polar) spans the upper 3/4 of the sphere so regions avoid the cap
    z = 0.9 - 1.5 * (i + 0.5) / k
    phi = 2 * np.pi * i / golden
    r = np.sqrt(1 - z**2)
    # y is "up minus gravity": put the spread axis on y
    return np.column_stack([r * np.cos(phi), z, r * np.sin(phi)])[:, [0, 1, 2]]


def make_region_specs(k: int, kappa: float | None = None) -> list[RegionSpec]:
    dirs = _fibonacci_directions(k)
    # default spread: kappa = 1 / (angular radius)^2 with radius ~ cap size
    ang_radius = np.arccos(1.0 - 2.0 / max(k, 2))
    kap = kappa if kappa is not None else 1.0 / ang_radius**2
    return [
        RegionSpec(f"r{i}", dirs[i], kap, 1.0 / k) for i in range(k)
    ]


PRESETS = {
    # regions, singles per region, pair combinations, samples per pair
    "full-scale": {"regions": 10, "singles_per_region": 250, "pair_regions": 5, "pairs": 6, "per_pair": 30},
    "desk-scale": {"regions": 4, "singles_per_region": 50, "pair_regions": 4, "pairs": 3, "per_pair": 10},
}


def preset_config(name: str, cuboid=FULL_SCALE_CUBOID, seed: int = 0, **overrides) -> SamplingConfig:
    if name not in PRESETS:
        raise SamplingError(f"unknown preset {name!r} (have {sorted(PRESETS)})")
    spec = PRESETS[name]
    regions = make_region_specs(spec["regions"])
    kwargs = {"regions": tuple(regions), "cuboid": cuboid, "seed": seed}
    kwargs.update(overrides)
    return SamplingConfig(**kwargs)
