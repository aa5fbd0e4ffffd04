"""FEM sample generation and the on-disk dataset format.

Each sample pairs a grasp boundary condition with its FEM solution and the
per-node feature rows [x; u_s; a] (rest position, imposed displacement at
active nodes, active flag). Storage is language-neutral: manifest.json +
records.idx.json + row-major little-endian float32 blobs.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .kelvinlet import Grasp
from .mesh import TetMesh
from .sampling import GraspSampler, SamplingConfig

FORMAT_VERSION = 1


class DatasetError(RuntimeError):
    pass


@dataclass
class Sample:
    grasps: list[Grasp]
    features: np.ndarray   # (N, 7) float32
    target: np.ndarray     # (N, 3) float32
    regime: str            # "linear" | "nonlinear"
    seed: int
    solver_digest: str = ""


@dataclass
class Dataset:
    mesh_path: str
    mesh_hash: str
    sampling: SamplingConfig
    material: dict
    regime: str
    arity: int
    samples: list[Sample] = field(default_factory=list)


def build_features(mesh: TetMesh, grasps: list[Grasp]) -> np.ndarray:
    """(N, 7) float32 rows [x; u_s; a]; u_s is nonzero only at active nodes."""
    f = np.zeros((mesh.n_nodes, 7), dtype=np.float32)
    f[:, :3] = mesh.nodes.astype(np.float32)
    for g in grasps:
        if g.node_index is None:
            raise DatasetError("dataset grasps must reference mesh nodes")
        f[g.node_index, 3:6] = np.asarray(g.displacement, dtype=np.float32)
        f[g.node_index, 6] = 1.0
    return f


def _material_json(mat: fem.MaterialParams) -> dict:
    return {
        "model": mat.model.value,
        "mu": mat.mu,
        "nu": mat.nu,
        "c10": mat.c10,
        "c01": mat.c01,
        "rho": mat.rho,
        "gravity": list(mat.gravity),
        "region_mu": dict(mat.region_mu),
        "volumetric_kappa_pa": mat.kappa,
    }


def material_from_json(doc: dict) -> fem.MaterialParams:
    return fem.MaterialParams(
        model=fem.Model(doc["model"]),
        mu=doc["mu"],
        nu=doc["nu"],
        c10=doc["c10"],
        c01=doc["c01"],
        rho=doc["rho"],
        gravity=tuple(doc["gravity"]),
        region_mu=dict(doc.get("region_mu", {})),
    )


def generate(
    mesh: TetMesh,
    mat: fem.MaterialParams,
    cfg: SamplingConfig,
    count: int,
    arity: int = 1,
    regime: str = "linear",
    mesh_path: str = "",
    mesh_hash: str = "",
    max_retries: int = 3,
    progress=None,
) -> Dataset:
    """Draw grasps, solve FEM, and emit samples.

    A failed solve is retried with a fresh draw up to max_retries times;
    more than 20% failures aborts with diagnostics.
    """
    if regime not in ("linear", "nonlinear"):
        raise DatasetError(f"unknown regime {regime!r}")
    ds = Dataset(
        mesh_path=mesh_path,
        mesh_hash=mesh_hash,
        sampling=cfg,
        material=_material_json(mat),
        regime=regime,
        arity=arity,
    )
    failures = 0
    for i in range(count):
        # per-sample seed stream keeps generation order-independent
        sample_seed = cfg.seed * 1_000_003 + i
        last_err = None
        for attempt in range(max_retries + 1):
            sampler = GraspSampler(mesh, cfg, seed=sample_seed + 7919 * attempt)
            grasps = sampler.sample_grasps(arity)
            bc = fem.fixed_region_bc(
                mesh, {g.node_index: g.displacement for g in grasps}
            )
            report = fem.SolverReport()
            try:
                if regime == "linear":
                    u = fem.solve_linear(mesh, mat, bc, report=report)
                else:
                    u = fem.solve_nonlinear(mesh, mat, bc, report=report)
            except fem.FemError as e:
                last_err = e
                failures += 1
                if failures > max(2, count) * 0.2:
                    raise DatasetError(
                        f"solver failure rate above 20% ({failures} failures, last: {e})"
                    ) from e
                continue
            # wall time is excluded so regeneration from the same seed yields
            # byte-identical records
            doc = {k: v for k, v in report.to_json().items() if k != "wall_time_s"}
            digest = hashlib.sha256(
                json.dumps(doc, sort_keys=True).encode()
            ).hexdigest()[:16]
            ds.samples.append(
                Sample(
                    grasps=grasps,
                    features=build_features(mesh, grasps),
                    target=u.astype(np.float32),
                    regime=regime,
                    seed=sample_seed,
                    solver_digest=digest,
                )
            )
            break
        else:
            raise DatasetError(
                f"retry budget exhausted for sample {i}: {last_err}"
            )
        if progress is not None:
            progress(i + 1, count)
    return ds


# ---------------------------------------------------------------------------
# persistence


def write(ds: Dataset, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    records = []
    with open(os.path.join(out_dir, "features.f32"), "wb") as ff, open(
        os.path.join(out_dir, "targets.f32"), "wb"
    ) as tf:
        f_off = t_off = 0
        for s in ds.samples:
            fb = np.ascontiguousarray(s.features, dtype="<f4").tobytes()
            tb = np.ascontiguousarray(s.target, dtype="<f4").tobytes()
            ff.write(fb)
            tf.write(tb)
            records.append(
                {
                    "features_offset": f_off,
                    "features_shape": list(s.features.shape),
                    "target_offset": t_off,
                    "target_shape": list(s.target.shape),
                    "grasps": [
                        {
                            "node": g.node_index,
                            "source": np.asarray(g.source).tolist(),
                            "u": np.asarray(g.displacement).tolist(),
                        }
                        for g in s.grasps
                    ],
                    "seed": s.seed,
                    "solver_digest": s.solver_digest,
                }
            )
            f_off += len(fb)
            t_off += len(tb)
    with open(os.path.join(out_dir, "records.idx.json"), "w") as f:
        json.dump(records, f)
    manifest = {
        "format_version": FORMAT_VERSION,
        "mesh_path": ds.mesh_path,
        "mesh_hash": ds.mesh_hash,
        "sampling": ds.sampling.to_json(),
        "material": ds.material,
        "regime": ds.regime,
        "arity": ds.arity,
        "count": len(ds.samples),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)


def read(in_dir: str, expect_mesh_hash: str | None = None) -> Dataset:
    with open(os.path.join(in_dir, "manifest.json")) as f:
        manifest = json.load(f)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetError(
            f"format version mismatch: {manifest.get('format_version')} != {FORMAT_VERSION}"
        )
    if expect_mesh_hash is not None and manifest["mesh_hash"] != expect_mesh_hash:
        raise DatasetError("mesh mismatch: manifest hash differs from the given mesh")
    with open(os.path.join(in_dir, "records.idx.json")) as f:
        records = json.load(f)
    if len(records) != manifest["count"]:
        raise DatasetError(
            f"manifest count {manifest['count']} != {len(records)} records"
        )
    fbuf = np.fromfile(os.path.join(in_dir, "features.f32"), dtype="<f4")
    tbuf = np.fromfile(os.path.join(in_dir, "targets.f32"), dtype="<f4")
    ds = Dataset(
        mesh_path=manifest["mesh_path"],
        mesh_hash=manifest["mesh_hash"],
        sampling=SamplingConfig.from_json(manifest["sampling"]),
        material=manifest["material"],
        regime=manifest["regime"],
        arity=manifest["arity"],
    )
    for i, r in enumerate(records):
        fo, fs = r["features_offset"] // 4, r["features_shape"]
        to, tshape = r["target_offset"] // 4, r["target_shape"]
        if fo + fs[0] * fs[1] > len(fbuf) or to + tshape[0] * tshape[1] > len(tbuf):
            raise DatasetError(f"truncated record {i}")
        grasps = [
            Grasp(np.array(g["source"]), np.array(g["u"]), node_index=g["node"])
            for g in r["grasps"]
        ]
        ds.samples.append(
            Sample(
                grasps=grasps,
                features=fbuf[fo : fo + fs[0] * fs[1]].reshape(fs).copy(),
                target=tbuf[to : to + tshape[0] * tshape[1]].reshape(tshape).copy(),
                regime=manifest["regime"],
                seed=r["seed"],
                solver_digest=r["solver_digest"],
            )
        )
    return ds
