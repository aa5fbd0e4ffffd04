"""Command-line entrypoint.

Subcommands: mesh-info, gen, train, eval, bench, solve, serve. All configs
are JSON files; flags override file fields, and the fully resolved config
is echoed into every output artifact. Errors go to stderr as one JSON
object; exit codes: 0 ok, 2 usage, 3 invalid input, 4 solver failure,
5 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SOLVER = 4
EXIT_INTERNAL = 5


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_INPUT):
        super().__init__(msg)
        self.code = code


def _fail(code: int, msg: str, **extra) -> int:
    print(json.dumps({"error": msg, "code": code, **extra}), file=sys.stderr)
    return code


def _load_mesh(path: str, unit_scale: float):
    from . import mesh as meshmod

    try:
        return meshmod.load_mesh(path, unit_scale)
    except FileNotFoundError as e:
        raise CliError(f"mesh file not found: {e}") from e
    except meshmod.MeshError as e:
        raise CliError(f"invalid mesh: {e}") from e


def _load_sampling(path: str | None, seed: int | None):
    from . import sampling

    if path is None:
        cfg = sampling.preset_config("desk-scale", seed=seed or 0)
    else:
        try:
            cfg = sampling.load_config(path)
        except (OSError, KeyError, ValueError) as e:
            raise CliError(f"invalid sampling config: {e}") from e
    if seed is not None and seed != cfg.seed:
        cfg = sampling.SamplingConfig(
            regions=cfg.regions, cuboid=cfg.cuboid, alpha_max=cfg.alpha_max,
            u_max=cfg.u_max, seed=seed,
        )
    return cfg


def _material(regime: str, doc: dict | None):
    from . import dataset, fem

    if doc:
        return dataset.material_from_json(doc)
    if regime == "linear":
        return fem.MaterialParams(model=fem.Model.LINEAR, mu=690.0, nu=0.45)
    return fem.MaterialParams(
        model=fem.Model.MOONEY_RIVLIN, gravity=(0.0, -9.81, 0.0)
    )


def cmd_mesh_info(args) -> int:
    mesh = _load_mesh(args.mesh, args.unit_scale)
    from collections import Counter

    info = {
        "nodes": mesh.n_nodes,
        "tets": len(mesh.tets),
        "surface_tris": len(mesh.surface_tris),
        "total_volume_m3": mesh.total_volume,
        "regions": dict(Counter(mesh.region_of_node.values())),
        "unit": "m",
    }
    print(json.dumps(info, indent=2))
    return EXIT_OK


def cmd_gen(args) -> int:
    from . import dataset, mesh as meshmod
    from .mesh import assign_regions

    mesh = _load_mesh(args.mesh, args.unit_scale)
    cfg = _load_sampling(args.config, args.seed)
    if not any(r == "fixed" for r in mesh.region_of_node.values()) or args.assign_regions:
        mesh = assign_regions(
            mesh, list(cfg.regions), fixed_direction=[0.0, -1.0, 0.0],
            fixed_half_angle=0.9,
        )
    mat_doc = json.load(open(args.material)) if args.material else None
    mat = _material(args.regime, mat_doc)
    try:
        ds = dataset.generate(
            mesh, mat, cfg, count=args.count, arity=args.arity, regime=args.regime,
            mesh_path=args.mesh, mesh_hash=meshmod.mesh_content_hash(args.mesh),
        )
    except dataset.DatasetError as e:
        raise CliError(str(e), EXIT_SOLVER) from e
    dataset.write(ds, args.out)
    print(json.dumps({"written": len(ds.samples), "out": args.out}))
    return EXIT_OK


def _open_dataset(path: str):
    from . import dataset

    try:
        return dataset.read(path)
    except (OSError, dataset.DatasetError, KeyError) as e:
        raise CliError(f"cannot read dataset: {e}") from e


def cmd_train(args) -> int:
    from . import neural

    ds = _open_dataset(args.data)
    mesh = _load_mesh(ds.mesh_path if args.mesh is None else args.mesh, 1.0)
    lam = args.lambda_reg
    if lam is None:
        lam = 1.0 if ds.regime == "linear" else 0.1
    from .kelvinlet import KelvinletParams

    cfg = neural.TrainConfig(
        regime=args.regime,
        lambda_reg=lam if args.regime == "regularized" else 0.0,
        epochs=args.epochs,
        step_size=args.step_size,
        seed=args.seed,
        normalize=args.normalize,
        kelvinlet=KelvinletParams(eps=args.eps, lam=args.lam_prior),
    )
    try:
        params, log = neural.train(
            mesh, ds, cfg, log_path=args.out + ".log.jsonl"
        )
    except neural.NeuralError as e:
        raise CliError(str(e), EXIT_SOLVER) from e
    params.save(args.out)
    print(json.dumps({
        "ckpt": args.out,
        "regime": args.regime,
        "lambda_reg": cfg.lambda_reg,
        "final_train_loss": log[-1]["train_loss"],
        "final_test_dcm": log[-1].get("test_dcm"),
        "config": {"epochs": cfg.epochs, "step_size": cfg.step_size, "seed": cfg.seed},
    }))
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import metrics, neural

    ds = _open_dataset(args.data)
    mesh = _load_mesh(ds.mesh_path if args.mesh is None else args.mesh, 1.0)
    try:
        params = neural.NetworkParams.load(args.ckpt)
    except (OSError, KeyError, ValueError) as e:
        raise CliError(f"cannot read checkpoint: {e}") from e
    _, test_set = neural.split_dataset(ds, args.seed)
    subjects = test_set if args.split == "test" else ds.samples
    times = []
    preds = []
    for s in subjects:
        t0 = time.perf_counter()
        preds.append(neural.predict_sample(params, mesh, s))
        times.append((time.perf_counter() - t0) * 1000.0)
    score, terms, excluded = metrics.dcm(
        preds, [s.target.astype(float) for s in subjects], mesh.lumped_volume
    )
    report = metrics.EvalReport(
        per_sample=terms,
        mean_dcm=score,
        regime=params.regime,
        model_id=args.ckpt,
        excluded_zero_norm=excluded,
        inference_ms_mean=float(np.mean(times)),
        inference_ms_p95=float(np.percentile(times, 95)),
        node_count=mesh.n_nodes,
    )
    report.write(args.report)
    print(json.dumps({"mean_dcm": score, "samples": len(terms), "report": args.report}))
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import fem, kelvinlet, neural, shapes
    from .dataset import build_features

    mesh = (
        _load_mesh(args.mesh, args.unit_scale) if args.mesh else shapes.bench_mesh()
    )
    rng = np.random.default_rng(args.seed)
    surf = mesh.surface_nodes
    params = kelvinlet.KelvinletParams()
    results = []
    for rep in range(args.repeat):
        nodes = rng.choice(surf, size=args.graspers, replace=False)
        grasps = [
            kelvinlet.Grasp(mesh.nodes[int(n)], rng.uniform(-0.03, 0.03, 3), node_index=int(n))
            for n in nodes
        ]
        if args.mode == "kelvinlet":
            t0 = time.perf_counter()
            sol = kelvinlet.solve_coefficients(grasps, params)
            kelvinlet.eval_field(mesh, sol)
            results.append((time.perf_counter() - t0) * 1000.0)
        elif args.mode == "neural":
            if args.ckpt:
                net = neural.NetworkParams.load(args.ckpt)
            else:
                net = neural.NetworkParams.init(0, arity=args.graspers)
            feats = build_features(mesh, grasps)
            t0 = time.perf_counter()
            neural.forward(net, feats)
            results.append((time.perf_counter() - t0) * 1000.0)
        elif args.mode == "fem":
            mat = _material("linear", None)
            bc = fem.fixed_region_bc(
                mesh, {g.node_index: g.displacement * 0.01 for g in grasps}
            )
            if not bc.fixed_nodes:
                low = mesh.nodes[:, 1] < np.percentile(mesh.nodes[:, 1], 5)
                bc = fem.BoundaryConditions(
                    fixed_nodes=frozenset(int(i) for i in np.where(low)[0]) - {g.node_index for g in grasps},
                    prescribed=bc.prescribed,
                )
            t0 = time.perf_counter()
            fem.solve_linear(mesh, mat, bc)
            results.append((time.perf_counter() - t0) * 1000.0)
        else:
            raise CliError(f"unknown bench mode {args.mode!r}", EXIT_USAGE)
    out = {
        "mode": args.mode,
        "graspers": args.graspers,
        "nodes": mesh.n_nodes,
        "repeat": args.repeat,
        "latency_ms_mean": float(np.mean(results)),
        "latency_ms_p95": float(np.percentile(results, 95)),
        "latency_ms": results,
    }
    print(json.dumps(out))
    return EXIT_OK


def cmd_solve(args) -> int:
    from . import fem

    mesh = _load_mesh(args.mesh, args.unit_scale)
    try:
        with open(args.bc) as f:
            bc_doc = json.load(f)
        bc = fem.BoundaryConditions(
            fixed_nodes=frozenset(int(i) for i in bc_doc.get("fixed", [])),
            prescribed={int(k): v for k, v in bc_doc.get("prescribed", {}).items()},
        )
    except (OSError, ValueError, KeyError) as e:
        raise CliError(f"invalid boundary conditions: {e}") from e
    mat_doc = json.load(open(args.material)) if args.material else None
    mat = _material(args.regime, mat_doc)
    report = fem.SolverReport()
    try:
        if args.regime == "linear":
            u = fem.solve_linear(mesh, mat, bc, report=report)
        else:
            u = fem.solve_nonlinear(mesh, mat, bc, report=report)
    except fem.FemError as e:
        raise CliError(str(e), EXIT_SOLVER) from e
    np.asarray(u, dtype="<f4").tofile(args.out)
    with open(args.out + ".report.json", "w") as f:
        json.dump(report.to_json(), f, indent=2)
    print(json.dumps({"out": args.out, "nodes": mesh.n_nodes, **report.to_json()}))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    mesh = _load_mesh(args.mesh, args.unit_scale)
    net = None
    if args.ckpt:
        from . import neural

        net = neural.NetworkParams.load(args.ckpt)
    app = create_app(mesh, net)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graspsim")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add_mesh_arg(sp, required=True):
        sp.add_argument("--mesh", required=required, default=None)
        sp.add_argument("--unit-scale", dest="unit_scale", type=float, default=1.0)

    sp = sub.add_parser("mesh-info")
    add_mesh_arg(sp)
    sp.set_defaults(fn=cmd_mesh_info)

    sp = sub.add_parser("gen")
    add_mesh_arg(sp)
    sp.add_argument("--config", default=None)
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--arity", type=int, choices=(1, 2), default=1)
    sp.add_argument("--regime", choices=("linear", "nonlinear"), required=True)
    sp.add_argument("--material", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--assign-regions", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("train")
    sp.add_argument("--data", required=True)
    sp.add_argument("--mesh", default=None)
    sp.add_argument("--unit-scale", dest="unit_scale", type=float, default=1.0)
    sp.add_argument("--regime", choices=("base", "residual", "regularized"), required=True)
    sp.add_argument("--lambda-reg", dest="lambda_reg", type=float, default=None)
    sp.add_argument("--epochs", type=int, default=150)
    sp.add_argument("--step-size", dest="step_size", type=float, default=1e-3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--normalize", action="store_true",
                    help="standardize features and scale outputs to target RMS")
    sp.add_argument("--eps", type=float, default=0.05,
                    help="regularization radius of the analytic prior (m)")
    sp.add_argument("--lam-prior", dest="lam_prior", type=float, default=0.001,
                    help="ridge weight of the analytic prior's coefficient solve")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval")
    sp.add_argument("--data", required=True)
    sp.add_argument("--mesh", default=None)
    sp.add_argument("--unit-scale", dest="unit_scale", type=float, default=1.0)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--report", required=True)
    sp.add_argument("--split", choices=("test", "all"), default="test")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("bench")
    add_mesh_arg(sp, required=False)
    sp.add_argument("--graspers", type=int, choices=(1, 2), default=2)
    sp.add_argument("--mode", choices=("kelvinlet", "neural", "fem"), required=True)
    sp.add_argument("--repeat", type=int, default=10)
    sp.add_argument("--ckpt", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("solve")
    add_mesh_arg(sp)
    sp.add_argument("--bc", required=True)
    sp.add_argument("--regime", choices=("linear", "nonlinear"), required=True)
    sp.add_argument("--material", default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("serve")
    add_mesh_arg(sp)
    sp.add_argument("--ckpt", default=None)
    sp.add_argument("--port", type=int, default=8741)
    sp.add_argument("--host", default="127.0.0.1")
    sp.set_defaults(fn=cmd_serve)
    return p


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except CliError as e:
        return _fail(e.code, str(e))
    except AssertionError as e:
        return _fail(EXIT_INTERNAL, f"internal invariant violation: {e}")
    except Exception as e:  # noqa: BLE001 - last-resort machine-readable error
        return _fail(EXIT_INTERNAL, f"{type(e).__name__}: {e}")


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
