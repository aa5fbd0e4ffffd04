"""Train the surrogate in all three regimes on a small linear dataset.

The point of the exercise: a network that starts from the analytic brush
(residual or regularized regime) beats the same network trained from scratch.
Takes a few minutes on one CPU core.

Run:  python3 demos/train_regimes.py
"""

import time

import numpy as np

from graspsim import dataset, fem, mesh as meshmod, metrics, neural, sampling, shapes
from graspsim.kelvinlet import KelvinletParams
from graspsim.neural import TrainConfig


def main():
    organ = shapes.organ_mesh(7)
    specs = sampling.make_region_specs(4)
    organ = meshmod.assign_regions(
        organ, specs, fixed_direction=(0.0, -1.0, 0.0), fixed_half_angle=0.5
    )
    cuboid = tuple(tuple(0.25 * x for x in ax) for ax in sampling.FULL_SCALE_CUBOID)
    cfg = sampling.preset_config("desk-scale", cuboid=cuboid, seed=11)
    mat = fem.MaterialParams(model=fem.Model.LINEAR, mu=3590.0, nu=0.45)

    print("generating 120 single-grasp samples...")
    ds = dataset.generate(organ, mat, cfg, count=120, arity=1)

    prior = KelvinletParams(nu=0.45, eps=0.02, lam=1e-6)
    w = organ.lumped_volume
    _, test = neural.split_dataset(ds, seed=0)
    trues = [s.target.astype(float) for s in test]

    prior_fields = neural.kelvinlet_fields_for(organ, test, prior)
    print(f"analytic brush alone: test DCM "
          f"{metrics.dcm(prior_fields, trues, w)[0]:.2f}\n")

    for regime in ("base", "residual", "regularized"):
        t0 = time.time()
        tc = TrainConfig(
            regime=regime, lambda_reg=1.0, epochs=60, step_size=3e-3,
            seed=0, normalize=True, kelvinlet=prior,
        )
        params, log = neural.train(organ, ds, tc)
        preds = [neural.predict_sample(params, organ, s) for s in test]
        score = metrics.dcm(preds, trues, w)[0]
        print(f"{regime:12s} test DCM {score:6.2f}  "
              f"(final train loss {log[-1]['train_loss']:.3e}, "
              f"{time.time() - t0:.0f} s)")


if __name__ == "__main__":
    main()
