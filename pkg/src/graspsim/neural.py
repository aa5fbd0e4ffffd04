"""Per-node surrogate network and its three training regimes.

Architecture: a DeepSet-style network. Each node's 7-feature row passes
through a shared encoder (7 -> 64 -> 64, ReLU), the encodings are
mean-pooled into a 64-wide context, and the concatenation [node, context]
(128) is decoded to a 3-vector displacement (128 -> 64 -> 3). Permuting
input rows permutes output rows identically.

Gradients are hand-rolled reverse mode; the optimizer is Adam. Regimes:
  base        : weighted MSE of u_hat vs u_true
  residual    : network predicts the correction on top of the Kelvinlet
                field, loss on u_true - (u_kelvin + r_hat)
  regularized : base data term + lambda_reg * weighted MSE of u_hat vs the
                Kelvinlet field on fresh cone-sampled grasps
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import kelvinlet, metrics
from .dataset import Dataset, Sample, build_features
from .kelvinlet import Grasp, KelvinletParams
from .mesh import TetMesh
from .sampling import GraspSampler, SamplingConfig

ENC1, ENC2, DEC1 = 64, 64, 64
FEATURES = 7

REGIMES = ("base", "residual", "regularized")


class NeuralError(RuntimeError):
    pass


@dataclass
class NetworkParams:
    """Weight matrices and biases; shapes are fixed by the architecture."""

    w1: np.ndarray  # (7, 64)
    b1: np.ndarray
    w2: np.ndarray  # (64, 64)
    b2: np.ndarray
    w3: np.ndarray  # (128, 64)
    b3: np.ndarray
    w4: np.ndarray  # (64, 3)
    b4: np.ndarray
    seed: int = 0
    regime: str = "base"
    lambda_reg: float = 0.0
    arity: int = 1
    kelvinlet: KelvinletParams = field(default_factory=KelvinletParams)
    # optional input standardization and output scaling, baked into the
    # checkpoint so inference needs no side information
    feat_mean: np.ndarray = field(default_factory=lambda: np.zeros(FEATURES))
    feat_std: np.ndarray = field(default_factory=lambda: np.ones(FEATURES))
    out_scale: float = 1.0

    @staticmethod
    def init(seed: int, regime: str = "base", lambda_reg: float = 0.0, arity: int = 1,
             params: KelvinletParams | None = None) -> "NetworkParams":
        rng = np.random.default_rng(seed)

        def he(n_in, n_out):
            return rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))

        return NetworkParams(
            w1=he(FEATURES, ENC1), b1=np.zeros(ENC1),
            w2=he(ENC1, ENC2), b2=np.zeros(ENC2),
            w3=he(2 * ENC2, DEC1), b3=np.zeros(DEC1),
            w4=he(DEC1, 3), b4=np.zeros(3),
            seed=seed, regime=regime, lambda_reg=lambda_reg, arity=arity,
            kelvinlet=params or KelvinletParams(),
        )

    def tensors(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3, self.w4, self.b4]

    def save(self, path: str) -> None:
        """JSON header line, then the concatenated little-endian f32 blob."""
        header = {
            "shapes": [list(t.shape) for t in self.tensors()],
            "seed": self.seed,
            "regime": self.regime,
            "lambda_reg": self.lambda_reg,
            "arity": self.arity,
            "kelvinlet": {
                "nu": self.kelvinlet.nu,
                "eps": self.kelvinlet.eps,
                "lam": self.kelvinlet.lam,
            },
            "feat_mean": self.feat_mean.tolist(),
            "feat_std": self.feat_std.tolist(),
            "out_scale": self.out_scale,
        }
        with open(path, "wb") as f:
            f.write((json.dumps(header) + "\n").encode())
            for t in self.tensors():
                f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())

    @staticmethod
    def load(path: str) -> "NetworkParams":
        with open(path, "rb") as f:
            header = json.loads(f.readline().decode())
            blob = np.frombuffer(f.read(), dtype="<f4").astype(np.float64)
        tensors = []
        off = 0
        for shape in header["shapes"]:
            n = int(np.prod(shape))
            tensors.append(blob[off : off + n].reshape(shape))
            off += n
        kp = header["kelvinlet"]
        return NetworkParams(
            *tensors,
            seed=header["seed"],
            regime=header["regime"],
            lambda_reg=header["lambda_reg"],
            arity=header.get("arity", 1),
            kelvinlet=KelvinletParams(kp["nu"], kp["eps"], kp["lam"]),
            feat_mean=np.asarray(header.get("feat_mean", np.zeros(FEATURES))),
            feat_std=np.asarray(header.get("feat_std", np.ones(FEATURES))),
            out_scale=float(header.get("out_scale", 1.0)),
        )


@dataclass(frozen=True)
class TrainConfig:
    regime: str = "base"
    lambda_reg: float = 0.0
    epochs: int = 150
    step_size: float = 1e-3
    seed: int = 0
    q_batch: int = 4
    test_fraction: float = 0.2
    normalize: bool = False
    kelvinlet: KelvinletParams = field(default_factory=KelvinletParams)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise NeuralError(f"unknown regime {self.regime!r}")
        if self.lambda_reg < 0:
            raise NeuralError("lambda_reg must be nonnegative")


# ---------------------------------------------------------------------------
# forward / backward


def forward(params: NetworkParams, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
    """(N, 7) features -> (N, 3) per-node prediction."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != FEATURES:
        raise NeuralError(f"expected (N, {FEATURES}) features, got {x.shape}")
    x = (x - params.feat_mean) / params.feat_std
    h1 = np.maximum(x @ params.w1 + params.b1, 0.0)
    h2 = np.maximum(h1 @ params.w2 + params.b2, 0.0)
    # sort each column before reducing so the pooled context is bitwise
    # independent of node order (exact permutation equivariance)
    ctx = np.sort(h2, axis=0).sum(axis=0) / len(h2)
    z = np.concatenate([h2, np.broadcast_to(ctx, h2.shape)], axis=1)
    h3 = np.maximum(z @ params.w3 + params.b3, 0.0)
    # narrow output GEMM is not bitwise row-order invariant under BLAS;
    # reduce per row in a fixed pattern instead
    y = (np.einsum("nk,kj->nj", h3, params.w4, optimize=False) + params.b4) * params.out_scale
    if cache is not None:
        cache.update(x=x, h1=h1, h2=h2, z=z, h3=h3)
    return y


def backward(params: NetworkParams, cache: dict, dy: np.ndarray) -> list[np.ndarray]:
    """Gradients of all weights given d(loss)/d(output); order matches
    NetworkParams.tensors()."""
    x, h1, h2, z, h3 = cache["x"], cache["h1"], cache["h2"], cache["z"], cache["h3"]
    n = len(x)
    dy = dy * params.out_scale
    dw4 = h3.T @ dy
    db4 = dy.sum(axis=0)
    dh3 = (dy @ params.w4.T) * (h3 > 0)
    dw3 = z.T @ dh3
    db3 = dh3.sum(axis=0)
    dz = dh3 @ params.w3.T
    # pooled half of z backpropagates through the mean over nodes
    dh2 = dz[:, :ENC2] + dz[:, ENC2:].sum(axis=0) / n
    dh2 = dh2 * (h2 > 0)
    dw2 = h1.T @ dh2
    db2 = dh2.sum(axis=0)
    dh1 = (dh2 @ params.w2.T) * (h1 > 0)
    dw1 = x.T @ dh1
    db1 = dh1.sum(axis=0)
    return [dw1, db1, dw2, db2, dw3, db3, dw4, db4]


def weighted_mse(diff: np.ndarray, w: np.ndarray) -> tuple[float, np.ndarray]:
    """sum_n w_n |diff_n|^2 / sum_n w_n, and its gradient w.r.t. diff."""
    wsum = w.sum()
    loss = float(np.sum(w * np.einsum("ij,ij->i", diff, diff)) / wsum)
    return loss, (2.0 / wsum) * w[:, None] * diff


def loss_residual(
    params: NetworkParams, sample: Sample, u_kelvin: np.ndarray, w: np.ndarray
) -> float:
    r_hat = forward(params, sample.features)
    diff = sample.target.astype(np.float64) - (u_kelvin + r_hat)
    return weighted_mse(diff, w)[0]


def loss_regularized(
    params: NetworkParams,
    sample: Sample,
    q_batch: list[tuple[np.ndarray, np.ndarray]],
    w: np.ndarray,
    lambda_reg: float,
) -> float:
    """Data term plus lambda_reg * mean Kelvinlet-matching penalty over the
    q batch of (features, kelvinlet field) pairs."""
    u_hat = forward(params, sample.features)
    loss = weighted_mse(u_hat - sample.target.astype(np.float64), w)[0]
    if lambda_reg > 0 and q_batch:
        pen = 0.0
        for qf, qu in q_batch:
            pen += weighted_mse(forward(params, qf) - qu, w)[0]
        loss += lambda_reg * pen / len(q_batch)
    return loss


# ---------------------------------------------------------------------------
# training


def _adam_step(tensors, grads, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    for p, g, mi, vi in zip(tensors, grads, m, v):
        mi *= beta1
        mi += (1 - beta1) * g
        vi *= beta2
        vi += (1 - beta2) * g * g
        mhat = mi / (1 - beta1**t)
        vhat = vi / (1 - beta2**t)
        p -= lr * mhat / (np.sqrt(vhat) + eps)


def split_dataset(ds: Dataset, seed: int, test_fraction: float = 0.2):
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(ds.samples))
    n_test = int(round(len(idx) * test_fraction))
    test = [ds.samples[i] for i in idx[:n_test]]
    train = [ds.samples[i] for i in idx[n_test:]]
    return train, test


def kelvinlet_fields_for(
    mesh: TetMesh, samples: list[Sample], params: KelvinletParams
) -> list[np.ndarray]:
    out = []
    for s in samples:
        sol = kelvinlet.solve_coefficients(s.grasps, params)
        out.append(kelvinlet.eval_field(mesh, sol))
    return out


def train(
    mesh: TetMesh,
    ds: Dataset,
    cfg: TrainConfig,
    log_path: str | None = None,
) -> tuple[NetworkParams, list[dict]]:
    """Full-dataset Adam training; deterministic given cfg.seed.

    Returns the trained parameters and a per-epoch log (train loss, test
    deformation-capture score).
    """
    if not ds.samples:
        raise NeuralError("dataset is empty")
    train_set, test_set = split_dataset(ds, cfg.seed, cfg.test_fraction)
    if not train_set:
        raise NeuralError("empty training split")
    w = mesh.lumped_volume
    params = NetworkParams.init(
        cfg.seed, regime=cfg.regime, lambda_reg=cfg.lambda_reg, arity=ds.arity,
        params=cfg.kelvinlet,
    )
    kelvin_train_pre = (
        kelvinlet_fields_for(mesh, train_set, cfg.kelvinlet)
        if cfg.regime == "residual"
        else None
    )
    if cfg.normalize:
        allf = np.concatenate([s.features for s in train_set]).astype(np.float64)
        std = allf.std(axis=0)
        std[std == 0] = 1.0
        params.feat_mean = allf.mean(axis=0)
        params.feat_std = std
        # condition the output layer to the target scale (residual targets
        # when the network only learns the correction)
        if cfg.regime == "residual":
            resid = [
                s.target.astype(np.float64) - uk
                for s, uk in zip(train_set, kelvin_train_pre)
            ]
            rms = np.sqrt(np.mean(np.concatenate(resid) ** 2))
        else:
            rms = np.sqrt(np.mean(np.concatenate([s.target for s in train_set]) ** 2))
        params.out_scale = float(rms) if rms > 0 else 1.0
    kelvin_train = (
        kelvin_train_pre if kelvin_train_pre is not None else [None] * len(train_set)
    )
    q_sampler = (
        GraspSampler(mesh, ds.sampling, seed=cfg.seed ^ 0x5EED)
        if cfg.regime == "regularized" and cfg.lambda_reg > 0
        else None
    )

    tensors = params.tensors()
    m = [np.zeros_like(t) for t in tensors]
    v = [np.zeros_like(t) for t in tensors]
    log: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        for s, uk in zip(train_set, kelvin_train):
            cache: dict = {}
            out = forward(params, s.features, cache)
            if cfg.regime == "residual":
                diff = uk + out - s.target.astype(np.float64)
            else:
                diff = out - s.target.astype(np.float64)
            loss, dd = weighted_mse(diff, w)
            grads = backward(params, cache, dd)
            if q_sampler is not None:
                pen = 0.0
                for _ in range(cfg.q_batch):
                    qg = q_sampler.sample_q()
                    qu = kelvinlet.grasp_field(mesh, [qg], cfg.kelvinlet)
                    qf = build_features(mesh, [qg])
                    qcache: dict = {}
                    qout = forward(params, qf, qcache)
                    ql, qdd = weighted_mse(qout - qu, w)
                    pen += ql
                    qgrads = backward(params, qcache, qdd)
                    scale = cfg.lambda_reg / cfg.q_batch
                    for g, qg_ in zip(grads, qgrads):
                        g += scale * qg_
                loss += cfg.lambda_reg * pen / cfg.q_batch
            if not np.isfinite(loss):
                raise NeuralError(f"non-finite loss at epoch {epoch}")
            step += 1
            _adam_step(tensors, grads, m, v, step, cfg.step_size)
            epoch_loss += loss
        entry = {"epoch": epoch, "train_loss": epoch_loss / len(train_set)}
        if test_set:
            preds = [predict_sample(params, mesh, s) for s in test_set]
            score, _, _ = metrics.dcm(
                preds, [s.target.astype(np.float64) for s in test_set], w
            )
            entry["test_dcm"] = score
        log.append(entry)
    if log_path:
        with open(log_path, "w") as f:
            for entry in log:
                f.write(json.dumps(entry) + "\n")
    return params, log


# ---------------------------------------------------------------------------
# inference


def predict(params: NetworkParams, mesh: TetMesh, grasps: list[Grasp]) -> np.ndarray:
    """Displacement field for a grasp set; adds the Kelvinlet field in the
    residual regime."""
    if len(grasps) != params.arity:
        raise NeuralError(
            f"grasp arity {len(grasps)} does not match trained arity {params.arity}"
        )
    feats = build_features(mesh, grasps)
    out = forward(params, feats)
    if params.regime == "residual":
        out = out + kelvinlet.grasp_field(mesh, grasps, params.kelvinlet)
    return out


def predict_sample(params: NetworkParams, mesh: TetMesh, sample: Sample) -> np.ndarray:
    out = forward(params, sample.features)
    if params.regime == "residual":
        out = out + kelvinlet.grasp_field(mesh, sample.grasps, params.kelvinlet)
    return out
