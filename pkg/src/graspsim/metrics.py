"""Volume-weighted field norms and the deformation-capture score.

The score is 100 * (1 - mean relative L2 error) over samples, where the
L2 norm discretizes the integral over the tissue with per-node lumped
volumes. It is not clamped: predictions worse than zero go negative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class EvalReport:
    per_sample: list[float]
    mean_dcm: float
    regime: str = ""
    model_id: str = ""
    excluded_zero_norm: int = 0
    inference_ms_mean: float = 0.0
    inference_ms_p95: float = 0.0
    node_count: int = 0

    def to_json(self) -> dict:
        return {
            "mean_dcm": self.mean_dcm,
            "per_sample_dcm": self.per_sample,
            "regime": self.regime,
            "model_id": self.model_id,
            "excluded_zero_norm": self.excluded_zero_norm,
            "inference_ms_mean": self.inference_ms_mean,
            "inference_ms_p95": self.inference_ms_p95,
            "node_count": self.node_count,
        }

    def write(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2)

    def write_csv(self, path: str) -> None:
        with open(path, "w") as f:
            f.write("sample,dcm\n")
            for i, v in enumerate(self.per_sample):
                f.write(f"{i},{v}\n")


def field_norm(field: np.ndarray, weights: np.ndarray) -> float:
    """sqrt(sum_n w_n |u_n|^2), the discrete L2 norm over the tissue."""
    field = np.asarray(field, dtype=float).reshape(-1, 3)
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(field):
        raise ValueError("weights/field length mismatch")
    if np.any(weights < 0):
        raise ValueError("negative volume weight")
    return float(np.sqrt(np.sum(weights * np.einsum("ij,ij->i", field, field))))


def dcm(
    pred_fields: list[np.ndarray],
    true_fields: list[np.ndarray],
    weights: np.ndarray,
) -> tuple[float, list[float], int]:
    """Mean score, per-sample scores, and the zero-norm exclusion count.

    Samples with |u_true| = 0 are skipped (the relative error is undefined).
    """
    if len(pred_fields) != len(true_fields):
        raise ValueError("prediction/truth count mismatch")
    terms = []
    excluded = 0
    for p, t in zip(pred_fields, true_fields):
        tn = field_norm(t, weights)
        if tn == 0.0:
            excluded += 1
            continue
        terms.append(100.0 * (1.0 - field_norm(np.asarray(p) - np.asarray(t), weights) / tn))
    if not terms:
        raise ValueError("all samples have zero-norm ground truth")
    return float(np.mean(terms)), terms, excluded
