import json

import numpy as np
import pytest

from graspsim import metrics


def rand_fields(rng, k=5, n=40):
    return [rng.standard_normal((n, 3)) for _ in range(k)]


def test_perfect_prediction_scores_100(rng):
    t = rand_fields(rng)
    w = np.abs(rng.standard_normal(40)) + 0.1
    mean, terms, excluded = metrics.dcm(t, t, w)
    assert mean == 100.0
    assert excluded == 0
    assert all(x == 100.0 for x in terms)


def test_zero_prediction_scores_0(rng):
    t = rand_fields(rng)
    z = [np.zeros_like(x) for x in t]
    w = np.ones(40)
    mean, _, _ = metrics.dcm(z, t, w)
    assert mean == 0.0


def test_scaled_prediction_closed_form(rng):
    # prediction alpha*u_true gives 100*(1 - |1 - alpha|)
    t = rand_fields(rng, k=3)
    w = np.abs(rng.standard_normal(40)) + 0.1
    for alpha in (0.0, 0.5, 1.0, 1.5):
        mean, _, _ = metrics.dcm([alpha * x for x in t], t, w)
        assert abs(mean - 100.0 * (1.0 - abs(1.0 - alpha))) < 1e-9


def test_bad_prediction_goes_negative(rng):
    t = rand_fields(rng, k=2)
    mean, _, _ = metrics.dcm([3.0 * x for x in t], t, np.ones(40))
    assert mean == pytest.approx(-100.0)


def test_rotation_invariance(rng):
    from scipy.spatial.transform import Rotation

    t = rand_fields(rng, k=4)
    p = [x + 0.1 * rng.standard_normal(x.shape) for x in t]
    w = np.abs(rng.standard_normal(40)) + 0.1
    base = metrics.dcm(p, t, w)[0]
    R = Rotation.random(random_state=3).as_matrix()
    rot = metrics.dcm([x @ R.T for x in p], [x @ R.T for x in t], w)[0]
    assert abs(base - rot) < 1e-9


def test_zero_norm_samples_excluded(rng):
    t = rand_fields(rng, k=3)
    t[1] = np.zeros_like(t[1])
    p = [x.copy() for x in t]
    mean, terms, excluded = metrics.dcm(p, t, np.ones(40))
    assert excluded == 1
    assert len(terms) == 2
    assert mean == 100.0


def test_weights_must_be_nonnegative(rng):
    t = rand_fields(rng, k=1)
    w = np.ones(40)
    w[3] = -1.0
    with pytest.raises(ValueError):
        metrics.field_norm(t[0], w)


def test_field_norm_matches_manual(rng):
    u = rng.standard_normal((40, 3))
    w = np.abs(rng.standard_normal(40)) + 0.1
    manual = np.sqrt(np.sum(w * np.sum(u * u, axis=1)))
    assert abs(metrics.field_norm(u, w) - manual) < 1e-12


def test_report_serialization(tmp_path):
    rep = metrics.EvalReport(
        per_sample=[99.0, 98.5], mean_dcm=98.75, regime="base", model_id="m1",
        excluded_zero_norm=0, inference_ms_mean=1.5, inference_ms_p95=2.0,
        node_count=512,
    )
    path = tmp_path / "report.json"
    rep.write(str(path))
    doc = json.loads(path.read_text())
    assert doc["mean_dcm"] == 98.75
    assert doc["per_sample_dcm"] == [99.0, 98.5]
    csv_path = tmp_path / "report.csv"
    rep.write_csv(str(csv_path))
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == 3  # header + 2 samples
