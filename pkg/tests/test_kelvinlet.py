import numpy as np
import pytest

from graspsim import shapes
from graspsim.kelvinlet import (
    Grasp,
    KelvinletError,
    KelvinletParams,
    eval_kelvinlet,
    eval_solution,
    grasp_field,
    solve_coefficients,
)


def unit_response(nu):
    """Response magnitude at the source point for a unit handle displacement."""
    return (3.0 - 4.0 * nu) / (5.0 - 6.0 * nu)


def test_value_at_source_closed_form():
    p = KelvinletParams(nu=0.45, eps=0.05)
    g = Grasp(np.zeros(3), np.array([1.0, 0.0, 0.0]))
    u = eval_kelvinlet(np.zeros((1, 3)), g, p)[0]
    np.testing.assert_allclose(u, [unit_response(0.45), 0.0, 0.0], atol=1e-14)
    assert abs(unit_response(0.45) - 1.2 / 2.3) < 1e-15


def test_far_field_decay_like_one_over_r(rng):
    p = KelvinletParams(nu=0.45, eps=0.01)
    g = Grasp(np.zeros(3), np.array([0.0, 1.0, 0.0]))
    d = rng.standard_normal(3)
    d /= np.linalg.norm(d)
    u1 = np.linalg.norm(eval_kelvinlet(100.0 * d[None, :], g, p)[0])
    u2 = np.linalg.norm(eval_kelvinlet(200.0 * d[None, :], g, p)[0])
    assert abs(u1 / u2 - 2.0) < 0.02


def test_field_is_linear_in_handle_displacement(rng):
    p = KelvinletParams()
    x = rng.standard_normal((20, 3))
    s = rng.standard_normal(3)
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    ua = eval_kelvinlet(x, Grasp(s, a), p)
    ub = eval_kelvinlet(x, Grasp(s, b), p)
    uab = eval_kelvinlet(x, Grasp(s, 2.0 * a - 3.0 * b), p)
    np.testing.assert_allclose(uab, 2.0 * ua - 3.0 * ub, atol=1e-12)


def test_single_grasp_coefficient_closed_form():
    # for one grasp the normal equations reduce to k = c|u|^2 / (c^2|u|^2 + lam)
    # with c the self-response factor
    p = KelvinletParams(nu=0.45, eps=0.05, lam=0.001)
    u = np.array([0.0, 0.0, 2.0])
    sol = solve_coefficients([Grasp(np.zeros(3), u)], p)
    c = unit_response(0.45)
    expected = c * (u @ u) / (c * c * (u @ u) + p.lam)
    assert abs(sol.coefficients[0] - expected) < 1e-12


def test_single_grasp_exact_without_ridge():
    p = KelvinletParams(nu=0.45, eps=0.05, lam=0.0)
    g = Grasp(np.array([0.1, -0.2, 0.3]), np.array([0.4, 0.5, -0.6]))
    sol = solve_coefficients([g], p)
    u = eval_solution(g.source[None, :], sol)[0]
    np.testing.assert_allclose(u, g.displacement, atol=1e-12)


def test_two_grasp_interpolation_small_ridge():
    # with two scalar coefficients the handle equations are overdetermined,
    # so exact interpolation needs negligible cross coupling: sources far
    # apart relative to eps
    p = KelvinletParams(nu=0.45, eps=0.05, lam=1e-12)
    grasps = [
        Grasp(np.array([0.0, 0.0, 0.0]), np.array([0.03, -0.01, 0.02])),
        Grasp(np.array([30.0, 10.0, -20.0]), np.array([-0.02, 0.04, 0.01])),
    ]
    sol = solve_coefficients(grasps, p)
    pts = np.array([g.source for g in grasps])
    u = eval_solution(pts, sol)
    np.testing.assert_allclose(u[0], grasps[0].displacement, atol=1e-4)
    np.testing.assert_allclose(u[1], grasps[1].displacement, atol=1e-4)


def test_two_grasp_solution_is_least_squares_optimal(rng):
    # residual of the handle equations must be orthogonal to the column
    # space spanned by the per-grasp fields (normal equations with ridge)
    p = KelvinletParams(nu=0.45, eps=0.05, lam=1e-9)
    grasps = [
        Grasp(np.array([0.0, 0.0, 0.0]), np.array([0.03, -0.01, 0.02])),
        Grasp(np.array([0.3, 0.1, -0.2]), np.array([-0.02, 0.04, 0.01])),
    ]
    sol = solve_coefficients(grasps, p)
    pts = np.array([g.source for g in grasps])
    cols = np.stack(
        [eval_kelvinlet(pts, g, p).ravel() for g in grasps], axis=1
    )
    b = np.concatenate([g.displacement for g in grasps])
    resid = cols.T @ (b - cols @ sol.coefficients) - p.lam * sol.coefficients
    np.testing.assert_allclose(resid, 0.0, atol=1e-12)


def test_coincident_sources_rejected():
    p = KelvinletParams(lam=0.0)
    s = np.array([0.1, 0.2, 0.3])
    grasps = [Grasp(s, np.array([1.0, 0, 0])), Grasp(s, np.array([1.0, 0, 0]))]
    with pytest.raises(KelvinletError):
        solve_coefficients(grasps, p)


def test_parameter_validation():
    with pytest.raises(KelvinletError):
        KelvinletParams(nu=0.5)
    with pytest.raises(KelvinletError):
        KelvinletParams(eps=0.0)
    with pytest.raises(KelvinletError):
        KelvinletParams(lam=-1.0)


def test_grasp_field_matches_manual_eval(organ):
    p = KelvinletParams(eps=0.02, lam=1e-6)
    grasps = [
        Grasp(organ.nodes[10], np.array([0.01, 0.0, -0.005]), node_index=10),
        Grasp(organ.nodes[400], np.array([-0.004, 0.008, 0.0]), node_index=400),
    ]
    field = grasp_field(organ, grasps, p)
    sol = solve_coefficients(grasps, p)
    np.testing.assert_allclose(field, eval_solution(organ.nodes, sol), atol=1e-14)
    assert field.shape == (organ.n_nodes, 3)
