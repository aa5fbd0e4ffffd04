"""Regularized Kelvinlet displacement fields and multi-grasp coefficients.

A single grasp (source point x_s dragged by u_s) induces the closed-form
field

    u_eps(x) = eps/(5-6*nu) * [ (3-4*nu)/r_eps * I
                                + (x-x_s)(x-x_s)^T / r_eps^3 ] u_s,
    r_eps = sqrt(|x-x_s|^2 + eps^2),

which is finite everywhere, including at the source. Several grasps are
combined as u(x) = sum_i k_i u_eps_i(x) with scalar coefficients chosen by
a ridge-regularized least-squares fit so the prescribed displacements are
collectively reproduced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import TetMesh


class KelvinletError(ValueError):
    """Raised for invalid parameters or a degenerate coefficient system."""


@dataclass(frozen=True)
class KelvinletParams:
    """nu: Poisson ratio in (0, 0.5); eps: regularization radius in meters;
    lam: ridge weight on the grasp coefficients."""

    nu: float = 0.45
    eps: float = 0.05
    lam: float = 0.001

    def __post_init__(self):
        if not 0.0 < self.nu < 0.5:
            raise KelvinletError(f"nu must be in (0, 0.5), got {self.nu}")
        if self.eps <= 0.0:
            raise KelvinletError(f"eps must be positive, got {self.eps}")
        if self.lam < 0.0:
            raise KelvinletError(f"lam must be nonnegative, got {self.lam}")


@dataclass(frozen=True)
class Grasp:
    """A point boundary condition: source position and imposed displacement,
    both in meters. node_index records the mesh node the grasp sits on, when
    there is one."""

    source: np.ndarray
    displacement: np.ndarray
    node_index: int | None = None

    def __post_init__(self):
        s = np.asarray(self.source, dtype=float).reshape(3)
        u = np.asarray(self.displacement, dtype=float).reshape(3)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(u))):
            raise KelvinletError("grasp source/displacement must be finite")
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "displacement", u)


@dataclass(frozen=True)
class KelvinletSolution:
    grasps: tuple[Grasp, ...]
    coefficients: np.ndarray
    params: KelvinletParams

    def __post_init__(self):
        if len(self.coefficients) != len(self.grasps):
            raise KelvinletError("one coefficient per grasp required")


def eval_kelvinlet(x: np.ndarray, grasp: Grasp, params: KelvinletParams) -> np.ndarray:
    """Field of one unit-coefficient Kelvinlet at point(s) x.

    x may be a single 3-vector or an (N, 3) array; the result has the same
    shape.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(-1, 3)
    r = pts - grasp.source
    r2 = np.einsum("ij,ij->i", r, r)
    r_eps = np.sqrt(r2 + params.eps**2)
    a = (3.0 - 4.0 * params.nu) / r_eps
    ru = r @ grasp.displacement
    out = (params.eps / (5.0 - 6.0 * params.nu)) * (
        a[:, None] * grasp.displacement + (ru / r_eps**3)[:, None] * r
    )
    return out[0] if single else out


def solve_coefficients(
    grasps: list[Grasp] | tuple[Grasp, ...], params: KelvinletParams
) -> KelvinletSolution:
    """Fit one scalar coefficient per grasp by ridge least squares.

    Minimizes sum_i |sum_j k_j u_eps_j(x_i) - u_i|^2 + lam * sum k_j^2 via
    the m x m normal equations; m stays tiny (<= 8 graspers), so a direct
    dense solve is exact.
    """
    if len(grasps) == 0:
        raise KelvinletError("at least one grasp required")
    sources = np.array([g.source for g in grasps])
    m = len(grasps)
    # columns: field of grasp j evaluated at every source point, stacked
    A = np.empty((3 * m, m))
    for j, g in enumerate(grasps):
        A[:, j] = eval_kelvinlet(sources, g, params).ravel()
    b = np.array([g.displacement for g in grasps]).ravel()
    ata = A.T @ A + params.lam * np.eye(m)
    try:
        # SPD for lam > 0; Cholesky doubles as the singularity check at lam=0
        L = np.linalg.cholesky(ata)
        k = np.linalg.solve(L.T, np.linalg.solve(L, A.T @ b))
    except np.linalg.LinAlgError as e:
        raise KelvinletError(
            "singular coefficient system (coincident or degenerate grasps)"
        ) from e
    cond = np.linalg.cond(ata)
    if not np.isfinite(cond) or cond > 1e14:
        raise KelvinletError("singular coefficient system (coincident or degenerate grasps)")
    return KelvinletSolution(grasps=tuple(grasps), coefficients=k, params=params)


def eval_solution(x: np.ndarray, solution: KelvinletSolution) -> np.ndarray:
    """Superposed field sum_j k_j u_eps_j at arbitrary point(s)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(-1, 3)
    out = np.zeros_like(pts)
    for k, g in zip(solution.coefficients, solution.grasps):
        out += k * eval_kelvinlet(pts, g, solution.params)
    return out[0] if single else out


def eval_field(mesh: TetMesh, solution: KelvinletSolution) -> np.ndarray:
    """Per-node displacement field (N, 3) over the mesh nodes.

    Pure function of its inputs; grasps are summed in list order so results
    are bitwise reproducible.
    """
    return eval_solution(mesh.nodes, solution)


def grasp_field(
    mesh: TetMesh, grasps: list[Grasp] | tuple[Grasp, ...], params: KelvinletParams
) -> np.ndarray:
    """Convenience: solve coefficients, then evaluate over the mesh."""
    return eval_field(mesh, solve_coefficients(grasps, params))
