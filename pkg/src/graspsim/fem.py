"""Quasi-static tetrahedral FEM ground truth.

Two constitutive models on 4-node constant-strain tets:

  * linear isotropic elasticity (shear modulus mu, Poisson ratio nu),
    solved as one sparse SPD system;
  * a two-parameter Mooney-Rivlin hyperelastic energy with an added
    volumetric penalty and gravity preload, minimized by Newton iteration
    with backtracking line search and incremental load stepping.

The Mooney-Rivlin energy density is

    W = C01 * (I1 * I3^(-1/3) - 3) + C10 * (I2 * I3^(-2/3) - 3)
        + kappa/2 * (J - 1)^2

in the invariants of C = F^T F. The second deviatoric term uses I2 (the
published form's I1 there is not stress-free at the identity and is
unbounded below); kappa = 2*(C10+C01)*(1+nu)/(3*(1-2*nu)) makes the
volumetric response well posed. Small-strain shear modulus is 2*(C10+C01).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import TetMesh, tet_signed_volumes


class FemError(RuntimeError):
    """Solver-level failure: degenerate element, singular system, or
    non-convergence."""


class Model(Enum):
    LINEAR = "linear"
    MOONEY_RIVLIN = "mooney_rivlin"


@dataclass(frozen=True)
class MaterialParams:
    model: Model = Model.LINEAR
    mu: float = 690.0          # Pa, linear shear modulus
    nu: float = 0.45           # linear Poisson ratio
    c10: float = 1620.0        # Pa
    c01: float = 1970.0        # Pa
    rho: float = 1000.0        # kg/m^3
    gravity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    region_mu: dict = field(default_factory=dict)  # region id -> mu override (linear)

    def __post_init__(self):
        if self.mu <= 0 or not 0 < self.nu < 0.5:
            raise ValueError("need mu > 0 and 0 < nu < 0.5")
        if self.c10 <= 0 or self.c01 <= 0:
            raise ValueError("need C10, C01 > 0")
        if self.rho < 0:
            raise ValueError("need rho >= 0")

    @property
    def kappa(self) -> float:
        return 2.0 * (self.c10 + self.c01) * (1.0 + self.nu) / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def g(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)


@dataclass(frozen=True)
class BoundaryConditions:
    """fixed nodes get zero displacement; prescribed maps node -> 3-vector."""

    fixed_nodes: frozenset[int] = frozenset()
    prescribed: dict = field(default_factory=dict)

    def __post_init__(self):
        overlap = self.fixed_nodes & set(self.prescribed)
        if overlap:
            raise ValueError(f"nodes both fixed and prescribed: {sorted(overlap)[:5]}")

    def constrained_nodes(self) -> np.ndarray:
        return np.array(sorted(self.fixed_nodes | set(self.prescribed)), dtype=int)

    def values_for(self, nodes: np.ndarray) -> np.ndarray:
        out = np.zeros((len(nodes), 3))
        for i, n in enumerate(nodes):
            if int(n) in self.prescribed:
                out[i] = np.asarray(self.prescribed[int(n)], dtype=float)
        return out


def fixed_region_bc(mesh: TetMesh, prescribed: dict) -> BoundaryConditions:
    """Clamp every node labeled "fixed" and add the given grasp displacements."""
    fixed = frozenset(int(i) for i in mesh.nodes_in_region("fixed")) - set(
        int(k) for k in prescribed
    )
    return BoundaryConditions(fixed_nodes=fixed, prescribed=dict(prescribed))


@dataclass
class SolverReport:
    iterations: int = 0
    residual: float = 0.0
    energy: float = 0.0
    wall_time_s: float = 0.0
    load_steps: int = 0
    newton_steps: int = 0
    method: str = ""
    notes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "energy": self.energy,
            "wall_time_s": self.wall_time_s,
            "load_steps": self.load_steps,
            "newton_steps": self.newton_steps,
            "method": self.method,
            "notes": self.notes,
        }


# ---------------------------------------------------------------------------
# element geometry


def _shape_gradients(mesh: TetMesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-tet volumes (M,) and shape-function gradients (M, 4, 3)."""
    p = mesh.nodes[mesh.tets]  # (M, 4, 3)
    d = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=2)
    det = np.linalg.det(d)
    if np.any(det <= 0):
        raise FemError(f"degenerate tet Jacobian at tet {int(np.argmin(det))}")
    dinv = np.linalg.inv(d)  # rows are grad N1..N3 in (M, 3, 3)
    grads = np.empty((len(d), 4, 3))
    grads[:, 1:, :] = dinv
    grads[:, 0, :] = -dinv.sum(axis=1)
    return det / 6.0, grads


def _element_mu(mesh: TetMesh, mat: MaterialParams) -> np.ndarray:
    """Per-tet shear modulus, honoring region overrides (majority label)."""
    mu = np.full(len(mesh.tets), mat.mu)
    if mat.region_mu:
        labels = np.array([mesh.region_of_node[int(i)] for i in range(mesh.n_nodes)])
        for region, value in mat.region_mu.items():
            in_region = np.isin(mesh.tets, np.where(labels == region)[0])
            mu[in_region.sum(axis=1) >= 2] = value
    return mu


# ---------------------------------------------------------------------------
# linear elasticity


def assemble_linear_system(mesh: TetMesh, mat: MaterialParams) -> sp.csr_matrix:
    """Global stiffness K (3N x 3N), symmetric PSD before constraints."""
    if mat.model is not Model.LINEAR:
        raise ValueError("assemble_linear_system requires the linear model")
    vols, grads = _shape_gradients(mesh)
    mu_e = _element_mu(mesh, mat)
    lam_e = 2.0 * mu_e * mat.nu / (1.0 - 2.0 * mat.nu)

    m = len(mesh.tets)
    B = np.zeros((m, 6, 12))
    for a in range(4):
        gx, gy, gz = grads[:, a, 0], grads[:, a, 1], grads[:, a, 2]
        c = 3 * a
        B[:, 0, c + 0] = gx
        B[:, 1, c + 1] = gy
        B[:, 2, c + 2] = gz
        B[:, 3, c + 0] = gy
        B[:, 3, c + 1] = gx
        B[:, 4, c + 1] = gz
        B[:, 4, c + 2] = gy
        B[:, 5, c + 0] = gz
        B[:, 5, c + 2] = gx
    D = np.zeros((m, 6, 6))
    for i in range(3):
        for j in range(3):
            D[:, i, j] = lam_e
        D[:, i, i] += 2.0 * mu_e
        D[:, 3 + i, 3 + i] = mu_e
    Ke = np.einsum("eai,eab,ebj,e->eij", B, D, B, vols, optimize=True)
    # symmetrize exactly against einsum round-off
    Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))

    dof = (3 * mesh.tets[:, :, None] + np.arange(3)[None, None, :]).reshape(m, 12)
    rows = np.repeat(dof, 12, axis=1).ravel()
    cols = np.tile(dof, (1, 12)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(3 * mesh.n_nodes,) * 2)
    return K.tocsr()


def apply_dirichlet(
    K: sp.csr_matrix, f: np.ndarray, bc: BoundaryConditions, n_nodes: int
):
    """Eliminate constrained DOFs; returns (K_ff, rhs, free_dofs, full_u0).

    full_u0 holds the prescribed values embedded at their DOFs and zeros
    elsewhere; reconstruct with full_u0[free] = u_f.
    """
    nodes = bc.constrained_nodes()
    if len(nodes) and (nodes.min() < 0 or nodes.max() >= n_nodes):
        raise IndexError("boundary condition node index out of range")
    vals = bc.values_for(nodes)
    fixed_dofs = (3 * nodes[:, None] + np.arange(3)[None, :]).ravel() if len(nodes) else np.array([], dtype=int)
    u0 = np.zeros(3 * n_nodes)
    if len(nodes):
        u0[fixed_dofs] = vals.ravel()
    mask = np.ones(3 * n_nodes, dtype=bool)
    mask[fixed_dofs] = False
    free = np.where(mask)[0]
    rhs = f[free] - K[free][:, fixed_dofs] @ u0[fixed_dofs] if len(nodes) else f[free]
    return K[free][:, free], rhs, free, u0


def solve_linear(
    mesh: TetMesh,
    mat: MaterialParams,
    bc: BoundaryConditions,
    method: str = "cg",
    report: SolverReport | None = None,
) -> np.ndarray:
    """Displacement field for K u = 0 with Dirichlet data imposed.

    method "cg" uses Jacobi-preconditioned conjugate gradients (rtol 1e-8);
    "dense" is a direct factorization intended for small test oracles.
    """
    t0 = time.perf_counter()
    K = assemble_linear_system(mesh, mat)
    Kff, rhs, free, u = apply_dirichlet(K, np.zeros(3 * mesh.n_nodes), bc, mesh.n_nodes)
    if Kff.shape[0] == 0:
        return u.reshape(-1, 3)
    iters = 0
    if method == "dense":
        try:
            uf = np.linalg.solve(Kff.toarray(), rhs)
        except np.linalg.LinAlgError as e:
            raise FemError("singular reduced system (insufficient constraints)") from e
    elif method == "cg":
        diag = Kff.diagonal()
        if np.any(diag <= 0):
            raise FemError("singular reduced system (insufficient constraints)")
        M = sp.diags(1.0 / diag)

        def count(_):
            nonlocal iters
            iters += 1

        scale = np.linalg.norm(rhs)
        if scale == 0:
            uf = np.zeros_like(rhs)
        else:
            uf, info = spla.cg(
                Kff, rhs, rtol=1e-10, atol=0.0, M=M, maxiter=20 * mesh.n_nodes,
                callback=count,
            )
            if info != 0:
                raise FemError(f"CG failed to converge (info={info})")
    else:
        raise ValueError(f"unknown method {method!r}")
    u[free] = uf
    if report is not None:
        report.iterations = iters
        report.residual = float(np.linalg.norm(Kff @ uf - rhs))
        report.wall_time_s = time.perf_counter() - t0
        report.method = f"linear-{method}"
    return u.reshape(-1, 3)


# ---------------------------------------------------------------------------
# Mooney-Rivlin hyperelasticity


def _deformation_state(u_el: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Deformation gradient per tet from element displacements (M, 4, 3)."""
    F = np.einsum("eai,eaj->eij", u_el, grads)
    F[:, 0, 0] += 1.0
    F[:, 1, 1] += 1.0
    F[:, 2, 2] += 1.0
    return F


def _energy_density(F: np.ndarray, mat: MaterialParams) -> np.ndarray:
    C = np.einsum("eki,ekj->eij", F, F)
    I1 = np.trace(C, axis1=1, axis2=2)
    C2 = np.einsum("eij,ejk->eik", C, C)
    I2 = 0.5 * (I1**2 - np.trace(C2, axis1=1, axis2=2))
    J = np.linalg.det(F)
    I3 = J**2
    W = (
        mat.c01 * (I1 * I3 ** (-1.0 / 3.0) - 3.0)
        + mat.c10 * (I2 * I3 ** (-2.0 / 3.0) - 3.0)
        + 0.5 * mat.kappa * (J - 1.0) ** 2
    )
    return W, J


def _pk1_stress(F: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """First Piola-Kirchhoff stress P = F S, S = 2 dW/dC, per tet."""
    C = np.einsum("eki,ekj->eij", F, F)
    I1 = np.trace(C, axis1=1, axis2=2)
    C2 = np.einsum("eij,ejk->eik", C, C)
    I2 = 0.5 * (I1**2 - np.trace(C2, axis1=1, axis2=2))
    J = np.linalg.det(F)
    I3 = J**2
    Cinv = np.linalg.inv(C)
    eye = np.eye(3)[None]
    t1 = I3 ** (-1.0 / 3.0)
    t2 = I3 ** (-2.0 / 3.0)
    S = 2.0 * (
        mat.c01 * t1[:, None, None] * (eye - (I1 / 3.0)[:, None, None] * Cinv)
        + mat.c10
        * t2[:, None, None]
        * (I1[:, None, None] * eye - C - (2.0 * I2 / 3.0)[:, None, None] * Cinv)
        + 0.5 * mat.kappa * ((J - 1.0) * J)[:, None, None] * Cinv
    )
    return np.einsum("eij,ejk->eik", F, S)


def mooney_rivlin_energy(
    mesh: TetMesh,
    mat: MaterialParams,
    u: np.ndarray,
    gravity_scale: float = 1.0,
    _geom=None,
) -> float:
    """Total potential energy: strain energy minus gravity work (Joules)."""
    vols, grads = _geom if _geom is not None else _shape_gradients(mesh)
    u = np.asarray(u, dtype=float).reshape(-1, 3)
    F = _deformation_state(u[mesh.tets], grads)
    J = np.linalg.det(F)
    if np.any(J <= 0):
        raise FemError(f"inverted element at tet {int(np.argmin(J))} (det F <= 0)")
    W, _ = _energy_density(F, mat)
    g = gravity_scale * mat.g
    u_bar = u[mesh.tets].mean(axis=1)
    return float(np.sum(W * vols) - mat.rho * np.sum(vols * (u_bar @ g)))


def energy_gradient(
    mesh: TetMesh,
    mat: MaterialParams,
    u: np.ndarray,
    gravity_scale: float = 1.0,
    _geom=None,
) -> np.ndarray:
    """Exact analytic gradient of the discrete energy, per node (N, 3)."""
    vols, grads = _geom if _geom is not None else _shape_gradients(mesh)
    u = np.asarray(u, dtype=float).reshape(-1, 3)
    F = _deformation_state(u[mesh.tets], grads)
    J = np.linalg.det(F)
    if np.any(J <= 0):
        raise FemError(f"inverted element at tet {int(np.argmin(J))} (det F <= 0)")
    P = _pk1_stress(F, mat)
    g_el = np.einsum("e,eij,eaj->eai", vols, P, grads)
    g_el -= (mat.rho * gravity_scale / 4.0) * vols[:, None, None] * mat.g[None, None, :]
    out = np.zeros_like(u)
    np.add.at(out, mesh.tets.ravel(), g_el.reshape(-1, 3))
    return out


def _element_gradients(u_el: np.ndarray, grads: np.ndarray, vols: np.ndarray, mat) -> np.ndarray:
    """Strain-energy gradient per element, (M, 4, 3); no gravity term."""
    F = _deformation_state(u_el, grads)
    P = _pk1_stress(F, mat)
    return np.einsum("e,eij,eaj->eai", vols, P, grads)


def _tangent_matrix(
    mesh: TetMesh, mat: MaterialParams, u: np.ndarray, vols, grads
) -> sp.csr_matrix:
    """Sparse tangent stiffness by central differences of the analytic
    element gradient (12 DOF per tet, vectorized over elements)."""
    u_el = u[mesh.tets]
    h = 1e-7 * max(1.0, float(np.abs(u_el).max()))
    m = len(mesh.tets)
    Ke = np.empty((m, 12, 12))
    for d in range(12):
        a, i = divmod(d, 3)
        up = u_el.copy()
        up[:, a, i] += h
        um = u_el.copy()
        um[:, a, i] -= h
        gp = _element_gradients(up, grads, vols, mat)
        gm = _element_gradients(um, grads, vols, mat)
        Ke[:, :, d] = (gp - gm).reshape(m, 12) / (2.0 * h)
    Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
    dof = (3 * mesh.tets[:, :, None] + np.arange(3)[None, None, :]).reshape(m, 12)
    rows = np.repeat(dof, 12, axis=1).ravel()
    cols = np.tile(dof, (1, 12)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(3 * mesh.n_nodes,) * 2)
    return K.tocsr()


def solve_nonlinear(
    mesh: TetMesh,
    mat: MaterialParams,
    bc: BoundaryConditions,
    gravity_steps: int = 2,
    grasp_steps: int = 4,
    max_newton: int = 200,
    report: SolverReport | None = None,
) -> np.ndarray:
    """Minimize the Mooney-Rivlin potential under Dirichlet data.

    Loads are applied incrementally (gravity ramp first, then the grasp
    displacements), each increment warm-starting Newton with backtracking
    line search from the previous solution. Convergence per increment:
    projected gradient norm <= 1e-6 * (rho*|g|*V_total + 1).
    """
    if mat.model is not Model.MOONEY_RIVLIN:
        raise ValueError("solve_nonlinear requires the Mooney-Rivlin model")
    t0 = time.perf_counter()
    geom = _shape_gradients(mesh)
    vols, grads = geom
    v_total = float(vols.sum())
    tol = 1e-6 * (mat.rho * np.linalg.norm(mat.g) * v_total + 1.0)

    nodes = bc.constrained_nodes()
    vals = bc.values_for(nodes)
    fixed_dofs = (3 * nodes[:, None] + np.arange(3)[None, :]).ravel() if len(nodes) else np.array([], dtype=int)
    mask = np.ones(3 * mesh.n_nodes, dtype=bool)
    mask[fixed_dofs] = False
    free = np.where(mask)[0]

    has_gravity = mat.rho > 0 and np.linalg.norm(mat.g) > 0
    increments: list[tuple[float, float]] = []  # (gravity_scale, grasp_scale)
    if has_gravity:
        increments += [((s + 1) / gravity_steps, 0.0) for s in range(gravity_steps)]
    has_grasp = len(nodes) and np.abs(vals).max() > 0
    if has_grasp:
        increments += [(1.0 if has_gravity else 0.0, (s + 1) / grasp_steps) for s in range(grasp_steps)]
    if not increments:
        increments = [(1.0 if has_gravity else 0.0, 1.0)]

    u = np.zeros(3 * mesh.n_nodes)
    newton_total = 0

    # Predictor for grasp increments: moving only the prescribed nodes can
    # invert small elements next to the grasp before Newton gets a chance to
    # relax, so free nodes are advanced by a linear-elastic estimate first.
    pred_lu = None
    pred_Kfc = None
    if has_grasp and len(free):
        K_lin = assemble_linear_system(mesh, linearized_material(mat))
        pred_lu = spla.splu(K_lin[free][:, free].tocsc())
        pred_Kfc = K_lin[free][:, fixed_dofs].tocsr()

    def proj_grad(uvec, gscale):
        g = energy_gradient(mesh, mat, uvec, gravity_scale=gscale, _geom=geom).ravel()
        g[fixed_dofs] = 0.0
        return g

    prev_bc = 0.0
    increment_energies: list[float] = []
    for g_scale, bc_scale in increments:
        du_free = None
        if len(nodes):
            if pred_lu is not None and bc_scale != prev_bc:
                dvals = ((bc_scale - prev_bc) * vals).ravel()
                du_free = pred_lu.solve(-(pred_Kfc @ dvals))
            u_mat = u.reshape(-1, 3)
            u_mat[nodes] = bc_scale * vals
            prev_bc = bc_scale
        energy = None
        if du_free is not None:
            # take as much of the predictor as stays inversion-free
            for scale in (1.0, 0.5, 0.25, 0.0):
                trial = u.copy()
                trial[free] += scale * du_free
                try:
                    energy = mooney_rivlin_energy(
                        mesh, mat, trial, gravity_scale=g_scale, _geom=geom
                    )
                except FemError:
                    continue
                u = trial
                break
            if energy is None:
                raise FemError(
                    "prescribed displacement increment inverts elements; "
                    "increase grasp_steps or reduce the grasp magnitude"
                )
        else:
            energy = mooney_rivlin_energy(mesh, mat, u, gravity_scale=g_scale, _geom=geom)
        for _ in range(max_newton):
            g = proj_grad(u, g_scale)
            gnorm = np.linalg.norm(g)
            if gnorm <= tol:
                break
            if newton_total >= max_newton:
                raise FemError(
                    f"Newton cap exceeded ({max_newton} steps, |g|={gnorm:.3e})"
                )
            K = _tangent_matrix(mesh, mat, u.reshape(-1, 3), vols, grads)
            Kff = K[free][:, free]
            damping = 0.0
            step = None
            for _attempt in range(6):
                try:
                    A = Kff + damping * sp.eye(Kff.shape[0]) if damping else Kff
                    d = spla.spsolve(A.tocsc(), -g[free])
                except Exception:
                    d = None
                if d is not None and np.all(np.isfinite(d)) and d @ g[free] < 0:
                    step = d
                    break
                damping = max(10.0 * damping, np.abs(Kff.diagonal()).mean() * 1e-4)
            if step is None:
                step = -g[free]  # steepest descent fallback
            # backtracking line search on the energy
            alpha = 1.0
            accepted = False
            for _bt in range(40):
                trial = u.copy()
                trial[free] += alpha * step
                try:
                    e_trial = mooney_rivlin_energy(
                        mesh, mat, trial, gravity_scale=g_scale, _geom=geom
                    )
                except FemError:
                    e_trial = np.inf
                if np.isfinite(e_trial) and e_trial <= energy + 1e-4 * alpha * (g[free] @ step):
                    u = trial
                    energy = e_trial
                    accepted = True
                    break
                if _bt == 0 and np.isfinite(e_trial):
                    # near convergence the predicted decrease drops below the
                    # energy's cancellation noise; accept the full Newton step
                    # when it clearly reduces the gradient instead
                    if np.linalg.norm(proj_grad(trial, g_scale)) <= 0.5 * gnorm:
                        u = trial
                        energy = e_trial
                        accepted = True
                        break
                alpha *= 0.5
            newton_total += 1
            if not accepted:
                # at numerical stagnation treat current point as converged
                break
        else:
            raise FemError("Newton failed to converge within the iteration cap")
        increment_energies.append(float(energy))

    if report is not None:
        report.newton_steps = newton_total
        report.load_steps = len(increments)
        report.residual = float(np.linalg.norm(proj_grad(u, increments[-1][0])))
        report.energy = float(
            mooney_rivlin_energy(mesh, mat, u, gravity_scale=increments[-1][0], _geom=geom)
        )
        report.wall_time_s = time.perf_counter() - t0
        report.method = "newton-linesearch"
        report.notes["volumetric_kappa_pa"] = mat.kappa
        report.notes["increment_energies"] = increment_energies
    return u.reshape(-1, 3)


def linearized_material(mat: MaterialParams) -> MaterialParams:
    """Linear material matching the small-strain limit of the Mooney-Rivlin
    energy: mu = 2*(C10+C01), Lame lambda = kappa - 2*mu/3."""
    mu = 2.0 * (mat.c10 + mat.c01)
    lam = mat.kappa - 2.0 * mu / 3.0
    nu = lam / (2.0 * (lam + mu))
    return MaterialParams(model=Model.LINEAR, mu=mu, nu=nu, rho=mat.rho)
