"""Spectral estimates of the constants behind the stability theory.

Every estimate is the extreme eigenvalue of a symmetric pencil assembled from
the same blocks as the saddle-point system. Pencils up to ``DENSE_LIMIT``
unknowns are solved densely; larger ones with ARPACK in generalized mode.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EmptyInterfaceError, IllPosedError, NumericalError
from .fem import ElasticMaterial, assemble_elasticity, assemble_vector_laplacian, build_dofmap, gauss_rule
from .interface import MultiplierSpace, assemble_stabilization, discrete_extension, multiplier_mass
from .mesh import Mesh2D, TraceMesh, extract_trace_mesh, refine_trace

DENSE_LIMIT = 4000
EIG_TOL = 1e-8


@dataclass(frozen=True)
class SpectralReport:
    name: str
    value: float
    residual: float
    level: int | None = None
    h: float | None = None
    method: str = ""

    def at(self, level, h) -> SpectralReport:
        return SpectralReport(self.name, self.value, self.residual, level, h, self.method)


def _pencil_residual(A, B, x, theta) -> float:
    r = A @ x - theta * (B @ x)
    scale = max(np.linalg.norm(A @ x), abs(theta) * np.linalg.norm(B @ x), np.finfo(float).tiny)
    return float(np.linalg.norm(r) / scale)


def _extreme_eig(A, B, largest: bool):
    """Extreme eigenpair of the symmetric-definite pencil ``A x = theta B x``."""
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
        idx = n - 1 if largest else 0
        w, v = sla.eigh(Ad, Bd, subset_by_index=[idx, idx])
        theta, x = float(w[0]), v[:, 0]
        res = _pencil_residual(Ad, Bd, x, theta)
        if res > EIG_TOL:
            # dense eigh on a badly scaled pencil; polish with one Rayleigh step
            theta = float(x @ Ad @ x / (x @ Bd @ x))
            res = _pencil_residual(Ad, Bd, x, theta)
        return theta, x, res
    A, B = sp.csc_matrix(A), sp.csc_matrix(B)
    lu = spla.splu(B, permc_spec="MMD_AT_PLUS_A")
    Minv = spla.LinearOperator(B.shape, matvec=lu.solve, dtype=float)
    which = "LA" if largest else "SA"
    w, v = spla.eigsh(A, k=1, M=B, Minv=Minv, which=which, tol=1e-12, maxiter=5000)
    theta, x = float(w[0]), v[:, 0]
    return theta, x, _pencil_residual(A, B, x, theta)


def estimate_trace_constant(mesh1: Mesh2D, material: ElasticMaterial, degree: int,
                            dirichlet=(0.0, 0.0)) -> SpectralReport:
    """Largest ``C_I`` with ``C_I ||h^(1/2) sigma(w) n||^2 <= (sigma(w), eps(w))`` on side 1.

    Computed as ``1 / theta_max`` of ``T x = theta A x`` over the free dofs.
    """
    blk, dofs = assemble_elasticity(mesh1, material, degree, dirichlet=dirichlet)
    space = MultiplierSpace(extract_trace_mesh(mesh1), 0, False)
    _, _, T = assemble_stabilization(1.0, space, dofs, material)
    f = dofs.free
    if len(dofs.constrained) == 0:
        raise IllPosedError("side 1 has no Dirichlet data; the energy form is singular")
    Tf, Af = T[f][:, f], blk.A[f][:, f]
    if Tf.nnz == 0 or abs(Tf).max() == 0.0:
        raise EmptyInterfaceError("stress-trace form vanishes identically")
    theta, _, res = _extreme_eig(Tf, Af, largest=True)
    return SpectralReport("C_I", 1.0 / theta, res, method=f"P{degree}")


def infsup_mesh_norm(k: int, l: int, continuous: bool, mesh1: Mesh2D, mesh2: Mesh2D,  # noqa: E741
                     material: ElasticMaterial, dirichlet1=(0.0, 0.0), dirichlet2=(0.0, 0.0)) -> SpectralReport:
    """Discrete inf-sup constant in the mesh-dependent multiplier norm.

    ``beta_h^2`` is the smallest eigenvalue of ``(B A^-1 B^T) x = lambda M_h x``
    with ``B = [B1, -B2]`` and ``M_h`` the ``h``-weighted multiplier mass.
    """
    from .saddle import MethodSpec, build_system

    system = build_system(MethodSpec(k, l, continuous, False), mesh1, mesh2, material, dirichlet1, dirichlet2)
    if len(system.dofs1.constrained) == 0 or len(system.dofs2.constrained) == 0:
        raise IllPosedError("each body needs Dirichlet data for the stiffness to be invertible")
    schur = np.zeros((system.n_mult, system.n_mult))
    for A_name, B_name, sign in (("A1", "B1", 1.0), ("A2", "B2", -1.0)):
        A = system.reduced(A_name).tocsc()
        Bt = (sign * system.reduced(B_name)).T.toarray()
        try:
            X = spla.splu(A, permc_spec="MMD_AT_PLUS_A").solve(Bt)
        except RuntimeError as exc:
            raise IllPosedError(f"stiffness {A_name} is singular after elimination") from exc
        schur += Bt.T @ X
    M = system.reduced("M").toarray()
    lam, _, res = _extreme_eig(schur, M, largest=False)
    label = f"P{k}-P{l}{'c' if continuous else 'd'}"
    return SpectralReport("beta_h", float(np.sqrt(max(lam, 0.0))), res, method=label)


def _scalar_p1_mass(breakpoints, weight) -> np.ndarray:
    """Continuous P1 mass on a 1D partition with a per-edge weight."""
    h = np.diff(breakpoints)
    n = len(breakpoints)
    M = np.zeros((n, n))
    for e, (he, we) in enumerate(zip(h, weight)):
        M[e:e + 2, e:e + 2] += we * he / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    return M


def check_projection_stability(trace: TraceMesh, refinements: int = 1) -> SpectralReport:
    """Estimate the constant of ``||h^(-1/2) pi_h v|| <= C ||h^(-1/2) v||``.

    The probe space is continuous P1 on the trace mesh bisected
    ``refinements`` times; the result is a lower bound for the supremum over
    all of L2. Components decouple, so the scalar pencil is used.
    """
    coarse = trace.breakpoints
    fine = trace
    for _ in range(refinements):
        fine = refine_trace(fine)
    fb = fine.breakpoints
    parent = trace.locate(0.5 * (fb[:-1] + fb[1:]))
    inv_h = 1.0 / trace.h[parent]
    W = _scalar_p1_mass(fb, inv_h)
    Mc = _scalar_p1_mass(coarse, np.ones(trace.n_edges))

    # R[i, j] = int phi_i^coarse psi_j^fine; prolongation evaluates coarse hats at fine nodes
    x, w = gauss_rule(2)
    R = np.zeros((len(coarse), len(fb)))
    for e in range(fine.n_edges):
        s = fb[e] + (fb[e + 1] - fb[e]) * x
        ce = parent[e]
        tc = (s - coarse[ce]) / trace.h[ce]
        tf = x
        for a, pa in ((ce, 1.0 - tc), (ce + 1, tc)):
            for b, pb in ((e, 1.0 - tf), (e + 1, tf)):
                R[a, b] += np.sum((fb[e + 1] - fb[e]) * w * pa * pb)
    P_interp = np.zeros((len(fb), len(coarse)))
    ce = trace.locate(fb)
    tc = (fb - coarse[ce]) / trace.h[ce]
    P_interp[np.arange(len(fb)), ce] = 1.0 - tc
    P_interp[np.arange(len(fb)), np.minimum(ce + 1, len(coarse) - 1)] += tc
    P = P_interp @ np.linalg.solve(Mc, R)
    lam, _, res = _extreme_eig(P.T @ W @ P, W, largest=True)
    return SpectralReport("C_proj", float(np.sqrt(lam)), res)


def mesh_uniformity_ratio(trace: TraceMesh) -> float:
    h = trace.h
    return float(h.min() / h.max())


def extension_constant(mesh1: Mesh2D) -> SpectralReport:
    """Smallest ``C_E`` with ``||grad E_h mu||^2 <= C_E ||h^(-1/2) mu||^2`` (P1, zero off the interface)."""
    dofs = build_dofmap(mesh1, 1)
    space = MultiplierSpace(extract_trace_mesh(mesh1), 1, True)
    L = assemble_vector_laplacian(mesh1)
    E = np.column_stack([discrete_extension(space, col, dofs) for col in np.eye(space.n_dofs)])
    num = E.T @ (L @ E)
    W = multiplier_mass(space, -1.0).toarray()
    lam, _, res = _extreme_eig(num, W, largest=True)
    return SpectralReport("C_E", lam, res)


def check_residual(report: SpectralReport) -> SpectralReport:
    if not report.residual <= EIG_TOL:
        raise NumericalError(f"eigensolver residual {report.residual:.2e} for {report.name} exceeds {EIG_TOL:g}")
    return report


def write_report_csv(reports, path) -> None:
    """Diagnostics report with columns ``constant,level,h,value``."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["constant", "level", "h", "value"])
        for r in reports:
            writer.writerow([r.name, "" if r.level is None else r.level,
                             "" if r.h is None else repr(float(r.h)), repr(float(r.value))])
    os.replace(tmp, path)
