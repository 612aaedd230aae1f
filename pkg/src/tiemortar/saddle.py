"""Global saddle-point systems for the mixed and stabilized mortar methods.

Unknown ordering (after Dirichlet elimination): free side-1 displacement
dofs, free side-2 displacement dofs, then all multiplier dofs. Within each
block the order is the one of :class:`~tiemortar.fem.DofMap` and
:class:`~tiemortar.interface.MultiplierSpace`.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericalError, SingularSystemError
from .fem import DofMap, ElasticMaterial, assemble_elasticity, build_dofmap
from .interface import (MergedPartition, MultiplierSpace, assemble_coupling, assemble_stabilization,
                        merge_partitions, multiplier_mass)
from .mesh import Mesh2D, extract_trace_mesh

log = logging.getLogger(__name__)

MAX_DOFS = 500_000
RESIDUAL_TOL = 1e-9
ALPHA_FRACTION = 0.1
ORDERING = "MMD_AT_PLUS_A"
PIVOT_TOL = 1e-13


@dataclass(frozen=True)
class MethodSpec:
    """Element degrees and coupling variant.

    ``alpha=None`` on a stabilized method selects ``C_I / 10`` with ``C_I``
    estimated on the current side-1 mesh.
    """

    k: int = 1
    l: int = 1  # noqa: E741
    continuous: bool = True
    stabilized: bool = False
    alpha: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.k not in (1, 2):
            raise ConfigurationError("displacement degree k must be 1 or 2")
        if self.l not in (0, 1):
            raise ConfigurationError("multiplier degree l must be 0 or 1")
        if self.continuous and self.l < 1:
            raise ConfigurationError("continuous multipliers require l >= 1")
        if not self.stabilized and self.alpha is not None:
            raise ConfigurationError("the mixed method takes no stabilization parameter")
        if self.stabilized and self.alpha is not None and not self.alpha > 0:
            raise ConfigurationError("alpha must be positive (stability needs 0 < alpha < C_I)")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        kind = "stab" if self.stabilized else "mixed"
        return f"{kind}-p{self.k}p{self.l}"


METHODS = {
    "mixed-p1p1": MethodSpec(1, 1, True, False, name="mixed-p1p1"),
    "stab-p1p1": MethodSpec(1, 1, True, True, name="stab-p1p1"),
    "mixed-p1p0": MethodSpec(1, 0, False, False, name="mixed-p1p0"),
    "stab-p1p0": MethodSpec(1, 0, False, True, name="stab-p1p0"),
    "stab-p2p1": MethodSpec(2, 1, True, True, name="stab-p2p1"),
    "mixed-p2p1": MethodSpec(2, 1, True, False, name="mixed-p2p1"),
}


def get_method(name: str) -> MethodSpec:
    try:
        return METHODS[name]
    except KeyError:
        raise ConfigurationError(f"unknown method {name!r}; choose from {sorted(METHODS)}") from None


@dataclass(eq=False)
class SaddleSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    method: MethodSpec
    alpha: float | None
    dofs1: DofMap
    dofs2: DofMap
    space: MultiplierSpace
    merged: MergedPartition
    blocks: dict = field(repr=False)
    free: np.ndarray = field(repr=False)
    full_values: np.ndarray = field(repr=False)

    @property
    def n1(self) -> int:
        return len(self.dofs1.free)

    @property
    def n2(self) -> int:
        return len(self.dofs2.free)

    @property
    def n_mult(self) -> int:
        return self.space.n_dofs

    @property
    def shape(self):
        return self.matrix.shape

    def split(self, x):
        """Full side vectors and multiplier from a reduced solution vector."""
        full = self.full_values.copy()
        full[self.free] = x
        n1, n2 = self.dofs1.n_dofs, self.dofs2.n_dofs
        return full[:n1], full[n1:n1 + n2], full[n1 + n2:]

    def reduced(self, name: str):
        """A named block restricted to free dofs (``A1``, ``A2``, ``B1``, ``B2``, ``M``)."""
        f1, f2 = self.dofs1.free, self.dofs2.free
        b = self.blocks
        if name == "A1":
            return b["A1"][f1][:, f1]
        if name == "A2":
            return b["A2"][f2][:, f2]
        if name == "B1":
            return b["B1"][:, f1]
        if name == "B2":
            return b["B2"][:, f2]
        if name == "M":
            return multiplier_mass(self.space, 1.0)
        raise KeyError(name)

    def describe_dof(self, i: int):
        if i < self.n1:
            return ("u1", int(self.dofs1.free[i]))
        if i < self.n1 + self.n2:
            return ("u2", int(self.dofs2.free[i - self.n1]))
        return ("lambda", int(i - self.n1 - self.n2))


@dataclass(eq=False)
class Solution:
    u1: np.ndarray
    u2: np.ndarray
    lam: np.ndarray
    residual: float
    system: SaddleSystem = field(repr=False)

    @property
    def space(self) -> MultiplierSpace:
        return self.system.space


def build_system(method: MethodSpec, mesh1: Mesh2D, mesh2: Mesh2D, material: ElasticMaterial,
                 dirichlet1=None, dirichlet2=None, body_load=None) -> SaddleSystem:
    """Assemble and reduce the saddle-point system of either method.

    ``dirichlet1``/``dirichlet2`` are prescribed displacements on the
    DIRICHLET edges of each side (see :func:`~tiemortar.fem.build_dofmap`).
    """
    if not isinstance(method, MethodSpec):
        raise ConfigurationError("method must be a MethodSpec")
    trace1, trace2 = extract_trace_mesh(mesh1), extract_trace_mesh(mesh2)
    space = MultiplierSpace(trace1, method.l, method.continuous)
    n_free = sum(len(build_dofmap(m, method.k, g).free) for m, g in ((mesh1, dirichlet1), (mesh2, dirichlet2)))
    if n_free + space.n_dofs > MAX_DOFS:
        raise ConfigurationError(
            f"system with {n_free + space.n_dofs} unknowns exceeds the direct-solver limit of {MAX_DOFS}")
    blk1, dofs1 = assemble_elasticity(mesh1, material, method.k, body_load, dirichlet1)
    blk2, dofs2 = assemble_elasticity(mesh2, material, method.k, body_load, dirichlet2)
    merged = merge_partitions(trace1, trace2)
    B1, B2 = assemble_coupling(merged, space, dofs1, dofs2)

    A1 = blk1.A
    n1, n2, m = dofs1.n_dofs, dofs2.n_dofs, space.n_dofs
    blocks = {"A1": blk1.A, "A2": blk2.A, "B1": B1, "B2": B2}
    alpha = None
    C1 = B1
    S = None
    if method.stabilized:
        alpha = method.alpha
        if alpha is None:
            from .diagnostics import estimate_trace_constant

            c_i = estimate_trace_constant(mesh1, material, method.k, dirichlet=dirichlet1).value
            alpha = ALPHA_FRACTION * c_i
            log.debug("alpha = C_I/10 = %.6g", alpha)
        S, G1, K = assemble_stabilization(alpha, space, dofs1, material)
        blocks.update(S=S, G1=G1, K_stab=K)
        A1 = A1 - K
        C1 = B1 - G1

    full = sp.bmat([
        [A1, None, C1.T],
        [None, blk2.A, -B2.T],
        [C1, -B2, -S if S is not None else sp.csr_matrix((m, m))],
    ], format="csr")
    rhs_full = np.concatenate([blk1.f, blk2.f, np.zeros(m)])
    fixed = np.concatenate([dofs1.fixed, dofs2.fixed, np.zeros(m, dtype=bool)])
    values = np.concatenate([dofs1.fixed_values, dofs2.fixed_values, np.zeros(m)])
    free = np.flatnonzero(~fixed)
    con = np.flatnonzero(fixed)
    rhs = rhs_full[free] - full[free][:, con] @ values[con]
    K_ff = full[free][:, free].tocsr()
    assert K_ff.shape[0] == n_free + m and n1 + n2 + m == len(fixed)
    return SaddleSystem(K_ff, rhs, method, alpha, dofs1, dofs2, space, merged, blocks, free, values)


def _locate_breakdown(matrix) -> int | None:
    """Index of a dependent column via pivoted QR (dense, small systems only)."""
    if matrix.shape[0] > 4000:
        return None
    _, R, perm = sla.qr(matrix.toarray(), mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    bad = np.flatnonzero(d <= d[0] * 1e-12 * matrix.shape[0])
    return int(perm[bad[0]]) if len(bad) else None


def solve(system: SaddleSystem) -> Solution:
    """Sparse LU with partial pivoting plus iterative refinement."""
    K = system.matrix.tocsc()
    b = system.rhs
    try:
        lu = spla.splu(K, permc_spec=ORDERING)
    except RuntimeError as exc:
        idx = _locate_breakdown(K)
        raise SingularSystemError(f"factorization failed: {exc}",
                                  None if idx is None else system.describe_dof(idx)) from exc
    d = np.abs(lu.U.diagonal())
    if d.min() <= PIVOT_TOL * d.max():
        # SuperLU does not stop on tiny pivots; map the weakest one back to an unknown
        col = int(np.argsort(lu.perm_c)[np.argmin(d)])
        idx = _locate_breakdown(K)
        raise SingularSystemError(f"numerically singular: pivot ratio {d.min() / d.max():.1e}",
                                  system.describe_dof(col if idx is None else idx))
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x = np.zeros_like(b)
        res = 0.0
    else:
        res = np.linalg.norm(K @ x - b) / bnorm
        for _ in range(3):
            if res <= RESIDUAL_TOL * 1e-3:
                break
            x = x + lu.solve(b - K @ x)
            res = np.linalg.norm(K @ x - b) / bnorm
    if not np.all(np.isfinite(x)):
        idx = _locate_breakdown(K)
        raise SingularSystemError("solution is not finite", None if idx is None else system.describe_dof(idx))
    if res > RESIDUAL_TOL:
        raise NumericalError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
    u1, u2, lam = system.split(x)
    return Solution(u1, u2, lam, float(res), system)


def coercivity_form(system: SaddleSystem, w, xi) -> float:
    """``B_h(w, xi; w, -xi)`` for reduced displacement ``w`` and multiplier ``xi``."""
    x = np.concatenate([w, xi])
    y = np.concatenate([w, -np.asarray(xi)])
    return float(x @ (system.matrix @ y))


def mesh_norm_sq(system: SaddleSystem, w, xi) -> float:
    """``|||w|||^2 + ||h^(1/2) xi||^2`` for reduced vectors."""
    n1 = system.n1
    e = w[:n1] @ (system.reduced("A1") @ w[:n1]) + w[n1:] @ (system.reduced("A2") @ w[n1:])
    return float(e + xi @ (system.reduced("M") @ xi))


def with_alpha(method: MethodSpec, alpha: float) -> MethodSpec:
    return replace(method, alpha=alpha)


def write_system(system: SaddleSystem, directory) -> tuple:
    """Write ``matrix.txt`` (0-based ``i j value`` triplets) and ``rhs.txt``."""
    os.makedirs(directory, exist_ok=True)
    coo = system.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    mpath = os.path.join(directory, "matrix.txt")
    rpath = os.path.join(directory, "rhs.txt")
    with open(mpath + ".tmp", "w", encoding="utf-8") as fh:
        fh.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i} {j} {float(v)!r}\n")
    with open(rpath + ".tmp", "w", encoding="utf-8") as fh:
        for v in system.rhs:
            fh.write(f"{float(v)!r}\n")
    os.replace(mpath + ".tmp", mpath)
    os.replace(rpath + ".tmp", rpath)
    return mpath, rpath


def read_system(directory):
    """Inverse of :func:`write_system`: returns ``(csr matrix, rhs)``."""
    with open(os.path.join(directory, "matrix.txt"), encoding="utf-8") as fh:
        head = fh.readline().split()
        n, m = int(head[1]), int(head[2])
        data = np.loadtxt(fh, ndmin=2)
    rhs = np.loadtxt(os.path.join(directory, "rhs.txt"), ndmin=1)
    mat = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m))
    return mat.tocsr(), rhs
