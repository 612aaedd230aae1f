"""Mortar coupling on a straight interface between two independently meshed bodies.

The multiplier lives on the trace partition of side 1. Multiplier dofs are
interleaved like displacement dofs: scalar basis function ``j`` carries
dofs ``2j`` (x) and ``2j + 1`` (y), in global Cartesian components.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, GeometryError
from .fem import DofMap, ElasticMaterial, edge_basis, gauss_rule, traction_operator
from .mesh import COORD_TOL, TraceMesh

SLIVER_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class MultiplierSpace:
    trace: TraceMesh
    degree: int
    continuous: bool

    def __post_init__(self):
        if self.degree not in (0, 1):
            raise ConfigurationError("multiplier degree must be 0 or 1")
        if self.continuous and self.degree < 1:
            raise ConfigurationError("a continuous multiplier needs degree >= 1")

    @property
    def n_scalar(self) -> int:
        ne = self.trace.n_edges
        if self.degree == 0:
            return ne
        return ne + 1 if self.continuous else 2 * ne

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_scalar

    @property
    def edge_dofs(self) -> np.ndarray:
        """Scalar basis indices active on each edge ``(ne, l + 1)``."""
        e = np.arange(self.trace.n_edges)
        if self.degree == 0:
            return e[:, None]
        if self.continuous:
            return np.column_stack([e, e + 1])
        return np.column_stack([2 * e, 2 * e + 1])

    def basis(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.degree == 0:
            return np.ones(t.shape + (1,))
        return np.stack([1.0 - t, t], axis=-1)

    def evaluate(self, coeffs, s) -> np.ndarray:
        """Multiplier values ``(n, 2)`` at arc-length coordinates ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        e = self.trace.locate(s)
        t = (s - self.trace.breakpoints[e]) / self.trace.h[e]
        c = np.asarray(coeffs, dtype=float).reshape(-1, 2)
        return np.einsum("nk,nkd->nd", self.basis(t), c[self.edge_dofs[e]])

    def sample_points(self) -> np.ndarray:
        """Arc-length positions of the dofs (edge midpoints for degree 0)."""
        b = self.trace.breakpoints
        if self.degree == 0:
            return 0.5 * (b[:-1] + b[1:])
        if self.continuous:
            return b.copy()
        return np.column_stack([b[:-1], b[1:]]).ravel()


@dataclass(frozen=True, eq=False)
class MergedPartition:
    left: np.ndarray
    right: np.ndarray
    edge1: np.ndarray
    edge2: np.ndarray
    trace1: TraceMesh
    trace2: TraceMesh

    @property
    def lengths(self) -> np.ndarray:
        return self.right - self.left

    def __len__(self):
        return len(self.left)


def _same_line(t1: TraceMesh, t2: TraceMesh) -> bool:
    return (np.allclose(t1.origin, t2.origin, rtol=0.0, atol=COORD_TOL * 10)
            and np.allclose(t1.tangent, t2.tangent, rtol=0.0, atol=COORD_TOL * 10)
            and abs(t1.length - t2.length) <= COORD_TOL * 10 * max(1.0, t1.length))


def merge_partitions(trace1: TraceMesh, trace2: TraceMesh) -> MergedPartition:
    """Common refinement of two partitions of the same interface."""
    if not _same_line(trace1, trace2):
        raise GeometryError("trace meshes do not span the same interface")
    length = trace1.length
    tol = SLIVER_TOL * length
    pts = np.sort(np.concatenate([trace1.breakpoints, trace2.breakpoints]))
    kept = [0.0]
    for p in pts[1:]:
        if p - kept[-1] > tol:
            kept.append(p)
    kept[-1] = length
    b = np.asarray(kept)
    mid = 0.5 * (b[:-1] + b[1:])
    return MergedPartition(b[:-1], b[1:], trace1.locate(mid), trace2.locate(mid), trace1, trace2)


def _segment_points(merged: MergedPartition, n: int):
    x, w = gauss_rule(n)
    s = merged.left[:, None] + merged.lengths[:, None] * x
    return s, merged.lengths[:, None] * w


def _local_param(trace: TraceMesh, edges, s):
    return (s - trace.breakpoints[edges][:, None]) / trace.h[edges][:, None]


def _vector_coo(rows_scalar, cols_scalar, vals, shape):
    """Expand scalar entries to the component-diagonal vector pattern."""
    r = np.concatenate([2 * rows_scalar, 2 * rows_scalar + 1]).ravel()
    c = np.concatenate([2 * cols_scalar, 2 * cols_scalar + 1]).ravel()
    v = np.concatenate([vals, vals]).ravel()
    return sp.coo_matrix((v, (r, c)), shape=shape).tocsr()


def _coupling_block(merged, space, dofs, trace, edges, s, w):
    mu = space.basis(_local_param(space.trace, merged.edge1, s))  # (ns, nq, a)
    phi = edge_basis(_local_param(trace, edges, s), dofs.degree)  # (ns, nq, b)
    vals = np.einsum("sq,sqa,sqb->sab", w, mu, phi)
    mdofs = space.edge_dofs[merged.edge1]
    nodes = dofs.trace_nodes(trace)[edges]
    rows = np.broadcast_to(mdofs[:, :, None], vals.shape)
    cols = np.broadcast_to(nodes[:, None, :], vals.shape)
    return _vector_coo(rows, cols, vals, (space.n_dofs, dofs.n_dofs))


def assemble_coupling(merged: MergedPartition, space: MultiplierSpace, dofs1: DofMap, dofs2: DofMap):
    """Mortar matrices with ``(B_i)[mu, v] = int_Gamma mu . v_i ds``.

    The constraint row of the saddle system is ``B1 u1 - B2 u2 = 0``.
    """
    if space.trace.n_edges != merged.trace1.n_edges:
        raise GeometryError("multiplier space is not built on side 1 of the merged partition")
    s, w = _segment_points(merged, 2)
    B1 = _coupling_block(merged, space, dofs1, merged.trace1, merged.edge1, s, w)
    B2 = _coupling_block(merged, space, dofs2, merged.trace2, merged.edge2, s, w)
    return B1, B2


def assemble_stabilization(alpha: float, space: MultiplierSpace, dofs1: DofMap,
                           material: ElasticMaterial, oracle_mode: bool = False):
    """Blocks of ``alpha (h (lam + sigma(u1) n), mu + sigma(v1) n)_Gamma``.

    Returns ``S`` (multiplier x multiplier), ``G1`` (multiplier x side-1 dofs)
    and ``K_stab`` (side-1 x side-1), each scaled by ``alpha`` and weighted by
    the side-1 edge length. ``oracle_mode`` additionally admits ``alpha = 0``.
    """
    if not (alpha > 0 or (oracle_mode and alpha == 0)):
        raise ConfigurationError("stabilization parameter alpha must be positive")
    trace = space.trace
    t, w = gauss_rule(3)
    edofs, T = traction_operator(dofs1, material, trace, t)  # (ne, 2m), (ne, nq, 2, 2m)
    weight = alpha * trace.h ** 2  # h_E * |E|
    mu = space.basis(t)  # (nq, a)
    mdofs = space.edge_dofs

    svals = np.einsum("e,q,qa,qb->eab", weight, w, mu, mu)
    rows = np.broadcast_to(mdofs[:, :, None], svals.shape)
    cols = np.broadcast_to(mdofs[:, None, :], svals.shape)
    S = _vector_coo(rows, cols, svals, (space.n_dofs, space.n_dofs))

    g = np.einsum("e,q,qa,eqck->eack", weight, w, mu, T)  # (ne, a, 2, 2m)
    grow = 2 * mdofs[:, :, None, None] + np.arange(2)[None, None, :, None]
    grow = np.broadcast_to(grow, g.shape)
    gcol = np.broadcast_to(edofs[:, None, None, :], g.shape)
    G1 = sp.coo_matrix((g.ravel(), (grow.ravel(), gcol.ravel())), shape=(space.n_dofs, dofs1.n_dofs)).tocsr()

    k = np.einsum("e,q,eqci,eqcj->eij", weight, w, T, T)
    krow = np.broadcast_to(edofs[:, :, None], k.shape)
    kcol = np.broadcast_to(edofs[:, None, :], k.shape)
    K = sp.coo_matrix((k.ravel(), (krow.ravel(), kcol.ravel())), shape=(dofs1.n_dofs, dofs1.n_dofs)).tocsr()
    return S, G1, K


def multiplier_mass_scalar(space: MultiplierSpace, power: float = 0.0) -> sp.csr_matrix:
    """Scalar mass matrix weighted by ``h_Gamma ** power``."""
    t, w = gauss_rule(3)
    mu = space.basis(t)
    vals = np.einsum("e,q,qa,qb->eab", space.trace.h ** (1.0 + power), w, mu, mu)
    mdofs = space.edge_dofs
    rows = np.broadcast_to(mdofs[:, :, None], vals.shape)
    cols = np.broadcast_to(mdofs[:, None, :], vals.shape)
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(space.n_scalar, space.n_scalar)).tocsr()


def multiplier_mass(space: MultiplierSpace, power: float = 0.0) -> sp.csr_matrix:
    """Vector version of :func:`multiplier_mass_scalar` in the interleaved ordering."""
    return sp.kron(multiplier_mass_scalar(space, power), sp.identity(2), format="csr")


def l2_project(space: MultiplierSpace, values, breakpoints=None) -> np.ndarray:
    """L2 projection of a vector function on the interface onto ``space``.

    ``values(s)`` maps arc lengths ``(n,)`` to ``(n, 2)``. ``breakpoints``
    lists the arc lengths where ``values`` is not smooth; they are merged with
    the trace partition before 4-point Gauss integration.
    """
    probe = space.trace if breakpoints is None else TraceMesh.from_breakpoints(
        breakpoints, space.trace.origin, space.trace.tangent)
    merged = merge_partitions(space.trace, probe)
    s, w = _segment_points(merged, 4)
    mu = space.basis(_local_param(space.trace, merged.edge1, s))
    f = np.asarray(values(s.ravel()), dtype=float).reshape(s.shape + (2,))
    loc = np.einsum("sq,sqa,sqd->sad", w, mu, f)
    rhs = np.zeros((space.n_scalar, 2))
    np.add.at(rhs, space.edge_dofs[merged.edge1], loc)
    from scipy.linalg import cho_factor, cho_solve

    M = multiplier_mass_scalar(space, 0.0).toarray()
    return cho_solve(cho_factor(M), rhs).ravel()


def discrete_extension(space: MultiplierSpace, coeffs, dofs1: DofMap) -> np.ndarray:
    """Side-1 P1 field with the multiplier's nodal values on the interface, zero elsewhere."""
    if not (space.continuous and space.degree == 1 and dofs1.degree == 1):
        raise ConfigurationError("extension needs a continuous P1 multiplier and P1 displacements")
    c = np.asarray(coeffs, dtype=float).reshape(-1, 2)
    u = np.zeros((dofs1.n_nodes, 2))
    u[space.trace.vertex_chain] = c
    return u.ravel()


def restrict_to_interface(space: MultiplierSpace, u1, dofs1: DofMap) -> np.ndarray:
    """Interface vertex values of a side-1 field, as multiplier coefficients."""
    u = np.asarray(u1, dtype=float).reshape(-1, 2)
    return u[space.trace.vertex_chain].ravel()


def evaluate_trace(dofs: DofMap, trace: TraceMesh, u, s) -> np.ndarray:
    """Displacement values ``(n, 2)`` on the interface at arc lengths ``s``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    e = trace.locate(s)
    t = (s - trace.breakpoints[e]) / trace.h[e]
    vals = np.asarray(u, dtype=float).reshape(-1, 2)[dofs.trace_nodes(trace)[e]]
    return np.einsum("nk,nkd->nd", edge_basis(t, dofs.degree), vals)


def normal_tangential(space: MultiplierSpace, coeffs, s) -> tuple:
    """Normal and tangential multiplier components at ``s`` (side-1 outward normal)."""
    lam = space.evaluate(coeffs, s)
    return lam @ space.trace.normal, lam @ space.trace.tangent


def write_multiplier_csv(path, space: MultiplierSpace, coeffs) -> None:
    s = space.sample_points()
    if space.degree == 0:
        lam_n, lam_t = normal_tangential(space, coeffs, s)
    else:
        # evaluate each dof from its own edge so discontinuous values are not mixed
        c = np.asarray(coeffs, dtype=float).reshape(-1, 2)
        lam_n, lam_t = c @ space.trace.normal, c @ space.trace.tangent
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["s", "lambda_n", "lambda_t"])
        for row in zip(s, lam_n, lam_t):
            writer.writerow([repr(float(x)) for x in row])
    os.replace(tmp, path)
