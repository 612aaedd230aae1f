"""Lagrange P1/P2 elasticity on one subdomain.

Constitutive law (applied verbatim in two dimensions)::

    sigma(u) = E / (2 (1 + nu)) * eps(u) + E nu / ((1 + nu)(1 - 2 nu)) * tr(eps(u)) I

Displacement dofs are node-interleaved: node ``n`` owns dofs ``2n`` (x) and
``2n + 1`` (y). P2 nodes are the mesh vertices followed by one node per mesh
edge (``n_vertices + edge_id``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import _kernels
from ._kernels._fallback import barycentric_gradients, basis_gradients, strain_matrices
from .errors import ConfigurationError, GeometryError
from .mesh import Mesh2D, Tag, TraceMesh, _refine

SUPPORTED_DEGREES = (1, 2)


@dataclass(frozen=True)
class ElasticMaterial:
    E: float
    nu: float

    def __post_init__(self):
        if not self.E > 0:
            raise ConfigurationError("Young's modulus must be positive")
        if self.nu == 0.5:
            raise ConfigurationError("nu = 0.5 is the incompressible limit; the dilatation coefficient is infinite")
        if not -1.0 < self.nu < 0.5:
            raise ConfigurationError("Poisson ratio must satisfy -1 < nu < 0.5")

    @property
    def shear(self) -> float:
        """Coefficient multiplying the strain tensor."""
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def dilatation(self) -> float:
        """Coefficient multiplying ``tr(eps) I``."""
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def voigt(self) -> np.ndarray:
        """Constitutive matrix acting on ``(eps_xx, eps_yy, 2 eps_xy)``."""
        c1, c2 = self.shear, self.dilatation
        return np.array([[c1 + c2, c2, 0.0], [c2, c1 + c2, 0.0], [0.0, 0.0, 0.5 * c1]])


def stress(material: ElasticMaterial, grad_u) -> np.ndarray:
    """Stress tensor for a displacement gradient ``grad_u[i, j] = d u_i / d x_j``."""
    g = np.asarray(grad_u, dtype=float)
    eps = 0.5 * (g + np.swapaxes(g, -1, -2))
    tr = np.trace(eps, axis1=-2, axis2=-1)[..., None, None]
    return material.shear * eps + material.dilatation * tr * np.eye(2)


# --- quadrature ---------------------------------------------------------------

_D4_A, _D4_B = 0.445948490915965, 0.091576213509771
_D4_WA, _D4_WB = 0.223381589678011, 0.109951743655322


def triangle_rule(degree: int):
    """Symmetric rule exact for polynomials of the given degree (<= 4).

    Returns barycentric points ``(nq, 3)`` and weights summing to one.
    """
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if degree == 2:
        return _kernels._fallback.P2_QUAD.copy(), np.full(3, 1 / 3)
    if degree <= 4:
        pts, wts = [], []
        for a, w in ((_D4_A, _D4_WA), (_D4_B, _D4_WB)):
            c = 1.0 - 2.0 * a
            pts += [[c, a, a], [a, c, a], [a, a, c]]
            wts += [w] * 3
        return np.array(pts), np.array(wts)
    raise ConfigurationError(f"no triangle rule of degree {degree}")


def gauss_rule(n: int):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def basis_values(lam: np.ndarray, degree: int) -> np.ndarray:
    """Lagrange basis values at barycentric points ``(nq, 3) -> (nq, m)``."""
    lam = np.atleast_2d(lam)
    if degree == 1:
        return lam
    a, b = [0, 1, 2], [1, 2, 0]
    return np.concatenate([lam * (2.0 * lam - 1.0), 4.0 * lam[:, a] * lam[:, b]], axis=1)


def edge_basis(t, degree: int) -> np.ndarray:
    """1D Lagrange basis on a reference edge, ordered (start, end[, midpoint])."""
    t = np.asarray(t, dtype=float)
    if degree == 1:
        return np.stack([1.0 - t, t], axis=-1)
    return np.stack([(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)], axis=-1)


# --- dofs ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DofMap:
    mesh: Mesh2D
    degree: int
    fixed: np.ndarray
    fixed_values: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_vertices + (len(self.mesh.edges) if self.degree == 2 else 0)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @cached_property
    def node_coords(self) -> np.ndarray:
        m = self.mesh
        if self.degree == 1:
            return m.vertices
        mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        return np.concatenate([m.vertices, mids])

    @cached_property
    def element_nodes(self) -> np.ndarray:
        m = self.mesh
        if self.degree == 1:
            return m.triangles
        return np.concatenate([m.triangles, m.n_vertices + m.triangle_edges], axis=1)

    @cached_property
    def element_dofs(self) -> np.ndarray:
        n = self.element_nodes
        return np.stack([2 * n, 2 * n + 1], axis=-1).reshape(len(n), -1)

    @cached_property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed)

    @cached_property
    def constrained(self) -> np.ndarray:
        return np.flatnonzero(self.fixed)

    def trace_nodes(self, trace: TraceMesh) -> np.ndarray:
        """Nodes of each trace edge ordered (start, end[, midpoint])."""
        ev = trace.edge_vertices
        if self.degree == 1:
            return ev
        mids = [self.mesh.n_vertices + self.mesh.edge_index(a, b) for a, b in ev]
        return np.column_stack([ev, mids])

    def lift(self, free_values: np.ndarray) -> np.ndarray:
        """Full coefficient vector from free values plus prescribed values."""
        u = self.fixed_values.copy()
        u[self.free] = free_values
        return u


def build_dofmap(mesh: Mesh2D, degree: int, dirichlet=None) -> DofMap:
    """Number the dofs and impose nodal Dirichlet values on DIRICHLET edges.

    ``dirichlet`` is a constant 2-vector or a callable mapping points
    ``(n, 2)`` to values ``(n, 2)``; NaN entries leave that component free.
    """
    if degree not in SUPPORTED_DEGREES:
        raise ConfigurationError(f"displacement degree must be one of {SUPPORTED_DEGREES}")
    probe = DofMap(mesh, degree, np.zeros(0, bool), np.zeros(0))
    fixed = np.zeros(probe.n_dofs, dtype=bool)
    values = np.zeros(probe.n_dofs)
    dedges = mesh.edges_with_tag(Tag.DIRICHLET)
    if len(dedges) and dirichlet is not None:
        nodes = set(np.unique(dedges).tolist())
        if degree == 2:
            nodes |= {mesh.n_vertices + mesh.edge_index(a, b) for a, b in dedges}
        nodes = np.array(sorted(nodes))
        pts = probe.node_coords[nodes]
        if callable(dirichlet):
            g = np.asarray(dirichlet(pts), dtype=float).reshape(len(nodes), 2)
        else:
            g = np.broadcast_to(np.asarray(dirichlet, dtype=float), (len(nodes), 2))
        dofs = np.stack([2 * nodes, 2 * nodes + 1], axis=1)
        mask = ~np.isnan(g)
        fixed[dofs[mask]] = True
        values[dofs[mask]] = g[mask]
    return DofMap(mesh, degree, fixed, values)


def interpolate(dofs: DofMap, fn) -> np.ndarray:
    """Nodal interpolant of a vector field given as ``fn(points) -> (n, 2)``."""
    return np.asarray(fn(dofs.node_coords), dtype=float).reshape(-1)


# --- assembly -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StiffnessBlock:
    A: sp.csr_matrix
    f: np.ndarray


def _scatter(element_dofs, local, n):
    rows = np.repeat(element_dofs, element_dofs.shape[1], axis=1).ravel()
    cols = np.tile(element_dofs, (1, element_dofs.shape[1])).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_elasticity(mesh: Mesh2D, material: ElasticMaterial, degree: int,
                        body_load=None, dirichlet=None):
    """Stiffness matrix and load vector over all dofs (no elimination).

    Returns ``(StiffnessBlock, DofMap)``. ``body_load`` maps points
    ``(n, 2)`` to force densities ``(n, 2)``.
    """
    dofs = build_dofmap(mesh, degree, dirichlet)
    coords = mesh.vertices[mesh.triangles]
    local = _kernels.elastic_local_matrices(coords, material.shear, material.dilatation, degree)
    A = _scatter(dofs.element_dofs, local, dofs.n_dofs)
    f = np.zeros(dofs.n_dofs)
    if body_load is not None:
        lam, w = triangle_rule(2 * degree)
        phi = basis_values(lam, degree)
        pts = np.einsum("qk,tkd->tqd", lam, coords)
        F = np.asarray(body_load(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape)
        loc = np.einsum("q,t,qm,tqd->tmd", w, mesh.areas, phi, F).reshape(len(coords), -1)
        np.add.at(f, dofs.element_dofs, loc)
    return StiffnessBlock(A, f), dofs


def assemble_vector_laplacian(mesh: Mesh2D) -> sp.csr_matrix:
    """P1 matrix of ``(grad u, grad v)`` for vector fields (used by the extension bound)."""
    gl, area = barycentric_gradients(mesh.vertices[mesh.triangles])
    scalar = area[:, None, None] * np.einsum("tid,tjd->tij", gl, gl)
    local = np.einsum("tij,cd->ticjd", scalar, np.eye(2)).reshape(len(area), 6, 6)
    dofs = np.stack([2 * mesh.triangles, 2 * mesh.triangles + 1], axis=-1).reshape(len(area), -1)
    return _scatter(dofs, local, 2 * mesh.n_vertices)


def energy(A, u) -> float:
    """Strain energy pairing ``u^T A u``."""
    return float(u @ (A @ u))


# --- interface stress traces ------------------------------------------------


def traction_operator(dofs: DofMap, material: ElasticMaterial, trace: TraceMesh, t_ref):
    """Linear maps from local coefficients to ``sigma(u) n`` on trace edges.

    Parameters
    ----------
    t_ref : array_like
        Reference coordinates in [0, 1] along each edge (0 = start vertex).

    Returns
    -------
    element_dofs : ndarray, shape (ne, 2m)
        Global dofs of the owning triangle of each edge.
    T : ndarray, shape (ne, nq, 2, 2m)
        Traction matrices at each reference point.
    """
    mesh = dofs.mesh
    t_ref = np.atleast_1d(np.asarray(t_ref, dtype=float))
    tris = trace.edge_triangles
    coords = mesh.vertices[mesh.triangles[tris]]
    gl, _ = barycentric_gradients(coords)
    n = trace.normal
    N = np.array([[n[0], 0.0, n[1]], [0.0, n[1], n[0]]])
    ND = N @ material.voigt

    local_tri = mesh.triangles[tris]
    start = np.argmax(local_tri == trace.edge_vertices[:, :1], axis=1)
    end = np.argmax(local_tri == trace.edge_vertices[:, 1:], axis=1)
    rows = np.arange(len(tris))
    T = []
    for t in t_ref:
        lam = np.zeros((len(tris), 3))
        lam[rows, start] = 1.0 - t
        lam[rows, end] = t
        B = strain_matrices(basis_gradients(gl, lam, dofs.degree))
        T.append(np.einsum("ij,tjk->tik", ND, B))
    return dofs.element_dofs[tris], np.stack(T, axis=1)


def stress_trace(coeffs, dofs: DofMap, material: ElasticMaterial, trace: TraceMesh,
                 edge: int, s: float) -> np.ndarray:
    """Traction ``sigma(u_h) n`` at arc length ``s`` on interface edge ``edge``.

    ``n`` is the outward normal of the mesh owning the trace.
    """
    s0, s1 = trace.breakpoints[edge], trace.breakpoints[edge + 1]
    tol = 1e-12 * max(1.0, trace.length)
    if not (s0 - tol <= s <= s1 + tol):
        raise GeometryError(f"s = {s} is not on edge {edge} = [{s0}, {s1}]")
    t = min(max((s - s0) / (s1 - s0), 0.0), 1.0)
    edofs, T = traction_operator(dofs, material, _single_edge(trace, edge), [t])
    return T[0, 0] @ np.asarray(coeffs, dtype=float)[edofs[0]]


def _single_edge(trace: TraceMesh, e: int) -> TraceMesh:
    return TraceMesh(trace.breakpoints[e:e + 2] - trace.breakpoints[e], trace.origin, trace.tangent,
                     trace.normal, trace.edge_vertices[e:e + 1], trace.edge_triangles[e:e + 1])


# --- nested transfer ----------------------------------------------------------


def prolongate(mesh: Mesh2D, values: np.ndarray, times: int):
    """Refine ``times`` and carry a P1 field along exactly (midpoint averaging).

    ``values`` has shape ``(n_vertices, 2)``. Returns the refined mesh and values.
    """
    v = np.asarray(values, dtype=float)
    for _ in range(times):
        fine, _ = _refine(mesh)
        v = np.concatenate([v, 0.5 * (v[mesh.edges[:, 0]] + v[mesh.edges[:, 1]])])
        mesh = fine
    return mesh, v


def p1_to_p2(dofs2: DofMap, values: np.ndarray) -> np.ndarray:
    """Nodal values of a P1 field (on the same mesh) at the P2 nodes."""
    m = dofs2.mesh
    v = np.asarray(values, dtype=float).reshape(m.n_vertices, 2)
    return np.concatenate([v, 0.5 * (v[m.edges[:, 0]] + v[m.edges[:, 1]])])
