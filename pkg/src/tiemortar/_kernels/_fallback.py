"""Vectorized numpy versions of the compiled element kernels."""

import numpy as np

P2_QUAD = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])


def barycentric_gradients(coords):
    """Gradients ``(nt, 3, 2)`` of the barycentric coordinates and signed areas."""
    p0, p1, p2 = coords[:, 0], coords[:, 1], coords[:, 2]
    det = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    g = np.empty(coords.shape)
    g[:, 0] = np.column_stack([p1[:, 1] - p2[:, 1], p2[:, 0] - p1[:, 0]])
    g[:, 1] = np.column_stack([p2[:, 1] - p0[:, 1], p0[:, 0] - p2[:, 0]])
    g[:, 2] = np.column_stack([p0[:, 1] - p1[:, 1], p1[:, 0] - p0[:, 0]])
    return g / det[:, None, None], 0.5 * det


def basis_gradients(gl, lam, degree):
    """Physical gradients ``(nt, m, 2)`` of the Lagrange basis.

    ``lam`` is one barycentric point ``(3,)`` shared by all elements or one
    point per element ``(nt, 3)``.
    """
    if degree == 1:
        return gl
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (gl.shape[0], 3))
    a, b = [0, 1, 2], [1, 2, 0]
    vert = (4.0 * lam - 1.0)[:, :, None] * gl
    mid = 4.0 * (lam[:, a, None] * gl[:, b] + lam[:, b, None] * gl[:, a])
    return np.concatenate([vert, mid], axis=1)


def strain_matrices(g):
    """Voigt strain-displacement matrices ``(nt, 3, 2m)`` (engineering shear)."""
    nt, m, _ = g.shape
    B = np.zeros((nt, 3, 2 * m))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    return B


def elastic_local_matrices(coords, c1, c2, degree):
    coords = np.ascontiguousarray(coords, dtype=float)
    D = np.array([[c1 + c2, c2, 0.0], [c2, c1 + c2, 0.0], [0.0, 0.0, 0.5 * c1]])
    gl, area = barycentric_gradients(coords)
    if degree == 1:
        B = strain_matrices(gl)
        return area[:, None, None] * np.einsum("tri,rs,tsj->tij", B, D, B)
    K = 0.0
    for lam in P2_QUAD:
        B = strain_matrices(basis_gradients(gl, lam, 2))
        K = K + (area / 3.0)[:, None, None] * np.einsum("tri,rs,tsj->tij", B, D, B)
    return K
