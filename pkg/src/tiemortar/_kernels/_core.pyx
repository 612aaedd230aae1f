# cython: language_level=3
"""Compiled element kernels. Must agree with ``_fallback`` to rounding."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double[3][3] _QP = [[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
                         [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                         [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]]


cdef inline void _p2_grads(double* lam, double[3][2] gl, double[6][2] out) noexcept nogil:
    cdef int i, c
    cdef int a[3]
    cdef int b[3]
    a[0] = 0; a[1] = 1; a[2] = 2
    b[0] = 1; b[1] = 2; b[2] = 0
    for i in range(3):
        for c in range(2):
            out[i][c] = (4.0 * lam[i] - 1.0) * gl[i][c]
            out[3 + i][c] = 4.0 * (lam[a[i]] * gl[b[i]][c] + lam[b[i]] * gl[a[i]][c])


def elastic_local_matrices(double[:, :, ::1] coords, double c1, double c2, int degree):
    """Element stiffness matrices ``(nt, 2m, 2m)`` with node-interleaved dofs."""
    cdef Py_ssize_t nt = coords.shape[0]
    cdef int m = 3 if degree == 1 else 6
    cdef int n = 2 * m
    cdef int nq = 1 if degree == 1 else 3
    out_arr = np.zeros((nt, n, n), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[3][3] D
    cdef double[3][2] gl
    cdef double[6][2] g
    cdef double[3][12] B
    cdef double[3][12] DB
    cdef double lam[3]
    cdef double det, area, w, s
    cdef Py_ssize_t t
    cdef int q, i, j, r, k

    D[0][0] = c1 + c2; D[0][1] = c2; D[0][2] = 0.0
    D[1][0] = c2; D[1][1] = c1 + c2; D[1][2] = 0.0
    D[2][0] = 0.0; D[2][1] = 0.0; D[2][2] = 0.5 * c1

    with nogil:
        for t in range(nt):
            det = ((coords[t, 1, 0] - coords[t, 0, 0]) * (coords[t, 2, 1] - coords[t, 0, 1])
                   - (coords[t, 1, 1] - coords[t, 0, 1]) * (coords[t, 2, 0] - coords[t, 0, 0]))
            area = 0.5 * det
            gl[0][0] = (coords[t, 1, 1] - coords[t, 2, 1]) / det
            gl[0][1] = (coords[t, 2, 0] - coords[t, 1, 0]) / det
            gl[1][0] = (coords[t, 2, 1] - coords[t, 0, 1]) / det
            gl[1][1] = (coords[t, 0, 0] - coords[t, 2, 0]) / det
            gl[2][0] = (coords[t, 0, 1] - coords[t, 1, 1]) / det
            gl[2][1] = (coords[t, 1, 0] - coords[t, 0, 0]) / det
            for q in range(nq):
                if degree == 1:
                    for i in range(3):
                        g[i][0] = gl[i][0]
                        g[i][1] = gl[i][1]
                    w = area
                else:
                    for i in range(3):
                        lam[i] = _QP[q][i]
                    _p2_grads(lam, gl, g)
                    w = area / 3.0
                for i in range(m):
                    B[0][2 * i] = g[i][0]
                    B[0][2 * i + 1] = 0.0
                    B[1][2 * i] = 0.0
                    B[1][2 * i + 1] = g[i][1]
                    B[2][2 * i] = g[i][1]
                    B[2][2 * i + 1] = g[i][0]
                for r in range(3):
                    for j in range(n):
                        s = 0.0
                        for k in range(3):
                            s = s + D[r][k] * B[k][j]
                        DB[r][j] = s
                for i in range(n):
                    for j in range(n):
                        s = 0.0
                        for r in range(3):
                            s = s + B[r][i] * DB[r][j]
                        out[t, i, j] += w * s
    return out_arr
