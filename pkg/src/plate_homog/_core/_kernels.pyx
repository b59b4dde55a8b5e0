# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: SVK energy density over point batches and the
Darboux frame integrator with per-step polar re-orthonormalisation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def svk_energy(double[:, :, ::1] F, double[::1] mu, double[::1] lam):
    """W = mu/4 |F^T F - I|^2 + lam/8 tr(F^T F - I)^2 for each 3x3 block."""
    cdef Py_ssize_t n = F.shape[0]
    cdef Py_ssize_t p, i, j, k
    cdef double e, s, tr
    cdef double E[3][3]
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for p in range(n):
            for i in range(3):
                for j in range(i, 3):
                    e = 0.0
                    for k in range(3):
                        e = e + F[p, k, i] * F[p, k, j]
                    if i == j:
                        e = e - 1.0
                    E[i][j] = e
            s = E[0][0] * E[0][0] + E[1][1] * E[1][1] + E[2][2] * E[2][2]
            s = s + 2.0 * (E[0][1] * E[0][1] + E[0][2] * E[0][2] + E[1][2] * E[1][2])
            tr = E[0][0] + E[1][1] + E[2][2]
            o[p] = 0.25 * mu[p] * s + 0.125 * lam[p] * tr * tr
    return out


cdef inline void _rhs(double kg, double kn, double[3][3] X, double[3][3] out) nogil:
    cdef int c
    for c in range(3):
        out[0][c] = kg * X[1][c] + kn * X[2][c]
        out[1][c] = -kg * X[0][c]
        out[2][c] = -kn * X[0][c]


cdef double PROJECT_LIMIT = 0.5


cdef inline double _gram_defect(double[3][3] X) nogil:
    cdef int i, j, c
    cdef double g, worst = 0.0
    for i in range(3):
        for j in range(3):
            g = 0.0
            for c in range(3):
                g = g + X[i][c] * X[j][c]
            if i == j:
                g = g - 1.0
            if fabs(g) > worst:
                worst = fabs(g)
    return worst


cdef inline void _polar(double[3][3] X) nogil:
    # Newton-Schulz iteration X <- (3 X - X X^T X) / 2 towards the polar factor
    cdef int it, i, j, c
    cdef double G[3][3]
    cdef double Y[3][3]
    for it in range(6):
        if _gram_defect(X) < 1e-16:
            return
        for i in range(3):
            for j in range(3):
                G[i][j] = 0.0
                for c in range(3):
                    G[i][j] = G[i][j] + X[i][c] * X[j][c]
        for i in range(3):
            for c in range(3):
                Y[i][c] = 1.5 * X[i][c]
                for j in range(3):
                    Y[i][c] = Y[i][c] - 0.5 * G[i][j] * X[j][c]
        for i in range(3):
            for c in range(3):
                X[i][c] = Y[i][c]


def darboux_rk4(double[::1] kg, double[::1] kn, double dt, double[:, ::1] frame0):
    """Integrate the frame rows (tau, nu, n) over ``(len(kg) - 1) // 2`` steps.

    ``kg`` and ``kn`` are sampled at half steps.  Returns the frames at the
    nodes, shape (steps + 1, 3, 3), and the pre-projection drift per step.
    """
    cdef Py_ssize_t steps = (kg.shape[0] - 1) // 2
    frames = np.empty((steps + 1, 3, 3))
    drift = np.empty(steps)
    cdef double[:, :, ::1] fr = frames
    cdef double[::1] dr = drift
    cdef double X[3][3]
    cdef double T[3][3]
    cdef double k1[3][3]
    cdef double k2[3][3]
    cdef double k3[3][3]
    cdef double k4[3][3]
    cdef Py_ssize_t s
    cdef int i, c
    for i in range(3):
        for c in range(3):
            X[i][c] = frame0[i, c]
            fr[0, i, c] = X[i][c]
    with nogil:
        for s in range(steps):
            _rhs(kg[2 * s], kn[2 * s], X, k1)
            for i in range(3):
                for c in range(3):
                    T[i][c] = X[i][c] + 0.5 * dt * k1[i][c]
            _rhs(kg[2 * s + 1], kn[2 * s + 1], T, k2)
            for i in range(3):
                for c in range(3):
                    T[i][c] = X[i][c] + 0.5 * dt * k2[i][c]
            _rhs(kg[2 * s + 1], kn[2 * s + 1], T, k3)
            for i in range(3):
                for c in range(3):
                    T[i][c] = X[i][c] + dt * k3[i][c]
            _rhs(kg[2 * s + 2], kn[2 * s + 2], T, k4)
            for i in range(3):
                for c in range(3):
                    X[i][c] = X[i][c] + dt / 6.0 * (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c])
            dr[s] = _gram_defect(X)
            # outside the Newton-Schulz basin the step is rejected upstream anyway
            if dr[s] < PROJECT_LIMIT:
                _polar(X)
            for i in range(3):
                for c in range(3):
                    fr[s + 1, i, c] = X[i][c]
    return frames, drift
