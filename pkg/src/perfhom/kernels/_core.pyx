# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled red-black relaxation kernels for 3-D diagonal-coefficient stencils.

Hot inner loops of the solvers: one Gauss-Seidel/SOR color pass, the residual
max, and the complementarity residual max.  Semantics match
``perfhom.kernels.fallback`` restricted to n = 3 without cross weights.
"""

import numpy as np

cimport numpy as cnp


def sweep_color3(double[:, :, ::1] u, double[:, :, ::1] rhs,
                 double[:, :, ::1] wxl, double[:, :, ::1] wxh,
                 double[:, :, ::1] wyl, double[:, :, ::1] wyh,
                 double[:, :, ::1] wzl, double[:, :, ::1] wzh,
                 double[:, :, ::1] diag, unsigned char[:, :, ::1] unknown,
                 Py_ssize_t[::1] ixp, Py_ssize_t[::1] ixn,
                 Py_ssize_t[::1] iyp, Py_ssize_t[::1] iyn,
                 Py_ssize_t[::1] izp, Py_ssize_t[::1] izn,
                 int color, double omega, psi_obj):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], nz = u.shape[2]
    cdef Py_ssize_t i, j, k, k0
    cdef double S, unew, old, val
    cdef bint projected = psi_obj is not None
    cdef double[:, :, ::1] psi
    if projected:
        psi = psi_obj
    else:
        psi = u  # unused
    for i in range(nx):
        for j in range(ny):
            k0 = (i + j + color) & 1
            for k in range(k0, nz, 2):
                if not unknown[i, j, k]:
                    continue
                S = (wxl[i, j, k] * u[ixp[i], j, k]
                     + wxh[i, j, k] * u[ixn[i], j, k]
                     + wyl[i, j, k] * u[i, iyp[j], k]
                     + wyh[i, j, k] * u[i, iyn[j], k]
                     + wzl[i, j, k] * u[i, j, izp[k]]
                     + wzh[i, j, k] * u[i, j, izn[k]])
                unew = (S - rhs[i, j, k]) / diag[i, j, k]
                old = u[i, j, k]
                val = old + omega * (unew - old)
                if projected and psi[i, j, k] > val:
                    val = psi[i, j, k]
                u[i, j, k] = val


def residual_max3(double[:, :, ::1] u, double[:, :, ::1] rhs,
                  double[:, :, ::1] wxl, double[:, :, ::1] wxh,
                  double[:, :, ::1] wyl, double[:, :, ::1] wyh,
                  double[:, :, ::1] wzl, double[:, :, ::1] wzh,
                  double[:, :, ::1] diag, unsigned char[:, :, ::1] unknown,
                  Py_ssize_t[::1] ixp, Py_ssize_t[::1] ixn,
                  Py_ssize_t[::1] iyp, Py_ssize_t[::1] iyn,
                  Py_ssize_t[::1] izp, Py_ssize_t[::1] izn):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], nz = u.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double S, r, best = 0.0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not unknown[i, j, k]:
                    continue
                S = (wxl[i, j, k] * u[ixp[i], j, k]
                     + wxh[i, j, k] * u[ixn[i], j, k]
                     + wyl[i, j, k] * u[i, iyp[j], k]
                     + wyh[i, j, k] * u[i, iyn[j], k]
                     + wzl[i, j, k] * u[i, j, izp[k]]
                     + wzh[i, j, k] * u[i, j, izn[k]])
                r = S - diag[i, j, k] * u[i, j, k] - rhs[i, j, k]
                if r < 0:
                    r = -r
                if r > best:
                    best = r
    return best


def lcp_residual_max3(double[:, :, ::1] u, double[:, :, ::1] rhs,
                      double[:, :, ::1] wxl, double[:, :, ::1] wxh,
                      double[:, :, ::1] wyl, double[:, :, ::1] wyh,
                      double[:, :, ::1] wzl, double[:, :, ::1] wzh,
                      double[:, :, ::1] diag,
                      unsigned char[:, :, ::1] unknown,
                      Py_ssize_t[::1] ixp, Py_ssize_t[::1] ixn,
                      Py_ssize_t[::1] iyp, Py_ssize_t[::1] iyn,
                      Py_ssize_t[::1] izp, Py_ssize_t[::1] izn,
                      double[:, :, ::1] psi):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], nz = u.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double S, Lu, r, slack, best = 0.0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not unknown[i, j, k]:
                    continue
                S = (wxl[i, j, k] * u[ixp[i], j, k]
                     + wxh[i, j, k] * u[ixn[i], j, k]
                     + wyl[i, j, k] * u[i, iyp[j], k]
                     + wyh[i, j, k] * u[i, iyn[j], k]
                     + wzl[i, j, k] * u[i, j, izp[k]]
                     + wzh[i, j, k] * u[i, j, izn[k]])
                Lu = S - diag[i, j, k] * u[i, j, k] - rhs[i, j, k]
                slack = u[i, j, k] - psi[i, j, k]
                r = -Lu if -Lu < slack else slack
                if r < 0:
                    r = -r
                if r > best:
                    best = r
    return best
