# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Signatures match gaitvib._pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def modal_recurrence(double[:, ::1] transition, double[::1] gain_start,
                     double[::1] gain_slope, double[::1] load, double dt):
    cdef Py_ssize_t n = load.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] disp_arr = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vel_arr = np.zeros(n)
    cdef double[::1] disp = disp_arr
    cdef double[::1] vel = vel_arr
    cdef double a00 = transition[0, 0], a01 = transition[0, 1]
    cdef double a10 = transition[1, 0], a11 = transition[1, 1]
    cdef double g0 = gain_start[0], g1 = gain_start[1]
    cdef double s0 = gain_slope[0], s1 = gain_slope[1]
    cdef double d = 0.0, v = 0.0, p, slope, dn
    cdef Py_ssize_t k
    with nogil:
        for k in range(n - 1):
            p = load[k]
            slope = (load[k + 1] - p) / dt
            dn = a00 * d + a01 * v + g0 * p + s0 * slope
            v = a10 * d + a11 * v + g1 * p + s1 * slope
            d = dn
            disp[k + 1] = d
            vel[k + 1] = v
    return disp_arr, vel_arr


def newmark_integrate(double[:, ::1] mass, double[:, ::1] damping,
                      double[:, ::1] eff_inv, double[::1] accel0,
                      double[:, ::1] load, Py_ssize_t n_sub, double dt,
                      double gamma, double beta):
    cdef Py_ssize_t n_out = load.shape[0]
    cdef Py_ssize_t ndof = load.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.zeros((n_out, ndof))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] u = np.zeros(ndof)
    cdef double[::1] v = np.zeros(ndof)
    cdef double[::1] a = np.array(accel0, dtype=np.float64)
    cdef double[::1] u_new = np.zeros(ndof)
    cdef double[::1] wm = np.zeros(ndof)
    cdef double[::1] wc = np.zeros(ndof)
    cdef double[::1] rhs = np.zeros(ndof)
    cdef double c0 = 1.0 / (beta * dt * dt)
    cdef double c1 = gamma / (beta * dt)
    cdef double c2 = 1.0 / (beta * dt)
    cdef double c3 = 1.0 / (2.0 * beta) - 1.0
    cdef double c4 = gamma / beta - 1.0
    cdef double c5 = dt * (gamma / (2.0 * beta) - 1.0)
    cdef Py_ssize_t k, s, r, c
    cdef double acc, a_new, frac
    with nogil:
        for k in range(n_out - 1):
            for s in range(1, n_sub + 1):
                frac = <double>s / <double>n_sub
                for r in range(ndof):
                    wm[r] = c0 * u[r] + c2 * v[r] + c3 * a[r]
                    wc[r] = c1 * u[r] + c4 * v[r] + c5 * a[r]
                for r in range(ndof):
                    acc = load[k, r] + frac * (load[k + 1, r] - load[k, r])
                    for c in range(ndof):
                        acc = acc + mass[r, c] * wm[c] + damping[r, c] * wc[c]
                    rhs[r] = acc
                for r in range(ndof):
                    acc = 0.0
                    for c in range(ndof):
                        acc = acc + eff_inv[r, c] * rhs[c]
                    u_new[r] = acc
                for r in range(ndof):
                    a_new = c0 * (u_new[r] - u[r]) - c2 * v[r] - c3 * a[r]
                    v[r] = v[r] + dt * ((1.0 - gamma) * a[r] + gamma * a_new)
                    u[r] = u_new[r]
                    a[r] = a_new
            for r in range(ndof):
                out[k + 1, r] = u[r]
    return out_arr


def smo_solve(double[:, ::1] kernel, double[::1] y, double C, double tol,
              Py_ssize_t max_iter):
    cdef Py_ssize_t n = y.shape[0]
    cdef double tau = 1e-12
    cdef cnp.ndarray[cnp.float64_t, ndim=1] alpha_arr = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grad_arr = -np.ones(n)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] grad = grad_arr
    cdef Py_ssize_t i, j, t, it = 0
    cdef double gmax, gmin, best, yg, b, aq, obj
    cdef double yi, yj, kij, old_i, old_j, quad, delta, diff, total, ai, aj
    cdef double di, dj
    cdef bint in_low
    with nogil:
        while it < max_iter:
            gmax = -INFINITY
            i = -1
            for t in range(n):
                if y[t] > 0:
                    if alpha[t] < C and -grad[t] >= gmax:
                        gmax = -grad[t]
                        i = t
                else:
                    if alpha[t] > 0 and grad[t] >= gmax:
                        gmax = grad[t]
                        i = t
            gmin = INFINITY
            j = -1
            best = INFINITY
            for t in range(n):
                in_low = (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C)
                if not in_low:
                    continue
                yg = -y[t] * grad[t]
                if yg < gmin:
                    gmin = yg
                if i < 0:
                    continue
                b = gmax - yg
                if b > 0:
                    aq = kernel[i, i] + kernel[t, t] - 2.0 * kernel[i, t]
                    if aq <= 0:
                        aq = tau
                    obj = -(b * b) / aq
                    if obj <= best:
                        best = obj
                        j = t
            if i < 0 or j < 0 or gmax - gmin < tol:
                break
            it += 1
            yi = y[i]
            yj = y[j]
            kij = kernel[i, j]
            old_i = alpha[i]
            old_j = alpha[j]
            quad = kernel[i, i] + kernel[j, j] - 2.0 * kij
            if quad <= 0:
                quad = tau
            if yi != yj:
                delta = (-grad[i] - grad[j]) / quad
                diff = old_i - old_j
                ai = old_i + delta
                aj = old_j + delta
                if diff > 0:
                    if aj < 0:
                        aj = 0.0
                        ai = diff
                else:
                    if ai < 0:
                        ai = 0.0
                        aj = -diff
                if diff > 0:
                    if ai > C:
                        ai = C
                        aj = C - diff
                else:
                    if aj > C:
                        aj = C
                        ai = C + diff
            else:
                delta = (grad[i] - grad[j]) / quad
                total = old_i + old_j
                ai = old_i - delta
                aj = old_j + delta
                if total > C:
                    if ai > C:
                        ai = C
                        aj = total - C
                else:
                    if aj < 0:
                        aj = 0.0
                        ai = total
                if total > C:
                    if aj > C:
                        aj = C
                        ai = total - C
                else:
                    if ai < 0:
                        ai = 0.0
                        aj = total
            alpha[i] = ai
            alpha[j] = aj
            di = ai - old_i
            dj = aj - old_j
            for t in range(n):
                grad[t] += y[t] * (yi * di * kernel[t, i] + yj * dj * kernel[t, j])
    return alpha_arr, grad_arr, it
