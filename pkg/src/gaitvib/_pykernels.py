"""Pure-Python reference versions of the numerical hot loops.

Each function mirrors its counterpart in ``_ckernels.pyx`` argument for
argument; :mod:`gaitvib.kernels` picks whichever is available.
"""

import numpy as np


def modal_recurrence(transition, gain_start, gain_slope, load, dt):
    """Step a single-mode state through a piecewise-linear load.

    ``transition`` is the 2x2 exact state-transition matrix for one step,
    ``gain_start`` and ``gain_slope`` the responses to the load level and
    to its slope over the step. Returns ``(displacement, velocity)``.
    """
    n = load.shape[0]
    disp = np.zeros(n)
    vel = np.zeros(n)
    a00, a01 = transition[0, 0], transition[0, 1]
    a10, a11 = transition[1, 0], transition[1, 1]
    g0, g1 = gain_start[0], gain_start[1]
    s0, s1 = gain_slope[0], gain_slope[1]
    d = 0.0
    v = 0.0
    for k in range(n - 1):
        p = load[k]
        slope = (load[k + 1] - p) / dt
        d, v = (a00 * d + a01 * v + g0 * p + s0 * slope,
                a10 * d + a11 * v + g1 * p + s1 * slope)
        disp[k + 1] = d
        vel[k + 1] = v
    return disp, vel


def newmark_integrate(mass, damping, eff_inv, accel0, load, n_sub, dt,
                      gamma, beta):
    """Newmark-beta integration of ``M u'' + C u' + K u = f(t)``.

    ``load`` is sampled on the output grid (one row per output sample) and
    linearly interpolated over ``n_sub`` internal substeps of size ``dt``.
    ``eff_inv`` is the inverse effective stiffness for that substep and
    ``accel0`` the initial acceleration. Starts from rest; returns
    displacements on the output grid.
    """
    n_out, ndof = load.shape
    out = np.zeros((n_out, ndof))
    c0 = 1.0 / (beta * dt * dt)
    c1 = gamma / (beta * dt)
    c2 = 1.0 / (beta * dt)
    c3 = 1.0 / (2.0 * beta) - 1.0
    c4 = gamma / beta - 1.0
    c5 = dt * (gamma / (2.0 * beta) - 1.0)
    u = np.zeros(ndof)
    v = np.zeros(ndof)
    a = np.array(accel0, dtype=float)
    for k in range(n_out - 1):
        f0 = load[k]
        df = (load[k + 1] - f0) / n_sub
        for s in range(1, n_sub + 1):
            f = f0 + s * df
            rhs = (f + mass @ (c0 * u + c2 * v + c3 * a)
                   + damping @ (c1 * u + c4 * v + c5 * a))
            u_new = eff_inv @ rhs
            a_new = c0 * (u_new - u) - c2 * v - c3 * a
            v = v + dt * ((1.0 - gamma) * a + gamma * a_new)
            u = u_new
            a = a_new
        out[k + 1] = u
    return out


def smo_solve(kernel, y, C, tol, max_iter):
    """Dual SVM solver: SMO with second-order working-set selection.

    Minimises ``0.5 a'Qa - e'a`` subject to ``0 <= a <= C`` and ``y'a = 0``
    where ``Q = (y y') * kernel``. Returns ``(alpha, gradient, iterations)``.
    """
    n = y.shape[0]
    tau = 1e-12
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(kernel).copy()
    it = 0
    while it < max_iter:
        # i: maximal violating index in the "up" set
        gmax = -np.inf
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
        gmin = np.inf
        j = -1
        best = np.inf
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
                a = diag[i] + diag[t] - 2.0 * kernel[i, t]
                if a <= 0:
                    a = tau
                obj = -(b * b) / a
                if obj <= best:
                    best = obj
                    j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        it += 1
        yi, yj = y[i], y[j]
        kij = kernel[i, j]
        old_i, old_j = alpha[i], alpha[j]
        if yi != yj:
            quad = diag[i] + diag[j] - 2.0 * kij
            if quad <= 0:
                quad = tau
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
            quad = diag[i] + diag[j] - 2.0 * kij
            if quad <= 0:
                quad = tau
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
        grad += (y * yi * di) * kernel[:, i] + (y * yj * dj) * kernel[:, j]
    return alpha, grad, it
