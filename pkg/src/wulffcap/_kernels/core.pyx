"""Compiled per-cell flux kernels for planar ellipsoid-type and l^q gauges."""

from libc.math cimport fabs, pow, sqrt

KIND_ELLIPSOID = 1
KIND_LP = 2


def cell_quantities(int kind, double[::1] params, double p, double eps,
                    double[:, ::1] g, bint need_hess, double zscale,
                    double[::1] W, double[:, ::1] a, double[:, :, ::1] Da):
    """Fill W, a (and Da when need_hess) from the cell gradients in g."""
    cdef Py_ssize_t m = g.shape[0]
    cdef Py_ssize_t i
    cdef double g0, g1, H, s, s2, q2, mu, amag, couter, kap
    cdef double h0, h1, x00, x01, x11
    cdef double m00, m01, m11, c0, c1, t0, t1
    cdef double q, aq0, aq1, Hq, sg0, sg1, f0, f1, d0, d1, floor_, diag0, diag1, v0, v1, Hm
    cdef double eps2 = eps * eps

    if kind == KIND_ELLIPSOID:
        m00 = params[0]; m01 = params[1]; m11 = params[2]
        c0 = params[3]; c1 = params[4]
        q = 0.0
    else:
        q = params[0]
        m00 = m01 = m11 = c0 = c1 = 0.0

    for i in range(m):
        g0 = g[i, 0]
        g1 = g[i, 1]
        x00 = x01 = x11 = 0.0
        if g0 == 0.0 and g1 == 0.0:
            W[i] = pow(eps2, 0.5 * p) / p if eps > 0.0 else 0.0
            a[i, 0] = 0.0
            a[i, 1] = 0.0
            if need_hess:
                if eps > 0.0:
                    kap = pow(eps2, 0.5 * (p - 2.0))
                else:
                    kap = 1.0 if p <= 2.0 else 0.0
                Da[i, 0, 0] = kap * zscale
                Da[i, 0, 1] = 0.0
                Da[i, 1, 0] = 0.0
                Da[i, 1, 1] = kap * zscale
            continue

        if kind == KIND_ELLIPSOID:
            t0 = m00 * g0 + m01 * g1
            t1 = m01 * g0 + m11 * g1
            s2 = g0 * t0 + g1 * t1
            s = sqrt(s2)
            H = s + c0 * g0 + c1 * g1
            h0 = t0 / s + c0
            h1 = t1 / s + c1
            if need_hess:
                x00 = m00 / s - t0 * t0 / (s2 * s)
                x01 = m01 / s - t0 * t1 / (s2 * s)
                x11 = m11 / s - t1 * t1 / (s2 * s)
        else:
            aq0 = fabs(g0)
            aq1 = fabs(g1)
            sg0 = 1.0 if g0 > 0.0 else (-1.0 if g0 < 0.0 else 0.0)
            sg1 = 1.0 if g1 > 0.0 else (-1.0 if g1 < 0.0 else 0.0)
            Hq = pow(aq0, q) + pow(aq1, q)
            H = pow(Hq, 1.0 / q)
            Hm = pow(H, 1.0 - q)
            f0 = pow(aq0, q - 1.0) * sg0
            f1 = pow(aq1, q - 1.0) * sg1
            h0 = f0 * Hm
            h1 = f1 * Hm
            if need_hess:
                floor_ = 1e-12 * H
                d0 = aq0 if aq0 > floor_ else floor_
                d1 = aq1 if aq1 > floor_ else floor_
                diag0 = pow(d0, q - 2.0) * Hm
                diag1 = pow(d1, q - 2.0) * Hm
                v0 = pow(d0, q - 1.0) * sg0 * pow(H, 0.5 - q)
                v1 = pow(d1, q - 1.0) * sg1 * pow(H, 0.5 - q)
                x00 = (q - 1.0) * (diag0 - v0 * v0)
                x01 = (q - 1.0) * (-v0 * v1)
                x11 = (q - 1.0) * (diag1 - v1 * v1)

        q2 = H * H + eps2
        W[i] = pow(q2, 0.5 * p) / p
        if eps == 0.0:
            amag = pow(H, p - 1.0)
        else:
            amag = pow(q2, 0.5 * (p - 2.0)) * H
        a[i, 0] = amag * h0
        a[i, 1] = amag * h1
        if need_hess:
            mu = pow(q2, 0.5 * (p - 2.0))
            couter = (p - 2.0) * pow(q2, 0.5 * (p - 4.0)) * H * H + mu
            Da[i, 0, 0] = couter * h0 * h0 + amag * x00
            Da[i, 0, 1] = couter * h0 * h1 + amag * x01
            Da[i, 1, 0] = Da[i, 0, 1]
            Da[i, 1, 1] = couter * h1 * h1 + amag * x11
