"""Vectorized NumPy reference implementation of the flux kernels.

This path works for any gauge object (it only needs ``value``/``grad`` and,
for Hessians, ``hess``) and any spatial dimension.  It also serves as the
semantic reference the compiled core is tested against.
"""

from __future__ import annotations

import numpy as np


def flux_algebra(H, gradH, hessH, p, eps, need_hess):
    """Flux quantities from gauge data at nonzero arguments.

    ``W = (H^2+eps^2)^(p/2)/p``, ``a = (H^2+eps^2)^((p-2)/2) H gradH`` and
    ``Da = [(p-2)(H^2+eps^2)^((p-4)/2) H^2 + (H^2+eps^2)^((p-2)/2)] gradH gradH^T
    + (H^2+eps^2)^((p-2)/2) H hessH``.
    """
    H = np.asarray(H, dtype=float)
    q2 = H * H + eps * eps
    W = q2 ** (0.5 * p) / p
    if eps == 0.0:
        amag = H ** (p - 1.0)
    else:
        amag = q2 ** (0.5 * (p - 2.0)) * H
    a = amag[..., None] * gradH
    if not need_hess:
        return W, a, None
    mu = q2 ** (0.5 * (p - 2.0))
    couter = (p - 2.0) * q2 ** (0.5 * (p - 4.0)) * H * H + mu
    Da = couter[..., None, None] * (gradH[..., :, None] * gradH[..., None, :])
    Da += amag[..., None, None] * hessH
    return W, a, Da


def _zero_row_values(p, eps, zscale, dim, need_hess):
    W0 = (eps * eps) ** (0.5 * p) / p if eps > 0.0 else 0.0
    if not need_hess:
        return W0, None
    if eps > 0.0:
        kappa = (eps * eps) ** (0.5 * (p - 2.0))
    else:
        # bounded safeguard: exact curvature at 0 is 0 for p > 2 and lies in
        # a bounded subdifferential for p = 2; p < 2 without smoothing is
        # capped at the gauge curvature scale to keep the Newton model finite
        kappa = 1.0 if p <= 2.0 else 0.0
    return W0, kappa * zscale * np.eye(dim)


def cell_quantities_gauge(gauge, p, eps, g, need_hess=False):
    """Reference kernel: evaluate through the gauge object, any dimension."""
    g = np.asarray(g, dtype=float)
    m, d = g.shape
    norms = np.einsum("ij,ij->i", g, g)
    zero = norms == 0.0
    W = np.empty(m)
    a = np.zeros((m, d))
    Da = np.empty((m, d, d)) if need_hess else None
    if zero.any():
        W0, Da0 = _zero_row_values(p, eps, gauge.zero_hessian_scale(), d, need_hess)
        W[zero] = W0
        if need_hess:
            Da[zero] = Da0
    live = ~zero
    if live.any():
        gl = g[live] if zero.any() else g
        H = gauge.value(gl)
        gradH = gauge.grad(gl)
        hessH = gauge.hess(gl) if need_hess else None
        Wl, al, Dal = flux_algebra(H, gradH, hessH, p, eps, need_hess)
        if zero.any():
            W[live] = Wl
            a[live] = al
            if need_hess:
                Da[live] = Dal
        else:
            W, a = Wl, al
            if need_hess:
                Da = Dal
    return W, a, Da
