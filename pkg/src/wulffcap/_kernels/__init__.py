"""Per-cell flux kernels: compiled core with a pure-NumPy fallback.

The hot loop of the solver evaluates, for every mesh cell, the regularized
energy density, flux and flux Jacobian at the cell gradient.  Gauges that
expose a ``kernel_spec`` (ellipsoid-type and l^q kinds in the plane) are
served by the Cython extension ``core`` when it is importable; everything
else, and every run with the environment variable ``WULFFCAP_PURE=1``, goes
through the vectorized NumPy implementation in :mod:`.fallback`.
"""

from __future__ import annotations

import os

import numpy as np

from . import fallback

try:  # compiled extension is optional; the fallback is always available
    from . import core as _core
except ImportError:  # pragma: no cover - depends on build environment
    _core = None

_EMPTY_HESS = np.empty((0, 2, 2))


def compiled_available() -> bool:
    return _core is not None


def compiled_enabled() -> bool:
    return _core is not None and os.environ.get("WULFFCAP_PURE", "") != "1"


def backend_name() -> str:
    return "compiled" if compiled_enabled() else "fallback"


def cell_quantities(gauge, p, eps, g, need_hess=False, force_fallback=False):
    """Energy density, flux and (optionally) flux Jacobian per row of ``g``.

    Returns ``(W, a, Da)`` with ``Da = None`` when ``need_hess`` is false.
    """
    g = np.ascontiguousarray(g, dtype=float)
    spec = gauge.kernel_spec()
    if (spec is not None and g.shape[1] == 2 and compiled_enabled()
            and not force_fallback):
        kind, params = spec
        m = g.shape[0]
        W = np.empty(m)
        a = np.empty((m, 2))
        Da = np.empty((m, 2, 2)) if need_hess else None
        _core.cell_quantities(
            int(kind), np.ascontiguousarray(params, dtype=float), float(p),
            float(eps), g, bool(need_hess), float(gauge.zero_hessian_scale()),
            W, a, Da if need_hess else _EMPTY_HESS,
        )
        return W, a, Da
    return fallback.cell_quantities_gauge(gauge, p, eps, g, need_hess)
