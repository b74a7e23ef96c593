"""Gauges (positively 1-homogeneous anisotropies), their duals, and flux maps.

A gauge ``H`` is convex, positively 1-homogeneous and positive away from the
origin; it need not be even.  Its dual ``H0(x) = sup { <x, xi> : H(xi) = 1 }``
is the support function of the unit ``H``-ball, and sublevel sets of ``H0``
are the Wulff shapes of ``H``.  The flux map

    a(xi) = H(xi)^(p-1) * grad H(xi),        a(0) = 0,

is the monotone operator driving the anisotropic p-Laplacian; a smoothed
variant ``a_eps = (H^2 + eps^2)^((p-2)/2) * H * grad H`` with potential
``W_eps = (H^2 + eps^2)^(p/2) / p`` is what the solver actually assembles.

All evaluation routines are vectorized over a leading batch axis: arrays of
shape ``(..., dim)`` map to values of shape ``(...)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from ._kernels import cell_quantities

__all__ = [
    "Gauge",
    "GaugeError",
    "DualMaximizationError",
    "EllipsoidGauge",
    "LpGauge",
    "TabulatedGauge",
    "DualGauge",
    "FluxMap",
    "EllipticityProbe",
    "euclidean",
    "scaled_euclidean",
    "anisotropic_quadratic",
    "shifted_euclidean",
    "ellipticity_probe",
    "duality_roundtrip_residual",
]

# kernel kind codes shared with the compiled core
KIND_ELLIPSOID = 1
KIND_LP = 2


class GaugeError(ValueError):
    """Invalid gauge data or an evaluation outside the admissible domain."""


class DualMaximizationError(RuntimeError):
    """Dual evaluation by constrained maximization failed to converge.

    Carries the best certified lower bound found so far and the requested
    tolerance so callers can decide whether the partial answer is usable.
    """

    def __init__(self, message: str, best: float, tolerance: float):
        super().__init__(message)
        self.best = best
        self.tolerance = tolerance


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise GaugeError(f"expected points with last axis {dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise GaugeError("non-finite input rejected")
    return x


class Gauge:
    """Base class for gauges.  Subclasses provide value/grad/hess."""

    kind = "abstract"
    dim = 2

    def value(self, xi):
        raise NotImplementedError

    def grad(self, xi):
        raise NotImplementedError

    def hess(self, xi):
        raise NotImplementedError

    def kernel_spec(self):
        """Return ``(kind_code, params)`` for the compiled kernels, or None."""
        return None

    def zero_hessian_scale(self) -> float:
        """Curvature scale used to regularize the flux Jacobian at xi = 0."""
        return 1.0

    def dual(self, strategy: str = "auto", **kwargs) -> "DualGauge":
        return DualGauge(self, strategy=strategy, **kwargs)

    def closed_form_dual(self):
        """Return the dual as an explicit Gauge when available, else None."""
        return None

    def cache_key(self):
        raise NotImplementedError

    def params(self) -> dict:
        """Serializable parameters (used by the scenario config layer)."""
        return {}

    def __repr__(self):
        ps = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"{type(self).__name__}({ps})"


class EllipsoidGauge(Gauge):
    """Gauge of the form ``sqrt(xi^T M xi) + <c, xi>`` with an ellipsoidal ball.

    ``M`` must be symmetric positive definite and the shift must satisfy
    ``c^T M^-1 c < 1`` so that the gauge stays positive away from the origin.
    The family is closed under duality, which gives exact dual evaluation for
    the Euclidean, scaled, quadratic-form and shifted-Euclidean kinds.
    """

    def __init__(self, matrix, shift=None, kind="anisotropic_quadratic"):
        M = np.asarray(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise GaugeError("matrix must be square")
        if not np.allclose(M, M.T, atol=1e-12):
            raise GaugeError("matrix must be symmetric")
        evals = np.linalg.eigvalsh(M)
        if evals[0] <= 0:
            raise GaugeError("matrix must be positive definite")
        d = M.shape[0]
        c = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
        if c.shape != (d,):
            raise GaugeError("shift has wrong dimension")
        slack = float(c @ np.linalg.solve(M, c))
        if slack >= 1.0:
            raise GaugeError(
                "shift too large: c^T M^-1 c = %.6g >= 1, gauge not positive" % slack
            )
        self.kind = kind
        self.dim = d
        self.matrix = M
        self.shift = c

    def value(self, xi):
        xi = _as_points(xi, self.dim)
        q = np.einsum("...i,ij,...j->...", xi, self.matrix, xi)
        return np.sqrt(q) + xi @ self.shift

    def grad(self, xi):
        xi = _as_points(xi, self.dim)
        Mxi = xi @ self.matrix
        s = np.sqrt(np.einsum("...i,...i->...", xi, Mxi))
        if np.any(s == 0.0):
            raise GaugeError("gradient undefined at the origin")
        return Mxi / s[..., None] + self.shift

    def hess(self, xi):
        xi = _as_points(xi, self.dim)
        Mxi = xi @ self.matrix
        s = np.sqrt(np.einsum("...i,...i->...", xi, Mxi))
        if np.any(s == 0.0):
            raise GaugeError("Hessian undefined at the origin")
        outer = Mxi[..., :, None] * Mxi[..., None, :]
        return self.matrix / s[..., None, None] - outer / (s**3)[..., None, None]

    def kernel_spec(self):
        if self.dim != 2:
            return None
        M, c = self.matrix, self.shift
        return KIND_ELLIPSOID, np.array([M[0, 0], M[0, 1], M[1, 1], c[0], c[1]])

    def zero_hessian_scale(self):
        return float(np.trace(self.matrix)) / self.dim

    def closed_form_dual(self):
        # Unit ball {sqrt(xi M xi) <= 1 - <c, xi>} is the ellipsoid
        # {xi^T P xi + 2 <c, xi> <= 1} with P = M - c c^T; its support
        # function is again of ellipsoid-plus-shift form.
        P = self.matrix - np.outer(self.shift, self.shift)
        z = -np.linalg.solve(P, self.shift)
        rho2 = 1.0 - float(self.shift @ z)
        return EllipsoidGauge(rho2 * np.linalg.inv(P), shift=z, kind=self.kind + "_dual")

    def cache_key(self):
        return ("ellipsoid", self.dim) + tuple(np.round(self.matrix, 14).ravel()) + tuple(
            np.round(self.shift, 14)
        )

    def params(self):
        return {"matrix": self.matrix.tolist(), "shift": self.shift.tolist()}


def euclidean(dim: int = 2) -> EllipsoidGauge:
    """The Euclidean norm as a gauge (self-dual)."""
    g = EllipsoidGauge(np.eye(dim), kind="euclidean")
    return g


def scaled_euclidean(factor: float, dim: int = 2) -> EllipsoidGauge:
    """``factor * |xi|``; dual is ``|x| / factor``."""
    if not (factor > 0 and math.isfinite(factor)):
        raise GaugeError("scale factor must be positive and finite")
    g = EllipsoidGauge(factor**2 * np.eye(dim), kind="scaled_euclidean")
    return g


def anisotropic_quadratic(matrix) -> EllipsoidGauge:
    """``sqrt(xi^T A xi)`` for symmetric positive definite ``A``."""
    return EllipsoidGauge(matrix, kind="anisotropic_quadratic")


def shifted_euclidean(shift) -> EllipsoidGauge:
    """``|xi| + <b, xi>`` with ``|b| < 1``; a genuinely non-even gauge."""
    b = np.asarray(shift, dtype=float)
    return EllipsoidGauge(np.eye(b.shape[0]), shift=b, kind="shifted_euclidean")


class LpGauge(Gauge):
    """The l^q norm ``(sum |xi_i|^q)^(1/q)`` for 1 < q < inf."""

    # Hessian entries involve |xi_i|^(q-2); for q < 2 these blow up on the
    # coordinate axes, so components are floored at _AXIS_FLOOR * H before
    # the power is taken.  This caps the Newton model's curvature without
    # touching values or gradients.
    _AXIS_FLOOR = 1e-12

    def __init__(self, q: float, dim: int = 2):
        if not (1.0 < q < math.inf):
            raise GaugeError("exponent q must lie in (1, inf)")
        self.kind = "lp"
        self.q = float(q)
        self.dim = dim

    def value(self, xi):
        xi = _as_points(xi, self.dim)
        return np.sum(np.abs(xi) ** self.q, axis=-1) ** (1.0 / self.q)

    def grad(self, xi):
        xi = _as_points(xi, self.dim)
        H = self.value(xi)
        if np.any(H == 0.0):
            raise GaugeError("gradient undefined at the origin")
        q = self.q
        return (np.abs(xi) ** (q - 1.0)) * np.sign(xi) * (H ** (1.0 - q))[..., None]

    def hess(self, xi):
        xi = _as_points(xi, self.dim)
        H = self.value(xi)
        if np.any(H == 0.0):
            raise GaugeError("Hessian undefined at the origin")
        q = self.q
        ax = np.maximum(np.abs(xi), self._AXIS_FLOOR * H[..., None])
        diag_part = ax ** (q - 2.0) * (H ** (1.0 - q))[..., None]
        v = ax ** (q - 1.0) * np.sign(xi) * (H ** (0.5 - q))[..., None]
        # hess = (q-1) * (diag(|xi|^{q-2}) H^{1-q} - outer term H^{1-2q})
        out = -(v[..., :, None] * v[..., None, :])
        idx = np.arange(self.dim)
        out[..., idx, idx] += diag_part
        return (q - 1.0) * out

    def kernel_spec(self):
        if self.dim != 2:
            return None
        return KIND_LP, np.array([self.q])

    def closed_form_dual(self):
        qc = self.q / (self.q - 1.0)
        return LpGauge(qc, dim=self.dim)

    def cache_key(self):
        return ("lp", self.dim, round(self.q, 14))

    def params(self):
        return {"q": self.q}


class TabulatedGauge(Gauge):
    """Planar gauge reconstructed from samples of its unit sphere.

    Given boundary points of ``{H = 1}``, store the angular profile
    ``s(theta) = H(cos theta, sin theta)`` as a periodic monotone-cubic
    interpolant, so that ``H(xi) = |xi| * s(angle(xi))``.  Evaluation is C^1;
    the second derivative is piecewise and only used diagnostically.
    """

    def __init__(self, boundary_points):
        pts = np.asarray(boundary_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 8:
            raise GaugeError("need at least 8 planar boundary samples")
        r = np.hypot(pts[:, 0], pts[:, 1])
        if np.any(r <= 0):
            raise GaugeError("boundary samples must be away from the origin")
        theta = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
        order = np.argsort(theta)
        theta, r = theta[order], r[order]
        if np.any(np.diff(theta) <= 1e-12):
            raise GaugeError("duplicate angular samples")
        s = 1.0 / r
        # pad three samples on each side so the seam is interior to the fit
        th_ext = np.concatenate([theta[-3:] - 2 * np.pi, theta, theta[:3] + 2 * np.pi])
        s_ext = np.concatenate([s[-3:], s, s[:3]])
        self._profile = PchipInterpolator(th_ext, s_ext)
        self._dprofile = self._profile.derivative()
        self._d2profile = self._profile.derivative(2)
        self.kind = "tabulated"
        self.dim = 2
        self._theta = theta
        self._s = s
        # convexity is checked on the data: the sampled boundary points in
        # angular order must form a convex polygon (the interpolant's second
        # derivative is too noisy near curvature-degenerate directions)
        poly = pts[order]
        edges = np.roll(poly, -1, axis=0) - poly
        cross = (edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1]
                 - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0])
        if np.min(cross) < -1e-10 * float(np.max(r)) ** 3:
            raise GaugeError("tabulated boundary samples are not convex")

    @classmethod
    def from_gauge(cls, gauge: Gauge, samples: int = 256) -> "TabulatedGauge":
        tt = np.linspace(0, 2 * np.pi, samples, endpoint=False)
        e = np.stack([np.cos(tt), np.sin(tt)], axis=-1)
        r = 1.0 / gauge.value(e)
        return cls(e * r[:, None])

    def _angle(self, xi):
        return np.mod(np.arctan2(xi[..., 1], xi[..., 0]), 2 * np.pi)

    def value(self, xi):
        xi = _as_points(xi, 2)
        r = np.hypot(xi[..., 0], xi[..., 1])
        out = r * self._profile(self._angle(xi))
        return np.where(r == 0.0, 0.0, out)

    def grad(self, xi):
        xi = _as_points(xi, 2)
        r = np.hypot(xi[..., 0], xi[..., 1])
        if np.any(r == 0.0):
            raise GaugeError("gradient undefined at the origin")
        th = self._angle(xi)
        s, ds = self._profile(th), self._dprofile(th)
        er = xi / r[..., None]
        et = np.stack([-er[..., 1], er[..., 0]], axis=-1)
        return s[..., None] * er + ds[..., None] * et

    def hess(self, xi):
        xi = _as_points(xi, 2)
        r = np.hypot(xi[..., 0], xi[..., 1])
        if np.any(r == 0.0):
            raise GaugeError("Hessian undefined at the origin")
        th = self._angle(xi)
        curv = (self._profile(th) + self._d2profile(th)) / r
        er = xi / r[..., None]
        et = np.stack([-er[..., 1], er[..., 0]], axis=-1)
        return curv[..., None, None] * (et[..., :, None] * et[..., None, :])

    def cache_key(self):
        return ("tabulated",) + tuple(np.round(self._theta, 12)) + tuple(
            np.round(self._s, 12)
        )

    def params(self):
        return {"samples": len(self._theta)}


def _unit_sphere_points(gauge: Gauge, n: int):
    tt = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    e = np.stack([np.cos(tt), np.sin(tt)], axis=-1)
    return tt, e / gauge.value(e)[:, None]


class DualGauge:
    """Dual gauge ``H0``: support function of the primal unit ball.

    Closed forms are used when the primal kind admits one; otherwise the
    value is computed by maximizing ``<x, xi>`` over the unit sphere of the
    primal.  In the plane that maximization starts from the best point of a
    cached angular grid (a certified lower bound) and is refined by golden
    section search to the requested value tolerance.
    """

    def __init__(self, primal: Gauge, strategy: str = "auto", grid: int = 720,
                 tol: float = 1e-8, max_iter: int = 200):
        closed = primal.closed_form_dual()
        if strategy == "auto":
            strategy = "closed_form" if closed is not None else "maximize"
        if strategy == "closed_form" and closed is None:
            raise GaugeError(f"no closed-form dual for kind {primal.kind!r}")
        if strategy not in ("closed_form", "maximize"):
            raise GaugeError(f"unknown dual strategy {strategy!r}")
        self.primal = primal
        self.strategy = strategy
        self.closed_form = closed if strategy == "closed_form" else None
        self.tolerance = float(tol)
        self.dim = primal.dim
        self._max_iter = max_iter
        if strategy == "maximize":
            if primal.dim != 2:
                raise GaugeError("maximization dual implemented for the plane only")
            self._grid_theta, self._grid_pts = _unit_sphere_points(primal, grid)

    # -- closed-form passthrough ------------------------------------------
    def value(self, x):
        if self.closed_form is not None:
            return self.closed_form.value(x)
        return self._maximize(x)[0]

    def grad(self, x):
        """Gradient of H0; for the maximization route this is the maximizer."""
        if self.closed_form is not None:
            return self.closed_form.grad(x)
        return self._maximize(x)[1]

    def hess(self, x):
        if self.closed_form is None:
            raise GaugeError("Hessian of a maximization dual is not available")
        return self.closed_form.hess(x)

    def cache_key(self):
        return ("dual", self.strategy) + self.primal.cache_key()

    # -- constrained maximization route -----------------------------------
    def _maximize(self, x):
        x = _as_points(x, 2)
        flat = x.reshape(-1, 2)
        n = self._grid_theta.size
        vals = flat @ self._grid_pts.T
        best = np.argmax(vals, axis=1)
        lo = self._grid_theta[(best - 1) % n]
        hi = lo + 2.0 * (2 * np.pi / n)

        def f(theta):
            e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            p = e / self.primal.value(e)[:, None]
            return np.einsum("ij,ij->i", flat, p), p

        inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo.copy(), hi.copy()
        c1 = b - inv_phi * (b - a)
        c2 = a + inv_phi * (b - a)
        f1, _ = f(c1)
        f2, _ = f(c2)
        norms = np.hypot(flat[:, 0], flat[:, 1])
        # the maximizer doubles as grad H0, so refine the bracket well past
        # the value tolerance (value error is quadratic in the width, the
        # maximizer error linear)
        width_tol = np.minimum(
            np.sqrt(self.tolerance / np.maximum(norms, 1e-300)), 1e-7
        )
        it = 0
        while True:
            live = (b - a) > width_tol
            if not np.any(live):
                break
            it += 1
            if it > self._max_iter:
                bound = float(np.max(np.maximum(f1, f2)))
                raise DualMaximizationError(
                    "dual maximization failed to converge", bound, self.tolerance
                )
            take_left = f1 >= f2
            upd = live & take_left
            b[upd] = c2[upd]
            c2[upd] = c1[upd]
            f2[upd] = f1[upd]
            c1[upd] = b[upd] - inv_phi * (b[upd] - a[upd])
            f1[upd] = f(c1)[0][upd]
            upd = live & ~take_left
            a[upd] = c1[upd]
            c1[upd] = c2[upd]
            f1[upd] = f2[upd]
            c2[upd] = a[upd] + inv_phi * (b[upd] - a[upd])
            f2[upd] = f(c2)[0][upd]
        theta_star = 0.5 * (a + b)
        vstar, pstar = f(theta_star)
        vstar = np.maximum(vstar, np.maximum(f1, f2))
        shape = x.shape[:-1]
        return vstar.reshape(shape), pstar.reshape(shape + (2,))


def duality_roundtrip_residual(dual: DualGauge, x) -> np.ndarray:
    """Residual of ``x = H0(x) * grad H(grad H0(x))``, per point."""
    x = np.asarray(x, dtype=float)
    h0 = dual.value(x)
    g0 = dual.grad(x)
    back = np.asarray(h0)[..., None] * dual.primal.grad(g0)
    return np.linalg.norm(back - x, axis=-1)


@dataclass(frozen=True)
class FluxMap:
    """The flux ``a_eps`` of the (regularized) anisotropic p-Laplacian.

    With ``eps = 0`` this is exactly ``a(xi) = H^(p-1)(xi) grad H(xi)`` with
    ``a(0) = 0``; the potential is ``W_eps(xi) = (H^2 + eps^2)^(p/2) / p``.
    """

    gauge: Gauge
    exponent: float
    epsilon: float = 0.0

    def __post_init__(self):
        if not (self.exponent > 1.0):
            raise GaugeError("flux exponent p must exceed 1")
        if self.epsilon < 0.0:
            raise GaugeError("regularization eps must be nonnegative")

    def with_epsilon(self, eps: float) -> "FluxMap":
        return FluxMap(self.gauge, self.exponent, eps)

    def _batched(self, xi, need_hess):
        xi = np.asarray(xi, dtype=float)
        single = xi.ndim == 1
        pts = xi.reshape(-1, xi.shape[-1])
        W, a, Da = cell_quantities(self.gauge, self.exponent, self.epsilon,
                                   pts, need_hess=need_hess)
        if single:
            return W[0], a[0], (None if Da is None else Da[0])
        shape = xi.shape[:-1]
        return (W.reshape(shape), a.reshape(shape + (xi.shape[-1],)),
                None if Da is None else Da.reshape(shape + (xi.shape[-1],) * 2))

    def __call__(self, xi):
        return self._batched(xi, need_hess=False)[1]

    def energy_density(self, xi):
        return self._batched(xi, need_hess=False)[0]

    def jacobian(self, xi):
        return self._batched(xi, need_hess=True)[2]


@dataclass(frozen=True)
class EllipticityProbe:
    """Empirical two-sided bounds on the flux-Jacobian ellipticity ratio."""

    lower: float
    upper: float
    samples: int
    uniformly_elliptic: bool
    message: str


def ellipticity_probe(gauge: Gauge, sample_count: int = 1000,
                      fd_step: float = 1e-6, exponent: float | None = None) -> EllipticityProbe:
    """Sample extreme eigenvalues of ``D a(xi) / |xi|^(p-2)`` on the sphere.

    The Jacobian of ``a = grad(H^p / p)`` is obtained by central finite
    differences of the analytic flux (not by symbolic second derivatives),
    then symmetrized.  For the Euclidean gauge with p = dim the ratio is
    identically 1.  A non-positive lower bound is reported as a
    "not uniformly elliptic" diagnostic rather than an exception.
    """
    d = gauge.dim
    p = float(d if exponent is None else exponent)
    flux = FluxMap(gauge, p, 0.0)
    if d == 2:
        tt = np.linspace(0, 2 * np.pi, sample_count, endpoint=False)
        # offset to dodge exact axis alignment, where some gauges degenerate
        tt = tt + 0.5 * (tt[1] - tt[0])
        pts = np.stack([np.cos(tt), np.sin(tt)], axis=-1)
    else:
        # deterministic low-discrepancy directions on the sphere
        rng = np.random.default_rng(1234)
        pts = rng.standard_normal((sample_count, d))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    lo, hi = math.inf, -math.inf
    eye = np.eye(d)
    for xi in pts:
        J = np.empty((d, d))
        for j in range(d):
            step = fd_step * eye[j]
            J[:, j] = (flux(xi + step) - flux(xi - step)) / (2 * fd_step)
        Js = 0.5 * (J + J.T)
        ev = np.linalg.eigvalsh(Js)
        lo = min(lo, ev[0])
        hi = max(hi, ev[-1])
    ok = lo > 0
    msg = "" if ok else "not uniformly elliptic: sampled lower bound <= 0"
    return EllipticityProbe(float(lo), float(hi), len(pts), ok, msg)
