"""Gauges, dual gauges, and the regularized flux map.

Pinned numbers are hand-derived closed forms; grid maximization serves as an
independent oracle for the dual values.
"""

import math

import numpy as np
import pytest

from wulffcap.gauges import (
    DualGauge,
    FluxMap,
    GaugeError,
    LpGauge,
    TabulatedGauge,
    anisotropic_quadratic,
    duality_roundtrip_residual,
    ellipticity_probe,
    euclidean,
    scaled_euclidean,
    shifted_euclidean,
)

RNG = np.random.default_rng(20260823)
POINTS = RNG.normal(size=(1000, 2))


def closed_form_gauges():
    return [
        euclidean(2),
        scaled_euclidean(2.0),
        anisotropic_quadratic([[2.0, 0.6], [0.6, 1.0]]),
        shifted_euclidean((0.3, 0.0)),
        LpGauge(1.5),
        LpGauge(3.0),
        LpGauge(4.0),
    ]


def tabulated_lp4(samples=512):
    return TabulatedGauge.from_gauge(LpGauge(4.0, 2), samples=samples)


# ---------------------------------------------------------------- pinned values


def test_euclidean_345():
    assert euclidean(2).value((3.0, 4.0)) == pytest.approx(5.0, abs=1e-12)


def test_scaled_value_and_dual():
    g = scaled_euclidean(2.0)
    assert g.value((1.0, 0.0)) == pytest.approx(2.0, abs=1e-12)
    assert g.dual().value((1.0, 0.0)) == pytest.approx(0.5, abs=1e-12)


def test_lp4_value_and_dual():
    g = LpGauge(4.0)
    assert g.value((1.0, 1.0)) == pytest.approx(2.0 ** 0.25, abs=1e-12)
    # conjugate exponent 4/3: ||(1,1)||_{4/3} = 2^{3/4}
    assert g.dual().value((1.0, 1.0)) == pytest.approx(2.0 ** 0.75, abs=1e-10)


def test_shifted_dual_values():
    d = shifted_euclidean((0.3, 0.0)).dual()
    # sup <x, xi> over |xi| + 0.3 xi_1 <= 1 is attained on the axis
    assert d.value((1.0, 0.0)) == pytest.approx(1.0 / 1.3, abs=1e-10)
    assert d.value((-1.0, 0.0)) == pytest.approx(1.0 / 0.7, abs=1e-10)


def test_quadratic_gradient():
    g = anisotropic_quadratic([[4.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(g.grad((1.0, 0.0)), [2.0, 0.0], atol=1e-12)


def test_lp_dual_matches_conjugate_formula():
    x = POINTS[:100]
    for q in (1.5, 2.0, 3.0, 4.0):
        qc = q / (q - 1.0)
        expected = np.sum(np.abs(x) ** qc, axis=1) ** (1.0 / qc)
        got = LpGauge(q).dual().value(x)
        np.testing.assert_allclose(got, expected, rtol=1e-10, atol=1e-12)


def test_dual_brute_force_grid_oracle():
    # H0(x) = sup {<x, xi> : H(xi) = 1}, maximized over a dense angular grid
    tt = np.linspace(0.0, 2 * np.pi, 100001, endpoint=False)
    e = np.stack([np.cos(tt), np.sin(tt)], axis=-1)
    x = POINTS[:20]
    for q in (1.5, 2.0, 3.0, 4.0):
        g = LpGauge(q)
        sphere = e / g.value(e)[:, None]
        brute = np.max(x @ sphere.T, axis=1)
        np.testing.assert_allclose(g.dual().value(x), brute, atol=1e-4)


def test_maximize_strategy_matches_closed_form():
    g = LpGauge(3.0)
    ref = g.dual().value(POINTS)
    got = DualGauge(g, strategy="maximize").value(POINTS)
    np.testing.assert_allclose(got, ref, atol=1e-6)


# ------------------------------------------------------------------ identities


def test_euler_identity():
    pts = POINTS
    for g in closed_form_gauges() + [tabulated_lp4()]:
        lhs = np.sum(g.grad(pts) * pts, axis=1)
        np.testing.assert_allclose(lhs, g.value(pts), rtol=1e-10, atol=1e-12)


def test_positive_homogeneity():
    pts = POINTS
    for g in closed_form_gauges() + [tabulated_lp4()]:
        base = g.value(pts)
        for t in (0.5, 2.0, 10.0):
            np.testing.assert_allclose(g.value(t * pts), t * base, rtol=1e-10)


def test_dual_normalization():
    pts = POINTS
    duals = [g.dual() for g in closed_form_gauges()]
    duals.append(tabulated_lp4().dual())
    duals.append(DualGauge(LpGauge(3.0), strategy="maximize"))
    for d in duals:
        on_sphere = d.primal.value(d.grad(pts))
        np.testing.assert_allclose(on_sphere, 1.0, atol=1e-10)


def test_duality_roundtrip_closed_form():
    for g in closed_form_gauges():
        res = duality_roundtrip_residual(g.dual(), POINTS)
        assert np.max(res) < 1e-10


def test_duality_roundtrip_maximization():
    for d in (tabulated_lp4().dual(), DualGauge(LpGauge(3.0), strategy="maximize")):
        res = duality_roundtrip_residual(d, POINTS)
        assert np.max(res) < 1e-6


def test_gradient_matches_finite_differences():
    pts = POINTS[:50]
    pts = pts[np.min(np.abs(pts), axis=1) > 0.1]
    step = 1e-6
    for g in closed_form_gauges():
        fd = np.empty_like(pts)
        for k in range(2):
            dv = np.zeros(2)
            dv[k] = step
            fd[:, k] = (g.value(pts + dv) - g.value(pts - dv)) / (2 * step)
        np.testing.assert_allclose(g.grad(pts), fd, rtol=1e-5, atol=1e-8)


def test_hessian_matches_finite_differences():
    pts = POINTS[:20]
    pts = pts[np.min(np.abs(pts), axis=1) > 0.2]
    step = 1e-5
    for g in (euclidean(2), anisotropic_quadratic([[2.0, 0.6], [0.6, 1.0]]),
              LpGauge(4.0)):
        for x in pts:
            fd = np.empty((2, 2))
            for k in range(2):
                dv = np.zeros(2)
                dv[k] = step
                fd[:, k] = (g.grad(x + dv) - g.grad(x - dv)) / (2 * step)
            np.testing.assert_allclose(g.hess(x), fd, rtol=1e-4, atol=1e-6)


# ------------------------------------------------------------------- flux map


def test_flux_pinned_values():
    a2 = FluxMap(euclidean(2), 2.0)
    np.testing.assert_allclose(a2((5.0, -1.0)), [5.0, -1.0], atol=1e-12)
    a3 = FluxMap(euclidean(3), 3.0)
    np.testing.assert_allclose(a3((0.0, 0.0, 2.0)), [0.0, 0.0, 4.0], atol=1e-12)
    np.testing.assert_allclose(a2((0.0, 0.0)), [0.0, 0.0], atol=0.0)


def test_flux_homogeneity():
    pts = POINTS[:200]
    for g, p in ((euclidean(2), 2.0), (LpGauge(4.0), 3.0)):
        a = FluxMap(g, p)
        base = a(pts)
        for t in (0.5, 2.0):
            np.testing.assert_allclose(a(t * pts), t ** (p - 1) * base, rtol=1e-8)


def test_flux_monotonicity():
    xi, eta = POINTS[:500], POINTS[500:]
    # floors below are half the minimum ratio observed over 10^3 pairs
    for g, p, floor in (
        (euclidean(2), 2.0, 0.999),
        (LpGauge(4.0), 3.0, 0.03),
        (anisotropic_quadratic([[2.0, 0.6], [0.6, 1.0]]), 2.5, 0.2),
    ):
        a = FluxMap(g, p)
        inner = np.sum((a(xi) - a(eta)) * (xi - eta), axis=1)
        assert np.min(inner) > -1e-12
        denom = (np.hypot(xi[:, 0], xi[:, 1]) + np.hypot(eta[:, 0], eta[:, 1])) ** (
            p - 2.0
        ) * np.sum((xi - eta) ** 2, axis=1)
        assert np.min(inner / denom) > floor


def test_energy_density_values():
    a = FluxMap(euclidean(2), 2.0)
    assert a.energy_density((3.0, 4.0)) == pytest.approx(12.5, abs=1e-12)
    reg = a.with_epsilon(0.5)
    assert reg.epsilon == 0.5 and a.epsilon == 0.0
    assert reg.energy_density((0.0, 0.0)) == pytest.approx(0.125, abs=1e-12)


def test_regularized_jacobian_symmetric_psd():
    a = FluxMap(LpGauge(4.0), 3.0, epsilon=0.3)
    J = a.jacobian(POINTS[:100])
    np.testing.assert_allclose(J, np.swapaxes(J, -1, -2), atol=1e-10)
    eigs = np.linalg.eigvalsh(0.5 * (J + np.swapaxes(J, -1, -2)))
    assert np.min(eigs) > -1e-10


def test_jacobian_matches_finite_differences():
    a = FluxMap(anisotropic_quadratic([[2.0, 0.6], [0.6, 1.0]]), 3.0, epsilon=0.3)
    step = 1e-6
    for x in POINTS[:10]:
        fd = np.empty((2, 2))
        for k in range(2):
            dv = np.zeros(2)
            dv[k] = step
            fd[:, k] = (a(x + dv) - a(x - dv)) / (2 * step)
        np.testing.assert_allclose(a.jacobian(x), fd, rtol=1e-5, atol=1e-7)


# ------------------------------------------------------------------ ellipticity


def test_ellipticity_probe_euclidean():
    pr = ellipticity_probe(euclidean(2))
    assert pr.lower == pytest.approx(1.0, abs=1e-6)
    assert pr.upper == pytest.approx(1.0, abs=1e-6)
    assert pr.uniformly_elliptic


def test_ellipticity_probe_lp4_band():
    pr = ellipticity_probe(LpGauge(4.0))
    assert 0.0 < pr.lower < 0.1
    assert 1.5 < pr.upper < 3.0
    assert pr.uniformly_elliptic


def test_ellipticity_probe_near_degenerate():
    pr = ellipticity_probe(LpGauge(1.05))
    assert pr.upper / pr.lower > 50.0


# ---------------------------------------------------------------------- errors


def test_gradient_undefined_at_origin():
    for g in closed_form_gauges() + [tabulated_lp4()]:
        assert g.value((0.0, 0.0)) == pytest.approx(0.0, abs=1e-15)
        with pytest.raises(GaugeError):
            g.grad((0.0, 0.0))


def test_non_finite_input_rejected():
    for bad in ((np.nan, 1.0), (np.inf, 0.0)):
        with pytest.raises(GaugeError):
            euclidean(2).value(bad)


def test_tabulated_rejects_nonconvex_samples():
    tt = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    r = 1.0 + 0.4 * np.cos(5 * tt)
    pts = np.stack([r * np.cos(tt), r * np.sin(tt)], axis=-1)
    with pytest.raises(GaugeError):
        TabulatedGauge(pts)


def test_tabulated_rejects_degenerate_input():
    with pytest.raises(GaugeError):
        TabulatedGauge([[1.0, 0.0]] * 4)
    tt = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
    pts = np.stack([np.cos(tt), np.sin(tt)], axis=-1)
    with pytest.raises(GaugeError):
        TabulatedGauge(np.concatenate([pts, pts[:1]]))
