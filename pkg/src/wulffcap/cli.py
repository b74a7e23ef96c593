"""Scenario-driven command line front end.

A scenario is an INI-style file with four sections — ``[gauge]``, ``[cone]``,
``[obstacle]`` and ``[run]`` — describing one exterior capacity problem and
the checks to run on it (see the README for the full grammar).  Three
subcommands consume scenarios:

* ``run``: solve the truncated problems on the radius schedule, write mesh,
  field, report and plot-data artifacts, and evaluate the requested checks;
* ``study``: re-solve over a halving sequence of mesh sizes and tabulate
  error metrics with observed convergence orders;
* ``probe``: rigidity pipeline only, with a two-level mesh verdict.

Exit codes: 0 on success, 1 if any requested check fails, 2 for
configuration or geometry errors.  All emitted CSV files are deterministic
for a fixed scenario and seed.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .gauges import (
    FluxMap,
    Gauge,
    GaugeError,
    LpGauge,
    anisotropic_quadratic,
    euclidean,
    scaled_euclidean,
    shifted_euclidean,
)
from .geometry import (
    ConvexCone,
    Ellipse,
    EuclideanBall,
    PerturbedWulffBall,
    Region,
    RegionError,
    StarShapedObstacle,
    WulffBall,
    build_region,
)
from .meshing import TAG_OBSTACLE, TAG_OUTER, MeshError, mesh_region, save_mesh
from .solver import (
    SolveOptions,
    SolverError,
    TruncatedProblem,
    comparison_check,
    extract_asymptotics,
    h1_error,
    recovered_facet_gradients,
    solve_truncated,
)
from .identities import (
    capacity_constant,
    c_formula_check,
    pohozaev_check,
    rigidity_probe,
    volume_identity_check,
)
from .wulff import isoperimetric_quotient

__all__ = [
    "Scenario",
    "ScenarioError",
    "parse_scenario",
    "normal_form",
    "run_scenario",
    "convergence_study",
    "main",
]

ALL_CHECKS = ("solve", "asymptotics", "pohozaev", "rigidity",
              "isoperimetry", "comparison")
POHOZAEV_REL_TOL = 0.05
COMPARISON_OFFSET = 0.25
# scale-free smallness thresholds for the three rigidity headline numbers
# (capacity spread, worst identity gap, isoperimetric deficit)
RIGIDITY_THRESHOLDS = (0.02, 0.02, 0.01)
_FLOAT = "%.12g"


class ScenarioError(ValueError):
    """Configuration rejected; the message names the offending key."""


@dataclass(frozen=True)
class Scenario:
    name: str
    gauge: Gauge
    cone: ConvexCone
    obstacle: StarShapedObstacle
    radii: tuple
    h_list: tuple
    exponent: float | None
    checks: tuple
    seed: int
    out_dir: str | None = None
    obstacle_value: float | None = None
    outer_value: float | None = None
    adapt: bool = False


def _floats(text: str, key: str):
    try:
        vals = tuple(float(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise ScenarioError(f"{key}: expected numbers, got {text!r}") from exc
    if not vals:
        raise ScenarioError(f"{key}: empty value")
    return vals


def _get(cfg, section: str, key: str, default=None, required: bool = False):
    if not cfg.has_section(section):
        raise ScenarioError(f"missing [{section}] section")
    if cfg.has_option(section, key):
        return cfg.get(section, key).strip()
    if required:
        raise ScenarioError(f"missing key {key!r} in [{section}]")
    return default


def _parse_gauge(cfg) -> Gauge:
    kind = _get(cfg, "gauge", "kind", required=True).lower()
    if kind == "euclidean":
        return euclidean(2)
    if kind == "scaled":
        (factor,) = _floats(_get(cfg, "gauge", "factor", required=True),
                            "gauge.factor")
        return scaled_euclidean(factor)
    if kind == "quadratic":
        vals = _floats(_get(cfg, "gauge", "matrix", required=True),
                       "gauge.matrix")
        if len(vals) != 4:
            raise ScenarioError("gauge.matrix: expected 4 entries (row major)")
        return anisotropic_quadratic(np.array(vals).reshape(2, 2))
    if kind == "shifted":
        shift = _floats(_get(cfg, "gauge", "shift", required=True),
                        "gauge.shift")
        if len(shift) != 2:
            raise ScenarioError("gauge.shift: expected 2 entries")
        return shifted_euclidean(np.array(shift))
    if kind == "lp":
        (q,) = _floats(_get(cfg, "gauge", "exponent", required=True),
                       "gauge.exponent")
        return LpGauge(q, 2)
    raise ScenarioError(f"unknown gauge kind {kind!r}")


def _parse_cone(cfg) -> ConvexCone:
    kind = _get(cfg, "cone", "kind", required=True).lower()
    if kind == "full":
        return ConvexCone.full_plane()
    if kind == "half":
        return ConvexCone.half_plane()
    if kind == "sector":
        (opening,) = _floats(_get(cfg, "cone", "opening", required=True),
                             "cone.opening")
        start_txt = _get(cfg, "cone", "start", "0")
        (start,) = _floats(start_txt, "cone.start")
        return ConvexCone.sector(opening, start=start)
    raise ScenarioError(f"unknown cone kind {kind!r}")


def _parse_obstacle(cfg, gauge: Gauge) -> StarShapedObstacle:
    shape = _get(cfg, "obstacle", "shape", required=True).lower()
    center = _floats(_get(cfg, "obstacle", "center", "0 0"), "obstacle.center")
    if len(center) != 2:
        raise ScenarioError("obstacle.center: expected 2 entries")
    if shape == "wulff":
        (radius,) = _floats(_get(cfg, "obstacle", "radius", "1"),
                            "obstacle.radius")
        return WulffBall(gauge.dual(), radius, center=center)
    if shape == "ball":
        (radius,) = _floats(_get(cfg, "obstacle", "radius", "1"),
                            "obstacle.radius")
        return EuclideanBall(radius, center=center)
    if shape == "ellipse":
        axes = _floats(_get(cfg, "obstacle", "semi_axes", required=True),
                       "obstacle.semi_axes")
        if len(axes) != 2:
            raise ScenarioError("obstacle.semi_axes: expected 2 entries")
        return Ellipse(axes[0], axes[1], center=center)
    if shape == "perturbed_wulff":
        (radius,) = _floats(_get(cfg, "obstacle", "radius", "1"),
                            "obstacle.radius")
        (amp,) = _floats(_get(cfg, "obstacle", "amplitude", required=True),
                         "obstacle.amplitude")
        (freq,) = _floats(_get(cfg, "obstacle", "frequency", required=True),
                          "obstacle.frequency")
        return PerturbedWulffBall(gauge.dual(), radius, amp, int(freq),
                                  center=center)
    raise ScenarioError(f"unknown obstacle shape {shape!r}")


def parse_scenario(path) -> Scenario:
    """Parse and validate a scenario file; raises ScenarioError on problems."""
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                    interpolation=None)
    try:
        read = cfg.read(path)
    except configparser.Error as exc:
        raise ScenarioError(f"parse error in {path}: {exc}") from exc
    if not read:
        raise ScenarioError(f"cannot read scenario file {path}")
    known = {
        "gauge": {"kind", "factor", "matrix", "shift", "exponent"},
        "cone": {"kind", "opening", "start"},
        "obstacle": {"shape", "center", "radius", "semi_axes", "amplitude",
                     "frequency"},
        "run": {"radii", "h", "exponent", "checks", "seed", "out_dir",
                "adaptive", "obstacle_value", "outer_value"},
    }
    for section in cfg.sections():
        if section not in known:
            raise ScenarioError(f"unknown section [{section}]")
        for key in cfg.options(section):
            if key not in known[section]:
                raise ScenarioError(f"unknown key {key!r} in [{section}]")
    try:
        gauge = _parse_gauge(cfg)
        cone = _parse_cone(cfg)
        obstacle = _parse_obstacle(cfg, gauge)
        radii = _floats(_get(cfg, "run", "radii", required=True), "run.radii")
        h_list = _floats(_get(cfg, "run", "h", required=True), "run.h")
    except (GaugeError, RegionError) as exc:
        raise ScenarioError(str(exc)) from exc
    exponent_txt = _get(cfg, "run", "exponent")
    exponent = None
    if exponent_txt is not None:
        (exponent,) = _floats(exponent_txt, "run.exponent")
        if exponent <= 1:
            raise ScenarioError("run.exponent: must exceed 1")
    checks_txt = _get(cfg, "run", "checks", "solve")
    checks = tuple(tok for tok in checks_txt.replace(",", " ").split())
    for c in checks:
        if c not in ALL_CHECKS:
            raise ScenarioError(
                f"unknown check {c!r}; available: {' '.join(ALL_CHECKS)}")
    # keep the canonical ordering regardless of how the file lists them
    checks = tuple(c for c in ALL_CHECKS if c in checks)
    if "asymptotics" in checks and len(radii) < 2:
        raise ScenarioError("asymptotics check needs at least 2 radii")
    seed_txt = _get(cfg, "run", "seed", "0")
    try:
        seed = int(seed_txt)
    except ValueError as exc:
        raise ScenarioError(f"run.seed: expected integer, got {seed_txt!r}") from exc
    out_dir = _get(cfg, "run", "out_dir")
    adapt_txt = _get(cfg, "run", "adaptive", "no").lower()
    if adapt_txt not in ("yes", "no", "true", "false", "1", "0"):
        raise ScenarioError(
            f"run.adaptive: expected yes/no, got {adapt_txt!r}")
    adapt = adapt_txt in ("yes", "true", "1")
    vals = {}
    for key in ("obstacle_value", "outer_value"):
        txt = _get(cfg, "run", key)
        vals[key] = float(_floats(txt, f"run.{key}")[0]) if txt else None
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return Scenario(name=name, gauge=gauge, cone=cone, obstacle=obstacle,
                    radii=tuple(sorted(radii)), h_list=tuple(h_list),
                    exponent=exponent, checks=checks, seed=seed,
                    out_dir=out_dir, obstacle_value=vals["obstacle_value"],
                    outer_value=vals["outer_value"], adapt=adapt)


def _fmt(x) -> str:
    return _FLOAT % float(x)


def normal_form(sc: Scenario) -> str:
    """Canonical re-serialization of a scenario (stable key order/format)."""
    g = sc.gauge
    lines = ["[gauge]"]
    if isinstance(g, LpGauge):
        lines += ["kind = lp", "exponent = " + _fmt(g.q)]
    elif getattr(g, "kind", None) == "euclidean":
        lines.append("kind = euclidean")
    elif getattr(g, "kind", None) == "scaled_euclidean":
        lines += ["kind = scaled",
                  "factor = " + _fmt(math.sqrt(g.matrix[0, 0]))]
    elif getattr(g, "kind", None) == "shifted_euclidean":
        lines += ["kind = shifted",
                  "shift = " + " ".join(_fmt(v) for v in g.shift)]
    elif getattr(g, "kind", None) == "anisotropic_quadratic":
        lines += ["kind = quadratic",
                  "matrix = " + " ".join(_fmt(v) for v in g.matrix.ravel())]
    else:
        raise ScenarioError(f"cannot serialize gauge {g!r}")
    lines += ["", "[cone]"]
    if sc.cone.free_factor == 2:
        lines.append("kind = full")
    elif sc.cone.free_factor == 1:
        lines.append("kind = half")
    else:
        lines += ["kind = sector", "opening = " + _fmt(sc.cone.opening),
                  "start = " + _fmt(sc.cone.start)]
    lines += ["", "[obstacle]"]
    obs = sc.obstacle
    if isinstance(obs, PerturbedWulffBall):
        lines += ["shape = perturbed_wulff", "radius = " + _fmt(obs.radius),
                  "amplitude = " + _fmt(obs.amplitude),
                  "frequency = " + _fmt(obs.frequency)]
    elif isinstance(obs, WulffBall):
        lines += ["shape = wulff", "radius = " + _fmt(obs.radius)]
    elif isinstance(obs, Ellipse):
        lines += ["shape = ellipse",
                  "semi_axes = " + _fmt(obs.a) + " " + _fmt(obs.b)]
    elif isinstance(obs, EuclideanBall):
        lines += ["shape = ball", "radius = " + _fmt(obs.radius)]
    else:
        raise ScenarioError(f"cannot serialize obstacle {obs.label!r}")
    lines.append("center = " + " ".join(_fmt(v) for v in obs.center))
    lines += ["", "[run]"]
    lines.append("radii = " + " ".join(_fmt(r) for r in sc.radii))
    lines.append("h = " + " ".join(_fmt(h) for h in sc.h_list))
    if sc.exponent is not None:
        lines.append("exponent = " + _fmt(sc.exponent))
    lines.append("checks = " + " ".join(sc.checks))
    lines.append("seed = %d" % sc.seed)
    if sc.adapt:
        lines.append("adaptive = yes")
    if sc.out_dir:
        lines.append("out_dir = " + sc.out_dir)
    for key in ("obstacle_value", "outer_value"):
        val = getattr(sc, key)
        if val is not None:
            lines.append(f"{key} = " + _fmt(val))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# artifact writers


def _write_kv(path, pairs):
    with open(path, "w") as fh:
        for key, val in pairs:
            if isinstance(val, float):
                fh.write(f"{key} {_fmt(val)}\n")
            else:
                fh.write(f"{key} {val}\n")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                tok if isinstance(tok, str) else _fmt(tok) for tok in row
            ) + "\n")


def _field_rows(field):
    v = field.mesh.vertices
    return [(v[i, 0], v[i, 1], field.values[i]) for i in range(len(field.values))]


def _obstacle_trace(field, gauge):
    """Arclength-ordered trace of H(grad u) along the obstacle boundary."""
    mesh = field.mesh
    sel = np.flatnonzero(mesh.facet_tags == TAG_OBSTACLE)
    mid = mesh.facet_midpoints()[sel]
    center = mesh.region.obstacle.center if mesh.region else mid.mean(axis=0)
    ang = np.arctan2(mid[:, 1] - center[1], mid[:, 0] - center[0])
    order = np.argsort(ang, kind="stable")
    sel, mid = sel[order], mid[order]
    vals = gauge.value(recovered_facet_gradients(field, sel))
    ln = mesh.facet_lengths()[sel]
    s = np.concatenate([[0.0], np.cumsum(ln)[:-1]]) + 0.5 * ln
    return [(s[i], mid[i, 0], mid[i, 1], vals[i]) for i in range(len(sel))]


def _ring_trace(report, dual, samples: int = 128):
    """Deviation of u - gamma ln H0 from its ring mean, per fitted ring."""
    field = report.field
    mesh = field.mesh
    a0, b0 = mesh.region.cone.angular_interval()
    tt = a0 + (np.arange(samples) + 0.5) * (b0 - a0) / samples
    e = np.stack([np.cos(tt), np.sin(tt)], axis=-1)
    h0 = dual.value(e)
    rows = []
    for r in report.ring_radii:
        pts = r * e / h0[:, None]
        u = field.interpolate(pts)
        dev = u - report.gamma * np.log(dual.value(pts))
        dev -= dev.mean()
        rows += [(r, tt[i], u[i], dev[i]) for i in range(samples)]
    return rows


# ---------------------------------------------------------------------------
# run


def _solve_schedule(sc: Scenario, h: float, opts: SolveOptions):
    """Solve the truncated problem at every radius of the schedule."""
    reports = []
    dual = sc.gauge.dual()
    for R in sc.radii:
        region = build_region(sc.cone, sc.obstacle, R, dual)
        mesh = mesh_region(region, h, adapt=sc.adapt)
        if sc.obstacle_value is None and sc.outer_value is None:
            prob = TruncatedProblem.exterior(mesh, sc.gauge, sc.exponent)
        else:
            p = sc.exponent if sc.exponent is not None else 2.0
            data = {
                TAG_OBSTACLE: sc.obstacle_value or 0.0,
                TAG_OUTER: (sc.outer_value if sc.outer_value is not None
                            else math.log(R)),
            }
            prob = TruncatedProblem(mesh, FluxMap(sc.gauge, p, 0.0), data)
        reports.append((prob, solve_truncated(prob, opts)))
    return reports


def run_scenario(path, out_dir=None, seed=None) -> int:
    """Execute one scenario file; returns the process exit code."""
    try:
        sc = parse_scenario(path)
        if seed is not None:
            sc = replace(sc, seed=int(seed))
        return _run_parsed(sc, out_dir)
    except (ScenarioError, RegionError, MeshError, GaugeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"check failure: solver: {exc}", file=sys.stderr)
        return 1


def _run_parsed(sc: Scenario, out_dir=None) -> int:
    out = os.path.join(out_dir or sc.out_dir or ".", sc.name)
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(sc.seed)
    opts = SolveOptions()
    dual = sc.gauge.dual()
    h = sc.h_list[0]
    p = sc.exponent if sc.exponent is not None else float(sc.cone.dim)
    flux = FluxMap(sc.gauge, p, 0.0)
    failures = []
    summary = [("scenario", sc.name), ("h", float(h)), ("exponent", float(p)),
               ("seed", sc.seed)]

    reports = _solve_schedule(sc, h, opts)
    for prob, rep in reports:
        tag = "R%s" % _fmt(rep.radius)
        save_mesh(prob.mesh, os.path.join(out, f"mesh_{tag}.txt"))
        _write_csv(os.path.join(out, f"field_{tag}.csv"), ("x", "y", "u"),
                   _field_rows(rep.field))
        _write_kv(os.path.join(out, f"solve_{tag}.txt"), [
            ("radius", rep.radius), ("h", rep.h), ("energy", rep.energy),
            ("gamma", rep.gamma), ("beta", rep.beta),
            ("newton_decrement", rep.newton_decrement),
            ("neumann_residual", rep.neumann_residual),
            ("ring_fit_residual", rep.ring_fit_residual),
            ("stages", len(rep.stage_epsilons)),
            ("iterations", sum(rep.stage_iterations)),
            ("dbound", rep.dbound),
            ("flags", "; ".join(rep.flags) if rep.flags else "-"),
        ])
        _write_csv(os.path.join(out, f"trace_obstacle_{tag}.csv"),
                   ("arclength", "x", "y", "gauge_of_gradient"),
                   _obstacle_trace(rep.field, sc.gauge))
        _write_csv(os.path.join(out, f"trace_rings_{tag}.csv"),
                   ("ring_radius", "theta", "u", "deviation"),
                   _ring_trace(rep, dual))
        summary += [(f"gamma_{tag}", rep.gamma), (f"beta_{tag}", rep.beta),
                    (f"energy_{tag}", rep.energy)]
        if rep.flags:
            print(f"note[{sc.name}]: {tag}: " + "; ".join(rep.flags))

    top_rep = reports[-1][1]
    if "solve" in sc.checks:
        ok = (np.isfinite(top_rep.energy)
              and all(np.isfinite(r.energy) for _, r in reports))
        summary.append(("check_solve", "pass" if ok else "fail"))
        if not ok:
            failures.append("solve: non-finite energy")

    if "asymptotics" in sc.checks:
        fit = extract_asymptotics([r for _, r in reports])
        summary += [("gamma_extrapolated", fit.gamma),
                    ("beta_extrapolated", fit.beta),
                    ("gamma_fit_residual", fit.gamma_fit_residual),
                    ("beta_fit_residual", fit.beta_fit_residual)]
        _write_kv(os.path.join(out, "asymptotics.txt"), [
            ("gamma", fit.gamma), ("beta", fit.beta),
            ("radii", " ".join(_fmt(r) for r in fit.radii)),
            ("gamma_per_radius", " ".join(_fmt(v) for v in fit.gamma_per_radius)),
            ("beta_per_radius", " ".join(_fmt(v) for v in fit.beta_per_radius)),
            ("flags", "; ".join(fit.flags) if fit.flags else "-"),
        ])
        ok = math.isfinite(fit.gamma) and math.isfinite(fit.beta)
        summary.append(("check_asymptotics", "pass" if ok else "fail"))
        if not ok:
            failures.append("asymptotics: non-finite extrapolation")

    if "pohozaev" in sc.checks:
        poh = pohozaev_check(top_rep.field, flux)
        scale = max(abs(poh.interior), abs(poh.boundary),
                    max(abs(v) for v in poh.boundary_by_tag.values()), 1e-12)
        rel = poh.residual / scale
        _write_kv(os.path.join(out, "pohozaev.txt"), [
            ("interior", poh.interior), ("boundary", poh.boundary),
            ("residual", poh.residual), ("relative_residual", rel),
            ("wall_flux_defect", poh.neumann_term),
            ("degenerate_facets", poh.degenerate_facets),
        ] + [(f"boundary_{k}", v) for k, v in poh.boundary_by_tag.items()])
        summary += [("pohozaev_interior", poh.interior),
                    ("pohozaev_boundary", poh.boundary),
                    ("pohozaev_residual", poh.residual)]
        ok = rel <= POHOZAEV_REL_TOL
        summary.append(("check_pohozaev", "pass" if ok else "fail"))
        if not ok:
            failures.append(
                f"pohozaev: relative residual {rel:.3g} > {POHOZAEV_REL_TOL}")

    if "rigidity" in sc.checks:
        rig = rigidity_probe(sc.gauge, sc.cone, sc.obstacle, sc.radii, h,
                             exponent=sc.exponent, opts=opts, rng=rng)
        consistent = all(v < t for v, t in zip(rig.headline,
                                               RIGIDITY_THRESHOLDS))
        _write_kv(os.path.join(out, "rigidity.txt"), [
            ("capacity_mean", rig.mean_c),
            ("capacity_variation", rig.c_variation),
            ("c_formula_lhs", rig.c_formula.lhs),
            ("c_formula_rhs", rig.c_formula.rhs),
            ("c_formula_rel_gap", rig.c_formula.rel_gap),
            ("volume_identity_lhs", rig.volume_identity.lhs),
            ("volume_identity_rhs", rig.volume_identity.rhs),
            ("volume_identity_rel_gap", rig.volume_identity.rel_gap),
            ("isoperimetric_deficit", rig.iso.deficit),
            ("headline", " ".join(_fmt(v) for v in rig.headline)),
            ("wulff_consistent", "yes" if consistent else "no"),
            ("flags", "; ".join(rig.flags) if rig.flags else "-"),
        ])
        summary += [("rigidity_headline_spread", rig.headline[0]),
                    ("rigidity_headline_gap", rig.headline[1]),
                    ("rigidity_headline_deficit", rig.headline[2]),
                    ("rigidity_wulff_consistent", "yes" if consistent else "no")]

    if "isoperimetry" in sc.checks:
        iso = isoperimetric_quotient(sc.obstacle, sc.cone, sc.gauge, dual,
                                     rng=rng)
        _write_kv(os.path.join(out, "isoperimetry.txt"), [
            ("quotient", iso.quotient), ("reference", iso.reference),
            ("deficit", iso.deficit), ("perimeter", iso.perimeter),
            ("volume", iso.volume),
        ])
        summary.append(("isoperimetric_deficit", iso.deficit))
        ok = iso.deficit >= -1e-6
        summary.append(("check_isoperimetry", "pass" if ok else "fail"))
        if not ok:
            failures.append(f"isoperimetry: negative deficit {iso.deficit:.3g}")

    if "comparison" in sc.checks:
        prob, low = reports[-1]
        shifted = dict(prob.dirichlet)
        shifted[TAG_OUTER] = shifted.get(TAG_OUTER, 0.0) + COMPARISON_OFFSET
        high = solve_truncated(
            TruncatedProblem(prob.mesh, prob.flux, shifted), opts)
        cmp_res = comparison_check(low.field, high.field)
        _write_kv(os.path.join(out, "comparison.txt"), [
            ("offset", COMPARISON_OFFSET), ("slack", cmp_res.slack),
            ("violations", cmp_res.violations),
            ("max_excess", cmp_res.max_excess),
        ])
        summary.append(("comparison_violations", cmp_res.violations))
        ok = cmp_res.violations == 0
        summary.append(("check_comparison", "pass" if ok else "fail"))
        if not ok:
            failures.append(
                f"comparison: {cmp_res.violations} ordering violations")

    _write_csv(os.path.join(out, "summary.csv"), ("metric", "value"), summary)
    for msg in failures:
        print(f"check failure [{sc.name}]: {msg}", file=sys.stderr)
    print(f"{sc.name}: {'FAIL' if failures else 'ok'} "
          f"({len(sc.checks)} checks, artifacts in {out})")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# convergence study


def _study_reference(sc: Scenario):
    """Exact solution (value, gradient) callables when one is known."""
    if (sc.obstacle_value is not None and sc.outer_value is not None
            and sc.obstacle_value == sc.outer_value):
        const = float(sc.obstacle_value)
        return (lambda x: np.full(np.asarray(x).shape[:-1], const),
                lambda x: np.zeros(np.asarray(x).shape))
    if (isinstance(sc.obstacle, WulffBall)
            and float(np.linalg.norm(sc.obstacle.center)) == 0.0
            and sc.obstacle_value is None and sc.outer_value is None
            and (sc.exponent is None or sc.exponent == sc.cone.dim)):
        dual = sc.gauge.dual()
        rho = sc.obstacle.radius
        R = sc.radii[0]
        slope = math.log(R) / math.log(R / rho)

        def u_fn(x):
            return slope * np.log(dual.value(x) / rho)

        def g_fn(x):
            x = np.asarray(x, dtype=float)
            return slope * dual.grad(x) / dual.value(x)[..., None]

        return u_fn, g_fn
    return None, None


def convergence_study(path, h_list=None, out_dir=None, seed=None,
                      adapt=None) -> int:
    """Solve one scenario over halving mesh sizes and tabulate orders."""
    try:
        sc = parse_scenario(path)
        if seed is not None:
            sc = replace(sc, seed=int(seed))
        if adapt is not None:
            sc = replace(sc, adapt=bool(adapt))
        hs = tuple(float(v) for v in (h_list or sc.h_list))
        if len(hs) < 3:
            raise ScenarioError("study needs at least 3 mesh sizes")
        for a, b in zip(hs[:-1], hs[1:]):
            if not math.isclose(a / b, 2.0, rel_tol=0.01):
                raise ScenarioError(
                    "study mesh sizes must form a halving sequence")
        return _study_parsed(sc, hs, out_dir)
    except (ScenarioError, RegionError, MeshError, GaugeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"check failure: solver: {exc}", file=sys.stderr)
        return 1


def _orders(errors, floor: float = 1e-12):
    """Successive log2 orders; NaN for the first row, sub-floor or
    non-monotone pairs (the latter with a warning)."""
    out = [math.nan]
    for a, b in zip(errors[:-1], errors[1:]):
        if not (math.isfinite(a) and math.isfinite(b)) or min(a, b) <= floor:
            out.append(math.nan)
        elif b >= a:
            print("warning: non-monotone error pair "
                  f"({_fmt(a)} -> {_fmt(b)}); order reported as NaN",
                  file=sys.stderr)
            out.append(math.nan)
        else:
            out.append(math.log2(a / b))
    return out


def _study_parsed(sc: Scenario, hs, out_dir=None) -> int:
    out = os.path.join(out_dir or sc.out_dir or ".", sc.name)
    os.makedirs(out, exist_ok=True)
    opts = SolveOptions()
    p = sc.exponent if sc.exponent is not None else float(sc.cone.dim)
    flux = FluxMap(sc.gauge, p, 0.0)
    u_fn, g_fn = _study_reference(sc)
    h1s, l2s, pohs, energies = [], [], [], []
    for h in hs:
        (prob, rep), = _solve_schedule(replace(sc, radii=sc.radii[:1]), h, opts)
        poh = pohozaev_check(rep.field, flux)
        pohs.append(poh.residual)
        energies.append(rep.energy)
        if u_fn is not None:
            e_h1, e_l2, _ = h1_error(rep.field, u_fn, g_fn)
            h1s.append(e_h1)
            l2s.append(e_l2)
        else:
            h1s.append(math.nan)
            l2s.append(math.nan)
    ediff = [abs(a - b) for a, b in zip(energies[:-1], energies[1:])]
    rows = []
    o_h1, o_l2, o_poh = _orders(h1s), _orders(l2s), _orders(pohs)
    o_en = [math.nan] + _orders(ediff) if ediff else [math.nan] * len(hs)
    o_en = o_en[:len(hs)] + [math.nan] * (len(hs) - len(o_en))
    for i, h in enumerate(hs):
        rows.append((h, h1s[i], l2s[i], pohs[i], energies[i],
                     o_h1[i], o_l2[i], o_poh[i], o_en[i]))
    _write_csv(os.path.join(out, "study.csv"),
               ("h", "h1_error", "l2_error", "pohozaev_residual", "energy",
                "order_h1", "order_l2", "order_pohozaev", "order_energy"),
               rows)
    if u_fn is None:
        print(f"note[{sc.name}]: no closed-form reference for this scenario; "
              "H1 columns reported as NaN")
    print(f"{sc.name}: study over h = "
          + " ".join(_fmt(h) for h in hs) + f" written to {out}/study.csv")
    return 0


# ---------------------------------------------------------------------------
# probe


def probe_scenario(path, out_dir=None, seed=None) -> int:
    """Rigidity pipeline only, with the two-level mesh verdict."""
    try:
        sc = parse_scenario(path)
        if seed is not None:
            sc = replace(sc, seed=int(seed))
        rng = np.random.default_rng(sc.seed)
        rig = rigidity_probe(sc.gauge, sc.cone, sc.obstacle, sc.radii,
                             sc.h_list[0], exponent=sc.exponent,
                             rng=rng, verdict_levels=2)
        out = os.path.join(out_dir or sc.out_dir or ".", sc.name)
        os.makedirs(out, exist_ok=True)
        _write_kv(os.path.join(out, "probe.txt"), [
            ("headline_fine", " ".join(_fmt(v) for v in rig.headline)),
            ("headline_coarse",
             " ".join(_fmt(v) for v in (rig.headline_coarse or ()))),
            ("floors", " ".join(_fmt(v) for v in (rig.floors or ()))),
            ("wulff_ball", "yes" if rig.wulff_pass else "no"),
        ])
        print(f"{sc.name}: headline = "
              + " ".join(_fmt(v) for v in rig.headline)
              + f"; wulff ball: {'yes' if rig.wulff_pass else 'no'}")
        return 0
    except (ScenarioError, RegionError, MeshError, GaugeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"check failure: solver: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# entry point


def _run_one(job):
    kind, path, out_dir, seed, h_list, adapt = job
    if kind == "run":
        return run_scenario(path, out_dir=out_dir, seed=seed)
    if kind == "study":
        return convergence_study(path, h_list=h_list, out_dir=out_dir,
                                 seed=seed, adapt=adapt)
    return probe_scenario(path, out_dir=out_dir, seed=seed)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wulffcap",
        description="Exterior anisotropic capacity problems in convex cones: "
                    "solve, verify integral identities, probe Wulff rigidity.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "solve scenarios and run their checks"),
                           ("study", "convergence study over mesh sizes"),
                           ("probe", "rigidity probe only")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("configs", nargs="+", help="scenario file(s)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
        sp.add_argument("--out-dir", default=None,
                        help="root directory for artifacts")
        sp.add_argument("--jobs", type=int, default=1,
                        help="worker processes for multiple scenarios")
        if name == "study":
            sp.add_argument("--h-list", default=None,
                            help="space/comma separated mesh sizes "
                                 "(halving sequence, overrides the scenario)")
            sp.add_argument("--adapt", action="store_true", default=None,
                            help="use curvature-adaptive meshes regardless "
                                 "of the scenario's 'adaptive' key")
    args = parser.parse_args(argv)
    h_list = None
    if getattr(args, "h_list", None):
        try:
            h_list = _floats(args.h_list, "--h-list")
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    jobs = [(args.command, path, args.out_dir, args.seed, h_list,
             getattr(args, "adapt", None))
            for path in args.configs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_one, jobs))
    else:
        codes = [_run_one(job) for job in jobs]
    return max(codes, default=0)


if __name__ == "__main__":
    sys.exit(main())
