"""Experiment orchestration: δ-sweeps, coefficient extraction, residual reports, CSV/JSON output."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import continuum_analysis as ca
from . import massive_walk as mw
from . import painleve_isomonodromy as pv
from .fermion_solver import FermionField, residual_sholo, solve_fermion, identity_sites
from .ising_oracle import ContourFermion
from .lattice_geometry import (
    BETA_C,
    MassParams,
    build_disc_domain,
    build_rect_domain,
    cover_from_faces,
    domain_from_spec,
    rotate_domain,
    rotate_point,
    snap_to_face,
)

SCHEMA_VERSION = 1
BETA_MODES = ("beta", "theta")


# ---------------------------------------------------------------------------
# configuration and reports

@dataclass
class ExperimentConfig:
    """One experiment: a δ-sweep at fixed continuum mass.

    beta_mode "beta" sets β = β_c - mδ/2; "theta" sets Θ = mδ/2, the scaling
    under which the lattice mass matches e^{2mr} decay.
    """

    name: str = "onepoint"
    domain: dict = field(default_factory=dict)
    m: float = -1.0
    deltas: list = field(default_factory=lambda: [2.0 ** -k for k in range(3, 8)])
    beta_mode: str = "beta"
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "out"
    tolerances: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.deltas = [float(d) for d in self.deltas]
        if self.beta_mode not in BETA_MODES:
            raise ValueError(f"beta_mode must be one of {BETA_MODES}")
        if any(d <= 0 for d in self.deltas):
            raise ValueError("deltas must be positive")
        if any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ValueError("deltas must be strictly decreasing")
        if self.m > 0:
            raise ValueError("m must be <= 0 (beta >= beta_c)")
        for d in self.deltas:
            th = self.mass_params(d).Theta
            if not -math.pi / 8 < th <= 0:
                raise ValueError(f"Theta={th} outside (-pi/8, 0] at delta={d}")

    def mass_params(self, delta: float) -> MassParams:
        if self.beta_mode == "theta":
            return MassParams.from_scaling_mass(self.m, delta)
        return MassParams.from_mass(self.m, delta)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def opt(self, key: str, default: Any) -> Any:
        return self.options.get(key, default)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ConvergenceReport:
    experiment: str
    config: dict
    rows: list = field(default_factory=list)
    reference: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    gates: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.gates.values())

    def to_dict(self) -> dict:
        return asdict(self)


def empirical_rates(errors: Sequence[float]) -> list:
    """log2 of successive error ratios (None where undefined)."""
    out = []
    for e0, e1 in zip(errors, errors[1:]):
        out.append(math.log2(e0 / e1) if e0 > 0 and e1 > 0 else None)
    return out


def richardson(values: Sequence[float]) -> tuple[float, float]:
    """Limit of a halving sequence and the order used.

    The order comes from the last three terms when they are available and
    sensible, otherwise first order is assumed.
    """
    v = list(values)
    if len(v) < 2:
        raise ValueError("need at least two values")
    p = 1.0
    if len(v) >= 3:
        d0, d1 = v[-2] - v[-3], v[-1] - v[-2]
        if d0 != 0 and d1 != 0 and d0 * d1 > 0 and abs(d1) < abs(d0):
            p = math.log2(abs(d0 / d1))
    return v[-1] + (v[-1] - v[-2]) / (2.0 ** p - 1.0), p


def strictly_decreasing(xs: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def worker_count() -> int:
    try:
        n = int(os.environ.get("MASSIVE_SHOLO_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def run_cells(fn: Callable, cells: Sequence, workers: int | None = None) -> list:
    """Evaluate independent cells; results come back in cell order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
        return list(pool.map(fn, cells))


# ---------------------------------------------------------------------------
# one-point convergence

def _onepoint_cell(args) -> dict:
    cfg_dict, delta = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    p = cfg.mass_params(delta)
    r_in, r_out = cfg.opt("annulus", [0.5, 1.0])
    radius = _onepoint_radius(cfg)
    err = mw.one_point_profile_error(p, r_in, r_out, radius=radius, m=cfg.m)
    row = {"delta": delta, "Theta": p.Theta, "beta": p.beta, "max_error": err}
    if cfg.opt("truncation_check", False):
        err2 = mw.one_point_profile_error(p, r_in, r_out, radius=2 * radius, m=cfg.m)
        row["doubled_radius_change"] = abs(err2 - err)
    return row


def _onepoint_radius(cfg: ExperimentConfig) -> float:
    if "radius" in cfg.options:
        return float(cfg.options["radius"])
    if cfg.m == 0:
        raise ValueError("massless run needs options.radius")
    return float(cfg.opt("radius_factor", 6.0)) / abs(cfg.m)


def run_onepoint_convergence(cfg: ExperimentConfig) -> ConvergenceReport:
    """Max error of (2δ/π)^{-1/2}F against e^{2mr}/√z on an annulus, per δ."""
    rows = run_cells(_onepoint_cell, [(cfg.to_dict(), d) for d in cfg.deltas])
    errors = [r["max_error"] for r in rows]
    rep = ConvergenceReport("onepoint", cfg.to_dict(), rows=rows, errors=errors,
                            rates=empirical_rates(errors),
                            reference={"limit": "exp(2 m |z|)/sqrt(z)", "m": cfg.m,
                                       "annulus": cfg.opt("annulus", [0.5, 1.0])})
    mono = strictly_decreasing(errors)
    if not mono:
        rep.flags.append("non-monotone errors")
    rep.gates["monotone"] = mono
    rep.gates["final_error"] = errors[-1] <= cfg.tol("final_error", 0.02)
    if cfg.opt("truncation_check", False):
        worst = max(r["doubled_radius_change"] for r in rows)
        rep.gates["truncation"] = worst <= cfg.tol("truncation", 1e-10)
    return rep


# ---------------------------------------------------------------------------
# interpolation of discrete fields onto circles

def edge_cell(z: complex, delta: float):
    """Lower-left edge (odd, odd half-units) of the edge-lattice cell holding z, and local coords."""
    X, Y = 2 * z.real / delta, 2 * z.imag / delta
    i0 = 2 * math.floor((X - 1) / 2) + 1
    j0 = 2 * math.floor((Y - 1) / 2) + 1
    return (i0, j0), (X - i0) / 2, (Y - j0) / 2


def circle_samples(F: FermionField, center: complex, rho: float, n: int = 512,
                   theta0: float = 0.0) -> np.ndarray:
    """Bilinear interpolation of edge values at the circle_nodes of |z - center| = rho.

    The lift is continued node to node along straight segments, starting on
    sheet 0, so the samples follow one branch of the spinor around the circle.
    """
    delta = F.params.delta
    cover = F.cover
    z, _, _ = ca.circle_nodes(center, rho, n, theta0)
    out = np.empty(n, dtype=complex)
    ref = None
    for k, zz in enumerate(z):
        q, tx, ty = edge_cell(complex(zz), delta)
        sheet = 0 if ref is None else cover.neighbour_sheet(ref[0], ref[1], q)
        ref = (q, sheet)
        v = 0j
        for dx, dy, w in ((0, 0, (1 - tx) * (1 - ty)), (2, 0, tx * (1 - ty)),
                          (0, 2, (1 - tx) * ty), (2, 2, tx * ty)):
            v += w * F.near(q, sheet, (q[0] + dx, q[1] + dy))
        out[k] = v
    return out


def two_point_coefficients(F: FermionField, a1: complex, a2: complex, rho: float, m: float,
                           n: int = 512, theta0: float = 0.1) -> dict:
    """Continuum coefficients of the two-branch field from loop integrals around each branch point.

    Lifts are chosen so that the Z_{-1/2}^1 coefficient at a1 and the
    Z_{-1/2}^i coefficient at a2 are positive; everything is divided by the
    former.
    """
    s1 = circle_samples(F, a1, rho, n, theta0)
    s2 = circle_samples(F, a2, rho, n, theta0)
    c1 = ca.massive_cauchy_extract(s1, a1, rho, -0.5, "1", m, n, theta0)
    cb = ca.massive_cauchy_extract(s2, a2, rho, -0.5, "i", m, n, theta0)
    s1 = s1 / c1
    s2 = s2 * (math.copysign(1.0, cb) / abs(c1))
    return {
        "scale": abs(c1),
        "B": abs(cb / c1),
        "A1": ca.massive_cauchy_extract(s1, a1, rho, 0.5, "1", m, n, theta0) / 2,
        "Ai": ca.massive_cauchy_extract(s1, a1, rho, 0.5, "i", m, n, theta0) / 2,
        "Ci": ca.massive_cauchy_extract(s2, a2, rho, 0.5, "i", m, n, theta0) / 2,
        "C1": ca.massive_cauchy_extract(s2, a2, rho, 0.5, "1", m, n, theta0) / 2,
        "stray_i_at_a1": ca.massive_cauchy_extract(s1, a1, rho, -0.5, "i", m, n, theta0),
        "stray_1_at_a2": ca.massive_cauchy_extract(s2, a2, rho, -0.5, "1", m, n, theta0),
    }


def one_point_coefficients(F: FermionField, a1: complex, rho: float, m: float,
                           n: int = 512, theta0: float = 0.1) -> dict:
    s1 = circle_samples(F, a1, rho, n, theta0)
    c1 = ca.massive_cauchy_extract(s1, a1, rho, -0.5, "1", m, n, theta0)
    s1 = s1 / c1
    return {
        "scale": abs(c1),
        "A1": ca.massive_cauchy_extract(s1, a1, rho, 0.5, "1", m, n, theta0) / 2,
        "Ai": ca.massive_cauchy_extract(s1, a1, rho, 0.5, "i", m, n, theta0) / 2,
    }


# ---------------------------------------------------------------------------
# coefficient extraction on bounded domains

def corner_A1(F: FermionField) -> float:
    """(F(a1 + 3δ/2) - 1) / (2δ)."""
    a1 = F.cover.a1
    return (F.value((a1[0] + 3, a1[1])).real - 1.0) / (2 * F.params.delta)


def corner_B(F: FermionField) -> float:
    """|F(a2 + δ/2)|."""
    a2 = F.cover.branch_faces[1]
    return abs(F.value((a2[0] + 1, a2[1])))


def _bounded_domain(spec: dict, delta: float):
    shape = spec.get("shape", "disc")
    if shape == "disc":
        dom = build_disc_domain(float(spec.get("radius", 1.0)), delta,
                                tuple(spec.get("center", (0.0, 0.0))))
    elif shape == "rect":
        w, h = spec["dims"]
        dom = build_rect_domain(int(round(w / delta)), int(round(h / delta)), delta)
    else:
        raise ValueError(f"unknown shape {shape}")
    faces = [snap_to_face(tuple(b), delta) for b in spec.get("branch", [[0.0, 0.0]])]
    return dom, cover_from_faces(dom, faces)


def _extraction_cell(args) -> dict:
    cfg_dict, delta = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    spec = cfg.domain or default_domain("converge")
    dom, cover = _bounded_domain(spec, delta)
    p = cfg.mass_params(delta)
    F = solve_fermion(cover, p)
    a1 = complex(*cover.a1) * delta / 2
    want = complex(*spec.get("branch", [[0.0, 0.0]])[0])
    row = {"delta": delta, "Theta": p.Theta, "A1_corner": corner_A1(F),
           "solve_residual": F.solve_residual, "branch_shift": abs(a1 - want)}
    rho = float(cfg.opt("rho", 0.4))
    coeffs = one_point_coefficients(F, a1, rho, p.scaling_mass, int(cfg.opt("nodes", 512)))
    row.update({"A1_loop": coeffs["A1"], "Ai_loop": coeffs["Ai"]})
    if len(cover.branch_faces) > 1:
        row["B_corner"] = corner_B(F)
    if cfg.m == 0 and cfg.opt("massless_oracle", True):
        crit = solve_fermion(cover, MassParams.from_beta(BETA_C, delta))
        row["massless_max_diff"] = max(abs(F.edge_values[e] - crit.edge_values[e])
                                       for e in F.edge_values)
    if cfg.opt("rotation_check", False):
        about = cover.a1
        rdom = rotate_domain(dom, -1, about)
        rfaces = [rotate_point(f, -1, about) for f in cover.branch_faces]
        Fr = solve_fermion(cover_from_faces(rdom, rfaces), p)
        row["A1_corner_rotated"] = corner_A1(Fr)
        rc = one_point_coefficients(Fr, a1, rho, p.scaling_mass, int(cfg.opt("nodes", 512)))
        row["A1_loop_rotated"] = rc["A1"]
    return row


def run_coefficient_extraction(cfg: ExperimentConfig) -> ConvergenceReport:
    """Tabulate 𝒜¹_δ (corner route) and the loop-extracted A¹, Aⁱ across δ.

    Both routes carry O(δ) errors, so they are compared after Richardson
    extrapolation.  With options.rotation_check the domain is also solved
    after a -90° rotation about a1; its 𝒜¹ should match -Aⁱ of the original.
    """
    rows = run_cells(_extraction_cell, [(cfg.to_dict(), d) for d in cfg.deltas])
    rep = ConvergenceReport("converge", cfg.to_dict(), rows=rows)
    for r in rows:
        if r["branch_shift"] > 1e-12:
            rep.flags.append(f"branch point snapped by {r['branch_shift']:.4g} at delta={r['delta']}")
    seq = [r["A1_corner"] for r in rows]
    diffs = [abs(b - a) for a, b in zip(seq, seq[1:])]
    rep.errors = diffs
    rep.rates = empirical_rates(diffs)
    rep.gates["A1_cauchy"] = strictly_decreasing(diffs) if len(diffs) > 1 else True
    tol = cfg.tol("routes", 5e-3)
    if len(rows) >= 2:
        for key in ("A1_corner", "A1_loop", "Ai_loop", "B_corner", "A1_corner_rotated"):
            if key in rows[0]:
                lim, order = richardson([r[key] for r in rows])
                rep.reference[f"{key}_extrapolated"] = lim
                rep.reference[f"{key}_order"] = order
        ref = rep.reference
        rep.gates["routes_agree"] = abs(ref["A1_corner_extrapolated"] - ref["A1_loop_extrapolated"]) <= tol
        if "A1_corner_rotated_extrapolated" in ref:
            rep.gates["rotation"] = abs(ref["A1_corner_rotated_extrapolated"]
                                        + ref["Ai_loop_extrapolated"]) <= tol
    if "massless_max_diff" in rows[0]:
        worst = max(r["massless_max_diff"] for r in rows)
        rep.gates["massless_oracle"] = worst <= cfg.tol("massless", 1e-10)
    seps = cfg.opt("merge_separations", [])
    if seps:
        merge = merge_trend(cfg, sorted(seps, reverse=True), cfg.deltas[-1])
        rep.reference["merge"] = merge
        bs = [b for _, b in merge]
        rep.gates["merge_toward_one"] = all(y > x for x, y in zip(bs, bs[1:])) and bs[-1] < 1.0
    return rep


def merge_trend(cfg: ExperimentConfig, separations: Sequence[float], delta: float) -> list:
    """|𝓑_δ| for a symmetric pair at decreasing separations (largest first)."""
    spec = dict(cfg.domain or default_domain("converge"))
    out = []
    for sep in separations:
        spec["branch"] = [[-sep / 2, 0.0], [sep / 2, 0.0]]
        _, cover = _bounded_domain(spec, delta)
        F = solve_fermion(cover, cfg.mass_params(delta))
        out.append([float(sep), corner_B(F)])
    return out


# ---------------------------------------------------------------------------
# full-plane isomonodromy

def _isomono_solve(cfg: ExperimentConfig, delta: float, a: float) -> dict:
    m = cfg.m
    p = cfg.mass_params(delta)
    A = int(round(a / delta))
    if A < 2 or A % 2:
        raise ValueError("a must be an even multiple of delta (branch points sit on faces)")
    a_lat = A * delta
    radius = float(cfg.opt("radius_factor", 3.0)) / abs(m)
    if radius <= a_lat + 1.0 / abs(m):
        raise ValueError("truncation radius too small for the pair")
    dom = build_disc_domain(radius, delta)
    cover = cover_from_faces(dom, [(-2 * A, 0), (2 * A, 0)])
    F = solve_fermion(cover, p)
    rho = float(cfg.opt("rho_fraction", 0.5)) * a_lat
    co = two_point_coefficients(F, complex(-a_lat, 0), complex(a_lat, 0), rho,
                                p.scaling_mass, int(cfg.opt("nodes", 512)))
    return {"a": a_lat, "B_corner": corner_B(F), "B_loop": co["B"], "A1": co["A1"],
            "Ci": co["Ci"], "scale": co["scale"], "rho_over_delta": rho / delta,
            "solve_residual": F.solve_residual,
            "stray": max(abs(co["stray_i_at_a1"]), abs(co["stray_1_at_a2"]))}


def decay_trend_point(cfg: ExperimentConfig, delta: float, a: float) -> float:
    """|𝓑_δ| of the pair (-a/|m|, a/|m|) on a disc wide enough for the pair."""
    m = cfg.m
    A = 2 * max(1, round(a / abs(m) / (2 * delta)))
    radius = max(float(cfg.opt("radius_factor", 3.0)), a + 2.0) / abs(m)
    cover = cover_from_faces(build_disc_domain(radius, delta), [(-2 * A, 0), (2 * A, 0)])
    return corner_B(solve_fermion(cover, cfg.mass_params(delta)))


def _isomono_cell(args) -> dict:
    cfg_dict, delta = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    m = cfg.m
    a = float(cfg.opt("a", 1.0)) / abs(m)
    step = float(cfg.opt("a_step", 1.0 / 16)) / abs(m)
    step = 2 * delta * max(1, round(step / (2 * delta)))
    centre = _isomono_solve(cfg, delta, a)
    row = {"delta": delta, "delta_m": delta * abs(m), **centre}
    row["r"] = centre["a"] * m
    if cfg.opt("residuals", True):
        lo = _isomono_solve(cfg, delta, a - step)
        hi = _isomono_solve(cfg, delta, a + step)
        trio = [lo, centre, hi]
        r = np.array([x["a"] * m for x in trio])
        A0 = np.array([x["A1"] / m for x in trio])
        B0 = np.array([x["B_corner"] for x in trio])
        C0 = np.array([x["Ci"] / m for x in trio])
        h = r[2] - r[1]
        if abs((r[1] - r[0]) - h) > 1e-12:
            raise ValueError("uneven a-stencil")
        d = [np.array([(f[2] - f[0]) / (2 * h)] * 3) for f in (A0, B0, C0)]
        res = pv.coefficient_system_residuals(r, A0, B0, C0, derivatives=d)
        for key in ("eq1", "eq2", "eq3", "eq4", "eq5", "r1"):
            row[f"res_{key}"] = float(abs(res[key][1]))
    return row


def run_fullplane_isomonodromy(cfg: ExperimentConfig, sol: pv.PainleveSolution | None = None
                               ) -> ConvergenceReport:
    """Discrete B₀, A₀, C₀ of the symmetric pair (-a, a) against the Painlevé solution."""
    m = cfg.m
    if m >= 0:
        raise ValueError("full-plane isomonodromy needs m < 0")
    rows = run_cells(_isomono_cell, [(cfg.to_dict(), d) for d in cfg.deltas])
    if sol is None:
        sol = pv.solve_h0(-12.0, -0.01, 4000)
    rep = ConvergenceReport("isomono", cfg.to_dict(), rows=rows)
    for row in rows:
        h, dh, _ = sol.at(row["r"])
        A0, B0, C0 = pv.coefficients_from_h(row["r"], h, dh)
        row["B_ode"] = float(B0)
        row["A0_ode"] = float(A0)
        row["C0_ode"] = float(C0)
        row["B_rel_error"] = abs(row["B_corner"] / B0 - 1.0)
        row["B_loop_rel_error"] = abs(row["B_loop"] / B0 - 1.0)
        if row["rho_over_delta"] < cfg.opt("min_rho_over_delta", 16):
            rep.flags.append(f"coarse interpolation at delta={row['delta']}")
    rep.errors = [r["B_rel_error"] for r in rows]
    rep.rates = empirical_rates(rep.errors)
    rep.reference = {"lambda_asym": sol.lambda_asym, "tanh_h0": rows[-1]["B_ode"]}
    if len(rows) >= 2:
        lim, order = richardson([r["B_corner"] for r in rows])
        rep.reference["B_extrapolated"] = lim
        rep.reference["B_extrapolated_rel_error"] = abs(lim / rows[-1]["B_ode"] - 1.0)
        for key, scale in (("A1", m), ("Ci", m)):
            lim, _ = richardson([r[key] for r in rows])
            rep.reference[f"{'A0' if key == 'A1' else 'C0'}_extrapolated"] = lim / scale
        rep.reference["A0_ode"] = rows[-1]["A0_ode"]
        rep.reference["C0_ode"] = rows[-1]["C0_ode"]
        rep.gates["B_improves"] = bool(strictly_decreasing(rep.errors))
    trend = cfg.opt("trend_a", [])
    if trend:
        pts = [[float(a), decay_trend_point(cfg, cfg.deltas[0], a)] for a in sorted(trend)]
        rep.reference["B_vs_a"] = pts
        rep.gates["B_decays_in_a"] = all(y[1] < x[1] for x, y in zip(pts, pts[1:]))
    rep.gates["B_final"] = bool(rep.errors[-1] <= cfg.tol("B_rel", 0.02))
    return rep


# ---------------------------------------------------------------------------
# output

def _csv_text(report: ConvergenceReport) -> str:
    cols: list[str] = []
    for row in report.rows:
        for k in row:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    buf.write(f"# schema_version={report.schema_version} experiment={report.experiment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in report.rows:
        w.writerow([_fmt(row.get(c, "")) for c in cols])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def emit(report: ConvergenceReport, fmt: str = "json", out_dir: str | os.PathLike = "out") -> list[Path]:
    """Write the report as JSON and/or CSV (fmt 'json', 'csv' or 'both'); returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if fmt in ("json", "both"):
        p = out / f"{report.experiment}.json"
        p.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2, default=_jsonable) + "\n")
        paths.append(p)
    if fmt in ("csv", "both"):
        p = out / f"{report.experiment}.csv"
        p.write_text(_csv_text(report))
        paths.append(p)
    if fmt not in ("json", "csv", "both"):
        raise ValueError(f"unknown format {fmt}")
    return paths


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


# ---------------------------------------------------------------------------
# defaults

def default_domain(name: str) -> dict:
    if name == "converge":
        return {"shape": "disc", "radius": 1.0, "branch": [[-0.25, 0.125]]}
    if name == "solve":
        return {"shape": "rect", "dims": [6, 6], "delta": 1.0, "branch": [[2.0, 3.0]]}
    return {}


def default_config(name: str) -> ExperimentConfig:
    if name == "onepoint":
        return ExperimentConfig(name="onepoint", beta_mode="theta")
    if name == "converge":
        return ExperimentConfig(name="converge", domain=default_domain("converge"),
                                deltas=[1 / 16, 1 / 32, 1 / 64, 1 / 128], beta_mode="theta",
                                options={"rotation_check": True})
    if name == "isomono":
        return ExperimentConfig(name="isomono", deltas=[1 / 16, 1 / 32, 1 / 64], beta_mode="theta")
    if name == "solve":
        return ExperimentConfig(name="solve", domain=default_domain("solve"), deltas=[1.0],
                                options={"beta": BETA_C + 0.03})
    if name == "oracle":
        return ExperimentConfig(name="oracle", deltas=[1.0],
                                options={"rects": [[1, 1], [2, 2]], "betas": [BETA_C, BETA_C + 0.08]})
    if name == "hm":
        return ExperimentConfig(name="hm", deltas=[1.0],
                                options={"radius": 12, "theta": -0.08, "walks": 2000, "sites": 10})
    return ExperimentConfig(name=name)


# ---------------------------------------------------------------------------
# simple subcommands

def residual_summary(F: FermionField) -> dict:
    """Max residuals of the discrete identities on a solved field."""
    from . import fermion_solver as fs
    dom = F.cover.base
    c0 = F.cover.origin_corner
    sholo = [residual_sholo(F, c) for c in sorted(dom.all_corners)
             if c != c0 and _has_edges(F, c)]
    diag, axis = identity_sites(F)
    H = fs.build_square_integral(F)
    faces, verts = fs.laplacian_H_sites(F.cover)
    lap = [fs.laplacian_H_identity(F, H, x)[2] for x in faces + verts]
    l2, lap1, bound = fs.discrete_L2_diagnostic(F)
    return {
        "max_sholo": max(sholo),
        "max_mdhol": max((fs.residual_mdhol(F, c) for c in diag), default=0.0),
        "max_mharm": max((fs.residual_massive_harmonic(F, c) for c in axis), default=0.0),
        "max_lapH": max(lap),
        "loop_closure": H.closure_residual,
        "l2_diag": l2,
        "l2_bound": bound,
    }


def _has_edges(F: FermionField, c) -> bool:
    from .fermion_solver import corner_edges
    from .lattice_geometry import TAU
    em, ep = corner_edges(c, TAU[F.cover.base.corner_tau(c)])
    return F.has(em) and F.has(ep)


def field_rows(F: FermionField) -> list[dict]:
    """Both lifts of every stored edge and corner value."""
    rows = []
    for kind, table in (("edge", F.edge_values), ("corner", F.corner_values)):
        for z in sorted(table):
            v = table[z]
            for sheet, w in ((0, v), (1, -v)):
                rows.append({"site_kind": kind, "x_halfunits": z[0], "y_halfunits": z[1],
                             "sheet": sheet, "re": float(w.real), "im": float(w.imag)})
    return rows


def solve_params(cfg: ExperimentConfig, delta: float) -> MassParams:
    if "theta" in cfg.options:
        return MassParams.from_theta(float(cfg.options["theta"]), delta)
    if "beta" in cfg.options:
        return MassParams.from_beta(float(cfg.options["beta"]), delta)
    return cfg.mass_params(delta)


def run_solve(cfg: ExperimentConfig) -> ConvergenceReport:
    """Solve one domain; rows are the field values, reference the residual summary."""
    spec = dict(cfg.domain or default_domain("solve"))
    dom, cover = domain_from_spec(spec)
    p = solve_params(cfg, dom.delta)
    F = solve_fermion(cover, p)
    summary = residual_summary(F)
    rep = ConvergenceReport("solve", cfg.to_dict(), rows=field_rows(F),
                            reference={"Theta": p.Theta, "beta": p.beta, "delta": p.delta,
                                       "solve_residual": F.solve_residual, **summary})
    tol = cfg.tol("residual", 1e-9)
    rep.gates["solve_residual"] = F.solve_residual <= tol
    for key in ("max_sholo", "max_mdhol", "max_mharm", "max_lapH"):
        rep.gates[key] = summary[key] <= tol
    return rep


def run_oracle(cfg: ExperimentConfig) -> ConvergenceReport:
    """Solver against contour sums entrywise, on every small rectangle and layout."""
    rows = []
    for w, h in cfg.opt("rects", [[1, 1], [2, 2]]):
        dom = build_rect_domain(int(w), int(h))
        faces = sorted(dom.faces)
        layouts = [[faces[0]]] + ([[faces[0], faces[-1]]] if len(faces) > 1 else [])
        for branch in layouts:
            cover = cover_from_faces(dom, branch)
            cf = ContourFermion(cover)
            domain_id = f"{w}x{h}:n={len(branch)}"
            for beta in cfg.opt("betas", [BETA_C]):
                F = solve_fermion(cover, MassParams.from_beta(float(beta)))
                for z in cf.sites():
                    a, b = F.value(z), cf.value(float(beta), z)
                    for part, fa, fb in (("re", a.real, b.real), ("im", a.imag, b.imag)):
                        rows.append({"domain_id": domain_id, "beta": float(beta),
                                     "observable": f"{part} F({z[0]},{z[1]})", "value": float(fa),
                                     "oracle_a": float(fa), "oracle_b": float(fb),
                                     "abs_diff": abs(float(fa) - float(fb))})
    rep = ConvergenceReport("oracle", cfg.to_dict(), rows=rows)
    worst = max(r["abs_diff"] for r in rows)
    rep.reference["max_abs_diff"] = worst
    rep.gates["oracle"] = worst <= cfg.tol("oracle", 1e-10)
    return rep


def run_hm(cfg: ExperimentConfig) -> ConvergenceReport:
    radius = float(cfg.opt("radius", 12))
    walk = mw.KilledWalkParams.from_theta(float(cfg.opt("theta", -0.08)))
    lat = mw.slit_lattice(radius)
    hm = mw.hm_solve(lat, walk)
    rng = np.random.default_rng(cfg.seeds[0] if cfg.seeds else 0)
    near = [p for p in lat.points if 0 < abs(complex(*p)) <= float(cfg.opt("site_radius", 12))]
    picks = rng.choice(len(near), size=min(int(cfg.opt("sites", 10)), len(near)), replace=False)
    rows = []
    for k, i in enumerate(sorted(picks)):
        site = tuple(near[i])
        est, se = mw.hm_montecarlo(lat, walk, site, int(cfg.opt("walks", 2000)), seed=int(k))
        exact = hm(site)
        rows.append({"x": int(site[0]), "y": int(site[1]), "sheet": 0, "value": est, "stderr": se,
                     "exact": exact, "within": bool(abs(est - exact) <= 4 * se + 1e-15)})
    rep = ConvergenceReport("hm", cfg.to_dict(), rows=rows)
    frac = sum(r["within"] for r in rows) / len(rows)
    rep.reference["fraction_within_4se"] = frac
    rep.gates["mc_agreement"] = frac >= cfg.tol("fraction", 0.95)
    return rep


def painleve_table(sol: pv.PainleveSolution, m: float = -1.0) -> list[dict]:
    offset = pv.short_distance_offset(sol)
    A, B, C = pv.coefficients_from_h(sol.r_grid, sol.h0, sol.dh0)
    rows = []
    for k, r in enumerate(sol.r_grid):
        tp = pv.two_point(r / m, m, sol, offset)
        rows.append({"r": float(r), "h0": float(sol.h0[k]), "dh0": float(sol.dh0[k]),
                     "A0": float(A[k]), "B0": float(B[k]), "C0": float(C[k]),
                     "plus": tp.plus_value, "free": tp.free_value})
    return rows


# ---------------------------------------------------------------------------
# command line

SUBCOMMANDS = ("solve", "oracle", "hm", "onepoint", "painleve", "twopoint", "converge", "isomono")


def _load(args, name: str) -> ExperimentConfig:
    if getattr(args, "config", None):
        return ExperimentConfig.from_json(args.config)
    return default_config(name)


def _finish(rep: ConvergenceReport, out: str | None, fmt: str) -> int:
    paths = emit(rep, fmt, out or rep.config.get("out_dir", "out"))
    for k, v in rep.gates.items():
        print(f"{'PASS' if v else 'FAIL'} {rep.experiment}.{k}")
    for p in paths:
        print(f"wrote {p}")
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="massive-sholo", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--out", help="output directory (or CSV path for painleve)")
        sp.add_argument("--format", default="both", choices=("json", "csv", "both"))
        if name == "solve":
            sp.add_argument("--domain", help="domain spec (JSON)")
            sp.add_argument("--beta", type=float)
            sp.add_argument("--theta", type=float)
        if name == "painleve":
            sp.add_argument("--rmin", type=float, default=-12.0)
            sp.add_argument("--rmax", type=float, default=-0.02)
            sp.add_argument("--nodes", type=int, default=4000)
            sp.add_argument("--m", type=float, default=-1.0)
        if name == "twopoint":
            sp.add_argument("--a", type=float, required=True)
            sp.add_argument("--m", type=float, default=-1.0)
    return ap


def _cmd_painleve(args) -> int:
    lam = pv.shoot_connection()
    sol = pv.solve_h0(args.rmin, args.rmax, args.nodes, lam)
    rows = painleve_table(sol, args.m)
    rep_res = pv.residual_report(sol, (max(-8.0, args.rmin), min(-0.05, args.rmax)))
    out = Path(args.out or "sol.csv")
    if out.suffix != ".csv":
        out = out / "painleve.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION} experiment=painleve lambda_asym={lam:.10f}\n")
        w = csv.DictWriter(fh, fieldnames=["r", "h0", "dh0", "A0", "B0", "C0", "plus", "free"],
                           lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) for k, v in row.items()})
    print(f"lambda_asym = {lam:.10f}")
    ok = True
    for key, val in rep_res.items():
        if key == "painleve3_log":
            print(f"INFO painleve.{key} = {val:.3e} (alternative eta reading)")
            continue
        good = val <= 1e-6
        ok &= good
        print(f"{'PASS' if good else 'FAIL'} painleve.{key} = {val:.3e}")
    print(f"wrote {out}")
    return 0 if ok else 1


def _cmd_solve(args, cfg: ExperimentConfig) -> int:
    if args.domain:
        with open(args.domain) as fh:
            cfg.domain = json.load(fh)
    if args.theta is not None:
        cfg.options["theta"] = args.theta
    elif args.beta is not None:
        cfg.options["beta"] = args.beta
    rep = run_solve(cfg)
    out = Path(args.out or "field.csv")
    if out.suffix != ".csv":
        out = out / "field.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_csv_text(rep))
    keys = ("max_sholo", "max_mharm", "max_lapH", "l2_diag", "max_mdhol", "solve_residual")
    summary = out.with_name(out.stem + "_residuals.json")
    summary.write_text(json.dumps({k: rep.reference[k] for k in keys}, sort_keys=True, indent=2) + "\n")
    for k, v in rep.gates.items():
        print(f"{'PASS' if v else 'FAIL'} solve.{k}")
    print(f"wrote {out}\nwrote {summary}")
    return 0 if rep.passed else 1


def _cmd_twopoint(args) -> int:
    r = args.a * args.m
    sol = pv.solve_h0(min(-12.0, 2 * r), min(-1e-6, r / 2), 2000)
    tp = pv.two_point(args.a, args.m, sol)
    print(json.dumps({**asdict(tp), "normalised": tp.normalised, "lambda_asym": sol.lambda_asym},
                     sort_keys=True, indent=2))
    return 0


RUNNERS = {
    "solve": run_solve,
    "oracle": run_oracle,
    "hm": run_hm,
    "onepoint": run_onepoint_convergence,
    "converge": run_coefficient_extraction,
    "isomono": run_fullplane_isomonodromy,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "painleve":
        return _cmd_painleve(args)
    if args.command == "twopoint":
        return _cmd_twopoint(args)
    cfg = _load(args, args.command)
    if args.command == "solve":
        return _cmd_solve(args, cfg)
    rep = RUNNERS[args.command](cfg)
    return _finish(rep, args.out, args.format)


if __name__ == "__main__":
    sys.exit(main())
