"""Killed random walks, the full-plane one-point spinor and the G-spinor.

The walk lattice is (1+i)Z^2 in units of delta, stored in half-units as the
face-type points with steps (+-2, +-2).  The slit is the negative real axis and
the target is the origin.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .fermion_solver import (NEIGHBOUR_STEPS, FermionField, _add, fill_corners)
from .lattice_geometry import (TAU, DoubleCover, MassParams, build_disc_domain,
                               cover_from_faces, corner_type)


@dataclass(frozen=True)
class KilledWalkParams:
    """Simple walk killed with probability ``kill_prob`` at each step."""

    Theta: float
    kill_prob: float

    @classmethod
    def from_theta(cls, theta: float) -> "KilledWalkParams":
        q = killing_ratio(theta)
        return cls(theta, q / (1.0 + q))

    @classmethod
    def from_params(cls, params: MassParams) -> "KilledWalkParams":
        return cls.from_theta(params.Theta)

    @property
    def q(self) -> float:
        return self.kill_prob / (1.0 - self.kill_prob)


def killing_ratio(theta: float) -> float:
    """Ratio killed/survived per step; equals M_H^2 / 4."""
    return 2.0 * math.sin(2 * theta) ** 2 / math.cos(4 * theta)


# ---------------------------------------------------------------------------
# walk graphs and harmonic measure

TARGET = -1
ABSORB = -2


@dataclass
class WalkGraph:
    """Interior sites with a 4-neighbour table.

    ``nbr[k, d]`` is the index of the d-th neighbour of site k, or TARGET /
    ABSORB.  ``lookup`` maps a point to its index (None if not interior).
    """

    points: np.ndarray
    nbr: np.ndarray
    target: tuple
    lookup: object
    radius: float = math.inf

    @property
    def size(self) -> int:
        return len(self.points)

    def index(self, p):
        return self.lookup(tuple(p))

    def check_connected(self) -> None:
        """Every interior site must be able to reach the target."""
        n = self.size
        rows, cols = np.nonzero(self.nbr >= 0)
        adj = sp.csr_matrix((np.ones(len(rows)), (rows, self.nbr[rows, cols])), shape=(n + 1, n + 1))
        feeds = np.flatnonzero((self.nbr == TARGET).any(axis=1))
        if not feeds.size:
            raise ValueError("target is not adjacent to any interior site")
        adj = adj + sp.csr_matrix((np.ones(feeds.size), (feeds, np.full(feeds.size, n))), shape=(n + 1, n + 1))
        ncomp, labels = connected_components(adj, directed=False)
        if ncomp > 1 and (labels[:n] != labels[n]).any():
            raise ValueError("disconnected graph: some sites cannot reach the target")


def graph_from_points(points, target, steps=NEIGHBOUR_STEPS) -> WalkGraph:
    """Generic graph: listed points are interior, everything else absorbing."""
    pts = [tuple(p) for p in points if tuple(p) != tuple(target)]
    index = {p: k for k, p in enumerate(pts)}
    nbr = np.full((len(pts), len(steps)), ABSORB, dtype=np.int64)
    for k, p in enumerate(pts):
        for d, s in enumerate(steps):
            q = _add(p, s)
            nbr[k, d] = TARGET if q == tuple(target) else index.get(q, ABSORB)
    arr = np.array(pts, dtype=np.int64).reshape(-1, 2)
    return WalkGraph(arr, nbr, tuple(target), index.get)


def slit_lattice(radius: float) -> WalkGraph:
    """Walk points within ``radius`` (half-units) minus the negative-axis slit.

    Walk points (X, Y) are indexed by a = (X+Y)/4, b = (Y-X)/4, in which the
    diagonal steps become the axis steps of Z^2.
    """
    K = int(radius / (2 * math.sqrt(2))) + 1
    a, b = np.meshgrid(np.arange(-K, K + 1), np.arange(-K, K + 1), indexing="ij")
    X, Y = 2 * (a - b), 2 * (a + b)
    inside = X * X + Y * Y <= radius * radius
    slit = (Y == 0) & (X < 0)
    target = (X == 0) & (Y == 0)
    interior = inside & ~slit & ~target
    grid = np.full(a.shape, ABSORB, dtype=np.int64)
    grid[interior] = np.arange(int(interior.sum()))
    grid[target] = TARGET
    ia, ib = np.nonzero(interior)
    pad = np.pad(grid, 1, constant_values=ABSORB)
    # NEIGHBOUR_STEPS order: (2,2) a+1, (-2,2) b+1, (-2,-2) a-1, (2,-2) b-1
    nbr = np.stack([pad[ia + 2, ib + 1], pad[ia + 1, ib + 2], pad[ia, ib + 1], pad[ia + 1, ib]], axis=1)
    points = np.stack([X[ia, ib], Y[ia, ib]], axis=1)

    def lookup(p):
        X0, Y0 = p
        if (X0 + Y0) % 4 or (Y0 - X0) % 4:
            return None
        i, j = (X0 + Y0) // 4 + K, (Y0 - X0) // 4 + K
        if not (0 <= i < grid.shape[0] and 0 <= j < grid.shape[1]):
            return None
        k = grid[i, j]
        return int(k) if k >= 0 else None

    return WalkGraph(points, nbr, (0, 0), lookup, radius)


@dataclass
class HarmonicMeasureField:
    """Massive harmonic measure of the target seen from each interior site."""

    graph: WalkGraph
    walk: KilledWalkParams
    values: np.ndarray

    def __call__(self, p) -> float:
        p = tuple(p)
        if p == self.graph.target:
            return 1.0
        k = self.graph.index(p)
        return 0.0 if k is None else float(self.values[k])


DIRECT_LIMIT = 250_000


def hm_solve(graph: WalkGraph, walk: KilledWalkParams, tol: float = 1e-14) -> HarmonicMeasureField:
    """Solve (1 + q) u = mean of neighbours, with u = 1 at target and 0 elsewhere outside.

    Sites outside a truncated graph are absorbing, which costs an error
    exponentially small in the radius once the walk is massive.
    """
    graph.check_connected()
    n = graph.size
    rows, cols = np.nonzero(graph.nbr >= 0)
    adj = sp.csr_matrix((np.full(len(rows), 0.25), (rows, graph.nbr[rows, cols])), shape=(n, n))
    A = (sp.identity(n, format="csr") * (1.0 + walk.q) - adj).tocsc()
    b = 0.25 * (graph.nbr == TARGET).sum(axis=1).astype(float)
    if n <= DIRECT_LIMIT:
        u = spla.spsolve(A, b)
    else:
        u, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=50 * int(math.sqrt(n)) + 10_000)
        if info:
            raise RuntimeError(f"conjugate gradients did not converge (info={info})")
    return HarmonicMeasureField(graph, walk, u)


def hm_montecarlo(graph: WalkGraph, walk: KilledWalkParams, start, n_walks: int,
                  seed: int, block: int = 64):
    """Monte-Carlo estimate of the harmonic measure from ``start``.

    Walk k draws its uniforms from a Philox stream keyed by ``seed`` with
    counter k, so the estimate does not depend on batching or ordering.
    Returns (estimate, standard error).
    """
    if n_walks < 1:
        raise ValueError("n_walks must be >= 1")
    if tuple(start) == graph.target:
        return 1.0, 0.0
    k0 = graph.index(start)
    if k0 is None:
        return 0.0, 0.0
    hits = np.zeros(n_walks)
    gens = [np.random.Generator(np.random.Philox(key=seed, counter=[0, k, 0, 0]))
            for k in range(n_walks)]
    pos = np.full(n_walks, k0, dtype=np.int64)
    alive = np.ones(n_walks, dtype=bool)
    kp = walk.kill_prob
    while alive.any():
        idx = np.flatnonzero(alive)
        u = np.stack([gens[k].random(block) for k in idx])
        for t in range(block):
            if not idx.size:
                break
            ut = u[:, t]
            dead = ut < kp
            d = np.minimum(((ut - kp) / (1.0 - kp) * 4).astype(np.int64), 3)
            nxt = graph.nbr[pos[idx], d]
            hit = (nxt == TARGET) & ~dead
            stop = dead | (nxt < 0)
            hits[idx[hit]] = 1.0
            pos[idx[~stop]] = nxt[~stop]
            alive[idx[stop]] = False
            idx, u = idx[~stop], u[~stop]
    est = float(hits.mean())
    err = float(hits.std(ddof=1) / math.sqrt(n_walks)) if n_walks > 1 else math.nan
    return est, err


# ---------------------------------------------------------------------------
# one-dimensional survival

def gamma_ratio(theta: float) -> float:
    """Geometric weight per two steps of the G-series, tan^2(pi/4 - 2 Theta) > 1 for Theta < 0."""
    return math.tan(math.pi / 4 - 2 * theta) ** 2


def survival_1d(j: int, theta: float) -> float:
    """Probability that the 1D killed walk from -j reaches 0."""
    return gamma_ratio(theta) ** (-j / 2.0)


def survival_1d_montecarlo(j: int, theta: float, n_walks: int, seed: int):
    """1D walk with the same kill law, started at -j and absorbed at 0."""
    k1 = 4 * math.sin(2 * theta) ** 2 / math.cos(4 * theta)
    kill = k1 / (2.0 + k1)
    rng = np.random.Generator(np.random.Philox(key=seed))
    pos = np.full(n_walks, -j, dtype=np.int64)
    hit = np.zeros(n_walks, dtype=bool)
    alive = pos < 0
    hit[~alive] = True
    while alive.any():
        idx = np.flatnonzero(alive)
        u = rng.random(idx.size)
        dead = u < kill
        pos[idx] += np.where(u < kill + (1 - kill) / 2, 1, -1)
        reached = (pos[idx] == 0) & ~dead
        hit[idx[reached]] = True
        alive[idx[dead | reached]] = False
    p = float(hit.mean())
    return p, float(math.sqrt(max(p * (1 - p), 1e-300) / n_walks))


# ---------------------------------------------------------------------------
# one-point spinor from harmonic measure

def sheet0_sqrt(c, delta: float = 1.0) -> complex:
    """Square root of c on sheet 0 of the cover branched at the origin face.

    The argument runs over (0, 2 pi] from the cut on the positive axis, and
    sheet 0 carries -sqrt(r) exp(i arg / 2).
    """
    z = complex(c[0], c[1]) * delta / 2.0
    arg = math.atan2(z.imag, z.real) % (2 * math.pi)
    if arg == 0.0:
        arg = 2 * math.pi
    return -math.sqrt(abs(z)) * cmath.exp(0.5j * arg)


def _sign(x: float, tol: float = 1e-12) -> float:
    return 0.0 if abs(x) < tol else math.copysign(1.0, x)


def one_point_corner(hm: HarmonicMeasureField, c) -> complex:
    """Spinor value at a real or imaginary corner (sheet 0)."""
    s = sheet0_sqrt(c)
    if corner_type_at(c) == "1":
        return _sign(s.real) * hm((c[0] - 3, c[1]))
    return -1j * _sign(s.imag) * hm((1 - c[0], -c[1]))


def corner_type_at(c) -> str:
    """Corner tag from the parity of the neighbouring face."""
    for d, name in (((1, 0), "1"), ((-1, 0), "i"), ((0, -1), "lam"), ((0, 1), "lambar")):
        f = (c[0] + d[0], c[1] + d[1])
        if f[0] % 2 == 0 and f[1] % 2 == 0 and ((f[0] + f[1]) // 2) % 2 == 0:
            return name
    raise ValueError(f"{c} is not a corner")


def _edge_from_corners(pairs, phase: float) -> complex:
    """Solve the two real projection constraints for the complex edge value."""
    rows, rhs = [], []
    for tau, val, s in pairs:
        u = cmath.exp(1j * s * phase) * tau.conjugate()
        rows.append([u.real, -u.imag])
        rhs.append((val / tau).real)
    a, b = np.linalg.solve(np.array(rows), np.array(rhs))
    return complex(a, b)


def default_radius(params: MassParams, factor: float = 12.0) -> float:
    """Truncation radius (physical) of ``factor / |m|``; lattice units when m = 0."""
    if params.Theta == 0:
        raise ValueError("massless walk: give an explicit radius")
    return factor / abs(params.scaling_mass)


def one_point_hm(radius: float, params: MassParams, margin: int = 8) -> HarmonicMeasureField:
    """Harmonic measure on the slit walk lattice covering the disc of ``radius``."""
    if params.Theta != 0 and radius * abs(params.scaling_mass) < 4:
        warnings.warn("truncation radius below 4/|m|; values near the origin may be inaccurate")
    lat = slit_lattice(2 * radius / params.delta + margin)
    return hm_solve(lat, KilledWalkParams.from_params(params))


def one_point_spinor(radius: float, params: MassParams, margin: int = 8) -> FermionField:
    """Full-plane spinor with monodromy at the origin face, from one hm solve.

    Real and imaginary corners are read off the harmonic measure on the slit
    lattice; edges follow from one real and one imaginary neighbour, and the
    diagonal corners from the edges.  Sites are in lattice half-units.
    """
    dom = build_disc_domain(radius / params.delta)
    cover = cover_from_faces(dom, [(0, 0)])
    hm = one_point_hm(radius, params, margin)
    c0 = cover.origin_corner
    corners = {}
    for c in dom.all_corners:
        if c != c0 and corner_type_at(c) in ("1", "i"):
            corners[c] = one_point_corner(hm, c)
    phase = params.phase
    edges = {}
    for e in dom.all_edges:
        pairs = []
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            c = (e[0] + d[0], e[1] + d[1])
            name = corner_type_at(c)
            if name not in ("1", "i"):
                continue
            tau = TAU[name]
            flip = -1 if cover.cross(e, c) else 1
            if c == c0:
                # singular corner: projection -i from above, +i from below
                val = flip * (-1j if e[1] > c[1] else 1j)
            else:
                val = flip * corners.get(c, one_point_corner(hm, c))
            off = _edge_offset(tau)
            sgn = -1 if (c[0] + off[0], c[1] + off[1]) == e else 1
            pairs.append((tau, val, sgn))
        edges[e] = _edge_from_corners(pairs, phase)
    F = FermionField(params, cover, edges)
    fill_corners(F)
    F.corner_values.update(corners)
    return F


def _edge_offset(tau: complex):
    """Half-unit offset from a corner to its e_minus edge."""
    z = -(tau ** -2) * 1j
    return (int(round(z.real)), int(round(z.imag)))


def continuum_one_point(z: complex, m: float) -> complex:
    """exp(2 m |z|) / sqrt(z) on the sheet of ``sheet0_sqrt``."""
    c = (2 * z.real, 2 * z.imag)
    return cmath.exp(2 * m * abs(z)) / sheet0_sqrt(c)


def one_point_profile_error(params: MassParams, r_min: float = 0.5, r_max: float = 1.0,
                            radius: float | None = None, m: float | None = None) -> float:
    """Max over real/imaginary corners in the annulus of the rescaled mismatch.

    Compares (2 delta / pi)^(-1/2) F(c) with the projection of
    exp(2 m r) / sqrt(z) onto the corner line; m defaults to the walk's own
    scaling mass 2 Theta / delta.
    """
    m = params.scaling_mass if m is None else m
    if radius is None:
        if params.Theta == 0:
            raise ValueError("massless walk: give an explicit radius")
        radius = 6.0 / abs(params.scaling_mass)
    hm = one_point_hm(max(radius, 2 * r_max), params)
    d = params.delta
    scale = math.sqrt(2 * d / math.pi)
    n = int(math.ceil(2 * r_max / d)) + 2
    worst = 0.0
    for X in range(-n, n + 1):
        for Y in range(-n, n + 1):
            if (X + Y) % 2 == 0:
                continue  # not a corner
            z = complex(X, Y) * d / 2
            if not r_min <= abs(z) <= r_max:
                continue
            name = corner_type_at((X, Y))
            if name not in ("1", "i"):
                continue
            tau = TAU[name]
            f = continuum_one_point(z, m)
            target = tau * (tau.conjugate() * f).real
            worst = max(worst, abs(one_point_corner(hm, (X, Y)) / scale - target))
    return worst


# ---------------------------------------------------------------------------
# G-spinor

@dataclass
class GSpinor:
    """Weighted row sums G(z) = delta * sum_j Gamma^j F(z - 2 j delta) on real corners.

    Values are stored in the chart where sqrt has positive real part (the
    slit plane with zero values on the negative axis); ``value`` returns the
    sheet-0 lift.  Every row is summed down to the column ``x_min``.
    """

    F: FermionField
    gamma: float
    x_min: int
    values: dict

    def chart(self, z) -> float:
        return self.values.get(z, 0.0)

    def value(self, z, sheet: int = 0) -> float:
        v = _sign(sheet0_sqrt(z).real) * self.chart(z)
        return v if sheet == 0 else -v

    def count(self, z) -> int:
        """Number of terms in the row sum at z."""
        return (z[0] - self.x_min) // 4 + 1


def chart_value(F: FermionField, c) -> float:
    """Real-corner value on the lift where sqrt has positive real part."""
    if not F.has(c):
        return 0.0
    return (_sign(sheet0_sqrt(c).real) * F.value(c)).real


def build_G(F: FermionField, params: MassParams | None = None, x_min: int | None = None,
            rows: int | None = None) -> GSpinor:
    """Row sums of the one-point spinor weighted by Gamma^j.

    The series is cut at column ``x_min`` (half-units, default a quarter of the domain
    radius to the left); the explicit cutoff terms enter ``G_residual``.
    Truncation errors of F are amplified by Gamma^j, so the cutoff column
    stays at a quarter of the domain width.
    """
    params = F.params if params is None else params
    gamma = gamma_ratio(params.Theta)
    xs = [c[0] for c in F.corner_values]
    if x_min is None:
        x_min = min(xs) // 4  # keep the sum well inside the truncated lattice
    ymax = max(abs(c[1]) for c in F.corner_values) if rows is None else 2 * rows
    ymax -= ymax % 2  # real corners sit on even rows
    x_hi = max(xs)
    vals = {}
    for Y in range(-ymax, ymax + 1, 2):
        # real corners in this row: X = 3 + walk X, walk points have X = Y mod 4
        X0 = 3 + Y
        start = x_min + ((X0 - x_min) % 4)
        acc = 0.0
        for X in range(start, x_hi + 1, 4):
            acc = gamma * acc + chart_value(F, (X, Y))  # Horner form of the weighted sum
            vals[(X, Y)] = params.delta * acc
    return GSpinor(F, gamma, x_min, vals)


def G_sites(G: GSpinor, radius: float):
    """Real corners off the slit within ``radius`` (half-units) of the origin."""
    return [z for z in G.values
            if abs(complex(*z)) <= radius and not (z[1] == 0 and z[0] < 3)]


def G_residual(G: GSpinor, z):
    """Massive Laplacian of G at a real corner against the telescoped prediction.

    Returns (laplacian, cutoff terms, telescoped term, residual).  Away from the
    positive axis the prediction is the cutoff contribution alone; on it the
    sum over the slit telescopes to one imaginary-corner value.
    """
    if z[1] == 0 and z[0] < 3:
        raise ValueError("slit sites are boundary points of the G-spinor")
    F, gam, d = G.F, G.gamma, G.F.params.delta
    M2 = F.params.M_H2
    nbs = [_add(z, s) for s in NEIGHBOUR_STEPS]
    lap = sum(G.chart(n) for n in nbs) - (4 + M2) * G.chart(z)
    J = G.count(z)
    cut = 0.0
    for n in nbs:
        aligned = 0.0
        for j in range(J - 1, -1, -1):
            aligned = gam * aligned + chart_value(F, (n[0] - 4 * j, n[1]))
        cut += G.chart(n) - d * aligned
    tele = 0.0
    if z[1] == 0 and z[0] >= 3:
        j0 = (z[0] - 3) // 4
        N = J - 1 - j0
        w = (3 - 4 * N - 2, 0)
        # imaginary corner on the lift where sqrt has positive imaginary part
        fw = -1j if w == F.cover.origin_corner else _sign(sheet0_sqrt(w).imag) * F.value(w)
        tm = math.tan(math.pi / 4 - 2 * F.params.Theta)
        tele = (d * gam ** j0 * (-2j) * gam ** N * tm * fw).real
    return lap, cut, tele, abs(lap - cut - tele)


def G_chart_from_hm(hm: HarmonicMeasureField, params: MassParams, c, x_min: int) -> float:
    """Chart value of G at the real corner c using the hm row directly."""
    gamma = gamma_ratio(params.Theta)
    acc = 0.0
    X = c[0] - 4 * ((c[0] - x_min) // 4)
    while X <= c[0]:
        w = (X - 3, c[1])
        acc = gamma * acc + (0.0 if (w[1] == 0 and w[0] < 0) else hm(w))
        X += 4
    return params.delta * acc


def nearest_real_corner(z: complex, delta: float):
    """Real corner (half-units) closest to the physical point z."""
    X0, Y0 = int(round(2 * z.real / delta)), int(round(2 * z.imag / delta))
    best = None
    for X in range(X0 - 4, X0 + 5):
        for Y in range(Y0 - 4, Y0 + 5):
            if X % 2 == 1 and Y % 2 == 0 and (X - 3 - Y) % 4 == 0:
                d = abs(complex(X, Y) * delta / 2 - z)
                if best is None or d < best[0]:
                    best = (d, (X, Y))
    return best[1]


def G_profile(params: MassParams, points, radius: float | None = None, cut: float | None = None):
    """(2 delta / pi)^(-1/2) G at the real corners nearest to ``points``.

    Returns a list of (corner position, rescaled G, Re sqrt z).  The series is
    cut at the physical abscissa ``-cut`` (default radius / 4).
    """
    m = params.scaling_mass
    radius = 12.0 / abs(m) if radius is None else radius
    cut = radius / 4 if cut is None else cut
    hm = one_point_hm(radius, params)
    d = params.delta
    x_min = -int(2 * cut / d)
    scale = math.sqrt(2 * d / math.pi)
    out = []
    for z in points:
        c = nearest_real_corner(complex(z), d)
        zc = complex(c[0], c[1]) * d / 2
        out.append((zc, G_chart_from_hm(hm, params, c, x_min) / scale, abs(cmath.sqrt(zc).real)))
    return out
