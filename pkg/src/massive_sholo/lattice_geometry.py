"""Rotated square lattice domains and their double covers.

All sites live on the doubled integer lattice: a point ``(X, Y)`` stands for
``(X + iY) * delta / 2``.  Faces and vertices both sit at even-even points
(faces when ``(X + Y) / 2`` is even, vertices when it is odd), corners have
exactly one odd coordinate and edge midpoints have two.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

BETA_C = 0.5 * math.log(1.0 + math.sqrt(2.0))
LAMBDA = complex(math.cos(math.pi / 4), math.sin(math.pi / 4))

# unit offsets in half-units
AXIS = ((2, 0), (0, 2), (-2, 0), (0, -2))
DIAG = ((1, 1), (-1, 1), (-1, -1), (1, -1))

TAU = {"1": 1.0 + 0j, "i": 1j, "lam": LAMBDA, "lambar": LAMBDA.conjugate()}


@dataclass(frozen=True)
class MassParams:
    """Coupled parametrisation of the near-critical regime.

    ``beta = beta_c - m * delta / 2`` and ``exp(2 beta) = cot(pi/8 + Theta)``.
    """

    delta: float
    m: float
    beta: float
    Theta: float
    M: float
    M_H: float

    @classmethod
    def from_beta(cls, beta: float, delta: float = 1.0) -> "MassParams":
        if beta <= 0 or delta <= 0:
            raise ValueError("beta and delta must be positive")
        theta = math.atan(math.exp(-2.0 * beta)) - math.pi / 8
        M = BETA_C - beta
        return cls(delta, 2.0 * M / delta, beta, theta, M, mass_harmonic_coeff(theta))

    @classmethod
    def from_mass(cls, m: float, delta: float) -> "MassParams":
        return cls.from_beta(BETA_C - m * delta / 2.0, delta)

    @classmethod
    def from_theta(cls, theta: float, delta: float = 1.0) -> "MassParams":
        if not -math.pi / 8 < theta < math.pi / 8:
            raise ValueError("Theta must lie in (-pi/8, pi/8)")
        beta = -0.5 * math.log(math.tan(math.pi / 8 + theta))
        return cls.from_beta(beta, delta)

    @classmethod
    def from_scaling_mass(cls, m: float, delta: float) -> "MassParams":
        """Theta = m * delta / 2 exactly, the scaling under which the continuum
        limits carry exp(2 m r).  The ``m`` field still records 2 M / delta,
        which is about sqrt(2) times larger in magnitude."""
        return cls.from_theta(m * delta / 2.0, delta)

    @property
    def scaling_mass(self) -> float:
        """Continuum mass seen by the massive fermion: 2 Theta / delta."""
        return 2.0 * self.Theta / self.delta

    @property
    def phase(self) -> float:
        """Phase entering the s-holomorphicity relations (equal to -Theta)."""
        return -self.Theta

    @property
    def M_H2(self) -> float:
        return 8.0 * math.sin(2 * self.Theta) ** 2 / math.cos(4 * self.Theta)

    @property
    def edge_weight(self) -> float:
        """Normalising factor 1/cos(pi/8 + Theta) carried by edge values."""
        return 1.0 / math.cos(math.pi / 8 + self.Theta)


def mass_harmonic_coeff(theta: float) -> float:
    return 2.0 * math.sin(2 * theta) * math.sqrt(2.0 / math.cos(4 * theta))


def theta_from_beta(beta: float) -> float:
    return math.atan(math.exp(-2.0 * beta)) - math.pi / 8


def site_kind(p) -> str:
    X, Y = p
    xo, yo = X & 1, Y & 1
    if xo and yo:
        return "edge"
    if xo or yo:
        return "corner"
    return "face" if ((X + Y) // 2) % 2 == 0 else "vertex"


def to_complex(p, delta: float = 1.0) -> complex:
    return complex(p[0], p[1]) * delta / 2.0


def corner_type(c, vertex) -> str:
    """Tag of a corner from the direction of its vertex (-1, +1, +i, -i)."""
    d = (vertex[0] - c[0], vertex[1] - c[1])
    return {(-1, 0): "1", (1, 0): "i", (0, 1): "lam", (0, -1): "lambar"}[d]


@dataclass
class DiscreteDomain:
    """Faces, vertices, edges and corners of a lattice domain with boundary data."""

    delta: float
    faces: frozenset
    vertices: frozenset
    edges: dict  # midpoint -> (v1, v2)
    boundary_edges: dict  # midpoint -> (inner vertex, outer vertex)
    boundary_vertices: frozenset
    boundary_faces: frozenset
    corners: dict  # midpoint -> (vertex, face), face interior
    boundary_corners: dict  # midpoint -> (vertex, face), face on the boundary
    nu_out: dict  # boundary edge midpoint -> unit complex
    spec: dict = field(default_factory=dict)

    @cached_property
    def all_edges(self) -> dict:
        out = dict(self.edges)
        out.update(self.boundary_edges)
        return out

    @cached_property
    def all_corners(self) -> dict:
        out = dict(self.corners)
        out.update(self.boundary_corners)
        return out

    def corner_tau(self, c) -> str:
        v, _ = self.all_corners[c]
        return corner_type(c, v)

    def counts(self) -> dict:
        return {
            "faces": len(self.faces),
            "vertices": len(self.vertices),
            "edges": len(self.edges),
            "corners": len(self.corners),
            "boundary_faces": len(self.boundary_faces),
            "boundary_edges": len(self.boundary_edges),
            "boundary_vertices": len(self.boundary_vertices),
            "boundary_corners": len(self.boundary_corners),
        }


def _is_face(p) -> bool:
    return p[0] % 2 == 0 and p[1] % 2 == 0 and ((p[0] + p[1]) // 2) % 2 == 0


def domain_from_faces(faces, delta: float = 1.0, spec: dict | None = None) -> DiscreteDomain:
    """Build all site classes from a set of faces.

    Edges with both endpoints in the vertex set but no adjacent domain face are
    removed by adding the missing faces (closure), so that contours on interior
    edges always separate a domain spin from another spin.
    """
    faces = set(faces)
    if not faces:
        raise ValueError("empty domain")
    for f in faces:
        if not _is_face(f):
            raise ValueError(f"{f} is not a face")
    while True:
        verts = {(f[0] + dx, f[1] + dy) for f in faces for dx, dy in AXIS}
        added = False
        for v in verts:
            for dx, dy in ((1, 1), (1, -1)):
                w = (v[0] + 2 * dx, v[1] + 2 * dy)
                if w not in verts:
                    continue
                mid = (v[0] + dx, v[1] + dy)
                pair = [(mid[0] + 1, mid[1] - 1), (mid[0] - 1, mid[1] + 1)]
                if dx == 1 and dy == -1:
                    pair = [(mid[0] + 1, mid[1] + 1), (mid[0] - 1, mid[1] - 1)]
                adj = [p for p in pair if _is_face(p)]
                if not any(p in faces for p in adj):
                    faces.update(adj)
                    added = True
        if not added:
            break

    edges, bedges, nu = {}, {}, {}
    for v in verts:
        for dx, dy in DIAG:
            w = (v[0] + 2 * dx, v[1] + 2 * dy)
            mid = (v[0] + dx, v[1] + dy)
            if w in verts:
                edges[mid] = tuple(sorted((v, w)))
            else:
                bedges[mid] = (v, w)
                nu[mid] = complex(dx, dy) / math.sqrt(2.0)
    bverts = frozenset(w for _, w in bedges.values())
    bfaces = set()
    corners, bcorners = {}, {}
    for v in verts:
        for dx, dy in AXIS:
            f = (v[0] + dx, v[1] + dy)
            c = (v[0] + dx // 2, v[1] + dy // 2)
            if f in faces:
                corners[c] = (v, f)
            else:
                bfaces.add(f)
                bcorners[c] = (v, f)
    return DiscreteDomain(
        delta=delta,
        faces=frozenset(faces),
        vertices=frozenset(verts),
        edges=edges,
        boundary_edges=bedges,
        boundary_vertices=bverts,
        boundary_faces=frozenset(bfaces),
        corners=corners,
        boundary_corners=bcorners,
        nu_out=nu,
        spec=spec or {},
    )


def rect_faces(width: int, height: int, origin=(0, 0)):
    """Faces ``(1+i)(p + iq)`` for ``0 <= p < width``, ``0 <= q < height``."""
    out = []
    for p in range(width):
        for q in range(height):
            out.append((origin[0] + 2 * (p - q), origin[1] + 2 * (p + q)))
    return out


def build_rect_domain(width: int, height: int, delta: float = 1.0, origin=(0, 0)) -> DiscreteDomain:
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    spec = {"shape": "rect", "dims": [width, height], "delta": delta}
    return domain_from_faces(rect_faces(width, height, origin), delta, spec)


def build_disc_domain(radius: float, delta: float = 1.0, center=(0.0, 0.0)) -> DiscreteDomain:
    """Lattice ball: all faces within ``radius`` (physical length) of ``center``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    rr = radius / delta  # in units of delta
    cx, cy = center[0] / delta, center[1] / delta
    n = int(math.ceil(rr)) + 2
    xs = np.arange(math.floor(cx) - n, math.ceil(cx) + n + 1)
    ys = np.arange(math.floor(cy) - n, math.ceil(cy) + n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    mask = ((gx + gy) % 2 == 0) & ((gx - cx) ** 2 + (gy - cy) ** 2 <= rr * rr)
    faces = [(2 * int(x), 2 * int(y)) for x, y in zip(gx[mask], gy[mask])]
    spec = {"shape": "disc", "radius": radius, "delta": delta, "center": list(center)}
    return domain_from_faces(faces, delta, spec)


def rotate_domain(dom: DiscreteDomain, quarter_turns: int, about=(0, 0)) -> DiscreteDomain:
    """Rotate by ``quarter_turns * 90`` degrees about the lattice point ``about``."""
    k = quarter_turns % 4
    faces = [rotate_point(f, k, about) for f in dom.faces]
    return domain_from_faces(faces, dom.delta)


def rotate_point(p, quarter_turns: int, about=(0, 0)):
    x, y = p[0] - about[0], p[1] - about[1]
    for _ in range(quarter_turns % 4):
        x, y = -y, x
    return (x + about[0], y + about[1])


def snap_to_face(point, delta: float = 1.0):
    """Nearest face (half-units) to a physical point; ties to smaller (X, Y)."""
    x, y = 2 * point[0] / delta, 2 * point[1] / delta
    best = None
    for X in range(int(math.floor(x)) - 4, int(math.ceil(x)) + 5):
        for Y in range(int(math.floor(y)) - 4, int(math.ceil(y)) + 5):
            if not _is_face((X, Y)):
                continue
            d = (X - x) ** 2 + (Y - y) ** 2
            key = (round(d, 12), X, Y)
            if best is None or key < best[0]:
                best = (key, (X, Y))
    return best[1]


# ---------------------------------------------------------------------------
# double cover

def crosses_cut(p, q, branch) -> int:
    """Parity of crossings of segment p->q with the cut of ``branch``.

    The cut is the horizontal ray from the branch face to the right, displaced
    infinitesimally upwards, so sites on the branch row lie below it.
    """
    by = branch[1]
    (px, py), (qx, qy) = p, q
    if py <= by < qy:
        lo, hi = p, q
    elif qy <= by < py:
        lo, hi = q, p
    else:
        return 0
    if lo[1] == by:
        xc = lo[0]
    else:
        t = (by - lo[1]) / (hi[1] - lo[1])
        xc = lo[0] + t * (hi[0] - lo[0])
    if xc == branch[0]:
        raise ValueError("segment passes through a branch face")
    return 1 if xc > branch[0] else 0


@dataclass
class DoubleCover:
    """Two-sheeted cover of ``base`` ramified at ``branch_faces``.

    A lifted site is ``(point, sheet)`` with sheet in {0, 1}; the sheet label of
    a point is relative to the cut system, and ``fixed_origin_lift`` is sheet 0
    of ``a1 + delta/2``.
    """

    base: DiscreteDomain
    branch_faces: list

    @property
    def a1(self):
        return self.branch_faces[0]

    @property
    def origin_corner(self):
        return (self.a1[0] + 1, self.a1[1])

    @property
    def fixed_origin_lift(self):
        return (self.origin_corner, 0)

    def cross(self, p, q) -> int:
        s = 0
        for b in self.branch_faces:
            s ^= crosses_cut(p, q, b)
        return s

    def neighbour_sheet(self, p, sheet: int, q) -> int:
        """Sheet of ``q`` on the lift reached from ``(p, sheet)`` by a straight segment."""
        return sheet ^ self.cross(p, q)


def build_double_cover(dom: DiscreteDomain, branch) -> DoubleCover:
    """Snap physical branch points to faces and build the cover."""
    faces = []
    for b in branch:
        f = snap_to_face(b, dom.delta)
        if f not in dom.faces:
            raise ValueError(f"branch point {b} is outside the domain")
        if f in faces:
            raise ValueError("branch points snap to the same face")
        faces.append(f)
    return DoubleCover(dom, faces)


def cover_from_faces(dom: DiscreteDomain, faces) -> DoubleCover:
    faces = [tuple(f) for f in faces]
    for f in faces:
        if f not in dom.faces:
            raise ValueError(f"{f} is not a domain face")
    if len(set(faces)) != len(faces):
        raise ValueError("coincident branch faces")
    return DoubleCover(dom, faces)


def lift_path(cover: DoubleCover, points, start_sheet: int = 0):
    """Lift a polyline of half-unit points; returns (end sheet, sign).

    The sign is +1 when the lift ends on the sheet it started from (the
    canonical lift relative to the start), -1 otherwise.
    """
    pts = [tuple(p) for p in points]
    for p, q in zip(pts[:-1], pts[1:]):
        if max(abs(p[0] - q[0]), abs(p[1] - q[1])) > 2:
            raise ValueError("disconnected path")
    s = start_sheet
    for p, q in zip(pts[:-1], pts[1:]):
        s ^= cover.cross(p, q)
    return s, (1 if s == start_sheet else -1)


# ---------------------------------------------------------------------------
# JSON domain specs

def domain_from_spec(spec: dict):
    """Domain and cover from ``{shape, dims|radius, delta, branch}``."""
    delta = float(spec.get("delta", 1.0))
    if spec["shape"] == "rect":
        w, h = spec["dims"]
        dom = build_rect_domain(int(w), int(h), delta)
    elif spec["shape"] == "disc":
        dom = build_disc_domain(float(spec["radius"]), delta, tuple(spec.get("center", (0.0, 0.0))))
    else:
        raise ValueError(f"unknown shape {spec['shape']}")
    branch = spec.get("branch", [])
    return dom, build_double_cover(dom, [tuple(b) for b in branch])


def domain_spec_json(spec: dict) -> str:
    return json.dumps(spec, sort_keys=True)
