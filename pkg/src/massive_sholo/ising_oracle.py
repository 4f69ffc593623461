"""Brute-force ground truth on tiny domains.

Low-temperature contour sums, direct Boltzmann sums over spin configurations,
and the contour-sum definition of the massive fermion with its winding, loop
and sheet phases.
"""
from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .lattice_geometry import DIAG, DiscreteDomain, DoubleCover, theta_from_beta

EDGE_CAP = 36


class CapExceeded(ValueError):
    pass


# ---------------------------------------------------------------------------
# contours

def _edge_list(dom: DiscreteDomain):
    return sorted(dom.edges)


def enumerate_contours(dom: DiscreteDomain, cap: int = EDGE_CAP):
    """All even-degree subsets of the interior edges, as frozensets of midpoints.

    Depth-first over the sorted edge list; a vertex's degree parity is checked
    as soon as its last incident edge has been decided.
    """
    edges = _edge_list(dom)
    if len(edges) > cap:
        raise CapExceeded(f"{len(edges)} edges exceed the cap {cap}")
    ends = [dom.edges[e] for e in edges]
    last = {}
    for k, (v, w) in enumerate(ends):
        last[v] = k
        last[w] = k
    closing = [[v for v in ends[k] if last[v] == k] for k in range(len(edges))]
    deg = {v: 0 for v in last}
    chosen = []
    out = []

    def rec(k):
        if k == len(edges):
            out.append(frozenset(chosen))
            return
        v, w = ends[k]
        for take in (0, 1):
            if take:
                deg[v] += 1
                deg[w] += 1
                chosen.append(edges[k])
            if all(deg[u] % 2 == 0 for u in closing[k]):
                rec(k + 1)
            if take:
                deg[v] -= 1
                deg[w] -= 1
                chosen.pop()

    rec(0)
    return out


def face_spin(dom: DiscreteDomain, omega, face) -> int:
    """Spin of ``face`` for the plus-boundary configuration with contours ``omega``.

    Counts contour edges crossed by the chain of faces going down-left to the
    outside of the domain.
    """
    s = 1
    f = face
    while f in dom.faces:
        mid = (f[0] - 1, f[1] - 1)
        if mid in omega:
            s = -s
        f = (f[0] - 2, f[1] - 2)
    return s


def partition_function(dom: DiscreteDomain, beta: float, contours=None) -> float:
    contours = enumerate_contours(dom) if contours is None else contours
    return float(sum(math.exp(-2.0 * beta * len(w)) for w in contours))


def spin_expectation_lowtemp(dom: DiscreteDomain, beta: float, marks, contours=None) -> float:
    for a in marks:
        if a not in dom.faces:
            raise ValueError(f"mark {a} outside the domain")
    contours = enumerate_contours(dom) if contours is None else contours
    num = den = 0.0
    for w in contours:
        wt = math.exp(-2.0 * beta * len(w))
        s = 1
        for a in marks:
            s *= face_spin(dom, w, a)
        num += wt * s
        den += wt
    return num / den


def dual_beta(beta: float) -> float:
    """Kramers-Wannier dual coupling: tanh(beta*) = exp(-2 beta)."""
    return math.atanh(math.exp(-2.0 * beta))


def spin_expectation_direct(dom: DiscreteDomain, beta: float, marks, bc: str = "plus",
                            lattice: str = "primal", cap: int = 20) -> float:
    """Exact E[prod sigma] by summing all 2^N spin configurations.

    ``lattice="primal"``: spins on faces, bonds between faces at distance
    sqrt(2) delta.  ``lattice="dual"``: spins on vertices, bonds along interior
    edges.  ``bc="plus"`` fixes outside neighbours to +1, ``"free"`` drops them.
    ``beta`` is the coupling of the chosen lattice.
    """
    if lattice == "primal":
        sites = sorted(dom.faces)
        steps = [(2, 2), (2, -2), (-2, 2), (-2, -2)]
    elif lattice == "dual":
        sites = sorted(dom.vertices)
        steps = [(2 * dx, 2 * dy) for dx, dy in DIAG]
    else:
        raise ValueError(lattice)
    if bc not in ("plus", "free"):
        raise ValueError(bc)
    n = len(sites)
    if n > cap:
        raise CapExceeded(f"{n} spins exceed the cap {cap}")
    idx = {s: k for k, s in enumerate(sites)}
    for a in marks:
        if a not in idx:
            raise ValueError(f"mark {a} not a site")
    bonds, field = [], np.zeros(n)
    for s, k in idx.items():
        for dx, dy in steps:
            t = (s[0] + dx, s[1] + dy)
            if t in idx:
                if idx[t] > k:
                    bonds.append((k, idx[t]))
            elif bc == "plus":
                field[k] += 1.0
    conf = ((np.arange(2 ** n, dtype=np.int64)[:, None] >> np.arange(n)) & 1).astype(np.int8)
    sig = 1 - 2 * conf.astype(np.int8)
    energy = sig.astype(float) @ field
    for i, j in bonds:
        energy += sig[:, i] * sig[:, j]
    energy *= beta
    w = np.exp(energy - energy.max())
    obs = np.ones(len(w))
    for a in marks:
        obs = obs * sig[:, idx[a]]
    return float(np.dot(w, obs) / w.sum())


# ---------------------------------------------------------------------------
# fermion phases

@dataclass(frozen=True)
class PathPhase:
    wind: float
    loops_parity: int
    sheet: int

    @property
    def phi(self) -> complex:
        return cmath.exp(-0.5j * self.wind) * self.loops_parity * self.sheet


def _dir8(p, q) -> int:
    dx, dy = q[0] - p[0], q[1] - p[1]
    return int(round(math.atan2(dy, dx) / (math.pi / 4))) % 8


def _half(p, q):
    return (p, q) if p <= q else (q, p)


def edge_halves(dom: DiscreteDomain, mid):
    v, w = dom.all_edges[mid]
    return [_half(v, mid), _half(mid, w)]


def _vertex_route(dom: DiscreteDomain, start, goal):
    """Deterministic shortest vertex path along interior edges (BFS)."""
    adj = {}
    for mid, (v, w) in sorted(dom.edges.items()):
        adj.setdefault(v, []).append((w, mid))
        adj.setdefault(w, []).append((v, mid))
    prev = {start: None}
    dq = deque([start])
    while dq:
        v = dq.popleft()
        if v == goal:
            break
        for w, mid in sorted(adj.get(v, [])):
            if w not in prev:
                prev[w] = (v, mid)
                dq.append(w)
    if goal not in prev:
        raise ValueError("target not connected to a1")
    route = []
    v = goal
    while prev[v] is not None:
        u, mid = prev[v]
        route.append((u, mid, v))
        v = u
    return route[::-1]


def site_vertex(dom: DiscreteDomain, z):
    """The vertex from which the reference path reaches site ``z``."""
    if z in dom.corners or z in dom.boundary_corners:
        return dom.all_corners[z][0]
    if z in dom.boundary_edges:
        return dom.boundary_edges[z][0]
    if z in dom.edges:
        return dom.edges[z][0]
    raise ValueError(f"{z} is not an edge or corner of the domain")


def reference_path(cover: DoubleCover, z):
    """Half-edges of the fixed path gamma_0 from a1 + delta/2 to z."""
    dom = cover.base
    c0 = cover.origin_corner
    v0 = (c0[0] + 1, c0[1])
    vz = site_vertex(dom, z)
    route = _vertex_route(dom, v0, vz)
    if route and route[-1][1] == z:
        route = route[:-1]
        vz = route[-1][2] if route else v0
    halves = [_half(c0, v0)]
    for u, mid, v in route:
        halves += [_half(u, mid), _half(mid, v)]
    halves.append(_half(vz, z))
    return halves


def path_phase(gamma, cover: DoubleCover, z, z_sheet: int = 0, rule: str = "right"):
    """Phase data of a configuration ``gamma`` (set of half-edges) ending at z.

    The path p(gamma) is extracted by pairing half-edges at each vertex with the
    rightmost (or leftmost) non-crossing turn; the rest are closed loops.
    Returns (PathPhase, number of full edges).
    """
    dom = cover.base
    adj = {}
    for p, q in gamma:
        adj.setdefault(p, set()).add(q)
        adj.setdefault(q, set()).add(p)
    c0 = cover.origin_corner
    if len(adj.get(c0, ())) != 1 or len(adj.get(z, ())) != 1:
        raise ValueError("gamma does not end at a1 + delta/2 and z")

    def use(p, q):
        adj[p].discard(q)
        adj[q].discard(p)

    node = c0
    nxt = next(iter(adj[c0]))
    use(node, nxt)
    dirs = [_dir8(node, nxt)]
    sheet = cover.cross(node, nxt)
    prev, node = node, nxt
    while node != z:
        cands = adj[node]
        if not cands:
            raise ValueError("undecomposable configuration")
        if len(cands) == 1:
            nxt = next(iter(cands))
        else:
            back = _dir8(node, prev)
            if rule == "right":
                nxt = min(cands, key=lambda q: (_dir8(node, q) - back) % 8)
            else:
                nxt = min(cands, key=lambda q: (back - _dir8(node, q)) % 8)
        use(node, nxt)
        dirs.append(_dir8(node, nxt))
        sheet ^= cover.cross(node, nxt)
        prev, node = node, nxt
    turns = 0
    for d0, d1 in zip(dirs[:-1], dirs[1:]):
        t = (d1 - d0) % 8
        if t > 4:
            t -= 8
        if t == 4:
            raise ValueError("path reverses")
        turns += t
    rest = set()
    for p, qs in adj.items():
        for q in qs:
            if p[0] & 1 and p[1] & 1:  # edge midpoint
                rest.add(p)
            elif q[0] & 1 and q[1] & 1:
                rest.add(q)
    loops = 1
    for a in cover.branch_faces:
        loops *= face_spin(dom, rest, a)
    nfull = _count_full(gamma)
    ph = PathPhase(wind=turns * math.pi / 4, loops_parity=loops, sheet=1 if sheet == z_sheet else -1)
    return ph, nfull


def _count_full(gamma) -> int:
    seen = {}
    for p, q in gamma:
        if p[0] & 1 and p[1] & 1:
            mid = p
        elif q[0] & 1 and q[1] & 1:
            mid = q
        else:  # corner stub, not part of an edge
            continue
        seen[mid] = seen.get(mid, 0) + 1
    return sum(1 for c in seen.values() if c == 2)


class ContourFermion:
    """Precomputed contour data for the fermion on a fixed cover.

    The phases do not depend on beta, so one enumeration serves many
    temperatures.
    """

    def __init__(self, cover: DoubleCover, contours=None):
        self.cover = cover
        self.dom = cover.base
        self.contours = enumerate_contours(self.dom) if contours is None else contours
        self.sizes = np.array([len(w) for w in self.contours])
        signs = np.ones(len(self.contours))
        for k, w in enumerate(self.contours):
            for a in cover.branch_faces:
                signs[k] *= face_spin(self.dom, w, a)
        self.signs = signs
        self._terms = {}
        self._halves = [set(h for e in w for h in edge_halves(self.dom, e)) for w in self.contours]

    def terms(self, z, rule: str = "right"):
        key = (z, rule)
        if key not in self._terms:
            g0 = set(reference_path(self.cover, z))
            nf = np.empty(len(self.contours))
            ph = np.empty(len(self.contours), dtype=complex)
            for k, hw in enumerate(self._halves):
                p, n = path_phase(g0 ^ hw, self.cover, z, 0, rule)
                nf[k] = n
                ph[k] = p.phi
            self._terms[key] = (nf, ph)
        return self._terms[key]

    def value(self, beta: float, z, sheet: int = 0, rule: str = "right") -> complex:
        if z == self.cover.origin_corner:
            raise ValueError("singular corner")
        nf, ph = self.terms(z, rule)
        theta = theta_from_beta(beta)
        cz = 1.0 / math.cos(math.pi / 8 + theta) if (z[0] & 1 and z[1] & 1) else 1.0
        zs = np.dot(np.exp(-2.0 * beta * self.sizes), self.signs)
        val = cz * np.dot(np.exp(-2.0 * beta * nf), ph) / zs
        return complex(val) * (1 if sheet == 0 else -1)

    def sites(self):
        c0 = self.cover.origin_corner
        out = sorted(self.dom.all_edges) + sorted(c for c in self.dom.all_corners if c != c0)
        return out


def fermion_contour_sum(cover: DoubleCover, beta: float, z, sheet: int = 0) -> complex:
    return ContourFermion(cover).value(beta, z, sheet)
