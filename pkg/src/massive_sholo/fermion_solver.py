"""Sparse solver for the discrete massive fermion and its identity residuals.

Unknowns are the edge values on one lift of every edge; the other lift
carries the opposite sign.  Corner values follow from the s-holomorphicity
projections.  All relations use the phase ``params.phase`` (see
``MassParams.phase``).
"""
from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice_geometry import TAU, DoubleCover, MassParams

DENSE_LIMIT = 800


def _offset(z: complex):
    return (int(round(z.real)), int(round(z.imag)))


def corner_edges(c, tau: complex):
    """Edges (e_minus, e_plus) = c -/+ tau^-2 i delta/2, in half-units."""
    off = _offset(-(tau ** -2) * 1j)
    return (c[0] + off[0], c[1] + off[1]), (c[0] - off[0], c[1] - off[1])


@dataclass
class FermionField:
    """Spinor values on edges and corners of a double cover (sheet-0 lifts)."""

    params: MassParams
    cover: DoubleCover
    edge_values: dict
    corner_values: dict = field(default_factory=dict)
    solve_residual: float = 0.0
    singular_sq: float = 1.0  # |F|^2 assigned to the singular corner

    def value(self, z, sheet: int = 0) -> complex:
        v = self.edge_values.get(z)
        if v is None:
            v = self.corner_values[z]
        return v if sheet == 0 else -v

    def near(self, p, sheet_p: int, q) -> complex:
        """Value at q on the lift joined to (p, sheet_p) by a straight segment."""
        return self.value(q, sheet_p ^ self.cover.cross(p, q))

    def has(self, z) -> bool:
        return z in self.edge_values or z in self.corner_values

    def scaled(self, factor: float) -> "FermionField":
        return FermionField(self.params, self.cover,
                            {k: factor * v for k, v in self.edge_values.items()},
                            {k: factor * v for k, v in self.corner_values.items()},
                            self.solve_residual, factor * factor * self.singular_sq)


def corner_value_from_edges(F: FermionField, c):
    dom = F.cover.base
    tau = TAU[dom.corner_tau(c)]
    em, _ = corner_edges(c, tau)
    x = F.near(c, 0, em)
    th = F.params.phase
    return tau * (np.exp(-1j * th) * np.conj(tau) * x).real


def fill_corners(F: FermionField) -> FermionField:
    dom = F.cover.base
    c0 = F.cover.origin_corner
    F.corner_values = {c: corner_value_from_edges(F, c) for c in dom.all_corners if c != c0}
    return F


def assemble_system(cover: DoubleCover, params: MassParams):
    """Real linear system A x = b of the s-holomorphic boundary value problem.

    Returns (A, b, edges, cols, basis) where ``cols[k]`` is the first column of
    edge k, and ``basis[k]`` the complex unit spanning a boundary edge's line
    (None for interior edges).
    """
    dom = cover.base
    th = params.phase
    edges = sorted(dom.all_edges)
    index = {e: k for k, e in enumerate(edges)}
    cols, basis = [], []
    n = 0
    for e in edges:
        cols.append(n)
        if e in dom.boundary_edges:
            basis.append(1.0 / np.sqrt(dom.nu_out[e]))
            n += 1
        else:
            basis.append(None)
            n += 2
    rows, cidx, vals, rhs = [], [], [], []

    def put(r, e, alpha):
        # adds Re(alpha * F(e)) to row r
        k = index[e]
        if basis[k] is None:
            rows.extend((r, r))
            cidx.extend((cols[k], cols[k] + 1))
            vals.extend((alpha.real, -alpha.imag))
        else:
            rows.append(r)
            cidx.append(cols[k])
            vals.append((alpha * basis[k]).real)

    r = 0
    c0 = cover.origin_corner
    em_ph = np.exp(-1j * th)
    ep_ph = np.exp(1j * th)
    for c in sorted(dom.all_corners):
        tau = TAU[dom.corner_tau(c)]
        em, ep = corner_edges(c, tau)
        sm = -1.0 if cover.cross(c, em) else 1.0
        spl = -1.0 if cover.cross(c, ep) else 1.0
        if c == c0:
            put(r, em, sm * em_ph * np.conj(tau))
            rhs.append(-1.0)
            r += 1
            put(r, ep, spl * ep_ph * np.conj(tau))
            rhs.append(1.0)
            r += 1
        else:
            put(r, em, sm * em_ph * np.conj(tau))
            put(r, ep, -spl * ep_ph * np.conj(tau))
            rhs.append(0.0)
            r += 1
    A = sp.csr_matrix((vals, (rows, cidx)), shape=(r, n))
    return A, np.array(rhs), edges, cols, basis


def solve_fermion(cover: DoubleCover, params: MassParams, method: str = "auto") -> FermionField:
    """Solve the massive s-holomorphic problem with the singularity at a1 + delta/2.

    The system has one more equation than unknowns and is consistent; small
    systems use dense least squares, large ones a sparse direct solve of the
    augmented least-squares system.  The residual is recorded on the result.
    """
    if not cover.branch_faces:
        raise ValueError("need at least one branch face")
    A, b, edges, cols, basis = assemble_system(cover, params)
    n = A.shape[1]
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "sparse"
    if method == "dense":
        x = np.linalg.lstsq(A.toarray(), b, rcond=None)[0]
    else:
        # augmented system [[I, A], [A^T, 0]] [r; x] = [b; 0]: square, and
        # nonsingular whenever A has full column rank
        m = A.shape[0]
        K = sp.bmat([[sp.identity(m), A], [A.T, None]], format="csc")
        sol = spla.spsolve(K, np.concatenate([b, np.zeros(n)]))
        x = sol[m:]
    res = float(np.abs(A @ x - b).max())
    vals = {}
    for k, e in enumerate(edges):
        if basis[k] is None:
            vals[e] = complex(x[cols[k]], x[cols[k] + 1])
        else:
            vals[e] = complex(x[cols[k]] * basis[k])
    F = FermionField(params, cover, vals, {}, res)
    return fill_corners(F)



# ---------------------------------------------------------------------------
# residual operators

CORNER_STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1))
EDGE_STEPS = ((1, 1), (-1, 1), (-1, -1), (1, -1))  # i^m e^{i pi/4} delta/sqrt2
NEIGHBOUR_STEPS = ((2, 2), (-2, 2), (-2, -2), (2, -2))


def _add(p, d, k: int = 1):
    return (p[0] + k * d[0], p[1] + k * d[1])


def _proj(x: complex, line: complex) -> complex:
    """Orthogonal projection of x onto the real line spanned by ``line``."""
    u = line / abs(line)
    return u * (np.conj(u) * x).real


def residual_sholo(F: FermionField, c) -> float:
    """Mismatch of the two phase-rotated edge projections at a regular corner."""
    dom = F.cover.base
    tau = TAU[dom.corner_tau(c)]
    em, ep = corner_edges(c, tau)
    th = F.params.phase
    left = np.exp(-1j * th) * _proj(F.near(c, 0, em), np.exp(1j * th) * tau)
    right = np.exp(1j * th) * _proj(F.near(c, 0, ep), np.exp(-1j * th) * tau)
    return float(abs(left - right))


def singularity_values(F: FermionField):
    """The two projections at the singular corner, re-extracted from its edges.

    Returns (upper, lower), which should equal (-i, +i).
    """
    c0 = F.cover.origin_corner
    th = F.params.phase
    up, dn = corner_edges(c0, 1j)
    upper = np.exp(-1j * th) * _proj(F.near(c0, 0, up), np.exp(1j * th) * 1j)
    lower = np.exp(1j * th) * _proj(F.near(c0, 0, dn), np.exp(-1j * th) * 1j)
    return complex(upper), complex(lower)


def monodromy_corners(cover: DoubleCover) -> set:
    """Real/imaginary corners whose diagonal plaquette winds around a monodromy.

    The singularity at a1 + delta/2 moves the monodromy of a1 to the vertex
    a1 + delta, so the excluded corners are a1 + 3delta/2 and a_j +- delta/2
    for the other branch faces, plus the singular corner itself.
    """
    a1 = cover.a1
    out = {cover.origin_corner, (a1[0] + 3, a1[1])}
    for a in cover.branch_faces[1:]:
        out.update({(a[0] + 1, a[1]), (a[0] - 1, a[1])})
    return out


def _mdhol_sites(c, tau_name: str):
    """(r+, r-, i+, i-) around a lambda or lambda-bar corner."""
    if tau_name == "lam":
        return _add(c, (1, 1)), _add(c, (-1, -1)), _add(c, (-1, 1)), _add(c, (1, -1))
    if tau_name == "lambar":
        return _add(c, (-1, 1)), _add(c, (1, -1)), _add(c, (1, 1)), _add(c, (-1, -1))
    raise ValueError("mdhol needs a lambda or lambda-bar corner")


def residual_mdhol(F: FermionField, c) -> float:
    """Residual of the massive discrete Cauchy-Riemann relation at a diagonal corner.

    The weights cos(pi/4 -+ 2 Theta) use the cot-convention ``Theta`` (=-phase).
    """
    dom = F.cover.base
    name = dom.corner_tau(c)
    rp, rm, ip, im = _mdhol_sites(c, name)
    th = F.params.Theta
    cp, cm = math.cos(math.pi / 4 + 2 * th), math.cos(math.pi / 4 - 2 * th)
    g = lambda q: F.near(c, 0, q)  # noqa: E731
    if name == "lam":
        r = cp * g(rp) - cm * g(rm) + 1j * (cp * g(ip) - cm * g(im))
    else:
        r = cm * g(ip) - cp * g(im) + 1j * (cm * g(rp) - cp * g(rm))
    return float(abs(r))


def residual_massive_harmonic(F: FermionField, c) -> float:
    """|Laplacian(F)(c) - M_H^2 F(c)| over the diagonal neighbours of c."""
    lap = sum(F.near(c, 0, _add(c, s)) for s in NEIGHBOUR_STEPS) - 4 * F.value(c)
    return float(abs(lap - F.params.M_H2 * F.value(c)))


def _sites_with(F: FermionField, c, steps) -> bool:
    c0 = F.cover.origin_corner
    return all(F.has(q) and q != c0 for q in (_add(c, s) for s in steps))


def identity_sites(F: FermionField):
    """Corners on which the mdhol and massive-harmonic residuals are defined.

    Returns (diagonal_corners, axis_corners).
    """
    dom = F.cover.base
    skip = monodromy_corners(F.cover)
    diag, axis = [], []
    for c in sorted(dom.all_corners):
        name = dom.corner_tau(c)
        if name in ("lam", "lambar"):
            if _sites_with(F, c, EDGE_STEPS):
                diag.append(c)
        elif c not in skip and _sites_with(F, c, NEIGHBOUR_STEPS):
            axis.append(c)
    return diag, axis


@dataclass
class SquareIntegral:
    """Discrete Re int F^2 dz: values on faces (incl. boundary) and vertices."""

    h_faces: dict
    h_vertices: dict
    closure_residual: float
    boundary_spread: float


def _corner_sq(F: FermionField, c) -> float:
    if c == F.cover.origin_corner:
        return F.singular_sq  # both prescribed projections have modulus one
    return abs(F.value(c)) ** 2


def build_square_integral(F: FermionField, tol: float = 1e-10) -> SquareIntegral:
    """Integrate h(f) - h(v) = 2 delta |F(c)|^2 over the face/vertex graph.

    Traversal is breadth first from the smallest boundary face.  Every
    increment not used by the spanning tree is a loop-closure check; the
    boundary faces must come out constant, and that constant is removed.
    """
    dom = F.cover.base
    delta = F.params.delta
    adj = {}
    for c, (v, f) in dom.all_corners.items():
        w = 2 * delta * _corner_sq(F, c)
        adj.setdefault(f, []).append((v, -w))
        adj.setdefault(v, []).append((f, w))
    start = min(dom.boundary_faces)
    h = {start: 0.0}
    dq = deque([start])
    while dq:
        x = dq.popleft()
        for y, inc in adj[x]:
            if y not in h:
                h[y] = h[x] + inc
                dq.append(y)
    scale = max(1e-300, max(abs(v) for v in h.values()))
    closure = 0.0
    for x, nbrs in adj.items():
        for y, inc in nbrs:
            closure = max(closure, abs(h[y] - h[x] - inc))
    bvals = [h[f] for f in dom.boundary_faces]
    spread = max(bvals) - min(bvals)
    if max(closure, spread) > tol * max(1.0, scale):
        raise ValueError(f"square integral not single valued (closure {closure:.3g}, spread {spread:.3g})")
    const = float(np.mean(bvals))
    hf = {f: h[f] - const for f in list(dom.faces) + list(dom.boundary_faces)}
    for f in dom.boundary_faces:
        hf[f] = 0.0
    hv = {v: h[v] - const for v in dom.vertices}
    hv.update({v: 0.0 for v in dom.boundary_vertices})
    return SquareIntegral(hf, hv, closure, spread)


def boundary_normal_derivatives(F: FermionField, H: SquareIntegral) -> dict:
    """Outer normal derivative -h(a_int) per boundary edge, with its predicted value.

    Returns {edge: (measured, 2 cos^2(pi/8 + Theta) delta |F(e)|^2)}.
    """
    dom = F.cover.base
    out = {}
    for e, (inner, _) in dom.boundary_edges.items():
        pred = 2 * F.params.edge_weight ** -2 * F.params.delta * abs(F.value(e)) ** 2
        out[e] = (-H.h_vertices[inner], pred)
    return out


RING = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


def ring_values(F: FermionField, x):
    """Corner and edge values around a face or vertex, continued counterclockwise.

    Returns (corners, edges): corners at x + i^n delta/2 and edges at
    x + i^n e^{i pi/4} delta/sqrt2, n = 0..3.  Around a1 the continuation
    starts at the fixed lift of a1 + delta/2, so the jump sits just below it;
    the singular corner itself is reported as None.
    """
    c0 = F.cover.origin_corner
    sites = [_add(x, s) for s in RING]
    if x in F.cover.branch_faces:
        if x != F.cover.a1:
            raise ValueError("ring around a non-leading branch face is not single valued")
        sheet, prev = 0, sites[0]
    else:
        sheet, prev = F.cover.cross(x, sites[0]), sites[0]
    vals = []
    for q in sites:
        sheet ^= F.cover.cross(prev, q)
        prev = q
        vals.append(None if q == c0 else F.value(q, sheet))
    return vals[0::2], vals[1::2]


def coeff_A_closed(theta: float) -> float:
    """A_Theta exactly as printed next to the squared-spinor identity."""
    return 2 * (math.sqrt(2) * math.cos(math.pi / 4 - 2 * theta) - 1) / (
        math.sqrt(2) * math.cos(theta) ** 2 * math.cos(math.pi / 4 + 2 * theta) ** 2)


def coeff_A(theta: float) -> float:
    """A_Theta that makes the squared-spinor identity exact.

    Same as ``coeff_A_closed`` without the cos^2(Theta) in the denominator
    (derived symbolically from the corner/edge projection relations).
    """
    return 2 * (math.sqrt(2) * math.cos(math.pi / 4 - 2 * theta) - 1) / (
        math.sqrt(2) * math.cos(math.pi / 4 + 2 * theta) ** 2)


def coeff_B(theta: float) -> float:
    return 1.0 / (2 * math.sqrt(2) * math.cos(theta) ** 2)


def boundary_conductance(theta: float) -> float:
    return math.sin(math.pi / 4 - 2 * theta) / math.cos(math.pi / 8 + theta) ** 2


def laplacian_faces(H: SquareIntegral, x) -> float:
    return sum(H.h_faces[_add(x, s)] for s in NEIGHBOUR_STEPS) - 4 * H.h_faces[x]


def laplacian_vertices(H: SquareIntegral, x, theta: float, boundary) -> float:
    cb = boundary_conductance(theta)
    tot = 0.0
    for s in NEIGHBOUR_STEPS:
        y = _add(x, s)
        tot += (cb if y in boundary else 1.0) * (H.h_vertices[y] - H.h_vertices[x])
    return tot


def dbar_conj(edges) -> complex:
    """Discrete Wirtinger derivative of conj(F) from the four ring edges."""
    lam = cmath.exp(0.25j * math.pi)
    return sum((1j ** n) * lam * np.conj(v) for n, v in enumerate(edges))


def laplacian_H_identity(F: FermionField, H: SquareIntegral, x, closed_form: bool = False):
    """(lhs, rhs, residual) of the Laplacian-of-H identity at a face or vertex.

    Faces:    Lap H(x) = 2 sin(pi/4 + 2T) delta [ A_T S + B_T |dbar conj F|^2]
    Vertices: Lap H(x) = 2 sin(pi/4 - 2T) delta [-A_-T S - B_-T |dbar conj F|^2]
    with S the sum of |F|^2 over the four corners of x.  ``closed_form``
    selects the printed A_Theta instead of the exact one.
    """
    dom = F.cover.base
    th = F.params.Theta
    delta = F.params.delta
    A = coeff_A_closed if closed_form else coeff_A
    corners, edges = ring_values(F, x)
    S = sum(F.singular_sq if v is None else abs(v) ** 2 for v in corners)
    D = abs(dbar_conj(edges)) ** 2
    if x in dom.faces:
        lhs = laplacian_faces(H, x)
        rhs = 2 * math.sin(math.pi / 4 + 2 * th) * delta * (A(th) * S + coeff_B(th) * D)
    elif x in dom.vertices:
        lhs = laplacian_vertices(H, x, th, dom.boundary_vertices)
        rhs = -2 * math.sin(math.pi / 4 - 2 * th) * delta * (A(-th) * S + coeff_B(-th) * D)
    else:
        raise ValueError(f"{x} is neither a face nor a vertex of the domain")
    return lhs, rhs, abs(lhs - rhs)


def laplacian_H_sites(cover: DoubleCover):
    """Faces and vertices where the Laplacian-of-H identity applies."""
    dom = cover.base
    a1 = cover.a1
    faces = [f for f in sorted(dom.faces) if f not in cover.branch_faces[1:]]
    verts = [v for v in sorted(dom.vertices) if v != (a1[0] + 2, a1[1])]
    return faces, verts


def greens_balance(F: FermionField, H: SquareIntegral):
    """(sum of vertex Laplacians, conductance * sum of outer normal derivatives)."""
    dom = F.cover.base
    th = F.params.Theta
    lhs = sum(laplacian_vertices(H, v, th, dom.boundary_vertices) for v in dom.vertices)
    flux = sum(-H.h_vertices[inner] for inner, _ in dom.boundary_edges.values())
    return lhs, boundary_conductance(th) * flux


def discrete_L2_diagnostic(F: FermionField):
    """(L2 sum, delta^-1 Lap H(a1 + delta), bound) for the rescaled spinor f.

    L2 = sum over corners away from a1 + delta of delta A_{-T} |f(c)|^2 with
    f = (2 delta / pi)^{-1/2} F; bound = delta^-1 Lap H(a1+delta) / (2 sin(pi/4 - T)).
    """
    dom = F.cover.base
    delta = F.params.delta
    th = F.params.Theta
    scale = (2 * delta / math.pi) ** -0.5
    f = F.scaled(scale)
    H = build_square_integral(f, tol=1e-9)
    a1 = F.cover.a1
    v1 = (a1[0] + 2, a1[1])
    skip = {_add(v1, s) for s in CORNER_STEPS}
    l2 = sum(delta * coeff_A(-th) * _corner_sq(f, c) for c in dom.all_corners if c not in skip)
    lap = laplacian_vertices(H, v1, th, dom.boundary_vertices) / delta
    return l2, lap, lap / (2 * math.sin(math.pi / 4 - th))


def subharmonicity_check(F: FermionField, c, weight: float = 0.25) -> float:
    """Residual of Lap F^2 = (2 M^2 + M^4/4) F^2 + weight * sum_{x<y} (F(x) - F(y))^2.

    Works on the real function F (real corners) or -iF (imaginary corners);
    x, y run over unordered pairs of diagonal neighbours.  weight 1/4 is the
    exact one for a massive harmonic function; 1/2 is the printed one.
    """
    dom = F.cover.base
    rot = 1.0 if dom.corner_tau(c) == "1" else -1j
    g0 = (rot * F.value(c)).real
    nb = [(rot * F.near(c, 0, _add(c, s))).real for s in NEIGHBOUR_STEPS]
    m2 = F.params.M_H2
    lhs = sum(v * v for v in nb) - 4 * g0 * g0
    pairs = sum((nb[i] - nb[j]) ** 2 for i in range(4) for j in range(i + 1, 4))
    return abs(lhs - (2 * m2 + m2 * m2 / 4) * g0 * g0 - weight * pairs)
