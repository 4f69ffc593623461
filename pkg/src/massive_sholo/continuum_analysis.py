"""Massive formal powers, the massive Cauchy extraction and continuum checks.

Spinor evaluations take polar data (r, theta) with theta on [0, 4 pi), so the
sheet is always explicit; ``theta`` and ``theta + 2 pi`` are the two lifts.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

SERIES_CUTOFF = 1e-3


# ---------------------------------------------------------------------------
# modified Bessel functions of half-integer order

def _check_half(nu: float) -> int:
    k = nu - 0.5
    if abs(k - round(k)) > 1e-12:
        raise ValueError(f"order {nu} is not a half-integer")
    return int(round(k))


def bessel_i_series(nu: float, x: float, terms: int = 50) -> float:
    """Power series sum_k (x/2)^(2k+nu) / (k! Gamma(k+nu+1))."""
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0:
        return 1.0 if nu == 0 else (0.0 if nu > 0 else math.inf)
    h = 0.5 * x
    out = []
    for k in range(terms):
        # 1/Gamma has no poles at half-integers
        out.append(math.exp((2 * k + nu) * math.log(h) - math.lgamma(k + 1) - math.lgamma(k + nu + 1))
                   * _gamma_sign(k + nu + 1))
    return math.fsum(out)


def _gamma_sign(a: float) -> float:
    if a > 0:
        return 1.0
    return -1.0 if math.floor(a) % 2 else 1.0


def bessel_i_half(nu: float, x: float) -> float:
    """I_nu(x) for half-integer nu from the elementary closed forms.

    Negative orders recur downwards from I_{1/2}, I_{-1/2} (stable, the
    solutions grow); positive orders use Miller's backward recurrence
    normalised by I_{1/2}.  Small arguments go to the power series.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    k = _check_half(nu)
    if x < SERIES_CUTOFF:
        return bessel_i_series(nu, x)
    c = math.sqrt(2.0 / (math.pi * x))
    i_p, i_m = c * math.sinh(x), c * math.cosh(x)  # I_{1/2}, I_{-1/2}
    if k == 0:
        return i_p
    if k == -1:
        return i_m
    if k < -1:
        # I_{v-1} = I_{v+1} + (2v/x) I_v, from v = -1/2 downwards
        hi, lo = i_p, i_m
        v = -0.5
        while v > nu:
            hi, lo = lo, hi + (2 * v / x) * lo
            v -= 1.0
        return lo
    if x > 2.0 * k:
        # upward recurrence is stable once x exceeds the order
        lo, hi = i_m, i_p
        v = 0.5
        while v < nu:
            lo, hi = hi, lo - (2 * v / x) * hi
            v += 1.0
        return hi
    v = k + 20 + int(x) + 0.5
    above, cur = 0.0, 1e-300  # trial I_{v+1}, I_v
    want = None
    while v > 0.5:
        above, cur = cur, above + (2 * v / x) * cur
        v -= 1.0
        if v == nu:
            want = cur
        if abs(cur) > 1e250:  # rescale against overflow
            above, cur = above * 1e-250, cur * 1e-250
            want = None if want is None else want * 1e-250
    return want * (i_p / cur)


# ---------------------------------------------------------------------------
# formal powers

@dataclass(frozen=True)
class FormalPowerId:
    nu: float
    kind: str  # "1" or "i"
    m: float

    def __post_init__(self):
        if self.kind not in ("1", "i"):
            raise ValueError("kind must be '1' or 'i'")


def _bessel(nu: float, x: float) -> float:
    if abs(nu - round(nu)) < 1e-12:
        from scipy.special import iv  # integer orders, completeness only
        return float(iv(nu, x))
    return bessel_i_half(nu, x)


def _gamma(a: float) -> float:
    return math.gamma(a)


def W(nu: float, m: float, r: float, theta: float) -> complex:
    """W_nu = exp(i nu theta) I_nu(2 |m| r)."""
    return cmath.exp(1j * nu * theta) * _bessel(nu, 2 * abs(m) * r)


def formal_power(nu: float, kind: str, m: float, r: float, theta: float) -> complex:
    """Z_nu^1 or Z_nu^i at polar point (r, theta); theta selects the sheet."""
    if r <= 0:
        raise ValueError("formal powers are evaluated away from the branch point")
    if m == 0:
        z = cmath.exp(1j * nu * theta) * r ** nu
        return z if kind == "1" else 1j * z
    pref = _gamma(nu + 1) / abs(m) ** nu
    s = math.copysign(1.0, m)
    w0 = W(nu, m, r, theta)
    w1 = W(nu + 1, m, r, theta).conjugate()
    if kind == "1":
        return pref * (w0 + s * w1)
    return pref * (1j * w0 - 1j * s * w1)


def formal_power_eval(fid: FormalPowerId, z: complex, sheet: int = 0) -> complex:
    """Z at complex z with arg in [0, 2 pi) on sheet 0, shifted by 2 pi on sheet 1."""
    if z == 0:
        raise ValueError("z = 0 is the branch point")
    theta = math.atan2(z.imag, z.real) % (2 * math.pi) + 2 * math.pi * sheet
    return formal_power(fid.nu, fid.kind, fid.m, abs(z), theta)


def one_point_limit(m: float, r: float, theta: float) -> complex:
    """exp(2 m r) / sqrt(z) with sqrt(z) = sqrt(r) exp(i theta / 2)."""
    return cmath.exp(2 * m * r - 0.5j * theta) / math.sqrt(r)


# ---------------------------------------------------------------------------
# finite differences

def masshol_residual_fd(values: np.ndarray, h: float, m: float) -> float:
    """max |d_zbar f - m conj f| by central differences; values[i, j] = f(x_i, y_j)."""
    f = np.asarray(values, dtype=complex)
    fx = (f[2:, 1:-1] - f[:-2, 1:-1]) / (2 * h)
    fy = (f[1:-1, 2:] - f[1:-1, :-2]) / (2 * h)
    dbar = 0.5 * (fx + 1j * fy)
    return float(np.max(np.abs(dbar - m * np.conj(f[1:-1, 1:-1]))))


def sample_grid(fn, center: complex, half_width: float, h: float) -> np.ndarray:
    """Samples fn(z) on a square grid of spacing h around ``center``."""
    n = int(round(half_width / h))
    xs = center.real + h * np.arange(-n, n + 1)
    ys = center.imag + h * np.arange(-n, n + 1)
    return np.array([[fn(complex(x, y)) for y in ys] for x in xs])


def derivative_identity_residual(nu: float, kind: str, m: float, center: complex,
                                 h: float) -> float:
    """Max mismatch of the x/y derivative identities at ``center`` by central differences.

    d_x Z_nu^1 = nu Z_{nu-1}^1 + m^2/(nu+1) Z_{nu+1}^1,
    d_x Z_nu^i = nu Z_{nu-1}^i + m^2/(nu+1) Z_{nu+1}^i,
    d_y Z_nu^1 = nu Z_{nu-1}^i - m^2/(nu+1) Z_{nu+1}^i,
    d_y Z_nu^i = -nu Z_{nu-1}^1 + m^2/(nu+1) Z_{nu+1}^1.
    The centre must stay off the cut (positive real axis) by more than h.
    """
    def Z(n, k, z):
        return formal_power_eval(FormalPowerId(n, k, m), z)

    dx = (Z(nu, kind, center + h) - Z(nu, kind, center - h)) / (2 * h)
    dy = (Z(nu, kind, center + 1j * h) - Z(nu, kind, center - 1j * h)) / (2 * h)
    c = m * m / (nu + 1)
    px = nu * Z(nu - 1, kind, center) + c * Z(nu + 1, kind, center)
    if kind == "1":
        py = nu * Z(nu - 1, "i", center) - c * Z(nu + 1, "i", center)
    else:
        py = -nu * Z(nu - 1, "1", center) + c * Z(nu + 1, "1", center)
    return max(abs(dx - px), abs(dy - py))


# ---------------------------------------------------------------------------
# circle quadrature and the massive Cauchy formula

def circle_nodes(a: complex, r: float, n: int = 512, theta0: float = 0.0):
    """Nodes, polar angles and dz weights of the trapezoid rule on |z - a| = r."""
    th = theta0 + 2 * np.pi * np.arange(n) / n
    z = a + r * np.exp(1j * th)
    dz = 1j * r * np.exp(1j * th) * (2 * np.pi / n)
    return z, th, dz


def contour_integral(values, dz) -> complex:
    return complex(np.sum(np.asarray(values) * dz))


def _samples(f, a, r, n, theta0):
    z, th, dz = circle_nodes(a, r, n, theta0)
    if callable(f):
        vals = np.array([f(r, t) for t in th])
    else:
        vals = np.asarray(f, dtype=complex)
        if len(vals) != n:
            raise ValueError("sample count does not match node count")
    return vals, th, dz


def massive_cauchy_extract(f, a: complex, r: float, nu: float, kind: str, m: float,
                           n: int = 512, theta0: float = 0.0) -> float:
    """Coefficient of Z_nu^kind(z - a) in f, from one circle of radius r.

    ``f`` is either a callable (r, theta) on the lift theta in [theta0,
    theta0 + 2 pi) or an array of samples at ``circle_nodes`` angles.
    """
    if n < 256:
        raise ValueError("use at least 256 quadrature nodes")
    vals, th, dz = _samples(f, a, r, n, theta0)
    dual = "i" if kind == "1" else "1"
    Z = np.array([formal_power(-1 - nu, dual, m, r, t) for t in th])
    integral = contour_integral(vals * Z, dz).real
    return orthogonality_scale(nu, kind, m) * integral


def orthogonality_constant(nu: float, m: float) -> float:
    """Re of the loop integral of Z_nu^1 Z_{-1-nu}^i.

    The product is i/z plus terms without residue, so the loop gives -2 pi
    whatever nu and m are.
    """
    return -2 * math.pi


def orthogonality_constant_literal(nu: float, m: float) -> float:
    """The commonly quoted closed form -4 |m| nu^2 / pi (does not match the loop)."""
    return -4 * abs(m) * nu * nu / math.pi


def orthogonality_scale(nu: float, kind: str, m: float) -> float:
    """Factor turning the dual loop integral into the coefficient of Z_nu^kind."""
    return 1.0 / orthogonality_constant(nu if kind == "1" else -1 - nu, m)


def cauchy_scale_literal(nu: float, kind: str, m: float) -> float:
    """The extraction prefactors as usually quoted: pi/(4|m|nu^2), -pi/(4|m|(1+nu)^2)."""
    if kind == "1":
        return math.pi / (4 * abs(m) * nu * nu)
    return -math.pi / (4 * abs(m) * (1 + nu) ** 2)


def massive_cauchy_extract_literal(f, a: complex, r: float, nu: float, kind: str, m: float,
                                   n: int = 512, theta0: float = 0.0) -> float:
    """Same loop integral scaled by the quoted prefactors."""
    val = massive_cauchy_extract(f, a, r, nu, kind, m, n, theta0)
    return val * cauchy_scale_literal(nu, kind, m) / orthogonality_scale(nu, kind, m)


def pairing(nu: float, k1: str, nu2: float, k2: str, m: float, r: float, n: int = 512) -> float:
    """Re of the loop integral of Z_nu^k1 Z_nu2^k2 around the origin."""
    _, th, dz = circle_nodes(0j, r, n)
    v = np.array([formal_power(nu, k1, m, r, t) * formal_power(nu2, k2, m, r, t) for t in th])
    return contour_integral(v, dz).real


# ---------------------------------------------------------------------------
# rotation

def rotation_transform(coeffs: dict, phi: float) -> dict:
    """Coefficients {(nu, kind): value} of R_phi f from those of f.

    With R_phi f(z) = f(exp(-i phi) z) exp(-i phi / 2) one has R_phi W_nu =
    exp(-i a) W_nu, a = (nu + 1/2) phi, hence R_phi Z^1 = cos a Z^1 - sin a Z^i
    and R_phi Z^i = cos a Z^i + sin a Z^1.
    """
    out: dict = {}
    for (nu, kind), c in coeffs.items():
        a = (nu + 0.5) * phi
        if kind == "1":
            pairs = (("1", math.cos(a)), ("i", -math.sin(a)))
        else:
            pairs = (("i", math.cos(a)), ("1", math.sin(a)))
        for k, w in pairs:
            out[(nu, k)] = out.get((nu, k), 0.0) + c * w
    return out


def rotate_function(f, phi: float):
    """(R_phi f)(r, theta) = f(r, theta - phi) exp(-i phi / 2)."""
    return lambda r, theta: f(r, theta - phi) * cmath.exp(-0.5j * phi)


def expansion(coeffs: dict, m: float):
    """Callable (r, theta) for sum of coeff * Z_nu^kind."""
    def f(r, theta):
        return sum(c * formal_power(nu, k, m, r, theta) for (nu, k), c in coeffs.items())
    return f


# ---------------------------------------------------------------------------
# boundary value problem checks

@dataclass
class BVPReport:
    boundary_line: float
    green_riemann: float
    loop_real_part: float
    monodromy: list = field(default_factory=list)


def bvp_residual(f, m: float, outer: tuple, inner: list, area: tuple) -> BVPReport:
    """Checks for a candidate continuum fermion.

    outer: (z, dz, nu_out, values) on the outer boundary (counter-clockwise).
    inner: list of (a, r, g) with g(r, theta) the spinor on a lift around a.
    area:  (points, weights, values) sampling the region between them.
    Reports max |Im(sqrt(nu_out) f)| on the boundary, the mismatch of
    loop(f^2 dz) - 4 i m * area(|f|^2) with inner loops subtracted, the real
    part of the outer loop, and the order -1/2 imaginary coefficient at each
    inner point.
    """
    zb, dzb, nub, fb = (np.asarray(v) for v in outer)
    line = float(np.max(np.abs((np.sqrt(nub.astype(complex)) * fb).imag))) if len(fb) else 0.0
    loop = contour_integral(fb ** 2, dzb)
    inner_total = 0j
    mono = []
    for a, r, g in inner:
        vals, th, dz = _samples(g, a, r, 512, 0.0)
        inner_total += contour_integral(vals ** 2, dz)
        mono.append(massive_cauchy_extract(vals, a, r, -0.5, "i", m))
    _, w, fa = (np.asarray(v) for v in area)
    bulk = 4j * m * float(np.sum(w * np.abs(fa) ** 2))
    gr = abs(loop - inner_total - bulk)
    return BVPReport(line, float(gr), abs(loop.real), mono)


def annulus_quadrature(a: complex, r_in: float, r_out: float, n_r: int = 200, n_t: int = 256):
    """Gauss-Legendre in r times trapezoid in theta: (points, weights, radii, angles)."""
    x, wx = np.polynomial.legendre.leggauss(n_r)
    rr = 0.5 * (r_out - r_in) * x + 0.5 * (r_out + r_in)
    wr = 0.5 * (r_out - r_in) * wx * rr
    th = 2 * np.pi * np.arange(n_t) / n_t
    R, T = np.meshgrid(rr, th, indexing="ij")
    W_ = np.outer(wr, np.full(n_t, 2 * np.pi / n_t))
    return (a + R * np.exp(1j * T)).ravel(), W_.ravel(), R.ravel(), T.ravel()


# ---------------------------------------------------------------------------
# the square-root spinor

def sqrt_spinor_limit(z: complex, m: float, lower: float = -math.inf) -> float:
    """(1/2) int_lower^x exp(2 m (x' - x)) Re(exp(2 m r') / sqrt(x' + i y)) dx'.

    The square root is taken with positive real part (slit along the negative
    axis); ``lower`` truncates the integral as the discrete sums are.
    """
    x, y = z.real, abs(z.imag)

    def integrand(xp):
        w = complex(xp, y)
        s = cmath.sqrt(w)
        return math.exp(2 * m * (xp - x) + 2 * m * abs(w)) * (1 / s).real

    pts = [0.0] if (lower < 0 < x) else None
    if lower == -math.inf:
        split = min(x, -1.0)
        tail = quad(integrand, -math.inf, split, limit=400)[0]
        body = quad(integrand, split, x, limit=400, points=pts if split < 0 < x else None)[0] if x > split else 0.0
        return 0.5 * (tail + body)
    return 0.5 * quad(integrand, lower, x, limit=400, points=pts)[0]


@dataclass
class CoefficientSet:
    """Expansion coefficients of a continuum fermion against the fixed formal powers."""

    A1: float = 0.0
    Ai: float = 0.0
    B: float = 0.0
    C1: float = 0.0
    Ci: float = 0.0
    D1: float = 0.0
    Di: float = 0.0
    E1: float = 0.0
    Ei: float = 0.0

    @property
    def reduced(self) -> dict:
        """A0, B0, C0 and h0 = artanh(B0) of the symmetric two-point layout."""
        return {"A0": self.A1, "B0": self.B, "C0": self.Ci,
                "h0": math.atanh(self.B) if abs(self.B) < 1 else math.nan}

    def symmetry_defect(self) -> float:
        """Coefficients forced to vanish by the reality symmetry."""
        return max(abs(self.Ai), abs(self.C1), abs(self.Di), abs(self.E1))
