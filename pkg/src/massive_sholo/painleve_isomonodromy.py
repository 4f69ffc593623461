"""Radial Painlevé III reduction for the full-plane two-point function.

The unknown h0(r), r = a·m < 0, solves h0'' + h0'/r = 4 sinh 4h0 and decays
like lambda·K0(4|r|) as r -> -inf.  The physical branch is the separatrix
between trajectories that stay finite up to r = 0 and those that blow up at
some r < 0; its tail amplitude is found by shooting.

Integration runs in u = ln(-r), where the equation reads
    h_uu = 4 e^{2u} sinh 4h,
and the cumulative integral I(r) = ∫_{-inf}^r s[(h0')² - 4 sinh² 2h0] ds obeys
    dI/du = h_u² - 4 e^{2u} sinh² 2h.
Grids are geometric in r (uniform in u), which resolves both the exponential
far field and the logarithmic growth near r = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import k0, k1

RTOL = 1e-13
BLOWUP_LEVEL = 40.0
BLOWUP_SLOPE = 50.0


def zeta_prime_minus_one() -> float:
    return float(mpmath.zeta(-1, derivative=1))


def short_distance_constant() -> float:
    """𝒞 = 2^{1/6} exp(-3/2 ζ'(-1)); the massless pair is 𝒞²/|2a|^{1/4}."""
    return 2.0 ** (1.0 / 6.0) * math.exp(-1.5 * zeta_prime_minus_one())


def massless_two_point(a: float) -> float:
    return short_distance_constant() ** 2 / abs(2.0 * a) ** 0.25


class PainleveBlowUp(RuntimeError):
    """The trajectory diverged before reaching the requested r."""


# ---------------------------------------------------------------------------
# linearised tail

def linear_tail(lam: float, r: float) -> tuple[float, float]:
    """h = lam K0(4|r|) and its r-derivative 4 lam K1(4|r|)."""
    x = -4.0 * r
    return lam * float(k0(x)), 4.0 * lam * float(k1(x))


def tail_integral(lam: float, r_min: float) -> float:
    """∫_{-inf}^{r_min} s[(h')² - 4 sinh² 2h] ds for the linearised tail, O(lam²).

    With x = 4|s| the integrand becomes lam² x(K1² - K0²)dx/ (-1), and
    x(K1² - K0²) has primitive x²(K1² - K0²) - x K0 K1.
    """
    x = -4.0 * r_min
    a, b = float(k0(x)), float(k1(x))
    return -lam * lam * (x * a * b - x * x * (b * b - a * a))


# ---------------------------------------------------------------------------
# solution container

def _rhs(u: float, y: np.ndarray) -> list[float]:
    h, v, _ = y
    e2u = math.exp(2.0 * u)
    s2 = math.sinh(2.0 * h)
    return [v, 4.0 * e2u * math.sinh(4.0 * h), v * v - 4.0 * e2u * s2 * s2]


@dataclass
class PainleveSolution:
    r_grid: np.ndarray
    h0: np.ndarray
    dh0: np.ndarray
    lambda_asym: float
    integrals: np.ndarray
    tail: float = 0.0
    dense: Callable | None = field(default=None, repr=False)

    @property
    def u_grid(self) -> np.ndarray:
        return np.log(-self.r_grid)

    @property
    def r_min(self) -> float:
        return float(self.r_grid[0])

    @property
    def r_max(self) -> float:
        return float(self.r_grid[-1])

    def contains(self, r: float) -> bool:
        lo, hi = self.r_min, self.r_max
        span = 1e-12 * abs(lo)
        return lo - span <= r <= hi + span * abs(hi) / abs(lo)

    def at(self, r: float) -> tuple[float, float, float]:
        """(h0, h0', I) at an arbitrary r inside the grid."""
        if not self.contains(r):
            raise ValueError(f"r={r} outside [{self.r_min}, {self.r_max}]")
        h, v, integ = self.dense(math.log(-r))
        return float(h), float(v / r), float(integ + self.tail)

    def end_state(self) -> np.ndarray:
        return np.array([self.h0[-1], self.dh0[-1] * self.r_grid[-1],
                         self.integrals[-1] - self.tail])


def geometric_grid(r_min: float, r_max: float, n_nodes: int) -> np.ndarray:
    return -np.exp(np.linspace(math.log(-r_min), math.log(-r_max), n_nodes))


def _blowup_event(u, y):
    return BLOWUP_LEVEL - y[0]


_blowup_event.terminal = True


def _steep_event(u, y):
    # near a pole h_u ~ -1/(2(u - u*)); bounded-energy trajectories never get this steep
    return BLOWUP_SLOPE + y[1]


_steep_event.terminal = True
_BLOWUP_EVENTS = (_blowup_event, _steep_event)


def solve_h0(r_min: float = -12.0, r_max: float = -0.02, n_nodes: int = 4000,
             lambda_asym: float | None = None, rtol: float = RTOL) -> PainleveSolution:
    """Integrate from the linearised tail at r_min up to r_max.

    lambda_asym=None means the physical amplitude from shoot_connection.
    """
    if not r_min < r_max < 0:
        raise ValueError("need r_min < r_max < 0")
    if n_nodes < 5:
        raise ValueError("need at least 5 nodes")
    if lambda_asym is None:
        lambda_asym = shoot_connection(r_min=r_min)
    h_init, dh_init = linear_tail(lambda_asym, r_min)
    if lambda_asym != 0.0 and h_init == 0.0:
        raise ValueError("tail amplitude underflows to zero at r_min")
    r = geometric_grid(r_min, r_max, n_nodes)
    u = np.log(-r)
    y0 = [h_init, r_min * dh_init, 0.0]
    sol = solve_ivp(_rhs, (u[0], u[-1]), y0, method="DOP853", t_eval=u,
                    rtol=rtol, atol=1e-300, dense_output=True, first_step=1e-4,
                    events=_BLOWUP_EVENTS)
    if sol.status == 1 or sol.t.size < u.size:
        where = -math.exp(sol.t[-1]) if sol.t.size else r_min
        raise PainleveBlowUp(f"h0 diverges near r={where:.6g} (lambda too large)")
    if sol.status != 0:
        raise RuntimeError(sol.message)
    h, v, integ = sol.y
    tail = tail_integral(lambda_asym, r_min)
    return PainleveSolution(r_grid=r, h0=h, dh0=v / r, lambda_asym=float(lambda_asym),
                            integrals=integ + tail, tail=tail, dense=sol.sol)


# ---------------------------------------------------------------------------
# shooting

def _liouville_rhs(u, y):
    # w = h + u/2 turns the equation into w_uu = 2e^{4w} - 2e^{4u-4w}
    w, wu = y
    return [wu, 2.0 * math.exp(4.0 * w) - 2.0 * math.exp(4.0 * u - 4.0 * w)]


def _turning_event(u, y):
    return y[1]


_turning_event.terminal = True


def trajectory_energy(lam: float, r_min: float = -12.0, u_switch: float = 0.0,
                      u_end: float = -30.0) -> float:
    """Energy ½w_u² - ½e^{4w} of the trajectory once the e^{4u-4w} term is negligible.

    Positive: h0 ~ -σ/2 ln|r| with σ < 1, finite for all r < 0.
    Negative: w turns around and h0 blows up at some r < 0.
    Zero: the separatrix, h0 ~ -½ ln|r| as r -> 0⁻.
    Returns -inf when the turning point is already reached before u_end.
    """
    h, dh = linear_tail(lam, r_min)
    first = solve_ivp(lambda u, y: _rhs(u, (y[0], y[1], 0.0))[:2],
                      (math.log(-r_min), u_switch), [h, r_min * dh],
                      method="DOP853", rtol=RTOL, atol=1e-300, first_step=1e-4,
                      events=_BLOWUP_EVENTS)
    if first.status == 1:
        return -math.inf
    h, v = first.y[:, -1]
    second = solve_ivp(_liouville_rhs, (u_switch, u_end), [h + 0.5 * u_switch, v + 0.5],
                       method="DOP853", rtol=RTOL, atol=1e-14, events=_turning_event)
    if second.status == 1:
        return -math.inf
    w, wu = second.y[:, -1]
    return 0.5 * wu * wu - 0.5 * math.exp(4.0 * w)


def classify_trajectory(lam: float, r_min: float = -12.0) -> str:
    return "blows_up" if trajectory_energy(lam, r_min) < 0 else "decays"


def shoot_connection(target: str = "B0_to_1", bracket: tuple[float, float] | None = None,
                     tol: float = 1e-10, r_min: float = -12.0,
                     scan: Sequence[float] | None = None) -> float:
    """Tail amplitude of the trajectory with h0 -> inf exactly at r = 0⁻ (so tanh h0 -> 1)."""
    if target != "B0_to_1":
        raise ValueError(f"unknown target {target!r}")
    if bracket is None:
        grid = list(scan) if scan is not None else [0.05 * k for k in range(21)]
        labels = [classify_trajectory(x, r_min) for x in grid]
        flips = [i for i in range(len(grid) - 1) if labels[i] != labels[i + 1]]
        if not flips:
            raise ValueError("no sign change in the scanned bracket")
        if len(flips) > 1:
            raise ValueError("classifier flips more than once in the scan")
        lo, hi = grid[flips[0]], grid[flips[0] + 1]
    else:
        lo, hi = bracket
    if classify_trajectory(lo, r_min) != "decays" or classify_trajectory(hi, r_min) != "blows_up":
        raise ValueError("no sign change in bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if classify_trajectory(mid, r_min) == "decays":
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# two-point functions

def short_distance_offset(sol: PainleveSolution, u_far: float = -40.0,
                          check: float = 1e-9) -> float:
    """lim_{r->0⁻} [ln cosh h0 + I + ¼ ln|r|], continued from the end of the grid."""
    u0 = math.log(-sol.r_max)
    probe = [u_far + 4.0, u_far]
    res = solve_ivp(_rhs, (u0, u_far), sol.end_state(), method="DOP853",
                    rtol=RTOL, atol=1e-14, t_eval=probe, events=_BLOWUP_EVENTS)
    if res.status != 0 or res.t.size < 2:
        raise PainleveBlowUp("trajectory is not the separatrix (blows up before r=0)")
    vals = []
    for u, (h, _, integ) in zip(res.t, res.y.T):
        lcosh = h + math.log1p(math.exp(-2.0 * h)) - math.log(2.0)
        vals.append(lcosh + integ + sol.tail + 0.25 * u)
    if abs(vals[1] - vals[0]) > check:
        raise ValueError("short-distance limit has not converged (not the separatrix?)")
    return vals[1]


@dataclass
class TwoPointValue:
    a: float
    m: float
    plus_value: float
    free_value: float
    cst: float
    offset: float

    @property
    def massless(self) -> float:
        return massless_two_point(self.a)

    @property
    def normalised(self) -> float:
        """plus_value·|2a|^{1/4}/𝒞², tends to 1 as a -> 0."""
        return self.plus_value / self.massless


def two_point(a: float, m: float, sol: PainleveSolution,
              offset: float | None = None) -> TwoPointValue:
    if a <= 0 or m >= 0:
        raise ValueError("need a > 0 and m < 0")
    r = a * m
    if not sol.contains(r):
        raise ValueError(f"a·m={r} outside the solution grid")
    if offset is None:
        offset = short_distance_offset(sol)
    h, _, integ = sol.at(r)
    cst = short_distance_constant() ** 2 * (abs(m) / 2.0) ** 0.25 * math.exp(-offset)
    scale = cst * math.exp(integ)
    return TwoPointValue(a=a, m=m, plus_value=scale * math.cosh(h),
                         free_value=scale * math.sinh(h), cst=cst, offset=offset)


def log_two_point_derivative(sol: PainleveSolution, r: float) -> float:
    """d/dr ln<r> = (ln cosh h0)' + r[(h0')² - 4 sinh² 2h0]."""
    h, dh, _ = sol.at(r)
    return math.tanh(h) * dh + r * (dh * dh - 4.0 * math.sinh(2.0 * h) ** 2)


def log_derivative_A(sol: PainleveSolution, r: float) -> float:
    h, dh, _ = sol.at(r)
    return A0_from_h(r, h, dh)


def A0_from_h(r, h, dh):
    return -0.5 * np.tanh(h) * dh - r * (0.5 * dh * dh - 2.0 * np.sinh(2.0 * h) ** 2)


def coefficients_from_h(r, h, dh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """A0, B0 = tanh h0, and C0 = ½B0' - A0B0 (from the first equation)."""
    B = np.tanh(h)
    A = A0_from_h(r, h, dh)
    C = 0.5 * dh * (1.0 - B * B) - A * B
    return A, B, C


# ---------------------------------------------------------------------------
# grid derivatives

def _grid_kind(r: np.ndarray) -> tuple[str, float]:
    r = np.asarray(r, dtype=float)
    d = np.diff(r)
    if np.allclose(d, d[0], rtol=1e-9, atol=0):
        return "uniform", float(d[0])
    if np.all(r < 0):
        du = np.diff(np.log(-r))
        if np.allclose(du, du[0], rtol=1e-9, atol=0):
            return "geometric", float(du[0])
    raise ValueError("grid must be uniform in r or in ln(-r)")


def _central5(f: np.ndarray, step: float, stride: int = 1) -> np.ndarray:
    s = stride
    out = np.full(f.shape, np.nan)
    out[2 * s:-2 * s] = (-f[4 * s:] + 8 * f[3 * s:-s] - 8 * f[s:-3 * s] + f[:-4 * s]) / (12 * s * step)
    return out


def grid_derivative(r: np.ndarray, f: np.ndarray, max_error: float | None = None) -> np.ndarray:
    """Fourth-order d/dr on a uniform or geometric grid; NaN at the two end nodes each side.

    With max_error set, the step-halving estimate |D_h - D_2h|/15 is compared
    against it and ValueError is raised if the grid is too coarse.
    """
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    kind, step = _grid_kind(r)
    jac = r if kind == "geometric" else np.ones_like(r)
    d1 = _central5(f, step) / jac
    if max_error is not None:
        d2 = _central5(f, step, 2) / jac
        est = np.abs(d1 - d2) / 15.0
        if np.nanmax(est) > max_error:
            raise ValueError(f"grid too coarse: derivative error estimate {np.nanmax(est):.2e}")
    return d1


# ---------------------------------------------------------------------------
# residuals

def ode_residual(sol: PainleveSolution) -> np.ndarray:
    """h0'' + h0'/r - 4 sinh 4h0 with h0'' differentiated from the stored h0'."""
    r, h, dh = sol.r_grid, sol.h0, sol.dh0
    return grid_derivative(r, dh) + dh / r - 4.0 * np.sinh(4.0 * h)


def painleve3_residual(r: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """r η η'' - [r(η')² - η η' - 4r + 4r η⁴], derivatives from the grid."""
    d1 = grid_derivative(r, eta)
    d2 = grid_derivative(r, d1)
    return r * eta * d2 - (r * d1 * d1 - eta * d1 - 4.0 * r + 4.0 * r * eta ** 4)


def eta_exponential(h: np.ndarray) -> np.ndarray:
    return np.exp(-2.0 * h)


def eta_logarithmic(h: np.ndarray) -> np.ndarray:
    """The alternative reading η = -½ ln h0 (kept to show that it does not solve Painlevé III)."""
    return -0.5 * np.log(h)


def final_identity_residual(sol: PainleveSolution) -> np.ndarray:
    """(h0')² + r[½(h0')² - 2 sinh² 2h0]'."""
    r, h, dh = sol.r_grid, sol.h0, sol.dh0
    bracket = 0.5 * dh * dh - 2.0 * np.sinh(2.0 * h) ** 2
    return dh * dh + r * grid_derivative(r, bracket)


def coefficient_system_residuals(r, A0, B0, C0, D1=None, Ei=None, m: float | None = None,
                                 max_error: float | None = None,
                                 derivatives: tuple | None = None) -> dict[str, np.ndarray]:
    """Residuals (lhs - rhs) of the five isomonodromy equations and of their (4)+B(5) combination.

    Only Y = B0·D0 - E0 (with D0 = D¹/m², E0 = Eⁱ/m²) enters.  When D¹, Eⁱ are
    not supplied, Y is solved from the fifth equation and substituted in the
    others, so that residual is zero by construction.  ``derivatives`` =
    (A0', B0', C0') overrides the grid differences.
    """
    r = np.asarray(r, dtype=float)
    A, B, C = (np.asarray(x, dtype=float) for x in (A0, B0, C0))
    if derivatives is None:
        dA = grid_derivative(r, A, max_error)
        dB = grid_derivative(r, B, max_error)
        dC = grid_derivative(r, C, max_error)
    else:
        dA, dB, dC = (np.asarray(x, dtype=float) for x in derivatives)
    q = 1.0 - B * B
    P = A * B + C
    if D1 is not None and Ei is not None:
        if m is None:
            raise ValueError("m is needed to scale D¹, Eⁱ")
        Y = (B * np.asarray(D1) - np.asarray(Ei)) / (m * m)
    else:
        Y = (C * q + 2.0 * r * P * A - 4.0 * r * B) / (3.0 * r)
    out = {
        "eq1": dB - (2.0 * A * B + 2.0 * C),
        "eq2": dA - (-2.0 * B * P * A / q + 4.0 * B * B / q + 3.0 * B * Y / q),
        "eq3": dC - (-2.0 * B * P * C / q + 4.0 * B / q - 3.0 * Y / q),
        "eq4": A - (-2.0 * r * P * C / q + 4.0 * r * B * B / q - 3.0 * r * B * Y / q),
        "eq5": C - (-2.0 * r * P * A / q + 4.0 * r * B / q + 3.0 * r * Y / q),
        "r1": (A + B * C) / q + r * (2.0 * P * P - 8.0 * B * B) / (q * q),
        "Y": Y,
    }
    return out


def residual_report(sol: PainleveSolution, window: tuple[float, float] = (-8.0, -0.05)) -> dict[str, float]:
    """Max-abs residuals on interior nodes inside the window."""
    r = sol.r_grid
    mask = (r >= window[0]) & (r <= window[1])
    A, B, C = coefficients_from_h(r, sol.h0, sol.dh0)
    sys = coefficient_system_residuals(r, A, B, C)
    rows = {
        "ode": ode_residual(sol),
        "painleve3_exp": painleve3_residual(r, eta_exponential(sol.h0)),
        "final_identity": final_identity_residual(sol),
    }
    for key in ("eq1", "eq2", "eq3", "eq4", "eq5", "r1"):
        rows[key] = sys[key]
    with np.errstate(invalid="ignore", divide="ignore"):
        rows["painleve3_log"] = painleve3_residual(r, eta_logarithmic(sol.h0))
    return {k: float(np.nanmax(np.abs(v[mask]))) for k, v in rows.items()}


# ---------------------------------------------------------------------------
# path integral of the logarithmic derivative

def correlation_ratio(path, A1, Ai) -> float:
    """exp ∫ (A¹ dx - Aⁱ dy) along a polyline, trapezoidal rule per segment."""
    z = np.asarray(path)
    if np.iscomplexobj(z):
        x, y = z.real, z.imag
    else:
        z = np.asarray(z, dtype=float)
        x, y = z[:, 0], z[:, 1]
    A1 = np.asarray(A1, dtype=float)
    Ai = np.asarray(Ai, dtype=float)
    if not (np.all(np.isfinite(A1)) and np.all(np.isfinite(Ai))):
        raise ValueError("A field must be finite along the path")
    dx, dy = np.diff(x), np.diff(y)
    s = np.sum(0.5 * (A1[1:] + A1[:-1]) * dx - 0.5 * (Ai[1:] + Ai[:-1]) * dy)
    return float(math.exp(s))


def full_plane_A1(sol: PainleveSolution, m: float, x: float, partner: float) -> float:
    """A¹ at the left point x of a horizontal pair (x, partner): m·A0(m(partner - x)/2)."""
    return m * log_derivative_A(sol, m * (partner - x) / 2.0)
