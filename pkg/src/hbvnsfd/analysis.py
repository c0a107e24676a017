"""Dynamic-consistency diagnostics for the NSFD scheme.

Covers the discrete reproduction number, linear stability of the NSFD map
at the endemic state, the Lyapunov and Dulac functions of the planar
(S, I) sub-model, convergence-order studies and the a priori global error
bound of the first-order scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .incidence import DomainError
from .model import (
    _check_state,
    basic_reproduction_number,
    dfe,
    endemic_equilibrium,
    feasible_bounds,
)
from .solvers import IDENTITY, Scheme, SchemeConfig, _nsfd, simulate

__all__ = [
    "StabilityTestResult",
    "BoundConstants",
    "Region",
    "ConvergenceStudy",
    "DescentResult",
    "discrete_ngm_blocks",
    "discrete_r0",
    "nsfd_jacobian",
    "nsfd_dee_stability",
    "frozen_rate_matrix",
    "adaptive_simpson",
    "lyapunov_value",
    "lyapunov_descent_check",
    "infection_gap",
    "dulac_expression",
    "estimate_convergence_order",
    "estimate_bound_constants",
    "region_hull",
    "error_bound",
]


# ---------------------------------------------------------------------------
# discrete reproduction number


def discrete_ngm_blocks(params, phi, dt):
    """Blocks (F, T, A, C) of the NSFD Jacobian at the DFE in (I, S) order.

    J0 = [[F + T, 0], [A, C]] with F the new-infection part and T the
    transition part of the I-equation.
    """
    ph = phi(dt)
    fI = params.incidence.dfdI_at_zero(dfe(params).S)
    di = 1.0 + ph * params.i_out
    ds = 1.0 + ph * params.s_out
    return ph * fI / di, 1.0 / di, -ph * fI / ds, 1.0 / ds


def discrete_r0(params, phi, dt):
    """Spectral radius of F (1 - T)^-1 for the NSFD map (scalar blocks here)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    F, T, _, _ = discrete_ngm_blocks(params, phi, dt)
    ph = phi(dt)
    # 1 - T written without cancellation; the subtraction loses digits when ph*i_out << 1
    one_minus_T = ph * params.i_out / (1.0 + ph * params.i_out)
    return abs(F / one_minus_T)


# ---------------------------------------------------------------------------
# NSFD linear stability at the endemic state


@dataclass(frozen=True)
class StabilityTestResult:
    trace: float
    det: float
    jury_condition: bool
    eigen_moduli: tuple
    third_eigen: float
    dt: float
    matrix: tuple

    def to_dict(self):
        return {
            "dt": self.dt,
            "trace": self.trace,
            "det": self.det,
            "jury_condition": self.jury_condition,
            "eigen_moduli": list(self.eigen_moduli),
            "third_eigen": self.third_eigen,
            "matrix": [list(r) for r in self.matrix],
        }


def nsfd_jacobian(params, x, phi, dt):
    """2x2 Jacobian d(S_{n+1}, I_{n+1})/d(S_n, I_n) of the NSFD map at x.

    Analytic: with g = f*(S, I), g_S = (S f_S - f)/S^2 and g_I = f_I/S.
    """
    S, I = float(x[0]), float(x[1])
    if not S > 0:
        raise DomainError("NSFD Jacobian needs S > 0")
    ph = phi(dt)
    inc = params.incidence
    f = inc._value(S, I)
    fS, fI = inc._partials(S, I)
    g = f / S
    gS = (S * fS - f) / (S * S)
    gI = fI / S
    D1 = 1.0 + ph * g + ph * params.s_out
    D2 = 1.0 + ph * params.i_out
    S1 = (S + ph * params.Lambda) / D1
    dS1_dS = (1.0 - S1 * ph * gS) / D1
    dS1_dI = -S1 * ph * gI / D1
    dI1_dS = ph * (dS1_dS * g + S1 * gS) / D2
    dI1_dI = (1.0 + ph * (dS1_dI * g + S1 * gI)) / D2
    return np.array([[dS1_dS, dS1_dI], [dI1_dS, dI1_dI]])


def frozen_rate_matrix(params, phi, dt):
    """Linearization at E* obtained by treating f*(S*, I*) as zero.

    This is NOT the Jacobian of the NSFD map (f*(S*, I*) = f/S* > 0); it is
    kept only so the discrepancy can be demonstrated.
    """
    x = endemic_equilibrium(params)
    if x is None:
        raise ValueError("no endemic equilibrium (R0 <= 1)")
    ph = phi(dt)
    fS, fI = params.incidence._partials(x.S, x.I)
    ds = 1.0 + ph * params.s_out
    di = 1.0 + ph * params.i_out
    return np.array([[(1 - ph * fS) / ds, -ph * fI / ds], [ph * fS / di, (1 + ph * fI) / di]])


def _jury(J, dt, params, phi):
    tr = float(J[0, 0] + J[1, 1])
    det = float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    disc = complex(tr * tr / 4.0 - det) ** 0.5
    moduli = tuple(sorted((abs(tr / 2.0 + disc), abs(tr / 2.0 - disc)), reverse=True))
    holds = abs(tr) < 1.0 + det and det < 1.0
    return StabilityTestResult(
        trace=tr,
        det=det,
        jury_condition=holds,
        eigen_moduli=moduli,
        third_eigen=1.0 / (1.0 + phi(dt) * params.mu0),
        dt=float(dt),
        matrix=tuple(tuple(map(float, r)) for r in J),
    )


def nsfd_dee_stability(params, phi=IDENTITY, dt=1.0):
    """Jury test |tr J| < 1 + det J < 2 for the NSFD map linearized at E*."""
    x = endemic_equilibrium(params)
    if x is None:
        raise ValueError("NSFD DEE stability requires R0 > 1")
    return _jury(nsfd_jacobian(params, x, phi, dt), dt, params, phi)


# ---------------------------------------------------------------------------
# Lyapunov function


def adaptive_simpson(fn, a, b, tol=1e-10, max_depth=40):
    """Adaptive Simpson quadrature of fn over [a, b] (signed)."""
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    fa, fb = fn(a), fn(b)
    m = 0.5 * (a + b)
    fm = fn(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fn(lm), fn(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return rec(a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(
            m, b, fm, frm, fb, right, tol / 2.0, depth - 1
        )

    return sign * rec(a, b, fa, fm, fb, whole, tol, max_depth)


def _ratio_integrand(params, I):
    # f(S0, I)/f(t, I) with the common factor alpha*I cancelled; the same
    # expression is the I -> 0+ limit and cannot underflow for tiny I
    inc = params.incidence
    S0 = dfe(params).S
    D0 = inc._denominator(S0, I)
    return lambda t: S0 * inc._denominator(t, I) / (t * D0)


def lyapunov_value(params, S, I, tol=1e-10):
    """L(S, I) = V(S) + I with V(S) = S - S0 - int_{S0}^{S} f(S0, I)/f(t, I) dt."""
    if not (math.isfinite(S) and S > 0):
        raise DomainError(f"S must be positive, got {S!r}")
    if not (math.isfinite(I) and I >= 0):
        raise DomainError(f"I must be non-negative, got {I!r}")
    S0 = dfe(params).S
    V = S - S0 - adaptive_simpson(_ratio_integrand(params, I), S0, S, tol=tol)
    return V + I


@dataclass
class DescentResult:
    ok: bool
    max_increase: float
    values: np.ndarray
    note: str = ""


def lyapunov_descent_check(params, trajectory, rtol=1e-9):
    """Is L non-increasing along the (S_n, I_n) of a trajectory?

    Increases up to rtol*L(start), plus a rounding floor, are tolerated.
    The transition out of the initial state is not checked. States outside
    the domain of L (S <= 0 or I < 0) fail the check.
    """
    states = trajectory.states
    vals = np.full(len(states), np.nan)
    for n, (S, I, _) in enumerate(states):
        if not (S > 0 and I >= 0):
            return DescentResult(False, math.inf, vals, f"state {n} outside the domain of L")
        vals[n] = lyapunov_value(params, float(S), float(I))
    # L(start) = 0 at the DFE, so add a floor at the rounding level of V (terms of size S0)
    tol = rtol * abs(vals[0]) + 1e-14 * dfe(params).S
    if len(vals) < 3:
        return DescentResult(True, 0.0, vals)
    inc = float(np.max(np.diff(vals[1:])))
    return DescentResult(inc <= tol, max(inc, 0.0), vals)


def infection_gap(params, I):
    """f(S0, I)/I - (mu0 + mu1 + beta); negative for all I > 0 when R0 <= 1."""
    if not I > 0:
        raise DomainError("I must be positive")
    return params.incidence._value(dfe(params).S, I) / I - params.i_out


# ---------------------------------------------------------------------------
# Dulac function 1/I


def dulac_expression(params, S, I):
    """d(F/I)/dS + d(G/I)/dI for the planar (S, I) sub-model."""
    if not (math.isfinite(S) and S >= 0):
        raise DomainError(f"S must be non-negative, got {S!r}")
    if not (math.isfinite(I) and I > 0):
        raise DomainError(f"I must be positive, got {I!r}")
    f = params.incidence._value(S, I)
    fS, fI = params.incidence._partials(S, I)
    return -fS / I - params.s_out / I + (I * fI - f) / (I * I)


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class ConvergenceStudy:
    scheme: Scheme
    T: float
    dt_list: list
    errors: list
    fitted_order: float
    excluded: list = field(default_factory=list)
    # dt -> (t_n, e_n) over the whole run
    histories: dict = field(default_factory=dict, repr=False)
    dt_ref: Optional[float] = None

    def to_dict(self):
        return {
            "scheme": self.scheme.value,
            "T": self.T,
            "dt_list": list(self.dt_list),
            "errors": list(self.errors),
            "fitted_order": self.fitted_order,
            "excluded": list(self.excluded),
            "dt_ref": self.dt_ref,
        }


def _steps_for(T, dt):
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-9 * T:
        raise ValueError(f"dt={dt} does not divide T={T}")
    return n


def estimate_convergence_order(params, x0, scheme, dt_list, T, phi=None, dt_ref=None, reference=None):
    """Global error at t = T for each dt and the least-squares log-log slope.

    The error is |dS| + |dI| + |dR| against a reference solution: RK2 at
    dt_ref (default min(dt_list)/100), or `reference(t_array) -> (n, 3)`
    when an exact solution is available.
    """
    scheme = Scheme(scheme)
    dt_list = [float(d) for d in dt_list]
    if len(dt_list) < 4:
        raise ValueError("need at least 4 step sizes")
    if any(b >= a for a, b in zip(dt_list, dt_list[1:])):
        raise ValueError("dt_list must be strictly decreasing")
    for dt in dt_list:
        _steps_for(T, dt)

    ref_traj = None
    if reference is None:
        dt_ref = dt_ref if dt_ref is not None else dt_list[-1] / 100.0
        if dt_ref > dt_list[-1] / 100.0 * (1 + 1e-12):
            raise ValueError("dt_ref must be at most min(dt_list)/100")
        ref_traj = simulate(params, x0, SchemeConfig(Scheme.RK2, dt_ref, _steps_for(T, dt_ref)))
        if ref_traj.blew_up:
            raise RuntimeError("reference run produced non-finite values")

    kept, errs, excluded, hist = [], [], [], {}
    for dt in dt_list:
        n = _steps_for(T, dt)
        cfg = SchemeConfig(scheme, dt, n, phi if scheme is Scheme.NSFD else None)
        tr = simulate(params, x0, cfg)
        if tr.blew_up:
            excluded.append(dt)
            continue
        if ref_traj is not None:
            stride = round(dt / dt_ref)
            if abs(stride * dt_ref - dt) > 1e-9 * dt:
                raise ValueError(f"dt={dt} is not a multiple of dt_ref={dt_ref}")
            ref = ref_traj.states[::stride][: len(tr)]
        else:
            ref = np.asarray(reference(tr.t), dtype=float)
        e = np.abs(tr.states - ref).sum(axis=1)
        hist[dt] = (tr.t, e)
        kept.append(dt)
        errs.append(float(e[-1]))

    if len(kept) >= 2:
        slope = float(np.polyfit(np.log(kept), np.log(errs), 1)[0])
    else:
        slope = math.nan
    return ConvergenceStudy(scheme, float(T), kept, errs, slope, excluded, hist, dt_ref)


# ---------------------------------------------------------------------------
# constants of the global error bound


@dataclass(frozen=True)
class Region:
    """Box [0, S_max] x [0, I_max] x [0, R_max]."""

    S_max: float
    I_max: float
    R_max: float

    def __post_init__(self):
        if not (self.S_max > 0 and self.I_max > 0 and self.R_max > 0):
            raise ValueError("region bounds must be positive")


def region_hull(params, *trajectories):
    """Smallest box holding the feasible bounds and every trajectory state."""
    fb = feasible_bounds(params)
    S, I, R = fb.S_max, fb.SI_max, fb.R_max
    for tr in trajectories:
        hi = tr.states.max(axis=0)
        S, I, R = max(S, hi[0]), max(I, hi[1]), max(R, hi[2])
    return Region(float(S), float(I), float(R))


@dataclass(frozen=True)
class BoundConstants:
    m: float
    tau: float
    L: float
    M: float
    region: Region
    m_columns: tuple = ()
    M_components: tuple = ()

    def to_dict(self):
        return {
            "m": self.m,
            "tau": self.tau,
            "L": self.L,
            "M": self.M,
            "region": [self.region.S_max, self.region.I_max, self.region.R_max],
            "m_columns": list(self.m_columns),
            "M_components": list(self.M_components),
        }


def _axis(upper, n):
    return np.unique(np.concatenate((np.linspace(0.0, upper, n), np.geomspace(upper * 1e-6, upper, n))))


def _second_derivative_sup(params, states):
    """Sum over components of sup |x''| with x'' = J(x) F(x)."""
    S, I, R = states[:, 0], states[:, 1], states[:, 2]
    inc = params.incidence
    f = inc._value(S, I)
    fS, fI = inc._partials(S, I)
    dS = params.Lambda - f - params.s_out * S
    dI = f - params.i_out * I
    dR = params.beta * I + params.nu * S - params.mu0 * R
    d2S = (-fS - params.s_out) * dS - fI * dI
    d2I = fS * dS + (fI - params.i_out) * dI
    d2R = params.nu * dS + params.beta * dI - params.mu0 * dR
    return float(np.abs(d2S).max() + np.abs(d2I).max() + np.abs(d2R).max())


def estimate_bound_constants(params, region, grid_n=32, dt_max=1.0, phi=IDENTITY, reference=None, n_dt=9):
    """Constants m and tau = L + M of the first-order error bound.

    m: largest column sum of the maxima of |dF_j/dx| over the region.
    L: sum over components of sup |x''| along `reference` (or over the grid
       when no reference trajectory is given).
    M: sum over components of sup |d^2 G_j / d dt^2| of the NSFD map over
       grid states and dt in [0, dt_max], by central differences in dt.
    """
    if grid_n < 32:
        raise ValueError("grid_n must be at least 32")
    Sa, Ia = _axis(region.S_max, grid_n), _axis(region.I_max, grid_n)
    SS, II = np.meshgrid(Sa, Ia, indexing="ij")
    SS, II = SS.ravel(), II.ravel()
    fS, fI = params.incidence._partials(SS, II)
    k, m_i = params.s_out, params.i_out
    mS = (np.abs(fS + k).max(), np.abs(fS).max(), params.nu)
    mI = (np.abs(fI).max(), np.abs(fI - m_i).max(), params.beta)
    mR = (0.0, 0.0, params.mu0)
    cols = (float(sum(mS)), float(sum(mI)), float(sum(mR)))
    m = max(cols)

    Ra = np.linspace(0.0, region.R_max, max(4, grid_n // 4))
    S3, I3, R3 = (a.ravel() for a in np.meshgrid(Sa, Ia, Ra, indexing="ij"))
    if reference is not None:
        L = _second_derivative_sup(params, reference.states)
    else:
        L = _second_derivative_sup(params, np.column_stack((S3, I3, R3)))

    h = 1e-4 * dt_max
    Msup = np.zeros(3)
    for dt in np.linspace(0.0, dt_max, n_dt):
        lo = _nsfd(params, S3, I3, R3, phi(dt - h))
        mid = _nsfd(params, S3, I3, R3, phi(dt))
        hi = _nsfd(params, S3, I3, R3, phi(dt + h))
        for j in range(3):
            d2 = (hi[j] - 2.0 * mid[j] + lo[j]) / (h * h)
            Msup[j] = max(Msup[j], float(np.abs(d2).max()))
    M = float(Msup.sum())
    return BoundConstants(m=m, tau=L + M, L=L, M=M, region=region, m_columns=cols, M_components=tuple(map(float, Msup)))


def error_bound(constants, dt, t):
    """tau*dt/(2m) * (exp(m t) - 1)."""
    t = np.asarray(t, dtype=float)
    if not (dt > 0 and np.all(t >= 0)):
        raise ValueError("dt must be positive and t non-negative")
    m = constants.m
    # the bound is legitimately infinite once m*t overflows
    with np.errstate(over="ignore"):
        out = constants.tau * dt / (2.0 * m) * np.expm1(m * t)
    return float(out) if out.ndim == 0 else out
