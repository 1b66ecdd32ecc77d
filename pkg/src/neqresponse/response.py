"""Exact linear-response kernels and susceptibilities.

The central object is the response function R(t, s): the sensitivity at
time t of an observable Q to a unit impulse of the potential V at time
s < t. For the (a, b) perturbation family it is a combination of two-time
correlations and their analytic time derivatives:

    R(t,s) = b d/ds <V_s Q_t> - a d/dt <V_s Q_t>
             + b [ <V_s (LQ)_t> - <(LV)_s Q_t> ]

Every derivative here flows through the generator; finite differencing is
reserved for the independent oracle (`response_fd_oracle`), which steps
the time-inhomogeneous master equation directly so that the two routes
share no failure modes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import (
    NotStationary,
    QuadratureFailure,
    StepSizeUnderflow,
    TimeOrder,
)
from .markov import (
    POISSON_TAIL,
    Observable,
    _uniformized,
    propagate,
    stationarity_residual,
    stationary_distribution,
)
from .perturbation import AmplitudeSchedule, PerturbationSpec, perturbed_generator

STATIONARITY_TOL = 1e-9


@dataclass(frozen=True)
class ResponseTerms:
    """Signed pieces of R(t,s): value = b_ds - a_dt + b_VLQ - b_LVQ."""

    b_ds: float
    a_dt: float
    b_VLQ: float
    b_LVQ: float

    @property
    def value(self):
        return self.b_ds - self.a_dt + self.b_VLQ - self.b_LVQ


@dataclass(frozen=True)
class ResponseGrid:
    t: float
    s_points: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    terms: tuple = ()


@dataclass(frozen=True)
class SusceptibilityPair:
    """chi_MV at constants (a, b) and chi_VM at the swapped constants (b, a).

    The stationary reciprocity symmetry predicts the two entries are equal;
    they are produced together so the claim is testable on one value.
    """

    chi_MV: float
    chi_VM: float
    a: float
    b: float


def response_terms(G, mu, Vf, Qf, a, b, s, t, tail=POISSON_TAIL):
    """All four response terms at (s, t), sharing one propagation."""
    if not 0.0 <= s <= t:
        raise TimeOrder(f"need 0 <= s <= t, got s={s}, t={t}")
    mu_s = propagate(G, mu, s, tail=tail).p
    g = _uniformized(G, Qf.f, t - s, transpose=True, tail=tail)
    Lg = G.L @ g
    LV = G.L @ Vf.f
    d_dt = float(np.sum(mu_s * Vf.f * Lg))
    d_ds = float(np.sum((mu_s @ G.L) * Vf.f * g)) - d_dt
    # <V_s (LQ)_t> = <mu_s, V . L e^{(t-s)L} Q> since L commutes with e^{uL}
    vlq = d_dt
    lvq = float(np.sum(mu_s * LV * g))
    return ResponseTerms(b * d_ds, a * d_dt, b * vlq, b * lvq)


def response_exact(G, mu, Vf, Qf, a, b, s, t, tail=POISSON_TAIL):
    """R(t,s) for the (a, b) perturbation by V, started from mu."""
    return response_terms(G, mu, Vf, Qf, a, b, s, t, tail=tail).value


def _require_stationary(G, rho, tol):
    res = stationarity_residual(G, rho)
    if res > tol:
        raise NotStationary(
            f"distribution has stationarity residual {res:g} > {tol:g}"
        )


def response_exact_stationary(G, rho, Vf, Qf, a, b, lag,
                              stationarity_tol=STATIONARITY_TOL,
                              tail=POISSON_TAIL):
    """Stationary-regime response at time lag t - s.

    In the steady state the general formula collapses to
    a d/ds <V_s Q_t> - b <(LV)_s Q_t>, a function of the lag alone.
    """
    if lag < 0.0:
        raise TimeOrder(f"lag must be nonnegative, got {lag}")
    _require_stationary(G, rho, stationarity_tol)
    g = _uniformized(G, Qf.f, lag, transpose=True, tail=tail)
    Lg = G.L @ g
    d_ds = -float(np.sum(rho.p * Vf.f * Lg))  # rho L = 0 kills the mu_s term
    lvq = float(np.sum(rho.p * (G.L @ Vf.f) * g))
    return a * d_ds - b * lvq


def response_grid(G, mu, Vf, Qf, a, b, t, s_points, tail=POISSON_TAIL,
                  threads=1, metadata=None):
    """Evaluate R(t, s_i) over a grid of source times.

    Grid points are independent; with threads > 1 they are evaluated
    concurrently (all inputs are immutable).
    """
    s_points = np.asarray(s_points, dtype=float)
    if np.any(s_points <= 0.0) or np.any(s_points >= t):
        raise TimeOrder("grid points must lie strictly inside (0, t)")

    def one(s):
        return response_terms(G, mu, Vf, Qf, a, b, float(s), t, tail=tail)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            terms = list(ex.map(one, s_points))
    else:
        terms = [one(s) for s in s_points]
    values = np.array([tm.value for tm in terms])
    meta = {"a": a, "b": b}
    meta.update(metadata or {})
    return ResponseGrid(t, s_points, values, meta, tuple(terms))


def integrated_response(G, mu, Vf, Qf, a, b, schedule, t,
                        epsabs=1e-9, tail=POISSON_TAIL):
    """integral of h_s R(t,s) over s in [0, t], by adaptive quadrature.

    The integration interval is split at the schedule's interior knots;
    Gauss rules lose order across spline kinks.
    """

    def integrand(s):
        return schedule.value(s) * response_exact(
            G, mu, Vf, Qf, a, b, s, t, tail=tail
        )

    points = schedule.interior_knots(0.0, t) or None
    out = quad(integrand, 0.0, t, epsabs=epsabs, epsrel=1e-12,
               limit=200, points=points, full_output=1)
    value, abserr = out[0], out[1]
    if len(out) > 3:
        raise QuadratureFailure(
            f"response quadrature did not converge: {out[3]}", achieved=abserr
        )
    return float(value)


def _rk4_final_law(L_of_s, p0, t, n_steps):
    """RK4 for the master equation p' = p L(s), frozen coefficients at stage times."""
    p = p0.copy()
    dt = t / n_steps
    for i in range(n_steps):
        s = i * dt
        L1 = L_of_s(s)
        Lm = L_of_s(s + 0.5 * dt)
        L2 = L_of_s(s + dt)
        k1 = p @ L1
        k2 = (p + 0.5 * dt * k1) @ Lm
        k3 = (p + 0.5 * dt * k2) @ Lm
        k4 = (p + dt * k3) @ L2
        p = p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return p


def response_fd_oracle(G, mu, Vf, Qf, a, b, schedule, t, h_scale=1e-5,
                       local_error=1e-12, max_steps=2_000_000):
    """Finite-difference response oracle: ( <Q(t)>^h - <Q(t)> ) / h_scale.

    Steps the time-inhomogeneous master equation for rates perturbed by
    h_scale * schedule with classical RK4; the unperturbed side runs on the
    same grid so that discretization error cancels to first order in h.
    This path is deliberately independent of the correlation formulas.
    """
    spec = PerturbationSpec(Vf, a, b, schedule)
    E = spec.exponent_matrix()
    lo, hi = schedule.bounds()
    lo, hi = sorted((lo * h_scale, hi * h_scale))
    W = G.rates
    esc_bound = float((W * np.exp(np.maximum(lo * E, hi * E))).sum(axis=1).max())
    lam = max(esc_bound, float(G.escape.max()))
    # local RK4 error ~ (lam dt)^5 / 120 per unit mass
    dt_max = (120.0 * local_error) ** 0.2 / lam
    knots = np.asarray(schedule.knots, dtype=float)
    if knots.size >= 2:
        # steps must also resolve the fastest schedule feature
        gap = float(np.min(np.diff(np.unique(knots))))
        if gap > 0.0:
            dt_max = min(dt_max, gap / 8.0)
    n_steps = max(1, int(math.ceil(t / dt_max)))
    if n_steps > max_steps:
        raise StepSizeUnderflow(
            f"{n_steps} RK4 steps needed for local error {local_error:g}"
        )

    def L_h(s):
        Wh = W * np.exp((h_scale * schedule.value(s)) * E)
        np.fill_diagonal(Wh, 0.0)
        Lh = Wh
        Lh[np.diag_indices_from(Lh)] = -Wh.sum(axis=1)
        return Lh

    if schedule.kind == "constant":
        Lh_const = L_h(0.0)
        L_of_s = lambda s: Lh_const
    else:
        L_of_s = L_h
    p_h = _rk4_final_law(L_of_s, mu.p, t, n_steps)
    p_0 = _rk4_final_law(lambda s: G.L, mu.p, t, n_steps)
    return float((p_h @ Qf.f - p_0 @ Qf.f) / h_scale)


def chi_formula(G, rho, Vf, Mf, a, b, stationarity_tol=STATIONARITY_TOL):
    """Stationary susceptibility pair b <M LV> + a <V LM> and its mirror."""
    _require_stationary(G, rho, stationarity_tol)
    LV = G.L @ Vf.f
    LM = G.L @ Mf.f
    t_mlv = b * float(np.sum(rho.p * Mf.f * LV))
    t_vlm = a * float(np.sum(rho.p * Vf.f * LM))
    return SusceptibilityPair(t_mlv + t_vlm, t_vlm + t_mlv, a, b)


def chi_fd(G, Vf, Mf, a, b, h_scale=1e-5):
    """Susceptibilities by perturbing the stationary law directly.

    chi_MV: perturb with potential V at constants (a, b), resolve the new
    stationary law, and difference <LM>. chi_VM: perturb with M at the
    swapped constants (b, a) and difference <LV>. This is the independent
    verification route for `chi_formula`.
    """
    rho = stationary_distribution(G)
    LV = G.L @ Vf.f
    LM = G.L @ Mf.f
    sched_h = AmplitudeSchedule.constant(h_scale)
    GV = perturbed_generator(G, PerturbationSpec(Vf, a, b, sched_h), 0.0)
    rho_v = stationary_distribution(GV)
    chi_mv = float((np.sum(rho_v.p * LM) - np.sum(rho.p * LM)) / h_scale)
    GM = perturbed_generator(G, PerturbationSpec(Mf, b, a, sched_h), 0.0)
    rho_m = stationary_distribution(GM)
    chi_vm = float((np.sum(rho_m.p * LV) - np.sum(rho.p * LV)) / h_scale)
    return SusceptibilityPair(chi_mv, chi_vm, a, b)


def generator_identity_check(G, Vf, Mf, a, b, h):
    """Residual of the perturbed-generator identity at amplitude h.

    Computes (L^V_ab - L)M - (L^M_ba - L)V - h (b-a) L(MV) pointwise and
    returns the sup norm, which vanishes like h^2.
    """
    W = G.rates
    V = Vf.f
    M = Mf.f
    dM = M[None, :] - M[:, None]
    dV = V[None, :] - V[:, None]
    ev = np.exp(h * (b * V[None, :] - a * V[:, None]))
    em = np.exp(h * (a * M[None, :] - b * M[:, None]))
    lhs = ((W * ev - W) * dM).sum(axis=1)
    rhs = ((W * em - W) * dV).sum(axis=1)
    corr = h * (b - a) * (G.L @ (M * V))
    return float(np.max(np.abs(lhs - rhs - corr)))


def bump_schedule(center, width, mass=1.0):
    """C^2 bump amplitude of unit integral, for pointwise FD response probes.

    Triweight kernel (35/32w)(1 - u^2)^3 on |u| <= 1 with u = (s-center)/w;
    zero elsewhere. Feeding it to `response_fd_oracle` estimates R(t, center)
    up to O(width^2) smoothing error.
    """
    c = 35.0 / 32.0 * mass / width

    def value(s):
        u = (np.asarray(s, dtype=float) - center) / width
        inside = np.abs(u) < 1.0
        return np.where(inside, c * (1.0 - u * u) ** 3, 0.0)

    def deriv(s):
        u = (np.asarray(s, dtype=float) - center) / width
        inside = np.abs(u) < 1.0
        return np.where(inside, -6.0 * c * u * (1.0 - u * u) ** 2 / width, 0.0)

    sched = AmplitudeSchedule.from_callable(
        value, deriv, support=(0.0, np.inf), bounds=(0.0, c)
    )
    sched.knots = np.array([center - width, center, center + width])
    return sched
