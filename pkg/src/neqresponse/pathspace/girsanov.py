"""Girsanov log densities between perturbed and unperturbed path measures.

The exact log density is a sum over jump times of h_s [b V(x_s) - a V(x_s-)]
minus the compensator integral of the escape-rate excess along the path.
Its linearization in h shares the jump sum (already linear) and replaces
the compensator by h_s [b LV + (b-a) escape * V] evaluated along the path.
Both are plain path functionals: they can be evaluated on any trajectory,
whatever dynamics produced it.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad

from ..perturbation import perturbed_rates


def jump_weight_matrix(G, spec):
    """Per-jump weight J[old, new] = b V(new) - a V(old)."""
    V = spec.V.f
    return spec.b * V[None, :] - spec.a * V[:, None]


def linear_segment_vector(G, spec):
    """Per-state integrand of the linearized compensator:
    b LV(x) + (b - a) escape(x) V(x)."""
    V = spec.V.f
    return spec.b * (G.L @ V) + (spec.b - spec.a) * G.escape * V


def escape_excess_vector(G, spec, h):
    """Perturbed-minus-base escape rates at constant amplitude h."""
    return perturbed_rates(G, spec, h).sum(axis=1) - G.escape


def _h_at(spec, times):
    if times.size == 0:
        return np.empty(0)
    vals = spec.schedule.value(times)
    return np.atleast_1d(np.asarray(vals, dtype=float))


def girsanov_log_density(traj, G, spec, quad_tol=1e-10):
    """Exact log Radon-Nikodym density of the perturbed path measure.

    Constant schedules use the closed-form compensator; otherwise each
    constant path segment is integrated by adaptive quadrature split at
    the schedule knots.
    """
    old = np.concatenate(([traj.x0], traj.states[:-1])) if traj.n_jumps else np.empty(0, dtype=np.int64)
    new = traj.states
    hs = _h_at(spec, traj.times)
    V = spec.V.f
    jump_term = float(np.sum(hs * (spec.b * V[new] - spec.a * V[old])))

    seq, durations = traj.segments()
    if spec.schedule.kind == "constant":
        h = spec.schedule.value(spec.schedule.support[0])
        excess = escape_excess_vector(G, spec, h)
        compensator = float(np.sum(durations * excess[seq]))
    else:
        E = spec.exponent_matrix()
        W = G.rates
        esc = G.escape
        bounds = np.concatenate(([0.0], traj.times, [traj.horizon]))
        compensator = 0.0
        for i, x in enumerate(seq):
            t0, t1 = bounds[i], bounds[i + 1]
            if t1 <= t0:
                continue

            def integrand(s, x=int(x)):
                h = spec.schedule.value(s)
                return float((W[x] * np.exp(h * E[x])).sum() - esc[x])

            pts = spec.schedule.interior_knots(t0, t1) or None
            val, _ = quad(integrand, t0, t1, epsabs=quad_tol, epsrel=1e-12,
                          limit=100, points=pts)
            compensator += val
    return jump_term - compensator


def girsanov_log_density_linear(traj, G, spec):
    """Linear-order log density: same jump sum, linearized compensator.

    The segment integrals of h are evaluated through the schedule's exact
    antiderivative, so for smooth schedules the only deviation from
    `girsanov_log_density` is the genuine O(h^2) remainder.
    """
    old = np.concatenate(([traj.x0], traj.states[:-1])) if traj.n_jumps else np.empty(0, dtype=np.int64)
    new = traj.states
    hs = _h_at(spec, traj.times)
    V = spec.V.f
    jump_term = float(np.sum(hs * (spec.b * V[new] - spec.a * V[old])))

    cvec = linear_segment_vector(G, spec)
    seq, _ = traj.segments()
    bounds = np.concatenate(([0.0], traj.times, [traj.horizon]))
    integral = 0.0
    for i, x in enumerate(seq):
        if bounds[i + 1] > bounds[i]:
            integral += cvec[x] * spec.schedule.integral(bounds[i], bounds[i + 1])
    return jump_term - integral
