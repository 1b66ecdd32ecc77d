"""Potential perturbations of a jump process.

A perturbation multiplies every rate by exp(h_s [b V(y) - a V(x)]) for a
potential V, constants (a, b) with inverse temperature beta = a + b, and a
time-dependent amplitude h_s. Any (a, b) with the same sum changes rate
ratios identically (local detailed balance); the split only moves the
symmetric prefactor.

Schedules carry their own first derivative: the response identities need
dh/ds, and silently differentiating a user grid would hide error, so grids
are interpolated by a cubic spline whose derivative and antiderivative are
exact, and callable schedules must supply their derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import (
    DimensionMismatch,
    MissingReverseEdge,
    ScheduleDomain,
    UnboundedSchedule,
    ValidationError,
)
from .markov import Generator, Observable

_DOMAIN_SLACK = 1e-12


class AmplitudeSchedule:
    """Amplitude h_s on a support [t0, t1], with value/derivative/integral.

    Kinds: ``constant`` (unbounded support unless told otherwise), ``grid``
    (cubic-spline interpolation through strictly increasing times), and
    ``callable`` (user function plus its derivative, with optional explicit
    bounds for the thinning sampler).
    """

    def __init__(self, kind, support, value_fn, deriv_fn, integral_fn,
                 bounds=None, knots=()):
        self.kind = kind
        self.support = support
        self._value = value_fn
        self._deriv = deriv_fn
        self._integral = integral_fn
        self._bounds = bounds
        self.knots = np.asarray(knots, dtype=float)

    @classmethod
    def constant(cls, h, support=None):
        h = float(h)
        support = (0.0, np.inf) if support is None else (float(support[0]), float(support[1]))
        return cls(
            "constant",
            support,
            value_fn=lambda s: h * np.ones_like(np.asarray(s, dtype=float)),
            deriv_fn=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
            integral_fn=lambda t0, t1: h * (t1 - t0),
            bounds=(h, h),
        )

    @classmethod
    def from_grid(cls, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValidationError("grid schedule needs at least two times")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("grid times must be strictly increasing")
        spline = CubicSpline(times, values)
        dspline = spline.derivative()
        anti = spline.antiderivative()
        # exact extrema: spline derivative is piecewise quadratic
        crit = dspline.roots(extrapolate=False)
        cand = np.concatenate([times, np.atleast_1d(crit)]) if crit.size else times
        vals = spline(cand)
        return cls(
            "grid",
            (float(times[0]), float(times[-1])),
            value_fn=spline,
            deriv_fn=dspline,
            integral_fn=lambda t0, t1: float(anti(t1) - anti(t0)),
            bounds=(float(vals.min()), float(vals.max())),
            knots=times,
        )

    @classmethod
    def from_callable(cls, fn, deriv, support, bounds=None):
        support = (float(support[0]), float(support[1]))

        def integral(t0, t1):
            val, _ = quad(fn, t0, t1, epsabs=1e-12, epsrel=1e-12, limit=200)
            return val

        return cls("callable", support, fn, deriv, integral, bounds=bounds)

    def _check_domain(self, s):
        lo, hi = self.support
        s = np.asarray(s, dtype=float)
        slack = _DOMAIN_SLACK * max(1.0, abs(hi) if np.isfinite(hi) else 1.0)
        if np.any(s < lo - slack) or np.any(s > hi + slack):
            raise ScheduleDomain(
                f"time {s!r} outside schedule support [{lo}, {hi}]"
            )

    def value(self, s):
        self._check_domain(s)
        out = self._value(s)
        return float(out) if np.ndim(s) == 0 else np.asarray(out, dtype=float)

    def derivative(self, s):
        self._check_domain(s)
        out = self._deriv(s)
        return float(out) if np.ndim(s) == 0 else np.asarray(out, dtype=float)

    def integral(self, t0, t1):
        self._check_domain(t0)
        self._check_domain(t1)
        return float(self._integral(t0, t1))

    def bounds(self):
        """(min, max) of h over the support; needed to dominate thinning."""
        if self._bounds is None:
            raise UnboundedSchedule(
                "callable schedule without explicit bounds cannot be dominated"
            )
        return self._bounds

    def interior_knots(self, t0, t1):
        """Knots strictly inside (t0, t1); quadratures split here because
        spline smoothness drops at the knots."""
        if self.knots.size == 0:
            return ()
        k = self.knots
        return tuple(k[(k > t0) & (k < t1)])


@dataclass(frozen=True)
class PerturbationSpec:
    """Potential V, constants (a, b), and the amplitude schedule h_s."""

    V: Observable
    a: float
    b: float
    schedule: AmplitudeSchedule

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValidationError("perturbation constants must be finite")

    @property
    def beta(self):
        return self.a + self.b

    def exponent_matrix(self):
        """E(x, y) = b V(y) - a V(x); perturbed rates are W * exp(h E)."""
        V = self.V.f
        return self.b * V[None, :] - self.a * V[:, None]


def perturbed_rates(G, spec, h):
    """Rate matrix at frozen amplitude h (no Generator validation)."""
    W = G.rates * np.exp(h * spec.exponent_matrix())
    np.fill_diagonal(W, 0.0)
    return W


def perturbed_generator(G, spec, s):
    """Generator with rates W(x,y) exp(h_s [b V(y) - a V(x)]) frozen at time s.

    Positive multipliers preserve the rate graph, so irreducibility is
    inherited from G.
    """
    if spec.V.space.n != G.n:
        raise DimensionMismatch(
            f"potential on {spec.V.space.n} states, generator on {G.n}"
        )
    h = spec.schedule.value(s)
    return Generator(G.space, perturbed_rates(G, spec, h))


def check_local_detailed_balance(G, spec, s, tol=0.0, beta=None):
    """Max log-ratio residual of the local-detailed-balance condition.

    For every edge with forward rate above tol the perturbed/unperturbed
    ratio of log rate ratios must shift by exactly beta h_s (V(y) - V(x)).
    beta defaults to the spec's own a + b, for which the condition is an
    algebraic identity; pass a target inverse temperature to measure how
    far a deliberately mismatched split violates it. Raises
    MissingReverseEdge when a checked edge has no reverse rate, which
    leaves the ratio undefined.
    """
    h = spec.schedule.value(s)
    Wp = perturbed_rates(G, spec, h)
    W = G.rates
    beta = spec.beta if beta is None else beta
    V = spec.V.f
    worst = 0.0
    n = G.n
    for i in range(n):
        for j in range(n):
            if i == j or W[i, j] <= tol:
                continue
            if W[j, i] <= 0.0:
                raise MissingReverseEdge(
                    f"edge {G.space.labels[i]!r}->{G.space.labels[j]!r} has no "
                    "reverse rate; rate ratio undefined"
                )
            res = abs(
                np.log(Wp[i, j] / Wp[j, i])
                - np.log(W[i, j] / W[j, i])
                - beta * h * (V[j] - V[i])
            )
            worst = max(worst, res)
    return worst


@dataclass(frozen=True)
class PrefactorSplit:
    """W * symmetric * antisymmetric reproduces the perturbed rates.

    ``symmetric`` is exp(h (b-a)/2 [V(y)+V(x)]), identical under x<->y;
    ``antisymmetric`` is the force factor exp(h beta/2 [V(y)-V(x)]).
    """

    symmetric: np.ndarray
    antisymmetric: np.ndarray


def symmetric_prefactor_split(G, spec, s):
    """Split the rate multiplier into symmetric prefactor and force factor."""
    h = spec.schedule.value(s)
    V = spec.V.f
    sym = np.exp(h * (spec.b - spec.a) / 2.0 * (V[None, :] + V[:, None]))
    anti = np.exp(h * spec.beta / 2.0 * (V[None, :] - V[:, None]))
    return PrefactorSplit(sym, anti)
