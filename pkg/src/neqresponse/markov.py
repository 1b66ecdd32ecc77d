"""Finite-state continuous-time Markov chains.

Core objects: a state space, a rate matrix W(x, y) together with the
backward generator L it induces, probability vectors, and observables.
Everything downstream (perturbations, response kernels, path sampling,
fluctuation functionals) consumes these.

Conventions: rates carry units of 1/time; the inverse temperature is an
inverse energy. No unit system is enforced beyond that reading.

The matrix exponential is evaluated by uniformization: e^{tL} written as a
Poisson mixture of powers of the sub-stochastic jump matrix I + L/Lambda.
This preserves nonnegativity and total mass, which scaling-and-squaring on
small generator matrices does not guarantee.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import get_lapack_funcs, lu_factor, lu_solve
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import gammaln

from .errors import (
    DimensionMismatch,
    DuplicateEdge,
    ModelTooLarge,
    NegativeRate,
    NonFiniteTime,
    NotIrreducible,
    SolverFailure,
    TimeOrder,
    ValidationError,
    ZeroProbabilityState,
)

MAX_DENSE_STATES = 4096
UNIFORMIZATION_SLACK = 1.05
POISSON_TAIL = 1e-13
PROB_TOL = 1e-12


def _frozen(a, dtype=float):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateSpace:
    """Ordered collection of at least two distinct state labels."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValidationError("a state space needs at least 2 states")
        if len(set(labels)) != len(labels):
            raise ValidationError("state labels must be unique")

    @property
    def n(self):
        return len(self.labels)

    @cached_property
    def _index(self):
        return {lab: i for i, lab in enumerate(self.labels)}

    def index(self, label):
        """Resolve a label (or an already-valid integer index) to an index."""
        try:
            return self._index[label]
        except (KeyError, TypeError):
            pass
        if isinstance(label, (int, np.integer)) and 0 <= label < self.n:
            return int(label)
        raise ValidationError(f"unknown state {label!r}")

    @classmethod
    def of_size(cls, n):
        return cls(tuple(range(n)))


@dataclass(frozen=True)
class Distribution:
    """Probability vector over a state space."""

    space: StateSpace
    p: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p)
        object.__setattr__(self, "p", p)
        if p.shape != (self.space.n,):
            raise DimensionMismatch(
                f"distribution has {p.shape} entries for {self.space.n} states"
            )
        if not np.all(np.isfinite(p)):
            raise ValidationError("distribution entries must be finite")
        if p.min() < -PROB_TOL:
            raise ValidationError(f"negative probability {p.min():g}")
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities sum to {p.sum()!r}, not 1")

    @classmethod
    def uniform(cls, space):
        return cls(space, np.full(space.n, 1.0 / space.n))

    @classmethod
    def point(cls, space, x):
        p = np.zeros(space.n)
        p[space.index(x)] = 1.0
        return cls(space, p)


@dataclass(frozen=True)
class Observable:
    """Real-valued function on states, stored as a vector in state order."""

    space: StateSpace
    f: np.ndarray
    name: str = ""

    def __post_init__(self):
        f = _frozen(self.f)
        object.__setattr__(self, "f", f)
        if f.shape != (self.space.n,):
            raise DimensionMismatch(
                f"observable has {f.shape} entries for {self.space.n} states"
            )
        if not np.all(np.isfinite(f)):
            raise ValidationError("observable entries must be finite")

    @classmethod
    def constant(cls, space, value=1.0):
        return cls(space, np.full(space.n, float(value)))

    @classmethod
    def indicator(cls, space, x):
        f = np.zeros(space.n)
        f[space.index(x)] = 1.0
        return cls(space, f)


@dataclass(frozen=True)
class Generator:
    """Rate matrix W(x, y) plus the backward generator L it induces.

    ``rates`` has zero diagonal and nonnegative off-diagonal entries;
    ``escape`` holds the per-state total exit rate. L = rates - diag(escape),
    so every row of L sums to zero by construction. The digraph of strictly
    positive rates must be strongly connected; this is checked once here so
    that every downstream solve can assume a unique stationary law.
    """

    space: StateSpace
    rates: np.ndarray
    escape: np.ndarray = field(default=None)

    def __post_init__(self):
        W = _frozen(self.rates)
        n = self.space.n
        if W.shape != (n, n):
            raise DimensionMismatch(f"rate matrix {W.shape} for {n} states")
        if n > MAX_DENSE_STATES:
            raise ModelTooLarge(
                f"{n} states exceeds the dense limit {MAX_DENSE_STATES}; "
                "use pathspace sampling for larger models"
            )
        if not np.all(np.isfinite(W)):
            raise ValidationError("rates must be finite")
        if np.any(np.diagonal(W) != 0.0):
            raise ValidationError("rate matrix must have zero diagonal")
        if W.min() < 0.0:
            raise NegativeRate(f"negative rate {W.min():g}")
        object.__setattr__(self, "rates", W)
        object.__setattr__(self, "escape", _frozen(W.sum(axis=1)))
        _check_irreducible(self.space, W)

    @property
    def n(self):
        return self.space.n

    @cached_property
    def L(self):
        L = self.rates - np.diag(self.escape)
        return _frozen(L)

    @cached_property
    def cum_rates(self):
        """Row-wise cumulative rates; the sampling kernels index next states
        against these, so their last column is the escape rate the kernels use."""
        return _frozen(np.cumsum(self.rates, axis=1))

    @cached_property
    def max_rate(self):
        return float(self.rates.max())

    def apply(self, f):
        """L acting on a raw vector (column action)."""
        return self.L @ f


def _check_irreducible(space, W):
    graph = csr_matrix((W > 0.0).astype(np.int8))
    ncomp, labels = connected_components(graph, directed=True, connection="strong")
    if ncomp > 1:
        comps = [
            tuple(space.labels[i] for i in np.flatnonzero(labels == c))
            for c in range(ncomp)
        ]
        raise NotIrreducible(
            f"rate graph splits into {ncomp} strongly connected components: {comps}",
            components=comps,
        )


def build_generator(space, triples):
    """Assemble a Generator from (from, to, rate) triples.

    Rejects nonpositive rates, repeated ordered pairs, self-loops, and any
    rate graph that is not strongly connected.
    """
    n = space.n
    W = np.zeros((n, n))
    seen = set()
    for x, y, w in triples:
        i, j = space.index(x), space.index(y)
        if i == j:
            raise ValidationError(f"self-loop on state {x!r}")
        if w <= 0 or not math.isfinite(w):
            raise NegativeRate(f"rate {w!r} for edge {x!r}->{y!r} must be positive")
        if (i, j) in seen:
            raise DuplicateEdge(f"edge {x!r}->{y!r} specified twice")
        seen.add((i, j))
        W[i, j] = w
    return Generator(space, W)


def apply_L(G, f):
    """Backward generator action: x -> sum_y W(x,y) [f(y) - f(x)]."""
    if f.space.n != G.n:
        raise DimensionMismatch("observable does not match generator space")
    return Observable(G.space, G.L @ f.f)


def _check_time(t):
    if not math.isfinite(t) or t < 0.0:
        raise NonFiniteTime(f"time must be finite and nonnegative, got {t!r}")


def _uniformized(G, v, t, transpose, tail):
    """Poisson-weighted jump-chain series for v e^{tL} (row) or e^{tL} v (column).

    Weights are formed in log space so that large Lambda*t never underflows
    the whole series; truncation keeps cumulative Poisson mass >= 1 - tail.
    """
    lam = UNIFORMIZATION_SLACK * float(G.escape.max())
    lt = lam * t
    if lt == 0.0:
        return v.copy()
    kcap = int(lt + 10.0 * math.sqrt(lt) + 30.0)
    ks = np.arange(kcap + 1)
    w = np.exp(ks * math.log(lt) - lt - gammaln(ks + 1.0))
    cum = np.cumsum(w)
    K = min(int(np.searchsorted(cum, 1.0 - tail)), kcap)
    P = np.eye(G.n) + G.L / lam
    out = w[0] * v
    vk = v
    for k in range(1, K + 1):
        vk = (P @ vk) if transpose else (vk @ P)
        if w[k] != 0.0:
            out = out + w[k] * vk
    return out


def propagate(G, mu0, t, tail=POISSON_TAIL):
    """Solve the master equation: the law at time t starting from mu0."""
    _check_time(t)
    p = _uniformized(G, mu0.p, t, transpose=False, tail=tail)
    if p.min() < 0.0:
        if p.min() < -1e-14:
            warnings.warn(
                f"propagate produced negative mass {p.min():g}; clamping",
                RuntimeWarning,
            )
        p = np.clip(p, 0.0, None)
    return Distribution(G.space, p)


def semigroup_apply(G, f, t, tail=POISSON_TAIL):
    """e^{tL} f, the conditional expectation of f a time t ahead."""
    _check_time(t)
    return Observable(G.space, _uniformized(G, f.f, t, transpose=True, tail=tail))


def stationary_distribution(G, tol=1e-12, cond_warn=1e12):
    """Unique stationary law of an irreducible generator.

    One row of the transpose-generator system is replaced by the
    normalization constraint and the dense system is solved directly, with
    iterative refinement until the stationarity residual (relative to the
    largest rate) is at machine level.
    """
    n = G.n
    A = G.L.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        lu, piv = lu_factor(A)
    except Exception as exc:  # singular beyond the expected nullspace
        raise SolverFailure(f"stationary solve failed: {exc}") from exc
    gecon = get_lapack_funcs("gecon", (A,))
    rcond = gecon(lu, np.linalg.norm(A, 1))[0]
    if rcond > 0 and 1.0 / rcond > cond_warn:
        warnings.warn(
            f"stationary system condition number ~{1.0 / rcond:.2e}",
            RuntimeWarning,
        )
    rho = lu_solve((lu, piv), b)
    for _ in range(3):
        r = b - A @ rho
        if np.max(np.abs(r)) <= 1e-16 * n:
            break
        rho = rho + lu_solve((lu, piv), r)
    if rho.min() < -tol:
        raise SolverFailure(f"stationary solve produced mass {rho.min():g} < 0")
    rho = np.clip(rho, 0.0, None)
    rho /= rho.sum()
    residual = np.max(np.abs(rho @ G.L)) / G.max_rate
    if residual > tol:
        raise SolverFailure(
            f"stationarity residual {residual:g} exceeds tolerance {tol:g}"
        )
    return Distribution(G.space, rho)


def stationarity_residual(G, mu):
    """max_x |(mu L)(x)| scaled by the largest rate; 0 iff mu is stationary."""
    return float(np.max(np.abs(mu.p @ G.L)) / G.max_rate)


@dataclass(frozen=True)
class DetailedBalanceReport:
    is_reversible: bool
    max_violation: float
    worst_edge: tuple


def check_detailed_balance(G, rho, tol):
    """Measure how far rho(x)W(x,y) is from rho(y)W(y,x) over all pairs.

    The violation is normalized by the largest stationary flow, so the
    report is scale free; is_reversible holds iff the worst edge violates
    by at most tol.
    """
    if rho.space.n != G.n:
        raise DimensionMismatch("distribution does not match generator space")
    flow = rho.p[:, None] * G.rates
    viol = np.abs(flow - flow.T)
    normalizer = flow.max()
    max_violation = float(viol.max() / normalizer)
    i, j = np.unravel_index(int(np.argmax(viol)), viol.shape)
    worst = (G.space.labels[i], G.space.labels[j])
    return DetailedBalanceReport(max_violation <= tol, max_violation, worst)


def correlation(G, mu, Vf, Qf, s, t, tail=POISSON_TAIL):
    """Two-time correlation <V(x_s) Q(x_t)> of the process started from mu."""
    if not 0.0 <= s <= t:
        raise TimeOrder(f"need 0 <= s <= t, got s={s}, t={t}")
    mu_s = propagate(G, mu, s, tail=tail)
    g = _uniformized(G, Qf.f, t - s, transpose=True, tail=tail)
    return float(np.sum(mu_s.p * Vf.f * g))


def correlation_derivatives(G, mu, Vf, Qf, s, t, tail=POISSON_TAIL):
    """Analytic time derivatives (d/ds, d/dt) of correlation(G, mu, V, Q, s, t).

    Both derivatives flow through the generator; no finite differencing is
    involved, so these may serve as the exact side of oracle comparisons.
    """
    if not 0.0 <= s <= t:
        raise TimeOrder(f"need 0 <= s <= t, got s={s}, t={t}")
    mu_s = propagate(G, mu, s, tail=tail).p
    g = _uniformized(G, Qf.f, t - s, transpose=True, tail=tail)
    Lg = G.L @ g
    mudot = mu_s @ G.L
    d_dt = float(np.sum(mu_s * Vf.f * Lg))
    d_ds = float(np.sum(mudot * Vf.f * g)) - d_dt
    return d_ds, d_dt


def adjoint_in_rho(G, rho):
    """Adjoint generator in the rho-weighted scalar product.

    For stationary rho this is itself a generator (the time reversal):
    W*(x,y) = rho(y) W(y,x) / rho(x). Reversible chains satisfy L* = L.
    """
    if rho.space.n != G.n:
        raise DimensionMismatch("distribution does not match generator space")
    if rho.p.min() <= 0.0:
        raise ZeroProbabilityState(
            "adjoint requires a strictly positive distribution"
        )
    W_star = (rho.p[None, :] * G.rates.T) / rho.p[:, None]
    np.fill_diagonal(W_star, 0.0)
    return Generator(G.space, W_star)
