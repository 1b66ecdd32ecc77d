"""Trajectory sampling: homogeneous jump-chain and inhomogeneous thinning."""

from __future__ import annotations

import math

import numpy as np

from ..errors import NonFiniteTime, ScheduleDomain
from ..markov import Generator
from .backend import get_kernels
from .rng import RngStream
from .trajectory import Trajectory


def _check_horizon(T):
    if not math.isfinite(T) or T <= 0.0:
        raise NonFiniteTime(f"horizon must be finite and positive, got {T!r}")


def _initial_capacity(G, T):
    return max(64, int(2.0 * float(G.escape.max()) * T) + 32)


def sample_with_bitgen(G, x0_idx, T, bg):
    """Resume-capable sampling loop shared by the path samplers.

    The kernel checks capacity before drawing, so growing the buffers and
    continuing from (t_end, x_end) never disturbs the random stream.
    """
    kern = get_kernels()
    cap = _initial_capacity(G, T)
    pieces = []
    t0, x = 0.0, x0_idx
    while True:
        times = np.empty(cap)
        states = np.empty(cap, dtype=np.int64)
        count, t_end, x_end, done = kern.sample_homogeneous(
            G.cum_rates, x, t0, T, bg, times, states
        )
        pieces.append((times[:count], states[:count]))
        if done:
            break
        t0, x = t_end, x_end
        cap *= 2
    all_times = np.concatenate([p[0] for p in pieces])
    all_states = np.concatenate([p[1] for p in pieces])
    return Trajectory(x0_idx, all_times, all_states, float(T), G.space)


def sample_path(G, x0, T, rng):
    """Jump-chain / holding-time sample of the unperturbed process.

    Exponential holding at the escape rate, next state proportional to the
    rate row. The trajectory is a pure function of (G, x0, T, rng).
    """
    _check_horizon(T)
    return sample_with_bitgen(G, G.space.index(x0), T, rng.bit_generator())


def thinning_bound(G, spec, safety=1.0 + 1e-9):
    """Dominating rate for the perturbed process over the whole schedule.

    Per edge, the worst multiplier over h in [h_min, h_max] is attained at
    an endpoint, so the bound is exact up to the safety factor.
    """
    lo, hi = spec.schedule.bounds()
    E = spec.exponent_matrix()
    worst = np.exp(np.maximum(lo * E, hi * E))
    return float((G.rates * worst).sum(axis=1).max()) * safety


def _proposal_times(gen, lam, T):
    """Cumulative exponential(lam) proposal clock, drawn in blocks."""
    times = []
    t = 0.0
    while True:
        u = gen.random(64)
        while np.any(u == 0.0):
            zero = u == 0.0
            u[zero] = gen.random(int(zero.sum()))
        ts = t + np.cumsum(-np.log1p(-u)) / lam
        inside = ts <= T
        times.append(ts[inside])
        if not inside.all():
            return np.concatenate(times)
        t = ts[-1]


def _check_schedule_covers(spec, T):
    lo, hi = spec.schedule.support
    if T > hi or lo > 0.0:
        raise ScheduleDomain(
            f"schedule support [{lo}, {hi}] does not cover [0, {T}]"
        )


def thinning_walk(G, spec, x0_idx, T, gen, lam):
    """Core thinning pass; returns (jump times, jump states) as arrays.

    Proposal times, amplitudes, and the per-proposal perturbed rate tables
    are prepared in vectorized blocks; only the acceptance walk is
    sequential.
    """
    props = _proposal_times(gen, lam, T)
    x = x0_idx
    if props.size == 0:
        return np.empty(0), np.empty(0, dtype=np.int64)
    hs = np.atleast_1d(np.asarray(spec.schedule.value(props), dtype=float))
    E = spec.exponent_matrix()
    cums = np.cumsum(G.rates[None, :, :] * np.exp(hs[:, None, None] * E[None]),
                     axis=2)
    accept_draws = gen.random(props.size)
    times = []
    states = []
    for i in range(props.size):
        cum = cums[i, x]
        target = accept_draws[i] * lam
        if target < cum[-1]:
            y = int(np.searchsorted(cum, target, side="right"))
            while y > 0 and cum[y] == cum[y - 1]:
                y -= 1
            times.append(props[i])
            states.append(y)
            x = y
    return np.asarray(times, dtype=float), np.asarray(states, dtype=np.int64)


def sample_path_inhomogeneous(G, spec, x0, T, rng):
    """Exact sampling of the time-dependent perturbed process by thinning.

    Proposals arrive at the dominating rate; a proposal at time s executes
    the jump x -> y with probability W_s(x,y)/Lambda* and is discarded
    otherwise, which reproduces the inhomogeneous law without any time
    discretization.
    """
    _check_horizon(T)
    _check_schedule_covers(spec, T)
    lam = thinning_bound(G, spec)
    x0_idx = G.space.index(x0)
    times, states = thinning_walk(G, spec, x0_idx, T, rng.generator(), lam)
    return Trajectory(x0_idx, times, states, float(T), G.space)
