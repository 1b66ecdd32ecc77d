"""Pure-Python jump-chain kernels; twin of the compiled _kernels module.

Draw protocol (identical in both backends, so trajectories agree
bit-for-bit): per step, one uniform for the exponential holding time via
dt = -log1p(-u)/escape, and, only if the jump lands inside the horizon,
one uniform for the target picked by right-bisection of the cumulative
rate row. Zero uniforms are redrawn. The escape rate used for sampling is
the last entry of the cumulative row, never a separately summed value, so
target selection cannot run past the row.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"


def _pick(cum_row, target):
    idx = int(np.searchsorted(cum_row, target, side="right"))
    n = cum_row.shape[0]
    if idx >= n:
        idx = n - 1
    while idx > 0 and cum_row[idx] == cum_row[idx - 1]:
        idx -= 1
    return idx


def _draw(gen):
    u = gen.random()
    while u == 0.0:
        u = gen.random()
    return u


def sample_homogeneous(cum_rates, x0, t0, horizon, bit_generator,
                       times_out, states_out):
    """Record jumps into the out arrays.

    Returns (count, t_end, x_end, done); done=False means the arrays
    filled up and the caller should continue from (t_end, x_end) with the
    same bit generator.
    """
    gen = np.random.Generator(bit_generator)
    n = cum_rates.shape[1]
    cap = times_out.shape[0]
    t = t0
    x = x0
    count = 0
    while True:
        if count == cap:
            return count, t, x, False
        esc = cum_rates[x, n - 1]
        dt = -math.log1p(-_draw(gen)) / esc
        if t + dt > horizon:
            return count, t, x, True
        t += dt
        target = _draw(gen) * esc
        x = _pick(cum_rates[x], target)
        times_out[count] = t
        states_out[count] = x
        count += 1


def advance_homogeneous(cum_rates, x0, t0, horizon, bit_generator):
    """Evolve to the horizon without recording; returns (x_end, n_jumps)."""
    gen = np.random.Generator(bit_generator)
    n = cum_rates.shape[1]
    t = t0
    x = x0
    nj = 0
    while True:
        esc = cum_rates[x, n - 1]
        dt = -math.log1p(-_draw(gen)) / esc
        if t + dt > horizon:
            return x, nj
        t += dt
        target = _draw(gen) * esc
        x = _pick(cum_rates[x], target)
        nj += 1


def accumulate_homogeneous(cum_rates, x0, horizon, bit_generator,
                           jump_mats, seg_vecs, out_jump, out_seg, occ_out):
    """Sample one path, accumulating path functionals on the fly.

    Adds sum over jumps of jump_mats[j, old, new] into out_jump[j], the
    sum over constant segments of duration * seg_vecs[i, state] into
    out_seg[i], and per-state occupation times into occ_out. Returns
    (x_end, n_jumps).
    """
    gen = np.random.Generator(bit_generator)
    n = cum_rates.shape[1]
    k = jump_mats.shape[0]
    m = seg_vecs.shape[0]
    t = 0.0
    x = x0
    nj = 0
    while True:
        esc = cum_rates[x, n - 1]
        dt = -math.log1p(-_draw(gen)) / esc
        if t + dt > horizon:
            seg = horizon - t
            occ_out[x] += seg
            for i in range(m):
                out_seg[i] += seg * seg_vecs[i, x]
            return x, nj
        occ_out[x] += dt
        for i in range(m):
            out_seg[i] += dt * seg_vecs[i, x]
        t += dt
        target = _draw(gen) * esc
        y = _pick(cum_rates[x], target)
        for j in range(k):
            out_jump[j] += jump_mats[j, x, y]
        x = y
        nj += 1
