# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled jump-chain kernels; the pure-Python twin is _kernels_py.

Both backends consume the BitGenerator double stream with the same draw
protocol (see _kernels_py), so trajectories agree bit-for-bit. The
sampling loops run without the GIL; callers may drive them from worker
threads as long as each call owns its bit generator.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport log1p
from libc.stdint cimport int64_t

from numpy.random cimport bitgen_t

BACKEND_NAME = "compiled"


cdef bitgen_t *_bitgen(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid BitGenerator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline double _draw(bitgen_t *rng) noexcept nogil:
    cdef double u = rng.next_double(rng.state)
    while u == 0.0:
        u = rng.next_double(rng.state)
    return u


cdef inline Py_ssize_t _pick(const double[:, ::1] cum, Py_ssize_t x,
                             double target, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[x, mid] <= target:
            lo = mid + 1
        else:
            hi = mid
    if lo >= n:  # target rounded up onto the total rate; measure zero
        lo = n - 1
    while lo > 0 and cum[x, lo] == cum[x, lo - 1]:
        lo -= 1
    return lo


def sample_homogeneous(const double[:, ::1] cum_rates, Py_ssize_t x0,
                       double t0, double horizon, bit_generator,
                       double[::1] times_out, int64_t[::1] states_out):
    """Record jumps; returns (count, t_end, x_end, done)."""
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef Py_ssize_t n = cum_rates.shape[1]
    cdef Py_ssize_t cap = times_out.shape[0]
    cdef Py_ssize_t x = x0, count = 0
    cdef double t = t0, esc, dt, target
    cdef bint done = True
    with nogil:
        while True:
            if count == cap:
                done = False
                break
            esc = cum_rates[x, n - 1]
            dt = -log1p(-_draw(rng)) / esc
            if t + dt > horizon:
                break
            t += dt
            target = _draw(rng) * esc
            x = _pick(cum_rates, x, target, n)
            times_out[count] = t
            states_out[count] = x
            count += 1
    return count, t, x, done


def advance_homogeneous(const double[:, ::1] cum_rates, Py_ssize_t x0,
                        double t0, double horizon, bit_generator):
    """Evolve to the horizon without recording; returns (x_end, n_jumps)."""
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef Py_ssize_t n = cum_rates.shape[1]
    cdef Py_ssize_t x = x0, nj = 0
    cdef double t = t0, esc, dt, target
    with nogil:
        while True:
            esc = cum_rates[x, n - 1]
            dt = -log1p(-_draw(rng)) / esc
            if t + dt > horizon:
                break
            t += dt
            target = _draw(rng) * esc
            x = _pick(cum_rates, x, target, n)
            nj += 1
    return x, nj


def accumulate_homogeneous(const double[:, ::1] cum_rates, Py_ssize_t x0,
                           double horizon, bit_generator,
                           const double[:, :, ::1] jump_mats,
                           const double[:, ::1] seg_vecs,
                           double[::1] out_jump, double[::1] out_seg,
                           double[::1] occ_out):
    """Sample one path while accumulating path functionals.

    Adds sum over jumps of jump_mats[j, old, new] into out_jump[j], the
    duration-weighted sum of seg_vecs[i, state] into out_seg[i], and the
    occupation times into occ_out. Returns (x_end, n_jumps).
    """
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef Py_ssize_t n = cum_rates.shape[1]
    cdef Py_ssize_t k = jump_mats.shape[0]
    cdef Py_ssize_t m = seg_vecs.shape[0]
    cdef Py_ssize_t x = x0, y, nj = 0, i, j
    cdef double t = 0.0, esc, dt, target, seg
    with nogil:
        while True:
            esc = cum_rates[x, n - 1]
            dt = -log1p(-_draw(rng)) / esc
            if t + dt > horizon:
                seg = horizon - t
                occ_out[x] += seg
                for i in range(m):
                    out_seg[i] += seg * seg_vecs[i, x]
                break
            occ_out[x] += dt
            for i in range(m):
                out_seg[i] += dt * seg_vecs[i, x]
            t += dt
            target = _draw(rng) * esc
            y = _pick(cum_rates, x, target, n)
            for j in range(k):
                out_jump[j] += jump_mats[j, x, y]
            x = y
            nj += 1
    return x, nj
