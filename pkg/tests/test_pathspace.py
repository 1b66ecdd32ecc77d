import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from _helpers import biased_ring, random_generator, random_observable, two_state
from neqresponse.errors import ValidationError
from neqresponse.markov import (
    Distribution,
    Observable,
    correlation,
    stationary_distribution,
)
from neqresponse.pathspace import (
    RngStream,
    Trajectory,
    final_states_inhomogeneous,
    girsanov_log_density,
    girsanov_log_density_linear,
    jump_measure_identity_check,
    mc_response,
    occupation_measure,
    run_batch,
    sample_log_densities,
    sample_path,
    sample_path_inhomogeneous,
    sample_states_at,
)
from neqresponse.perturbation import AmplitudeSchedule, PerturbationSpec
from neqresponse.response import integrated_response, response_fd_oracle, _rk4_final_law


def _ring():
    return biased_ring(3, p=2.0, q=1.0)  # uniform escape rate 3


def _spec(G, Vvals, a, b, h):
    V = Observable(G.space, np.asarray(Vvals, dtype=float))
    return PerturbationSpec(V, a, b, AmplitudeSchedule.constant(h))


# -- homogeneous sampling -----------------------------------------------------

def test_jump_counts_are_poisson():
    G = _ring()
    T, n = 2.0, 20_000
    batch = run_batch(G, 0, T, n, RngStream(1, 0))
    mean_rate = 3.0 * T
    se = math.sqrt(mean_rate / n)  # Poisson variance = mean
    assert abs(batch.n_jumps.mean() - mean_rate) < 3 * se
    # variance should match the mean as well (loose band)
    assert batch.n_jumps.var() == pytest.approx(mean_rate, rel=0.1)


def test_ergodic_time_fraction_two_state():
    G = two_state(1.0, 2.0)
    n, T = 400, 50.0
    batch = run_batch(G, 0, T, n, RngStream(2, 0), want_occupation=True)
    fractions = batch.occupation[:, 0] / T
    se = fractions.std(ddof=1) / math.sqrt(n)
    assert abs(fractions.mean() - 2.0 / 3.0) < 3 * se


def test_empirical_rates_recover_generator():
    rng = np.random.default_rng(3)
    G = random_generator(rng, 5)
    traj = sample_path(G, 0, 3000.0, RngStream(3, 0))
    seq, durations = traj.segments()
    time_in = np.zeros(5)
    np.add.at(time_in, seq, durations)
    counts = np.zeros((5, 5))
    np.add.at(counts, (seq[:-1], traj.states), 1.0)
    for x in range(5):
        for y in range(5):
            if G.rates[x, y] == 0.0:
                assert counts[x, y] == 0
                continue
            est = counts[x, y] / time_in[x]
            se = math.sqrt(counts[x, y]) / time_in[x]
            assert abs(est - G.rates[x, y]) < 3 * se + 1e-12


def test_trajectory_validation_and_state_lookup():
    G = two_state()
    traj = Trajectory(0, np.array([0.5, 1.2]), np.array([1, 0]), 2.0, G.space)
    assert traj.state_at(0.0) == 0
    assert traj.state_at(0.5) == 1  # right continuous at jumps
    assert traj.state_at(1.9) == 0
    with pytest.raises(ValidationError):
        Trajectory(0, np.array([0.5, 0.5]), np.array([1, 0]), 2.0, G.space)
    with pytest.raises(ValidationError):
        Trajectory(0, np.array([0.5]), np.array([0]), 2.0, G.space)


# -- inhomogeneous sampling ---------------------------------------------------

def _first_jump_times(sampler, n):
    out = np.empty(n)
    for i in range(n):
        traj = sampler(i)
        out[i] = traj.times[0] if traj.n_jumps else np.inf
    return out


def test_thinning_reduces_to_homogeneous_at_zero_amplitude():
    G = _ring()
    spec = _spec(G, [1.0, -0.5, 0.2], 0.4, 0.6, 0.0)
    a = _first_jump_times(
        lambda i: sample_path_inhomogeneous(G, spec, 0, 2.0, RngStream(4, i)), 3000
    )
    b = _first_jump_times(
        lambda i: sample_path(G, 0, 2.0, RngStream(900, i)), 3000
    )
    assert ks_2samp(a, b).pvalue > 0.01


def test_thinning_constant_amplitude_matches_frozen_generator():
    from neqresponse.perturbation import perturbed_generator

    G = _ring()
    spec = _spec(G, [1.0, -0.5, 0.2], 0.4, 0.6, 0.3)
    Gf = perturbed_generator(G, spec, 0.0)
    a = _first_jump_times(
        lambda i: sample_path_inhomogeneous(G, spec, 0, 2.0, RngStream(5, i)), 3000
    )
    b = _first_jump_times(
        lambda i: sample_path(Gf, 0, 2.0, RngStream(901, i)), 3000
    )
    assert ks_2samp(a, b).pvalue > 0.01


def test_thinning_matches_time_dependent_master_equation():
    rng = np.random.default_rng(6)
    G = random_generator(rng, 4)
    V = random_observable(rng, G.space)
    sched = AmplitudeSchedule.from_grid([0.0, 0.4, 1.0], [0.0, 0.6, 0.2])
    spec = PerturbationSpec(V, 0.4, 0.6, sched)
    Q = rng.normal(size=4)
    T, n = 1.0, 100_000
    finals = final_states_inhomogeneous(G, spec, 0, T, n, RngStream(7, 0))
    qs = Q[finals]

    E = spec.exponent_matrix()

    def L_of(s):
        Wh = G.rates * np.exp(sched.value(s) * E)
        np.fill_diagonal(Wh, 0.0)
        Wh[np.diag_indices_from(Wh)] = -Wh.sum(axis=1)
        return Wh

    mu0 = np.zeros(4)
    mu0[0] = 1.0
    exact = _rk4_final_law(L_of, mu0, T, 2000) @ Q
    se = qs.std(ddof=1) / math.sqrt(n)
    assert abs(qs.mean() - exact) < 3 * se


# -- Girsanov densities -------------------------------------------------------

def test_log_density_zero_amplitude():
    G = _ring()
    spec = _spec(G, [1.0, -0.5, 0.2], 0.4, 0.6, 0.0)
    traj = sample_path(G, 0, 2.0, RngStream(8, 0))
    assert girsanov_log_density(traj, G, spec) == 0.0
    assert girsanov_log_density_linear(traj, G, spec) == 0.0


def test_log_density_force_model_constant_potential():
    G = _ring()
    spec = _spec(G, [1.3, 1.3, 1.3], 0.5, 0.5, 0.4)
    traj = sample_path(G, 0, 2.0, RngStream(9, 0))
    assert abs(girsanov_log_density(traj, G, spec)) < 1e-12
    assert abs(girsanov_log_density_linear(traj, G, spec)) < 1e-12


def test_density_normalization():
    G = _ring()
    spec = _spec(G, [1.0, -0.5, 0.2], 0.3, 0.7, 0.3)
    ld = sample_log_densities(G, spec, 0, 2.0, 20_000, RngStream(10, 0))
    w = np.exp(ld)
    se = w.std(ddof=1) / math.sqrt(w.size)
    assert abs(w.mean() - 1.0) < 3 * se


def test_linear_density_deviation_scales_quadratically():
    G = _ring()
    trajs = [sample_path(G, 0, 2.0, RngStream(11, i)) for i in range(150)]
    Vvals = [1.0, -0.5, 0.2]
    hs = [1e-1, 1e-2, 1e-3]
    devs = []
    for h in hs:
        spec = _spec(G, Vvals, 0.3, 0.7, h)
        devs.append(np.mean([
            abs(girsanov_log_density(tr, G, spec)
                - girsanov_log_density_linear(tr, G, spec))
            for tr in trajs
        ]))
    slope = np.polyfit(np.log(hs), np.log(devs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_linear_density_force_model_reduction():
    # with a = b the (b - a) pieces drop; check against a stripped-down
    # reimplementation of the linearized weight
    G = _ring()
    beta, h = 1.0, 0.2
    spec = _spec(G, [1.0, -0.5, 0.2], beta / 2, beta / 2, h)
    V = spec.V.f
    LV = G.L @ V
    for i in range(20):
        traj = sample_path(G, 0, 2.0, RngStream(12, i))
        seq, durations = traj.segments()
        old = seq[:-1]
        jump = (beta / 2) * h * np.sum(V[traj.states] - V[old])
        comp = (beta / 2) * h * np.sum(durations * LV[seq])
        ref = jump - comp
        got = girsanov_log_density_linear(traj, G, spec)
        assert got == pytest.approx(ref, abs=1e-12)


def test_general_schedule_density_paths_agree_with_constant():
    # a grid schedule that happens to be flat must reproduce the
    # constant-schedule closed forms
    G = _ring()
    Vvals = [1.0, -0.5, 0.2]
    const = _spec(G, Vvals, 0.3, 0.7, 0.25)
    flat = PerturbationSpec(
        Observable(G.space, np.array(Vvals)), 0.3, 0.7,
        AmplitudeSchedule.from_grid([0.0, 1.0, 2.0], [0.25, 0.25, 0.25]),
    )
    for i in range(5):
        traj = sample_path(G, 0, 2.0, RngStream(13, i))
        assert girsanov_log_density(traj, G, flat) == pytest.approx(
            girsanov_log_density(traj, G, const), abs=1e-9
        )
        assert girsanov_log_density_linear(traj, G, flat) == pytest.approx(
            girsanov_log_density_linear(traj, G, const), abs=1e-10
        )


# -- Monte Carlo response -----------------------------------------------------

def test_mc_response_null_cases():
    G = _ring()
    rho = stationary_distribution(G)
    Q = Observable(G.space, np.array([0.5, 1.0, -1.0]))
    spec = _spec(G, [2.0, 2.0, 2.0], 0.5, 0.5, 0.3)  # constant V, force model
    est = mc_response(G, rho, spec, Q, 1.0, 2000, RngStream(14, 0))
    assert est.estimate == pytest.approx(0.0, abs=max(3 * est.std_error, 1e-15))


def test_mc_response_reversible_anchor():
    rng = np.random.default_rng(15)
    from _helpers import random_reversible

    G, rho = random_reversible(rng, 4)
    V = random_observable(rng, G.space)
    beta, h, T = 0.8, 0.1, 1.0
    spec = PerturbationSpec(V, beta / 2, beta / 2, AmplitudeSchedule.constant(h))
    est = mc_response(G, rho, spec, V, T, 60_000, RngStream(16, 0))
    closed = h * beta * (
        float(np.sum(rho.p * V.f * V.f)) - correlation(G, rho, V, V, 0.0, T)
    )
    assert abs(est.estimate - closed) < 3 * est.std_error


def test_mc_response_general_schedule_path():
    # the non-constant-schedule route must agree with the exact pipeline
    G = _ring()
    rho = stationary_distribution(G)
    V = Observable(G.space, np.array([1.0, -0.5, 0.2]))
    Q = Observable(G.space, np.array([0.5, 1.0, -1.0]))
    sched = AmplitudeSchedule.from_grid([0.0, 0.5, 1.0], [0.0, 0.2, 0.0])
    spec = PerturbationSpec(V, 0.5, 0.5, sched)
    est = mc_response(G, rho, spec, Q, 1.0, 4000, RngStream(17, 0))
    exact = integrated_response(G, rho, V, Q, 0.5, 0.5, sched, 1.0)
    assert abs(est.estimate - exact) < 3 * est.std_error


def test_std_error_scales_as_inverse_sqrt_n():
    G = _ring()
    rho = stationary_distribution(G)
    V = Observable(G.space, np.array([1.0, -0.5, 0.2]))
    Q = Observable(G.space, np.array([0.5, 1.0, -1.0]))
    spec = PerturbationSpec(V, 0.5, 0.5, AmplitudeSchedule.constant(0.1))
    ns = [1000, 10_000, 100_000]
    ses = [
        mc_response(G, rho, spec, Q, 1.0, n, RngStream(18, 0)).std_error
        for n in ns
    ]
    slope = np.polyfit(np.log(ns), np.log(ses), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)


# -- jump random-measure identity ----------------------------------------------

def test_jump_measure_identity_agreement():
    rng = np.random.default_rng(19)
    G = random_generator(rng, 4)
    mu = Distribution.uniform(G.space)
    V = random_observable(rng, G.space)
    Q = Observable(G.space, rng.normal(size=4))
    spec = PerturbationSpec(V, 0.4, 0.6, AmplitudeSchedule.constant(0.2))
    rep = jump_measure_identity_check(G, mu, spec, Q, 1.0, 20_000, RngStream(20, 0))
    assert abs(rep.lhs - rep.rhs) < 3 * rep.std_error


def test_jump_measure_identity_zero_potential():
    G = _ring()
    mu = Distribution.uniform(G.space)
    Q = Observable(G.space, np.array([0.5, 1.0, -1.0]))
    spec = _spec(G, [0.0, 0.0, 0.0], 0.4, 0.6, 0.2)
    rep = jump_measure_identity_check(G, mu, spec, Q, 1.0, 2000, RngStream(21, 0))
    assert rep.lhs == 0.0
    assert abs(rep.rhs) < 1e-12


def test_jump_measure_identity_short_time_expansion():
    G = _ring()
    mu = stationary_distribution(G)
    V = Observable(G.space, np.array([1.0, -0.5, 0.2]))
    Q = Observable(G.space, np.array([0.5, 1.0, -1.0]))
    h, T = 0.2, 0.01
    spec = PerturbationSpec(V, 0.4, 0.6, AmplitudeSchedule.constant(h))
    rep = jump_measure_identity_check(G, mu, spec, Q, T, 50_000, RngStream(22, 0))
    first_order = h * T * float(np.sum(mu.p[:, None] * G.rates * (V.f * Q.f)[None, :]))
    # corrections enter at relative order escape * T ~ 3-10%
    assert rep.rhs == pytest.approx(first_order, rel=0.15)
    assert abs(rep.lhs - rep.rhs) < 3 * rep.std_error


# -- occupation measures --------------------------------------------------------

def test_occupation_point_mass_without_jumps():
    G = two_state()
    traj = Trajectory(1, np.empty(0), np.empty(0, dtype=np.int64), 3.0, G.space)
    occ = occupation_measure(traj)
    assert np.array_equal(occ.p, [0.0, 1.0])


def test_occupation_converges_to_stationary():
    G = two_state(1.0, 2.0)
    traj = sample_path(G, 0, 1e4, RngStream(23, 0))
    occ = occupation_measure(traj)
    # single-trajectory fluctuation scale for the two-state chain is
    # well under 1e-2 at this horizon; allow a generous band
    assert abs(occ.p[0] - 2.0 / 3.0) < 0.02


def test_occupation_rate_decreases_with_horizon():
    from neqresponse.fluctuations import dv_rate_function

    G = _ring()
    means = []
    for k, tau in enumerate((10.0, 100.0, 1000.0)):
        vals = [
            dv_rate_function(
                G, occupation_measure(sample_path(G, 0, tau, RngStream(24, 100 * k + i)))
            ).rate
            for i in range(12)
        ]
        means.append(np.mean(vals))
    assert means[0] > means[1] > means[2]


# -- reproducibility contract ---------------------------------------------------

def test_batch_results_independent_of_thread_count():
    G = _ring()
    spec = _spec(G, [1.0, -0.5, 0.2], 0.3, 0.7, 0.2)
    from neqresponse.pathspace.girsanov import jump_weight_matrix, linear_segment_vector

    mats = (jump_weight_matrix(G, spec),)
    vecs = (linear_segment_vector(G, spec),)
    one = run_batch(G, 0, 2.0, 5000, RngStream(25, 0), mats, vecs, threads=1)
    four = run_batch(G, 0, 2.0, 5000, RngStream(25, 0), mats, vecs, threads=4)
    assert np.array_equal(one.final_states, four.final_states)
    assert np.array_equal(one.jump_sums, four.jump_sums)
    assert np.array_equal(one.seg_sums, four.seg_sums)


def test_mc_response_identical_across_thread_counts():
    G = _ring()
    rho = stationary_distribution(G)
    V = Observable(G.space, np.array([1.0, -0.5, 0.2]))
    Q = Observable(G.space, np.array([0.5, 1.0, -1.0]))
    spec = PerturbationSpec(V, 0.5, 0.5, AmplitudeSchedule.constant(0.1))
    a = mc_response(G, rho, spec, Q, 1.0, 3000, RngStream(26, 0), threads=1)
    b = mc_response(G, rho, spec, Q, 1.0, 3000, RngStream(26, 0), threads=3)
    assert a.estimate == b.estimate
    assert a.std_error == b.std_error


def test_same_stream_reproduces_trajectory():
    G = _ring()
    t1 = sample_path(G, 0, 5.0, RngStream(27, 42))
    t2 = sample_path(G, 0, 5.0, RngStream(27, 42))
    assert np.array_equal(t1.times, t2.times)
    assert np.array_equal(t1.states, t2.states)


def test_states_at_consistent_with_propagation():
    G = _ring()
    rho = stationary_distribution(G)
    states = sample_states_at(G, rho, [0.3, 1.1], 30_000, RngStream(28, 0))
    V = Observable.indicator(G.space, 0)
    vals = V.f[states[:, 0]] * V.f[states[:, 1]]
    exact = correlation(G, rho, V, V, 0.3, 1.1)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - exact) < 3 * se
