"""Compiled and pure-Python kernels must be interchangeable bit-for-bit."""

import numpy as np
import pytest

from _helpers import biased_ring, random_generator
from neqresponse.markov import Observable, stationary_distribution
from neqresponse.pathspace import (
    RngStream,
    available_backends,
    mc_response,
    run_batch,
    sample_path,
    set_backend,
)
from neqresponse.pathspace.rng import StreamFactory
from neqresponse.perturbation import AmplitudeSchedule, PerturbationSpec

needs_compiled = pytest.mark.skipif(
    "compiled" not in available_backends(),
    reason="compiled kernels not built",
)


@pytest.fixture
def both_backends():
    if "compiled" not in available_backends():
        pytest.skip("compiled kernels not built")

    def run(fn):
        set_backend("compiled")
        try:
            a = fn()
        finally:
            prev = set_backend("python")
        try:
            b = fn()
        finally:
            set_backend("compiled")
        return a, b

    return run


def test_stream_factory_matches_rng_stream():
    fac = StreamFactory(987)
    for idx in (0, 1, 17, 2**40):
        ga = np.random.Generator(fac.at(idx))
        gb = RngStream(987, idx).generator()
        assert [ga.random() for _ in range(4)] == [gb.random() for _ in range(4)]


@needs_compiled
def test_trajectories_bit_identical(both_backends):
    rng = np.random.default_rng(0)
    G = random_generator(rng, 6)

    def sample():
        trajs = [sample_path(G, 0, 10.0, RngStream(5, i)) for i in range(50)]
        return trajs

    a, b = both_backends(sample)
    for ta, tb in zip(a, b):
        assert np.array_equal(ta.times, tb.times)
        assert np.array_equal(ta.states, tb.states)


@needs_compiled
def test_batch_accumulators_bit_identical(both_backends):
    G = biased_ring(4, p=1.5, q=0.7)
    V = Observable(G.space, np.array([1.0, -0.5, 0.2, 0.8]))
    spec = PerturbationSpec(V, 0.3, 0.7, AmplitudeSchedule.constant(0.2))
    from neqresponse.pathspace.girsanov import (
        jump_weight_matrix,
        linear_segment_vector,
    )

    mats = (jump_weight_matrix(G, spec),)
    vecs = (linear_segment_vector(G, spec),)

    def batch():
        return run_batch(G, 0, 3.0, 400, RngStream(6, 0), mats, vecs,
                         want_occupation=True)

    a, b = both_backends(batch)
    assert np.array_equal(a.final_states, b.final_states)
    assert np.array_equal(a.n_jumps, b.n_jumps)
    assert np.array_equal(a.jump_sums, b.jump_sums)
    assert np.array_equal(a.seg_sums, b.seg_sums)
    assert np.array_equal(a.occupation, b.occupation)


@needs_compiled
def test_estimates_bit_identical(both_backends):
    G = biased_ring(3, p=2.0, q=1.0)
    rho = stationary_distribution(G)
    V = Observable(G.space, np.array([1.0, -0.5, 0.2]))
    Q = Observable(G.space, np.array([0.5, 1.0, -1.0]))
    spec = PerturbationSpec(V, 0.5, 0.5, AmplitudeSchedule.constant(0.1))

    def estimate():
        return mc_response(G, rho, spec, Q, 1.0, 1500, RngStream(7, 0))

    a, b = both_backends(estimate)
    assert a.estimate == b.estimate
    assert a.std_error == b.std_error
