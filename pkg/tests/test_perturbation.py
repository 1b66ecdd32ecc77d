import numpy as np
import pytest

from _helpers import biased_ring, random_generator, random_observable, random_two_way
from neqresponse.errors import MissingReverseEdge, ScheduleDomain, UnboundedSchedule
from neqresponse.markov import Observable, StateSpace, build_generator, stationary_distribution
from neqresponse.perturbation import (
    AmplitudeSchedule,
    PerturbationSpec,
    check_local_detailed_balance,
    perturbed_generator,
    symmetric_prefactor_split,
)


def _spec(G, rng, a, b, h=0.3):
    V = random_observable(rng, G.space)
    return PerturbationSpec(V, a, b, AmplitudeSchedule.constant(h))


# -- schedules ----------------------------------------------------------------

def test_constant_schedule():
    s = AmplitudeSchedule.constant(0.4)
    assert s.value(1.7) == 0.4
    assert s.derivative(2.0) == 0.0
    assert s.integral(1.0, 3.0) == pytest.approx(0.8)
    assert s.bounds() == (0.4, 0.4)


def test_grid_schedule_interpolates_and_differentiates():
    times = np.linspace(0.0, 2.0, 9)
    values = np.sin(times)
    s = AmplitudeSchedule.from_grid(times, values)
    assert s.value(0.5) == pytest.approx(np.sin(0.5), abs=1e-3)
    eps = 1e-6
    fd = (s.value(0.8 + eps) - s.value(0.8 - eps)) / (2 * eps)
    assert s.derivative(0.8) == pytest.approx(fd, abs=1e-6)
    # antiderivative consistency against dense trapezoid
    xs = np.linspace(0.2, 1.7, 20001)
    assert s.integral(0.2, 1.7) == pytest.approx(np.trapezoid(s.value(xs), xs), abs=1e-8)
    lo, hi = s.bounds()
    assert lo <= values.min() and hi >= values.max()


def test_grid_schedule_domain_error():
    s = AmplitudeSchedule.from_grid([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(ScheduleDomain):
        s.value(1.5)


def test_callable_schedule_needs_bounds_for_thinning():
    s = AmplitudeSchedule.from_callable(
        lambda t: np.cos(t), lambda t: -np.sin(t), support=(0.0, 10.0)
    )
    assert s.value(0.3) == pytest.approx(np.cos(0.3))
    assert s.derivative(0.3) == pytest.approx(-np.sin(0.3))
    with pytest.raises(UnboundedSchedule):
        s.bounds()


# -- perturbed generator ------------------------------------------------------

def test_zero_amplitude_leaves_rates():
    rng = np.random.default_rng(0)
    G = random_generator(rng, 5)
    spec = _spec(G, rng, 0.4, 0.6, h=0.0)
    Gp = perturbed_generator(G, spec, 0.0)
    assert np.array_equal(Gp.rates, G.rates)


def test_force_model_with_constant_potential_is_identity():
    rng = np.random.default_rng(1)
    G = random_generator(rng, 4)
    spec = PerturbationSpec(
        Observable.constant(G.space, 1.3), 0.5, 0.5, AmplitudeSchedule.constant(0.7)
    )
    Gp = perturbed_generator(G, spec, 0.0)
    assert np.max(np.abs(Gp.rates - G.rates)) < 1e-15


def test_b_zero_rates_entrywise():
    rng = np.random.default_rng(2)
    G = random_generator(rng, 4)
    beta, h = 0.9, 0.35
    V = random_observable(rng, G.space)
    spec = PerturbationSpec(V, beta, 0.0, AmplitudeSchedule.constant(h))
    Gp = perturbed_generator(G, spec, 0.0)
    expected = G.rates * np.exp(-beta * h * V.f)[:, None]
    assert np.max(np.abs(Gp.rates - expected)) < 1e-14


# -- local detailed balance ---------------------------------------------------

def test_ldb_holds_for_any_split_with_fixed_sum():
    rng = np.random.default_rng(3)
    G = random_two_way(rng, 5)
    for a in (-0.4, 0.0, 0.3, 1.2):
        spec = _spec(G, np.random.default_rng(3), a, 0.9 - a)
        assert check_local_detailed_balance(G, spec, 0.0) < 1e-12


def test_ldb_fails_by_construction_when_sum_is_wrong():
    rng = np.random.default_rng(4)
    G = random_two_way(rng, 4)
    V = random_observable(rng, G.space)
    h = 0.2
    # spec sums to 1.3 but the measured target temperature is 1.0
    spec = PerturbationSpec(V, 0.5, 0.8, AmplitudeSchedule.constant(h))
    res = check_local_detailed_balance(G, spec, 0.0, beta=1.0)
    dv = np.abs(V.f[None, :] - V.f[:, None])[G.rates > 0]
    assert res == pytest.approx(0.3 * h * dv.max(), rel=1e-9)
    assert check_local_detailed_balance(G, spec, 0.0) < 1e-12


def test_ldb_one_way_edge_detected():
    sp = StateSpace.of_size(3)
    G = build_generator(sp, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)])
    rng = np.random.default_rng(5)
    spec = _spec(G, rng, 0.5, 0.5)
    with pytest.raises(MissingReverseEdge):
        check_local_detailed_balance(G, spec, 0.0)


# -- symmetric prefactor split ------------------------------------------------

def test_split_force_model_has_unit_prefactor():
    rng = np.random.default_rng(6)
    G = random_generator(rng, 4)
    split = symmetric_prefactor_split(G, _spec(G, rng, 0.5, 0.5), 0.0)
    assert np.max(np.abs(split.symmetric - 1.0)) < 1e-15


def test_split_constant_potential():
    rng = np.random.default_rng(7)
    G = random_generator(rng, 4)
    c, h, a, b = 1.7, 0.4, 0.2, 0.9
    spec = PerturbationSpec(
        Observable.constant(G.space, c), a, b, AmplitudeSchedule.constant(h)
    )
    split = symmetric_prefactor_split(G, spec, 0.0)
    assert np.max(np.abs(split.antisymmetric - 1.0)) < 1e-15
    assert np.max(np.abs(split.symmetric - np.exp(h * (b - a) * c))) < 1e-15


def test_split_reconstructs_perturbed_rates():
    rng = np.random.default_rng(8)
    G = random_generator(rng, 5)
    spec = _spec(G, rng, 0.3, 0.8, h=0.25)
    split = symmetric_prefactor_split(G, spec, 0.0)
    Gp = perturbed_generator(G, spec, 0.0)
    recon = G.rates * split.symmetric * split.antisymmetric
    np.fill_diagonal(recon, 0.0)
    scale = np.abs(Gp.rates).max()
    assert np.max(np.abs(recon - Gp.rates)) <= 1e-13 * scale


def test_split_prefactor_exactly_symmetric():
    rng = np.random.default_rng(9)
    G = random_generator(rng, 6)
    split = symmetric_prefactor_split(G, _spec(G, rng, 0.1, 0.9), 0.0)
    assert np.array_equal(split.symmetric, split.symmetric.T)


# -- invariants ---------------------------------------------------------------

def test_rate_ratios_depend_only_on_beta():
    rng = np.random.default_rng(10)
    G = random_generator(rng, 5, density=0.9)
    V = random_observable(rng, G.space)
    h = 0.3
    specs = [
        PerturbationSpec(V, a, 0.8 - a, AmplitudeSchedule.constant(h))
        for a in (0.0, 0.25, 0.8)
    ]
    mask = (G.rates > 0) & (G.rates.T > 0)
    ratios = []
    for spec in specs:
        Wp = perturbed_generator(G, spec, 0.0).rates
        ratios.append(Wp[mask] / Wp.T[mask])
    for r in ratios[1:]:
        assert np.max(np.abs(r - ratios[0]) / ratios[0]) < 1e-13


def test_b_zero_tilted_law_stationary_even_at_large_h():
    rng = np.random.default_rng(11)
    G = biased_ring(4, p=1.7, q=0.6)
    rho = stationary_distribution(G)
    V = random_observable(rng, G.space)
    beta = 0.8
    for h in (0.1, 1.0):
        spec = PerturbationSpec(V, beta, 0.0, AmplitudeSchedule.constant(h))
        Gp = perturbed_generator(G, spec, 0.0)
        tilted = rho.p * np.exp(beta * h * V.f)
        tilted /= tilted.sum()
        residual = np.max(np.abs(tilted @ Gp.L)) / Gp.max_rate
        assert residual < 1e-12
