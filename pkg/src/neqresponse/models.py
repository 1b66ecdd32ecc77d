"""Built-in models: stochastic Ising dynamics with optional spin exchange,
plus the generic JSON model format consumed by the CLI.

Spin configurations on m vertices are indexed by bits, little-endian in
vertex order: bit i = (sigma(i) + 1) / 2. Flipping vertex j is XOR with
1 << j and exchanging an unequal pair (i, j) is XOR with (1<<i) | (1<<j),
so neighbor lookups are O(1) and the serialized state order is stable.

Flip rates are psi(sigma, j) * exp(-beta/2 [U(sigma^j) - U(sigma)]); any
prefactor symmetric under the flip produces the same equilibrium when the
exchange rate is zero, and generally a different steady state otherwise.
Exchanges run at a flat rate lambda per unordered edge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import (
    AsymmetricPsi,
    ModelTooLarge,
    ParseError,
    SchemaError,
    ValidationError,
)
from .markov import (
    Distribution,
    Generator,
    Observable,
    StateSpace,
    apply_L,
    correlation,
    stationary_distribution,
)
from .perturbation import AmplitudeSchedule
from .response import response_fd_oracle

MAX_SPINS = 12  # 2^12 = 4096 states, the dense-pipeline cap


@dataclass(frozen=True)
class SpinGraph:
    """Simple undirected graph (vertices, unordered edges)."""

    n_vertices: int
    edges: tuple

    def __post_init__(self):
        edges = []
        seen = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValidationError(f"self edge on vertex {i}")
            if not (0 <= i < self.n_vertices and 0 <= j < self.n_vertices):
                raise ValidationError(f"edge ({i},{j}) outside vertex range")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValidationError(f"duplicate edge {key}")
            seen.add(key)
            edges.append(key)
        object.__setattr__(self, "edges", tuple(edges))

    @classmethod
    def cycle(cls, n):
        return cls(n, tuple((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def path(cls, n):
        return cls(n, tuple((i, i + 1) for i in range(n - 1)))

    @classmethod
    def complete(cls, n):
        return cls(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


@dataclass(frozen=True)
class IsingSpec:
    """Ising flip dynamics with optional exchange mixing.

    Energy is the quadratic form U = -sum_edges J_e s_i s_j - sum_i field_i s_i
    unless an explicit per-configuration table is supplied. psi is "one",
    "heatbath" (1 / [2 cosh(beta dU / 2)]), or an explicit
    (n_states, n_vertices) table, which must be flip-symmetric.
    """

    graph: SpinGraph
    beta: float
    coupling: float = 1.0
    fields: object = 0.0
    energy_table: object = None
    psi: object = "one"
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValidationError("exchange rate must be nonnegative")
        if self.graph.n_vertices > MAX_SPINS:
            raise ModelTooLarge(
                f"{self.graph.n_vertices} spins exceeds the exact-pipeline "
                f"cap of {MAX_SPINS}"
            )


def _spin_table(m):
    states = np.arange(1 << m)
    bits = (states[:, None] >> np.arange(m)[None, :]) & 1
    return 2.0 * bits - 1.0  # (n_states, m) entries in {-1, +1}


def _configuration_space(m):
    # label = spin string with vertex 0 first ("+-" encoded as 1/0 bits)
    return StateSpace(tuple(format(s, f"0{m}b")[::-1] for s in range(1 << m)))


def _energy(spec, S):
    if spec.energy_table is not None:
        U = np.asarray(spec.energy_table, dtype=float)
        if U.shape != (S.shape[0],):
            raise ValidationError("energy table length must be 2^n_vertices")
        return U
    m = spec.graph.n_vertices
    fields = np.broadcast_to(np.asarray(spec.fields, dtype=float), (m,))
    U = -fields @ S.T
    for i, j in spec.graph.edges:
        U = U - spec.coupling * S[:, i] * S[:, j]
    return U


def build_ising_generator(spec):
    """Generator on {-1,+1}^m plus the named observables it carries.

    Observables: ``magnetization``, ``energy``, and per-site dissipation
    fluxes ``J_i`` = -2 sigma(i) W(sigma, sigma^i) from the flip channel.
    """
    m = spec.graph.n_vertices
    n = 1 << m
    S = _spin_table(m)
    U = _energy(spec, S)
    space = _configuration_space(m)
    states = np.arange(n)

    W = np.zeros((n, n))
    flux = np.zeros((m, n))
    for j in range(m):
        flipped = states ^ (1 << j)
        dU = U[flipped] - U[states]
        if isinstance(spec.psi, str):
            if spec.psi == "one":
                psi_j = np.ones(n)
            elif spec.psi == "heatbath":
                psi_j = 1.0 / (2.0 * np.cosh(0.5 * spec.beta * dU))
            else:
                raise ValidationError(f"unknown psi choice {spec.psi!r}")
        else:
            table = np.asarray(spec.psi, dtype=float)
            if table.shape != (n, m):
                raise ValidationError("psi table must have shape (2^m, m)")
            psi_j = table[:, j]
            if not np.allclose(psi_j, table[flipped, j], rtol=0.0, atol=0.0):
                raise AsymmetricPsi(
                    f"psi table depends on sigma({j}); it must satisfy "
                    "psi(sigma, j) = psi(sigma^j, j)"
                )
        rates_j = psi_j * np.exp(-0.5 * spec.beta * dU)
        W[states, flipped] = rates_j
        flux[j] = -2.0 * S[:, j] * rates_j

    if spec.lam > 0.0:
        for i, j in spec.graph.edges:
            differ = S[:, i] != S[:, j]
            src = states[differ]
            dst = src ^ ((1 << i) | (1 << j))
            W[src, dst] += spec.lam

    G = Generator(space, W)
    observables = {
        "magnetization": Observable(space, S.sum(axis=1), name="magnetization"),
        "energy": Observable(space, U, name="energy"),
    }
    for i in range(m):
        observables[f"J_{i}"] = Observable(space, flux[i], name=f"J_{i}")
    return G, observables


def equilibrium_distribution(spec):
    """Boltzmann law exp(-beta U) / Z on the configuration space."""
    S = _spin_table(spec.graph.n_vertices)
    U = _energy(spec, S)
    w = np.exp(-spec.beta * (U - U.min()))
    return Distribution(_configuration_space(spec.graph.n_vertices), w / w.sum())


def flux_identity_check(spec):
    """Max deviation of L(magnetization) from the summed site fluxes.

    Exchange moves cancel exactly because they conserve the total
    magnetization, so the identity holds for every lambda.
    """
    G, obs = build_ising_generator(spec)
    lhs = apply_L(G, obs["magnetization"]).f
    rhs = np.sum(
        [obs[f"J_{i}"].f for i in range(spec.graph.n_vertices)], axis=0
    )
    return float(np.max(np.abs(lhs - rhs)))


@dataclass(frozen=True)
class RediReport:
    lhs: float
    rhs_a_term: float
    rhs_b_term: float

    @property
    def rhs(self):
        return self.rhs_a_term + self.rhs_b_term


def redi_experiment(spec, a, b, h, t, quad_tol=1e-9):
    """Integrated magnetization response versus its correlation expression.

    lhs: finite-difference master-equation estimate of
    [sum_i <sigma_t(i)>^h - sum_i <sigma_0(i)>] / h from the stationary
    state. rhs splits into the equal-time-minus-initial correlation term
    (weight a) and the time-integrated flux correlation term (weight -b).
    The identity holds for every exchange rate lambda.
    """
    G, obs = build_ising_generator(spec)
    V = obs["magnetization"]
    rho = stationary_distribution(G)
    sched = AmplitudeSchedule.constant(1.0)
    lhs = response_fd_oracle(G, rho, V, V, a, b, sched, t, h_scale=h)

    equal_time = float(np.sum(rho.p * V.f * V.f))
    rhs_a = a * (equal_time - correlation(G, rho, V, V, 0.0, t))
    LV = apply_L(G, V)

    def integrand(s):
        return correlation(G, rho, LV, V, 0.0, s)

    integral, _ = quad(integrand, 0.0, t, epsabs=quad_tol, epsrel=1e-12, limit=200)
    rhs_b = -b * integral
    return RediReport(lhs, rhs_a, rhs_b)


# -- JSON model format --------------------------------------------------------

def save_model(G, observables, path):
    """Serialize to the CLI model format.

    Rates are written as (from-index, to-index, rate) triples; Python's
    repr round-trips doubles exactly, so save/load is bit-exact.
    """
    doc = {
        "states": [str(lab) for lab in G.space.labels],
        "rates": [
            [int(i), int(j), float(G.rates[i, j])]
            for i in range(G.n)
            for j in range(G.n)
            if G.rates[i, j] > 0.0
        ],
        "observables": {
            name: [float(v) for v in obs.f] for name, obs in observables.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Load a model file; returns (Generator, dict of Observables)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"invalid JSON in {path}: {exc.msg}",
                line=exc.lineno, column=exc.colno,
            ) from exc
    for key in ("states", "rates"):
        if key not in doc:
            raise SchemaError(f"model file missing required field {key!r}")
    labels = tuple(doc["states"])
    space = StateSpace(labels)
    n = space.n
    W = np.zeros((n, n))
    for entry in doc["rates"]:
        if len(entry) != 3:
            raise SchemaError(f"rate entry {entry!r} is not a triple")
        i, j, w = entry
        if not (isinstance(i, int) and isinstance(j, int)):
            raise SchemaError(f"rate entry {entry!r} must use state indices")
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise SchemaError(f"rate entry {entry!r} has invalid indices")
        if not isinstance(w, (int, float)) or w <= 0:
            raise ParseError(f"rate entry {entry!r} must have positive rate")
        if W[i, j] != 0.0:
            raise SchemaError(f"duplicate rate entry for ({i}, {j})")
        W[i, j] = float(w)
    G = Generator(space, W)
    observables = {}
    for name, values in doc.get("observables", {}).items():
        arr = np.asarray(values, dtype=float)
        if arr.shape != (n,):
            raise SchemaError(
                f"observable {name!r} has {arr.shape} entries for {n} states"
            )
        observables[name] = Observable(space, arr, name=name)
    return G, observables
