"""Command-line front end.

Every command emits CSV on stdout (or --output) with a reproducibility
header: comment lines carrying the package version, the full effective
configuration, the seed, and the kernel backend. Exit codes: 0 success,
2 validation error, 3 numerical failure, 4 I/O error; failures print one
machine-readable "ErrorName: reason" line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import (
    NeqResponseError,
    NumericalError,
    SchemaError,
    ValidationError,
)
from .fluctuations import dv_rate_function, prop3_check
from .markov import (
    Distribution,
    Observable,
    check_detailed_balance,
    stationary_distribution,
)
from .models import (
    IsingSpec,
    SpinGraph,
    build_ising_generator,
    load_model,
    redi_experiment,
    save_model,
)
from .pathspace import RngStream, active_backend, mc_response
from .perturbation import AmplitudeSchedule, PerturbationSpec
from .response import (
    bump_schedule,
    integrated_response,
    response_fd_oracle,
    response_grid,
)


def _default_threads():
    try:
        return max(1, int(os.environ.get("NEQRESPONSE_THREADS", "1")))
    except ValueError:
        return 1


def _open_output(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w"), True


def _emit(args, columns, rows, extra_comments=()):
    """Write the CSV with its reproducibility header."""
    out, close = _open_output(getattr(args, "output", None))
    try:
        out.write(f"# neqresponse {__version__}\n")
        out.write(f"# command={args.command}\n")
        for key, val in sorted(vars(args).items()):
            if key in ("command", "func", "output"):
                continue
            out.write(f"# {key}={val}\n")
        out.write(f"# backend={active_backend()}\n")
        out.write(",".join(columns) + "\n")
        for row in rows:
            out.write(",".join(_fmt(v) for v in row) + "\n")
        for line in extra_comments:
            out.write(line + "\n")
    finally:
        if close:
            out.close()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_vector(text, n, what):
    parts = text.split(",")
    if len(parts) != n:
        raise SchemaError(f"{what} needs {n} comma-separated values, got {len(parts)}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise SchemaError(f"could not parse {what}: {exc}") from exc


def _resolve_observable(name, G, observables, what):
    if name in observables:
        return observables[name]
    if "," in name:
        return Observable(G.space, _parse_vector(name, G.n, what), name=what)
    raise SchemaError(f"observable {name!r} not found")


def _resolve_mu(text, G):
    if text == "stationary":
        return stationary_distribution(G)
    if text == "uniform":
        return Distribution.uniform(G.space)
    return Distribution(G.space, _parse_vector(text, G.n, "--mu"))


def _load(args):
    return load_model(args.model)


def _parse_graph(text):
    kind, _, arg = text.partition(":")
    if kind in ("cycle", "path", "complete"):
        return getattr(SpinGraph, kind)(int(arg))
    if kind == "file":
        with open(arg) as fh:
            doc = json.load(fh)
        return SpinGraph(int(doc["n_vertices"]), tuple(map(tuple, doc["edges"])))
    raise ValidationError(
        f"graph spec {text!r} not of the form cycle:N|path:N|complete:N|file:PATH"
    )


def _float_list(text):
    return [float(p) for p in text.split(",")]


# -- commands -----------------------------------------------------------------

def cmd_make_ising(args):
    graph = _parse_graph(args.graph)
    spec = IsingSpec(
        graph=graph, beta=args.beta, coupling=args.J, fields=args.field,
        psi=args.psi, lam=getattr(args, "lambda"),
    )
    G, observables = build_ising_generator(spec)
    save_model(G, observables, args.output)
    return 0


def cmd_stationary(args):
    G, _ = _load(args)
    rho = stationary_distribution(G)
    rows = [(i, G.space.labels[i], float(rho.p[i])) for i in range(G.n)]
    _emit(args, ["state", "label", "rho"], rows)
    return 0


def cmd_check_db(args):
    G, _ = _load(args)
    rho = stationary_distribution(G)
    rep = check_detailed_balance(G, rho, args.tol)
    _emit(
        args,
        ["is_reversible", "max_violation", "worst_from", "worst_to"],
        [(rep.is_reversible, rep.max_violation, rep.worst_edge[0], rep.worst_edge[1])],
    )
    return 0


def _grid_points(args):
    if args.s_grid:
        return np.array(_float_list(args.s_grid))
    return np.linspace(args.t / (args.n_s + 1), args.t * args.n_s / (args.n_s + 1),
                       args.n_s)


def cmd_response_exact(args):
    G, observables = _load(args)
    V = _resolve_observable(args.V, G, observables, "--V")
    Q = _resolve_observable(args.Q, G, observables, "--Q")
    mu = _resolve_mu(args.mu, G)
    s_points = _grid_points(args)
    grid = response_grid(G, mu, V, Q, args.a, args.b, args.t, s_points,
                         threads=args.threads)
    columns = ["s", "R_exact"]
    if args.breakdown:
        columns += ["b_ds", "a_dt", "b_VLQ", "b_LVQ"]
    if args.with_fd:
        columns += ["R_fd"]
    rows = []
    for s, val, terms in zip(grid.s_points, grid.values, grid.terms):
        row = [float(s), float(val)]
        if args.breakdown:
            row += [terms.b_ds, terms.a_dt, terms.b_VLQ, terms.b_LVQ]
        if args.with_fd:
            width = args.fd_width if args.fd_width else args.t / 50.0
            width = min(width, s * 0.99, (args.t - s) * 0.99)
            sched = bump_schedule(float(s), width)
            row.append(response_fd_oracle(G, mu, V, Q, args.a, args.b, sched,
                                          args.t, h_scale=args.h_scale))
        rows.append(tuple(row))
    _emit(args, columns, rows)
    return 0


def cmd_response_fd(args):
    G, observables = _load(args)
    V = _resolve_observable(args.V, G, observables, "--V")
    Q = _resolve_observable(args.Q, G, observables, "--Q")
    mu = _resolve_mu(args.mu, G)
    sched = AmplitudeSchedule.constant(1.0)
    val = response_fd_oracle(G, mu, V, Q, args.a, args.b, sched, args.t,
                             h_scale=args.h_scale)
    columns = ["t", "h_scale", "R_fd"]
    row = [args.t, args.h_scale, val]
    if args.compare:
        exact = integrated_response(G, mu, V, Q, args.a, args.b, sched, args.t)
        columns += ["R_int_exact", "abs_diff"]
        row += [exact, abs(val - exact)]
    _emit(args, columns, [tuple(row)])
    return 0


def cmd_response_mc(args):
    G, observables = _load(args)
    V = _resolve_observable(args.V, G, observables, "--V")
    Q = _resolve_observable(args.Q, G, observables, "--Q")
    mu = _resolve_mu(args.mu, G)
    spec = PerturbationSpec(V, args.a, args.b, AmplitudeSchedule.constant(args.h))
    est = mc_response(G, mu, spec, Q, args.t, args.n, RngStream(args.seed, 0),
                      threads=args.threads)
    columns = ["estimate", "std_error", "n_samples"]
    row = [est.estimate, est.std_error, est.n_samples]
    if args.compare:
        exact = integrated_response(G, mu, V, Q, args.a, args.b, spec.schedule,
                                    args.t)
        columns += ["exact", "z"]
        row += [exact, (est.estimate - exact) / est.std_error]
    _emit(args, columns, [tuple(row)])
    return 0


def cmd_chi(args):
    from .response import chi_fd, chi_formula

    G, observables = _load(args)
    V = _resolve_observable(args.V, G, observables, "--V")
    M = _resolve_observable(args.M, G, observables, "--M")
    rho = stationary_distribution(G)
    pair = chi_formula(G, rho, V, M, args.a, args.b)
    columns = ["chi_MV", "chi_VM"]
    row = [pair.chi_MV, pair.chi_VM]
    if args.fd:
        fd = chi_fd(G, V, M, args.a, args.b, h_scale=args.h_scale)
        columns += ["chi_MV_fd", "chi_VM_fd"]
        row += [fd.chi_MV, fd.chi_VM]
    _emit(args, columns, [tuple(row)])
    return 0


def cmd_dv(args):
    G, _ = _load(args)
    mu = _resolve_mu(args.mu, G)
    res = dv_rate_function(G, mu, tol=args.tol)
    rows = [
        (i, G.space.labels[i], float(mu.p[i]), float(res.minimizer.f[i]))
        for i in range(G.n)
    ]
    _emit(
        args, ["state", "label", "mu", "u_opt"], rows,
        extra_comments=[
            f"# rate={res.rate!r}",
            f"# grad_norm={res.grad_norm!r}",
            f"# iterations={res.iterations}",
            f"# extrapolated={res.extrapolated}",
        ],
    )
    return 0


def cmd_prop3(args):
    G, observables = _load(args)
    V = _resolve_observable(args.V, G, observables, "--V")
    out = prop3_check(G, V, args.a, args.b, _float_list(args.h_list))
    rows = [(r.h, r.rate, r.rhs, r.error) for r in out.rows]
    _emit(args, ["h", "I", "rhs", "error"], rows,
          extra_comments=[f"# fitted_slope={out.slope!r}"])
    return 0


def cmd_redi(args):
    graph = _parse_graph(args.graph)
    rows = []
    for lam in _float_list(getattr(args, "lambda")):
        spec = IsingSpec(graph=graph, beta=args.beta, coupling=args.J,
                         fields=args.field, psi=args.psi, lam=lam)
        rep = redi_experiment(spec, args.a, args.b, args.h, args.t)
        rows.append((lam, rep.lhs, rep.rhs_a_term, rep.rhs_b_term, rep.rhs,
                     abs(rep.lhs - rep.rhs)))
    _emit(args, ["lambda", "lhs", "rhs_a", "rhs_b", "rhs", "abs_diff"], rows)
    return 0


# -- parser -------------------------------------------------------------------

def _add_model_io(p):
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--output", default="-", help="output CSV path (default stdout)")


def _add_common_mc(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=_default_threads())


def _add_ab(p):
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="neqresponse",
        description="Linear response and dynamical fluctuations for Markov "
                    "jump processes out of equilibrium",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-ising", help="generate a spin model file")
    p.add_argument("--graph", required=True,
                   help="cycle:N | path:N | complete:N | file:PATH")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--field", type=float, default=0.0)
    p.add_argument("--psi", choices=["one", "heatbath"], default="one")
    p.add_argument("--lambda", type=float, default=0.0)
    p.add_argument("--output", required=True, help="model JSON path")
    p.set_defaults(func=cmd_make_ising)

    p = sub.add_parser("stationary", help="stationary distribution")
    _add_model_io(p)
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("check-db", help="detailed-balance diagnostic")
    _add_model_io(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_check_db)

    p = sub.add_parser("response-exact", help="response kernel R(t,s) on a grid")
    _add_model_io(p)
    p.add_argument("--V", required=True)
    p.add_argument("--Q", required=True)
    _add_ab(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--mu", default="stationary")
    p.add_argument("--s-grid", default="", help="comma list of source times")
    p.add_argument("--n-s", type=int, default=20)
    p.add_argument("--breakdown", action="store_true",
                   help="emit the four response terms")
    p.add_argument("--with-fd", action="store_true",
                   help="add a bump-probe finite-difference column")
    p.add_argument("--fd-width", type=float, default=0.0)
    p.add_argument("--h-scale", type=float, default=1e-5)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=cmd_response_exact)

    p = sub.add_parser("response-fd", help="finite-difference response oracle")
    _add_model_io(p)
    p.add_argument("--V", required=True)
    p.add_argument("--Q", required=True)
    _add_ab(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--mu", default="stationary")
    p.add_argument("--h-scale", type=float, default=1e-5)
    p.add_argument("--compare", action="store_true",
                   help="also emit the exact integrated response")
    p.set_defaults(func=cmd_response_fd)

    p = sub.add_parser("response-mc", help="Girsanov-weight Monte Carlo response")
    _add_model_io(p)
    p.add_argument("--V", required=True)
    p.add_argument("--Q", required=True)
    _add_ab(p)
    p.add_argument("--h", type=float, required=True, help="constant amplitude")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--mu", default="stationary")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--compare", action="store_true")
    _add_common_mc(p)
    p.set_defaults(func=cmd_response_mc)

    p = sub.add_parser("chi", help="stationary susceptibility pair")
    _add_model_io(p)
    p.add_argument("--V", required=True)
    p.add_argument("--M", required=True)
    _add_ab(p)
    p.add_argument("--fd", action="store_true",
                   help="confirm by perturbed stationary laws")
    p.add_argument("--h-scale", type=float, default=1e-5)
    p.set_defaults(func=cmd_chi)

    p = sub.add_parser("dv", help="occupation rate function I(mu)")
    _add_model_io(p)
    p.add_argument("--mu", required=True,
                   help="stationary | uniform | comma list of probabilities")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_dv)

    p = sub.add_parser("prop3", help="rate-vs-response small-h scaling table")
    _add_model_io(p)
    p.add_argument("--V", required=True)
    _add_ab(p)
    p.add_argument("--h-list", default="1e-1,3e-2,1e-2,3e-3,1e-3")
    p.set_defaults(func=cmd_prop3)

    p = sub.add_parser("redi", help="spin-model integrated response experiment")
    p.add_argument("--graph", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--field", type=float, default=0.0)
    p.add_argument("--psi", choices=["one", "heatbath"], default="one")
    p.add_argument("--lambda", default="1.0", help="comma list of exchange rates")
    _add_ab(p)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_redi)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except NeqResponseError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
