"""Command-line entry point ``sirreg``.

Exit codes: 0 success, 1 input/usage error, 2 numerical failure,
3 infeasible request. Every run writes a manifest (``--manifest PATH``,
else ``<output>.manifest.json``, else one JSON line on stderr).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write, jsonable, sha256_file, write_json
from .evalsim import Link, SimSpec, default_basis, simulate, subspace_distance
from .exceptions import InputError, NumericalError, SirError
from .moments import Dataset, read_csv, sliced_moments, toy_dataset, write_csv
from .ridge_als import (
    AlsConfig,
    check_existence,
    construct_counterexample,
    direct_gap,
    run_als,
)
from .rsir import fit_rsir, fit_sir, select_tau_cv

log = logging.getLogger("sirreg")

GAP_RTOL = 1e-10


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with other input errors; 2 is numerical
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Data sources
# ---------------------------------------------------------------------------

def _constant_dataset():
    return Dataset(np.tile([1.5, -0.5], (4, 1)), np.array([1.0, 2.0, 3.0, 4.0]))


# name -> (dataset factory, default slices, initial basis for d = 1)
FIXTURES = {
    "toy": (toy_dataset, 2, np.array([[0.0], [1.0]])),
    "constant": (_constant_dataset, 2, None),
}

_SIM_KEYS = {"n": int, "p": int, "d": int, "link": str, "noise": float, "rho": float, "seed": int}


def parse_sim_spec(text):
    """``"n=200,p=5,d=1,link=linear,noise=0,rho=0,seed=0"`` -> :class:`SimSpec`."""
    opts = {"n": 200, "p": 5, "d": 1, "link": "linear", "noise": 0.0, "rho": 0.0, "seed": 0}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep or key not in _SIM_KEYS:
            raise InputError(f"bad --simulate item {item!r}; keys are {sorted(_SIM_KEYS)}")
        try:
            opts[key] = _SIM_KEYS[key](value)
        except ValueError:
            raise InputError(f"bad value for {key}: {value!r}") from None
    try:
        link = Link(opts["link"])
    except ValueError:
        raise InputError(f"unknown link {opts['link']!r}") from None
    return SimSpec(opts["n"], opts["p"], default_basis(opts["p"], opts["d"]), link,
                   opts["noise"], opts["rho"], opts["seed"])


def _add_source(p, slices_default=None):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", type=Path, help="CSV file with a header row")
    src.add_argument("--fixture", choices=sorted(FIXTURES), help="built-in dataset")
    src.add_argument("--simulate", metavar="SPEC",
                     help="simulate data, e.g. 'n=200,p=5,d=1,link=cubic,noise=0.5,rho=0,seed=42'")
    p.add_argument("--response", default="y", help="response column name or index (default: y)")
    p.add_argument("--slices", type=int, default=slices_default, help="number of slices h")


def _load(args):
    """Resolve the data source to ``(dataset, h, initial_basis)``."""
    init = None
    if args.input is not None:
        dataset = read_csv(args.input, args.response)
        h = args.slices
    elif args.fixture is not None:
        factory, h_default, init = FIXTURES[args.fixture]
        dataset = factory()
        h = args.slices or h_default
    else:
        dataset = simulate(parse_sim_spec(args.simulate))
        h = args.slices
    if h is None:
        raise InputError("--slices is required for this data source")
    return dataset, h, init


def _positive(kind):
    def check(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return v
    return check


def _grid(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None


# ---------------------------------------------------------------------------
# Subcommands. Each returns (exit_code, primary_output_path or None).
# ---------------------------------------------------------------------------

def cmd_fit(args):
    dataset, h, _ = _load(args)
    moments = sliced_moments(dataset, h)
    if args.method == "sir":
        fit = fit_sir(moments, args.dim)
    else:
        if args.tau is None:
            raise InputError("--tau is required for --method rsir")
        fit = fit_rsir(moments, args.dim, args.tau)
    write_json(args.output, fit.to_dict())
    if args.basis_csv:
        with atomic_write(args.basis_csv) as fh:
            np.savetxt(fh, fit.basis, delimiter=",", fmt="%.17g")
    print(f"{fit.method}: eigenvalues {np.array2string(fit.eigenvalues, precision=6)}")
    return 0, args.output


def cmd_degeneracy(args):
    dataset, h, init = _load(args)
    moments = sliced_moments(dataset, h)
    report = check_existence(moments)
    config = AlsConfig(tau=args.tau, d=args.dim, max_iters=args.iters,
                       a_norm_tolerance=args.a_norm_tol, rng_seed=args.seed,
                       init_scale=args.init_scale)
    if init is not None and init.shape[1] != args.dim:
        init = None
    trace = run_als(moments, config, initial_basis=init)
    if args.trace:
        with atomic_write(args.trace) as fh:
            if Path(args.trace).suffix.lower() == ".csv":
                trace.to_csv(fh)
            else:
                trace.to_jsonl(fh)
    out = {
        "existence": report.to_dict(),
        "tau": args.tau,
        "d": args.dim,
        "stop_reason": trace.stop_reason,
        "sweeps": trace.sweeps,
        "initial_a_norm": trace.initial_a_norm,
        "final_a_norm": trace.final_a_norm,
        "a_norm_ratio": trace.shrink_ratio(),
        "objective_monotone": trace.is_monotone(),
    }
    if args.output:
        write_json(args.output, out)
    if report.exists:
        print(f"minimizer exists; minimum = sum_y f_y ||xbar_y - xbar||^2 = {report.minimum:.6g}, A_hat = 0")
    else:
        print(f"minimizer absent; iterates collapsing: ||A|| ratio {trace.shrink_ratio():.6g} "
              f"after {trace.sweeps} sweeps ({trace.stop_reason})")
    return 0, args.output or args.trace


def cmd_counterexample(args):
    dataset, h, _ = _load(args)
    moments = sliced_moments(dataset, h)
    ce = construct_counterexample(moments, args.tau, args.dim, args.epsilon_fraction)
    direct = direct_gap(moments, ce.basis, ce.loadings, args.tau)
    agree = abs(direct - ce.gap) <= GAP_RTOL * max(abs(ce.gap), abs(direct))
    out = {
        "tau": args.tau,
        "d": args.dim,
        "p": moments.p,
        "h": moments.h,
        "slice_index": ce.slice_index,
        "epsilon": ce.epsilon,
        "basis": ce.basis.reshape(-1, order="F"),
        "loadings": ce.loadings.reshape(-1, order="F"),
        "gap_analytic": ce.gap,
        "gap_direct": direct,
        "agree": agree,
    }
    write_json(args.output, out)
    print(f"gap analytic {ce.gap:.12g}, direct {direct:.12g}")
    if not agree:
        raise NumericalError("analytic and direct gaps disagree")
    return 0, args.output


def cmd_cv(args):
    dataset, h, _ = _load(args)
    sel = select_tau_cv(dataset, h, args.dim, args.grid, args.folds, args.seed, args.jobs)
    write_json(args.output, sel.to_dict())
    if args.scores_csv:
        with atomic_write(args.scores_csv) as fh:
            fh.write("tau,score\n")
            for t, s in zip(sel.grid, sel.scores):
                fh.write(f"{t!r},{s!r}\n")
    print(f"chosen tau = {sel.chosen:g}")
    return 0, args.output


def cmd_simulate(args):
    spec = SimSpec(args.n, args.p, default_basis(args.p, args.dim), Link(args.link),
                   args.noise_sd, args.rho, args.seed)
    dataset = simulate(spec)
    with atomic_write(args.output) as fh:
        write_csv(dataset, fh)
    if args.basis_output:
        with atomic_write(args.basis_output) as fh:
            np.savetxt(fh, spec.true_basis, delimiter=",", fmt="%.17g")
    return 0, args.output


def cmd_summarize(args):
    dataset, h, _ = _load(args)
    summary = sliced_moments(dataset, h).summary()
    if args.output:
        write_json(args.output, summary)
    print(f"n={summary['n']} p={summary['p']} h={summary['h']}")
    for y, (f, nrm) in enumerate(zip(summary["f"], summary["slice_mean_norms"])):
        print(f"slice {y}: f={f:.6g} ||xbar_y - xbar||={nrm:.6g}")
    print(f"rank(sigma)={summary['sigma_rank']} cond(sigma)={summary['sigma_condition']:.6g}")
    print("top eigenvalues of gamma: " + ", ".join(f"{v:.6g}" for v in summary["gamma_top_eigenvalues"]))
    return 0, args.output


def cmd_distance(args):
    A = np.loadtxt(args.a, delimiter=",", ndmin=2)
    B = np.loadtxt(args.b, delimiter=",", ndmin=2)
    print(f"{subspace_distance(A, B):.12g}")
    return 0, None


# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="sirreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--manifest", type=Path, help="where to write the run manifest JSON")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit SIR or regularized SIR")
    _add_source(p)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--method", choices=("sir", "rsir"), default="rsir")
    p.add_argument("--tau", type=_positive(float))
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--basis-csv", type=Path)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("degeneracy", help="existence check and ridge ALS collapse trace")
    _add_source(p)
    p.add_argument("--tau", type=_positive(float), required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-scale", type=_positive(float), default=1.0)
    p.add_argument("--a-norm-tol", type=_positive(float), default=1e-8)
    p.add_argument("--trace", type=Path, help="trace output (.csv for CSV, JSON lines otherwise)")
    p.add_argument("--output", type=Path, help="existence report + run summary JSON")
    p.set_defaults(func=cmd_degeneracy)

    p = sub.add_parser("counterexample", help="explicit pair beating every (0, C)")
    _add_source(p)
    p.add_argument("--tau", type=_positive(float), required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--epsilon-fraction", type=float, default=0.5)
    p.add_argument("--output", type=Path, required=True)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("cv", help="cross-validated choice of tau")
    _add_source(p)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--grid", type=_grid, required=True, help="comma-separated increasing tau values")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--scores-csv", type=Path)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("simulate", help="write a synthetic index-model dataset as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--link", choices=[l.value for l in Link], default="linear")
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--basis-output", type=Path, help="also write the true basis as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("summarize", help="print sliced-moment diagnostics")
    _add_source(p)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("distance", help="subspace distance between two basis CSV files")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.set_defaults(func=cmd_distance)
    return parser


def _manifest(args, duration, code):
    params = {k: v for k, v in vars(args).items() if k not in ("func", "manifest", "verbose")}
    digests = {}
    for key in ("input", "a", "b"):
        path = params.get(key)
        if path is not None and Path(path).is_file():
            digests[str(path)] = sha256_file(path)
    return {
        "subcommand": args.command,
        "parameters": jsonable({k: str(v) if isinstance(v, Path) else v for k, v in params.items()}),
        "input_digests": digests,
        "tool_version": __version__,
        "exit_code": code,
        "duration_seconds": duration,
    }


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    output = None
    try:
        code, output = args.func(args)
    except SirError as exc:
        print(f"sirreg {args.command}: {exc}", file=sys.stderr)
        code = exc.exit_code
    except OSError as exc:
        print(f"sirreg {args.command}: {exc}", file=sys.stderr)
        code = 1
    manifest = _manifest(args, time.perf_counter() - start, code)
    if args.manifest is not None:
        write_json(args.manifest, manifest)
    elif output is not None:
        write_json(Path(f"{output}.manifest.json"), manifest)
    else:
        print(json.dumps(manifest), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
