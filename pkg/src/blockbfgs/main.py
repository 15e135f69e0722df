"""
blockbfgs — CLI

Commands:
  run --data PATH            Sweep stepsizes for each method, write CSV traces
                             and a summary of the best stepsize per method.
  generate --out PATH        Write a synthetic LIBSVM dataset (planted logistic model).
  bounds --data PATH         Print λ, Λ, κ and the metric/stepsize bounds of the
                             convergence theory for a dataset.

Results go to --out, else $BLOCKBFGS_OUT_DIR, else ./results. A JSON config
file (--config, else $BLOCKBFGS_CONFIG) can hold any `run` flag; flags given on
the command line win over the file.

Examples:
  blockbfgs generate --n 1000 --d 20 --out synth.svm
  blockbfgs run --data synth.svm --method svrg,gauss_4_3 --passes 30
  blockbfgs run --data a9a.svm --method prev --eta 0.05 --seed 0,1,2 --emit-plot-script
  blockbfgs bounds --data synth.svm --memory 5
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv
load_dotenv()

from blockbfgs.analysis import gamma_closed_form_bound, metric_bounds
from blockbfgs.config import DEFAULT_MEMORY, DEFAULT_PASSES, METHODS
from blockbfgs.dataset import add_bias, load_libsvm, make_synthetic, to_libsvm
from blockbfgs.harness import default_grid, load_config_file, run_experiment, spec_from_mapping
from blockbfgs.objective import LogisticModel


def _fail(message: str):
    print(f"ERROR: {message}", file=sys.stderr)
    sys.exit(1)


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _option_label(option: str | None) -> str:
    return "two-loop, last iterate" if option is None else f"option {option}"


def _flag_values(args) -> dict:
    """The `run` flags the user actually gave, keyed like the config file."""
    values = {
        "data": args.data,
        "methods": args.method.split(",") if args.method else None,
        "grid": [args.eta] if args.eta is not None else (default_grid() if args.grid else None),
        "passes": args.passes,
        "seeds": _int_list(args.seed) if args.seed else None,
        "out": args.out,
        "q": args.q,
        "L": args.L,
        "memory": args.memory,
        "s_size": args.s_size,
        "t_size": args.t_size,
        "reg": args.reg,
        "bias": False if args.no_bias else None,
        "option": args.option,
        "emit_plot_script": True if args.emit_plot_script else None,
        "workers": args.workers,
        "n_features": args.n_features,
    }
    return {k: v for k, v in values.items() if v is not None}


# ── run ───────────────────────────────────────────────────────────────────────

def cmd_run(args):
    values = {}
    if os.environ.get("BLOCKBFGS_OUT_DIR"):
        values["out"] = os.environ["BLOCKBFGS_OUT_DIR"]
    config_path = args.config or os.environ.get("BLOCKBFGS_CONFIG")
    try:
        if config_path:
            values.update(load_config_file(config_path))
        values.update(_flag_values(args))
        spec = spec_from_mapping(values)
    except (ValueError, OSError) as e:
        _fail(str(e))
    if spec.data_path is None:
        _fail("no data file: pass --data or set it in the config file")

    print(f"\n{'=' * 44}")
    print(f"  blockbfgs run")
    print(f"  Data     : {spec.data_path}{'' if spec.bias else ' (no bias)'}")
    print(f"  Methods  : {', '.join(m.label if m.size else m.kind for m in spec.methods)}")
    print(f"  Grid     : {len(spec.grid)} stepsizes ({max(spec.grid):g} .. {min(spec.grid):g})")
    print(f"  Seeds    : {', '.join(str(s) for s in spec.seeds)}")
    print(f"  Budget   : {spec.passes:g} passes, {_option_label(spec.option)}")
    print(f"  Output   : {spec.out_dir}")
    if config_path:
        print(f"  Config   : {config_path}")
    print(f"{'=' * 44}\n")

    try:
        report = run_experiment(spec)
    except (ValueError, OSError) as e:
        _fail(str(e))

    print(f"  f* = {report.f_star:.17g}")
    if report.diverged:
        print(f"  {report.diverged} run(s) diverged and are excluded from the best-stepsize choice")
    print(f"\n  {'method':<16} {'best eta':>10} {'final error':>14} {'passes':>8}")
    for label in report.csv_paths:
        best = report.best.get(label)
        if best is None:
            print(f"  {label:<16} {'-':>10} {'(no full run)':>14}")
            continue
        print(f"  {label:<16} {best.eta:>10g} {best.mean_final_error:>14.3e} {best.final_datapasses:>8.2f}")

    print(f"\n{'=' * 44}")
    print(f"  DONE — {len(report.csv_paths)} method CSV(s)")
    for path in report.csv_paths.values():
        print(f"    {path}")
    print(f"  Summary: {report.summary_path}")
    if report.plot_path:
        print(f"  Plot script: {report.plot_path}")
    print(f"{'=' * 44}\n")


# ── generate ──────────────────────────────────────────────────────────────────

def cmd_generate(args):
    try:
        data = make_synthetic(args.n, args.d, density=args.density, seed=args.seed)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(to_libsvm(data), encoding="ascii")
    except (ValueError, OSError) as e:
        _fail(str(e))
    print(f"Wrote {data.n} examples with {data.d} features to {out}")


# ── bounds ────────────────────────────────────────────────────────────────────

def cmd_bounds(args):
    try:
        data = load_libsvm(args.data, n_features=args.n_features)
        if not args.no_bias:
            data = add_bias(data)
        model = LogisticModel(data, reg=args.reg)
        lam, Lam = model.smoothness_constants()
        bounds = metric_bounds(lam, Lam, args.memory)
        closed = gamma_closed_form_bound(lam, Lam, args.memory)
    except (ValueError, OSError) as e:
        _fail(str(e))

    print(f"\n{'=' * 44}")
    print(f"  blockbfgs bounds")
    print(f"  Data     : {args.data} (n={data.n}, d={data.d})")
    print(f"  Memory   : {args.memory}")
    print(f"{'=' * 44}\n")
    print(f"  lambda          {lam:.6e}")
    print(f"  Lambda          {Lam:.6e}")
    print(f"  kappa           {bounds.kappa:.6e}")
    print(f"  gamma (lower)   {bounds.gamma_lb:.6e}")
    print(f"  Gamma (upper)   {bounds.Gamma_ub:.6e}")
    print(f"  Gamma (closed)  {closed:.6e}")
    print(f"  eta threshold   {bounds.step_threshold():.6e}\n")


def main(argv: list[str] | None = None):
    parser = argparse.ArgumentParser(
        prog="blockbfgs",
        description="Stochastic block BFGS with variance-reduced gradients: experiments and bounds.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    # run
    p_run = sub.add_parser("run", help="Stepsize sweep over methods → CSV traces + summary")
    p_run.add_argument("--data", help="LIBSVM file")
    p_run.add_argument("--method", help=f"Comma-separated labels: {', '.join(METHODS)} "
                                        "or gauss_Q_M / prev_L_M / fact_Q_M (default: all four)")
    p_run.add_argument("--q", type=int, default=None, help="Sketch width for bare gauss/fact (default ceil(sqrt(d)), cap 32)")
    p_run.add_argument("--L", type=int, default=None, help="Directions per block for bare prev (default ceil(d^(1/4)))")
    p_run.add_argument("--memory", type=int, default=None, help=f"Stored block triples (default {DEFAULT_MEMORY})")
    step = p_run.add_mutually_exclusive_group()
    step.add_argument("--eta", type=float, default=None, help="Single stepsize")
    step.add_argument("--grid", action="store_true", help="Full stepsize grid 1 .. 1e-8 (the default)")
    p_run.add_argument("--passes", type=float, default=None, help=f"Pass budget per run (default {DEFAULT_PASSES})")
    p_run.add_argument("--s-size", type=int, default=None, help="Gradient sample size (default ceil(sqrt(n)))")
    p_run.add_argument("--t-size", type=int, default=None, help="Hessian sample size (default ceil(sqrt(n)))")
    p_run.add_argument("--seed", type=str, default=None, help="Seed or comma-separated seeds (default 0)")
    p_run.add_argument("--no-bias", action="store_true", help="Do not append the constant feature")
    p_run.add_argument("--reg", type=float, default=None, help="L2 weight (default 1/n)")
    p_run.add_argument("--option", choices=["i", "ii"], default=None,
                       help="i: explicit metric + last iterate; ii: two-loop + random iterate (default: two-loop + last iterate)")
    p_run.add_argument("--out", default=None, help="Output directory")
    p_run.add_argument("--emit-plot-script", action="store_true", help="Also write a matplotlib script")
    p_run.add_argument("--config", default=None, help="JSON experiment config")
    p_run.add_argument("--workers", type=int, default=None, help="Parallel runs (default 1)")
    p_run.add_argument("--n-features", type=int, default=None, help="Dimension d (default: largest feature index in the file)")

    # generate
    p_gen = sub.add_parser("generate", help="Write a synthetic LIBSVM dataset")
    p_gen.add_argument("--n", type=int, default=1000, help="Examples (default 1000)")
    p_gen.add_argument("--d", type=int, default=20, help="Features (default 20)")
    p_gen.add_argument("--density", type=float, default=0.3, help="Fraction of nonzero features (default 0.3)")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="Output LIBSVM path")

    # bounds
    p_bounds = sub.add_parser("bounds", help="Print the theory's constants for a dataset")
    p_bounds.add_argument("--data", required=True, help="LIBSVM file")
    p_bounds.add_argument("--memory", type=int, default=DEFAULT_MEMORY, help=f"Memory M (default {DEFAULT_MEMORY})")
    p_bounds.add_argument("--reg", type=float, default=None, help="L2 weight (default 1/n)")
    p_bounds.add_argument("--no-bias", action="store_true", help="Do not append the constant feature")
    p_bounds.add_argument("--n-features", type=int, default=None, help="Dimension d (default: largest feature index in the file)")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.command == "run":
        cmd_run(args)
    elif args.command == "generate":
        cmd_generate(args)
    elif args.command == "bounds":
        cmd_bounds(args)
    else:
        parser.print_help()


if __name__ == "__main__":
    main()
