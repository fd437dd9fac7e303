from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from rich import print as rprint

from pudqueue.__about__ import __version__
from pudqueue.errors import (
    ArgumentError,
    ConfigError,
    DomainError,
    InstabilityError,
)
from pudqueue.experiments import (
    COMPARISON_COLUMNS,
    DEFAULT_BATCHES,
    DEFAULT_PACKETS,
    DEFAULT_PENALTY_RTOL,
    DEFAULT_PROB_TOL,
    DEFAULT_SEED,
    MODELS,
    PRESETS,
    SWEEP_COLUMNS,
    VARIABLES,
    ModelParams,
    SweepSpec,
    build_comparison,
    preset,
    run_sweep,
)
from pudqueue.penalty import MISMATCH, parse_policy
from pudqueue.reports import round_sig
from pudqueue.run_data import RunData, resolve_output_dir, rows_to_csv_text, write_rows
from pudqueue.service_distributions import Exponential, parse_service_spec
from pudqueue.simulator import run


class _Parser(argparse.ArgumentParser):
    """Argument errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"ERROR - {message}\n")
        sys.exit(1)


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=MODELS, default="mg1", help="Queue model.")
    p.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        required=True,
        help="Packet generation rate.",
    )
    _add_service_args(p)


def _add_service_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mu", type=float, help="Exponential service rate.")
    p.add_argument(
        "--service",
        help="Service law: exp:mu=<f>, gamma:alpha=<f>,rate=<f> or det:d=<f>.",
    )
    p.add_argument("--k", type=int, help="M/M/1/K system capacity.")


def _add_sim_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--packets", type=int, default=DEFAULT_PACKETS)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--batches", type=int, default=DEFAULT_BATCHES)


def _add_out_arg(p: argparse.ArgumentParser, help_text: str) -> None:
    p.add_argument("--out", type=Path, help=help_text)


def get_args(arglist=None):
    ap = _Parser(
        prog="pudqueue",
        description="Penalty upon Decision for status-update queues: "
        "closed forms, simulation and experiment sweeps.",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    out_dir_help = "Directory for the log file (default: $PUDQUEUE_OUTPUT_DIR)."

    p = sub.add_parser("analyze", help="Closed-form report.")
    _add_model_args(p)
    p.add_argument("--policy", default="mismatch")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_out_arg(p, out_dir_help)

    p = sub.add_parser("simulate", help="Monte Carlo estimates.")
    _add_model_args(p)
    _add_sim_args(p)
    p.add_argument(
        "--policy", default="mismatch", help="mismatch, delay or power:k=<f>."
    )
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_out_arg(p, out_dir_help)

    p = sub.add_parser("compare", help="Closed form against simulation.")
    _add_model_args(p)
    _add_sim_args(p)
    p.add_argument("--policy", default="mismatch")
    p.add_argument("--prob-tol", type=float, default=DEFAULT_PROB_TOL)
    p.add_argument("--penalty-rtol", type=float, default=DEFAULT_PENALTY_RTOL)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    _add_out_arg(p, out_dir_help)

    p = sub.add_parser("sweep", help="Sweep one parameter and write a CSV file.")
    p.add_argument("--model", choices=MODELS, default="mg1")
    p.add_argument("--vary", choices=VARIABLES, required=True)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    _add_service_args(p)
    p.add_argument(
        "--mean-service",
        type=float,
        default=0.5,
        help="Fixed mean service time of an alpha sweep.",
    )
    _add_sim_args(p)
    _add_sweep_run_args(p)
    _add_out_arg(p, "Output CSV file (default: sweep.csv in the output directory).")

    p = sub.add_parser("figure", help="Regenerate the dataset of a figure preset.")
    p.add_argument("--id", dest="figure_id", choices=sorted(PRESETS), required=True)
    _add_sim_args(p)
    _add_sweep_run_args(p)
    _add_out_arg(p, "Output CSV file (default: <id>.csv in the output directory).")

    return ap.parse_args(arglist)


def _add_sweep_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--jobs", type=int, help="Worker processes (default: CPU count).")
    p.add_argument(
        "--analytic-only",
        action="store_true",
        help="Skip the simulation rows.",
    )


def _service(args):
    if args.service:
        return parse_service_spec(args.service)
    if args.mu is not None:
        return Exponential(args.mu)
    raise ArgumentError("Give --service or --mu")


def _model_params(args) -> ModelParams:
    return ModelParams(args.model, args.lam, _service(args), args.k)


def _closed_form_policy(text: str) -> None:
    if parse_policy(text) is not MISMATCH:
        raise ArgumentError("Closed forms exist for the mismatch penalty policy only")


def _check_budget(args) -> None:
    if args.packets < 1:
        raise ArgumentError(f"Packet budget must be positive: {args.packets}")
    jobs = getattr(args, "jobs", None)
    if jobs is not None and jobs < 1:
        raise ArgumentError(f"Jobs must be positive: {jobs}")


def _flatten(data: dict) -> dict:
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):
            flat.update({f"{key}_{k}": v for k, v in value.items()})
        else:
            flat[key] = value
    return flat


def _emit(data: dict, fmt: str) -> None:
    if fmt == "json":
        sys.stdout.write(json.dumps(data, indent=2) + "\n")
    else:
        flat = _flatten(data)
        sys.stdout.write(rows_to_csv_text([flat], list(flat)))


def cmd_analyze(args) -> None:
    _closed_form_policy(args.policy)
    report = _model_params(args).analytic()
    logging.info("Analyze %s lambda=%g", args.model, args.lam)
    _emit(report.to_dict(), args.format)


def cmd_simulate(args) -> None:
    _check_budget(args)
    policy = parse_policy(args.policy)
    params = _model_params(args)
    summary = run(
        params.system(),
        policy,
        n_packets=args.packets,
        seed=args.seed,
        batches=args.batches,
    )
    _emit(summary.to_dict(), args.format)


def cmd_compare(args) -> None:
    _check_budget(args)
    _closed_form_policy(args.policy)
    params = _model_params(args)
    report = params.analytic()
    summary = run(
        params.system(), n_packets=args.packets, seed=args.seed, batches=args.batches
    )
    rows = build_comparison(report, summary, args.prob_tol, args.penalty_rtol)
    if args.format == "json":
        rounded = [
            {k: round_sig(v) if isinstance(v, float) else v for k, v in row.items()}
            for row in rows
        ]
        _emit({"rows": rounded}, "json")
    else:
        sys.stdout.write(rows_to_csv_text(rows, COMPARISON_COLUMNS))


def _sweep_target(args, default_name: str) -> Path:
    if args.out is not None:
        return Path(args.out).expanduser().resolve()
    return resolve_output_dir() / default_name


def cmd_sweep(args, target: Path) -> None:
    _check_budget(args)
    spec = SweepSpec(
        model=args.model,
        vary=args.vary,
        start=args.start,
        stop=args.stop,
        steps=args.steps,
        lam=args.lam,
        mu=args.mu if args.mu is not None else 1.0,
        service=args.service,
        k=args.k if args.k is not None else 1,
        mean_service=args.mean_service,
        packets=args.packets,
        seed=args.seed,
        batches=args.batches,
        simulate=not args.analytic_only,
    )
    rows = run_sweep([spec], args.jobs)
    write_rows(target, rows, SWEEP_COLUMNS)
    rprint(f"Wrote [b]{len(rows)}[/b] rows to '{target}'")


def cmd_figure(args, target: Path) -> None:
    _check_budget(args)
    specs = preset(
        args.figure_id,
        packets=args.packets,
        seed=args.seed,
        batches=args.batches,
        simulate=not args.analytic_only,
    )
    rows = run_sweep(specs, args.jobs)
    write_rows(target, rows, SWEEP_COLUMNS)
    rprint(f"Wrote [b]{len(rows)}[/b] rows for '{args.figure_id}' to '{target}'")


def _dispatch(args) -> None:
    if args.command in ("sweep", "figure"):
        if args.command == "sweep":
            target = _sweep_target(args, "sweep.csv")
        else:
            target = _sweep_target(args, f"{args.figure_id}.csv")
        run_data = RunData(target.parent)
        try:
            if args.command == "sweep":
                cmd_sweep(args, target)
            else:
                cmd_figure(args, target)
        finally:
            run_data.close()
        return

    commands = {
        "analyze": cmd_analyze,
        "simulate": cmd_simulate,
        "compare": cmd_compare,
    }
    run_data = RunData(resolve_output_dir(args.out))
    try:
        commands[args.command](args)
    finally:
        run_data.close()


def cli(arglist=None):
    args = get_args(arglist)
    try:
        _dispatch(args)
    except (InstabilityError, DomainError) as e:
        sys.stderr.write(f"ERROR - {e}\n")
        sys.exit(2)
    except (ArgumentError, ConfigError) as e:
        sys.stderr.write(f"ERROR - {e}\n")
        sys.exit(1)


if __name__ == "__main__":
    cli()
