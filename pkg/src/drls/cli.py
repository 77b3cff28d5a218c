"""
Command-line front end.

Every subcommand reads local files, writes CSV/text outputs under --out,
and sets the exit code: 0 on success, 1 for configuration or usage
problems, 2 for stability or numerical refusals, 3 when a Monte Carlo run
fails. Outputs are byte-deterministic for a given config (worker count
included).

Subcommands:

    gen-topology   draw a random geometric network and save its edge list
    simulate       run a Monte Carlo ensemble, write learning curves
    predict        steady-state mean-square prediction for one config
    compare        prediction and simulation side by side
    stability      mean / mean-square stability report for one config
"""

import argparse
import os
import sys

from .analysis import (
    build_averaged_system,
    check_mean_stability,
    check_mse_stability,
    mean_stability_bound,
    noise_covariances,
    steady_state_solve,
    to_db,
)
from .errors import (
    AssemblyError,
    ConfigError,
    DivergenceError,
    ModelError,
    RunFailure,
    SequencingError,
    StabilityError,
    TopologyError,
)
from .harness import (
    build_model,
    build_topology,
    compare_theory,
    load_config,
    run_ensemble,
    steady_state_empirical,
    write_global_csv,
    write_per_sensor_csv,
)
from .topology import algebraic_connectivity, random_geometric, write_edge_list

_USAGE_ERRORS = (ConfigError, TopologyError, ModelError, SequencingError)
_NUMERICAL_ERRORS = (StabilityError, AssemblyError, DivergenceError)


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors surface as ConfigError (exit 1)."""

    def error(self, message):
        raise ConfigError(message)


def _load(args):
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    return load_config(args.config, **overrides)


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _cmd_gen_topology(args):
    top = random_geometric(args.j, args.radius, args.seed if args.seed is not None else 0)
    path = os.path.join(_outdir(args), "topology.txt")
    write_edge_list(top, path)
    print(f"sensors: {top.J}")
    print(f"undirected links: {len(top.edges())}")
    print(f"algebraic connectivity: {algebraic_connectivity(top):.6f}")
    print(f"edge list written to {path}")
    return 0


def _cmd_simulate(args):
    config = _load(args)
    ensemble = run_ensemble(config)
    out = _outdir(args)
    global_path = os.path.join(out, "global.csv")
    sensor_path = os.path.join(out, "per_sensor.csv")
    write_global_csv(ensemble.series, global_path)
    write_per_sensor_csv(ensemble.series, sensor_path)
    window = config.t_samples - config.resolved_burn_in
    print(f"algorithm: {config.algorithm}")
    print(f"runs: {config.runs}, samples per run: {config.t_samples}")
    for name, series in (
        ("MSD", ensemble.series.msd_global),
        ("EMSE", ensemble.series.emse_global),
        ("MSE", ensemble.series.mse_global),
    ):
        tail = steady_state_empirical(series, window)
        print(f"steady-state {name}: {to_db(tail.mean):.3f} dB "
              f"(tail of {tail.window} steps)")
    print(f"learning curves written to {global_path} and {sensor_path}")
    return 0


def _prediction_pipeline(config):
    topology = build_topology(config)
    model = build_model(config, topology)
    system = build_averaged_system(topology, model, config.lam, config.c)
    return topology, model, system


def _cmd_predict(args):
    config = _load(args)
    topology, model, system = _prediction_pipeline(config)
    noise = noise_covariances(system, model)
    report = steady_state_solve(system, noise)
    path = os.path.join(_outdir(args), "prediction.csv")
    report.to_csv(path)
    print(f"fluctuation spectral radius: {report.rho:.6f}")
    print(f"mean-stability bound on c: {mean_stability_bound(topology, model, config.lam):.6g} "
          f"(config uses c = {config.c})")
    print(f"steady-state MSD:  {to_db(report.msd_global):.3f} dB")
    print(f"steady-state EMSE: {to_db(report.emse_global):.3f} dB")
    print(f"steady-state MSE:  {to_db(report.mse_global):.3f} dB")
    print(f"prediction written to {path}")
    return 0


def _cmd_compare(args):
    config = _load(args)
    report = compare_theory(config, tol_db=args.tol_db)
    out = _outdir(args)
    comparison_path = os.path.join(out, "comparison.csv")
    report.to_csv(comparison_path)
    report.prediction.to_csv(os.path.join(out, "prediction.csv"))
    write_global_csv(report.ensemble.series, os.path.join(out, "global.csv"))
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print("metric  scope   predicted_db  empirical_db  delta_db  pass")
    for row in report.global_rows:
        print(f"{row.metric:<7} {row.scope:<7} {row.predicted_db:>12.3f}  "
              f"{row.empirical_db:>12.3f}  {row.delta_db:>8.3f}  "
              f"{str(report.row_pass(row)).lower()}")
    print(f"comparison written to {comparison_path}")
    return 0


def _cmd_stability(args):
    config = _load(args)
    topology, model, system = _prediction_pipeline(config)
    bound = mean_stability_bound(topology, model, config.lam)
    mean_report = check_mean_stability(system)
    mse_report = check_mse_stability(system)
    print(f"mean-stability bound on c: {bound:.6g} (config uses c = {config.c})")
    print(f"unit eigenvalues of the mean transition: {mean_report.unit_eigen_count} "
          f"(expected {mean_report.expected_unit_count}, "
          f"semisimple: {str(mean_report.semisimple).lower()})")
    print(f"largest remaining eigenvalue modulus: {mean_report.max_other_modulus:.6f}")
    print(f"left unit-eigenvectors confined to the multiplier block: "
          f"{str(mean_report.left_vectors_structured).lower()}")
    print(f"fluctuation spectral radius: {mse_report.rho:.6f}")
    print(f"mean-stable: {str(mean_report.stable).lower()}")
    print(f"mean-square stable: {str(mse_report.stable).lower()}")
    return 0 if mean_report.stable and mse_report.stable else 2


def build_parser():
    parser = _Parser(
        prog="drls",
        description="Distributed RLS over noisy sensor networks: simulation "
                    "and steady-state analysis.",
    )
    common = _Parser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config master seed")
    common.add_argument("--threads", type=int, default=None,
                        help="override the config worker count")

    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-topology", parents=[common],
                         help="draw a connected random geometric network")
    gen.add_argument("--j", type=int, default=10, help="sensor count (default: 10)")
    gen.add_argument("--radius", type=float, default=0.45,
                     help="connectivity radius in the unit square (default: 0.45)")
    gen.set_defaults(func=_cmd_gen_topology)

    for name, func, helptext in (
        ("simulate", _cmd_simulate, "run a Monte Carlo ensemble"),
        ("predict", _cmd_predict, "steady-state mean-square prediction"),
        ("stability", _cmd_stability, "mean and mean-square stability report"),
    ):
        cmd = sub.add_parser(name, parents=[common], help=helptext)
        cmd.add_argument("--config", required=True, help="experiment config file")
        cmd.set_defaults(func=func)

    cmp_cmd = sub.add_parser("compare", parents=[common],
                             help="prediction and simulation side by side")
    cmp_cmd.add_argument("--config", required=True, help="experiment config file")
    cmp_cmd.add_argument("--tol-db", type=float, default=1.0,
                         help="pass/fail tolerance in dB (default: 1.0)")
    cmp_cmd.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RunFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
