"""Command-line front end: config parsing, orchestration, reproducible output.

Subcommands: generate | simulate | solve | compare | sweep | oracle.
Every run reads a single JSON config (flags override top-level fields),
writes outputs atomically, and drops a run-manifest JSON carrying the config
hash, seed, package version, and wall time.  Identical (config, seed) reruns
produce byte-identical CSV/JSON outputs at any parallelism; only the
manifest's wall time differs.

Exit codes: 0 success, 2 config error, 3 capacity error, 4 numerical failure.
"""

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__, analysis, initcond, meanfield, simulate
from .graph import SbmParams, save_graph, sbm_generate
from .process import ProcessSpec, preset_catalyst, preset_degree, preset_sir
from ._util import (
    CapacityError,
    ConfigError,
    NumericalError,
    atomic_write_text,
    fmt_real,
    seed_sequence,
)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
        ) from exc
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config


def config_hash(config):
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _require(config, key, typ, where="config"):
    if key not in config:
        raise ConfigError(f"{where}.{key}: required field missing")
    value = config[key]
    if typ is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, typ):
        raise ConfigError(
            f"{where}.{key}: expected {getattr(typ, '__name__', typ)}, "
            f"got {type(value).__name__}"
        )
    return value


def params_from_config(config):
    obj = _require(config, "graph", dict)
    params = SbmParams.from_json_dict(obj)
    params.validate()
    return params


def process_from_config(config):
    obj = _require(config, "process", dict)
    if "preset" in obj:
        name = obj["preset"]
        if name == "sir":
            return preset_sir(float(obj.get("beta", 1.0)),
                              float(obj.get("gamma", 1.0)))
        if name == "catalyst":
            return preset_catalyst()
        if name == "degree":
            return preset_degree()
        raise ConfigError(f"process.preset: unknown preset {name!r}")
    return ProcessSpec.from_json_dict(obj)


def grid_from_config(config):
    obj = _require(config, "t_grid", dict)
    t_end = _require(obj, "t_end", float, "t_grid")
    n_points = _require(obj, "n_points", int, "t_grid")
    if t_end < 0 or n_points < 1:
        raise ConfigError("t_grid: t_end must be >= 0 and n_points >= 1")
    return np.linspace(0.0, t_end, n_points)


def replication_from_config(config):
    obj = config.get("replication", {})
    if not isinstance(obj, dict):
        raise ConfigError("replication: expected object")
    return int(obj.get("n_graphs", 1)), int(obj.get("n_replicates", 1))


def _derived_int(master_seed, *path):
    return int(seed_sequence(master_seed, *path).generate_state(1, np.uint64)[0])


def _build_graph_ic(config, master_seed):
    params = params_from_config(config)
    spec = process_from_config(config)
    graph = sbm_generate(params, _derived_int(master_seed, 0x6EA))
    gen = initcond.generator_from_config(_require(config, "ic", dict), spec.states)
    ic = gen(graph, _derived_int(master_seed, 0x1C))
    return params, spec, graph, ic


def write_manifest(outdir, config, master_seed, command, outputs, wall_time):
    manifest = {
        "command": command,
        "config_sha256": config_hash(config),
        "master_seed": int(master_seed),
        "version": __version__,
        "wall_time_s": wall_time,
        "outputs": sorted(outputs),
    }
    atomic_write_text(os.path.join(outdir, "manifest.json"),
                      json.dumps(manifest, indent=2) + "\n")


def validate_manifest(outdir, config):
    """Check the stored manifest against a config; True iff hashes match."""
    with open(os.path.join(outdir, "manifest.json")) as fh:
        manifest = json.load(fh)
    return manifest["config_sha256"] == config_hash(config)


def _solution_csv(solution, states, unit_labels=None):
    lines = ["t,unit,state,value"]
    values = solution.values
    for ti, t in enumerate(solution.time_grid):
        for u in range(values.shape[1]):
            unit = unit_labels[u] if unit_labels is not None else u
            for s in range(values.shape[2]):
                lines.append(
                    f"{fmt_real(t)},{unit},{states[s]},{fmt_real(values[ti, u, s])}"
                )
    return "\n".join(lines) + "\n"


def cmd_generate(config, master_seed, outdir, parallelism):
    params = params_from_config(config)
    n_graphs, _ = replication_from_config(config)
    outputs = []
    for g in range(n_graphs):
        graph = sbm_generate(params, _derived_int(master_seed, 0x6EA, g))
        name = f"graph_{g:03d}.txt"
        save_graph(graph, os.path.join(outdir, name))
        outputs.append(name)
    return outputs


def cmd_simulate(config, master_seed, outdir, parallelism):
    _, spec, graph, ic = _build_graph_ic(config, master_seed)
    t_grid = grid_from_config(config)
    _, n_replicates = replication_from_config(config)
    samples = simulate.gillespie_ensemble(
        graph, spec, ic, t_grid, n_replicates,
        _derived_int(master_seed, 0x51), parallelism=parallelism,
    )
    simulate.save_trajectories(samples, os.path.join(outdir, "trajectories.csv"),
                               states=spec.states)
    return ["trajectories.csv"]


def cmd_solve(config, master_seed, outdir, parallelism, variant):
    params, spec, graph, ic = _build_graph_ic(config, master_seed)
    t_grid = grid_from_config(config)
    if variant == "nimfa":
        sol = meanfield.nimfa_solve(graph, spec, ic, t_grid)
    elif variant == "annealed":
        sol = meanfield.annealed_nimfa_solve(params, graph.blocks, spec, ic, t_grid)
    elif variant == "bhmfa":
        sol = meanfield.bhmfa_solve(params, spec, ic.block_means(graph), t_grid,
                                    block_sizes=graph.block_sizes)
    else:
        raise ConfigError(f"unknown solve variant {variant!r}")
    name = f"solution_{variant}.csv"
    atomic_write_text(os.path.join(outdir, name),
                      _solution_csv(sol, spec.states))
    return [name]


def cmd_compare(config, master_seed, outdir, parallelism):
    params = params_from_config(config)
    spec = process_from_config(config)
    gen = initcond.generator_from_config(_require(config, "ic", dict), spec.states)
    t_grid = grid_from_config(config)
    n_graphs, n_replicates = replication_from_config(config)
    report = analysis.error_estimate(
        params, spec, gen, t_grid, n_graphs, n_replicates,
        _derived_int(master_seed, 0xE5), parallelism=parallelism,
    )
    graph = sbm_generate(params, _derived_int(master_seed, 0xD1A))
    ic = gen(graph, _derived_int(master_seed, 0xD1A, 1))
    diag = analysis.diagnostics(graph, spec, ic, t_grid)
    atomic_write_text(os.path.join(outdir, "error_report.json"),
                      json.dumps(report.to_json_dict(), indent=2) + "\n")
    atomic_write_text(os.path.join(outdir, "error_report.csv"), report.to_csv())
    diag_obj = {
        "t_grid": diag.t_grid.tolist(),
        "delta_rms": diag.delta_rms.tolist(),
        "delta_star_rms": diag.delta_star_rms.tolist(),
        "h_curves": diag.h_curves.tolist(),
        "degree_event": diag.degree_event,
        "spectral_event": diag.spectral_event,
        "joint_event": diag.joint_event,
        "spectral_value": diag.spectral_value,
        "max_degree": diag.max_degree,
        "d": diag.d,
    }
    atomic_write_text(os.path.join(outdir, "diagnostics.json"),
                      json.dumps(diag_obj, indent=2) + "\n")
    return ["error_report.json", "error_report.csv", "diagnostics.json"]


def cmd_sweep(config, master_seed, outdir, parallelism):
    spec = process_from_config(config)
    obj = _require(config, "sweep", dict)
    alpha = _require(obj, "alpha", float, "sweep")
    n_list = _require(obj, "n_list", list, "sweep")
    t = float(obj.get("t", 1.0))
    estimator = obj.get("estimator", "mc")
    n_graphs, n_replicates = replication_from_config(config)
    result = analysis.scaling_sweep(
        spec, config.get("ic", {"kind": "block_constant", "values": [[1.0, 0.0]]}),
        alpha, n_list, t, n_graphs, n_replicates, master_seed,
        estimator=estimator, parallelism=parallelism,
    )
    atomic_write_text(os.path.join(outdir, "sweep.json"),
                      json.dumps(result.to_json_dict(), indent=2) + "\n")
    atomic_write_text(os.path.join(outdir, "sweep.csv"), result.to_csv())
    return ["sweep.json", "sweep.csv"]


def cmd_oracle(config, master_seed, outdir, parallelism):
    _, spec, graph, ic = _build_graph_ic(config, master_seed)
    t_grid = grid_from_config(config)
    sol = simulate.master_equation_solve(graph, spec, ic, t_grid)
    lines = ["t,block,state,mean,second_moment"]
    for ti, t in enumerate(sol.time_grid):
        for k in range(sol.exact_block_means.shape[1]):
            for s in range(sol.exact_block_means.shape[2]):
                lines.append(
                    f"{fmt_real(t)},{k},{spec.states[s]},"
                    f"{fmt_real(sol.exact_block_means[ti, k, s])},"
                    f"{fmt_real(sol.exact_block_second_moments[ti, k, s])}"
                )
    atomic_write_text(os.path.join(outdir, "oracle.csv"), "\n".join(lines) + "\n")
    return ["oracle.csv"]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blockmf",
        description="Simulate interaction Markov processes on SBM graphs and "
        "measure mean-field approximation error.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "simulate", "solve", "compare", "sweep", "oracle"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides config)")
        p.add_argument("--out", default=None,
                       help="output directory (overrides config)")
        p.add_argument("--parallelism", type=int, default=None,
                       help="worker count (overrides config; default: cores)")
        if name == "solve":
            p.add_argument("--variant", choices=("nimfa", "annealed", "bhmfa"),
                           default="nimfa")
    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
}


def run(argv):
    args = build_parser().parse_args(argv)
    config = load_config(args.config)
    master_seed = args.seed if args.seed is not None else config.get("master_seed", 0)
    if not isinstance(master_seed, int):
        raise ConfigError("master_seed must be an integer")
    outdir = args.out if args.out is not None else config.get("out", ".")
    parallelism = (
        args.parallelism
        if args.parallelism is not None
        else config.get("parallelism", os.cpu_count() or 1)
    )
    os.makedirs(outdir, exist_ok=True)
    start = time.perf_counter()
    if args.command == "solve":
        outputs = cmd_solve(config, master_seed, outdir, parallelism, args.variant)
    else:
        outputs = _COMMANDS[args.command](config, master_seed, outdir, parallelism)
    wall = time.perf_counter() - start
    write_manifest(outdir, config, master_seed, args.command, outputs, wall)
    return 0


def main(argv=None):
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
