"""Command-line interface: ``graphtime reconstruct|stream|sweep|validate|simulate``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

import argparse
import copy
import datetime
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    build_kernel,
    build_schedule,
    build_steady_state_schedule,
    spatial_kernels,
)
from .estimators import (
    NumericalError,
    batch_estimate,
    instantaneous_estimates,
    online_closedform_filtered,
)
from .evaluation import (
    ESTIMATORS,
    ExperimentConfig,
    grid,
    make_plan,
    nmse_series,
    sweep,
    synthetic_dataset,
)
from .graph import GraphValidationError, TimeVaryingGraph
from .io import (
    graph_files,
    load_graph,
    load_observations,
    parse_record,
    read_matrix_csv,
    sha256_file,
    write_matrix_csv,
)
from .kernels import KernelError
from .kkf import KkfState, kkf_step, run_kkf
from .observations import ObservationSet, sample_signal

log = logging.getLogger("graphtime")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULT_KERNEL = {"type": "timevarying",
                  "spatial": {"family": "diffusion", "sigma2": 1.0},
                  "bridges": {"type": "scaled-identity", "s": 1.0}}


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _load_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"{what} {path} not found") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} {path} is not valid JSON: {exc}") from None


def _resolve_paths(config, base_dir):
    """Make file references in a run config absolute."""
    config = copy.deepcopy(config)
    for key in ("observations", "truth"):
        if isinstance(config.get(key), str):
            config[key] = os.path.abspath(os.path.join(base_dir, config[key]))
    g = config.get("graph")
    if isinstance(g, str):
        config["graph"] = os.path.abspath(os.path.join(base_dir, g))
    elif isinstance(g, dict):
        config["graph"] = {k: os.path.abspath(os.path.join(base_dir, v)) for k, v in g.items()}
    bridges = config.get("kernel", {}).get("bridges", {})
    if isinstance(bridges, dict) and isinstance(bridges.get("path"), str):
        bridges["path"] = os.path.abspath(os.path.join(base_dir, bridges["path"]))
    if isinstance(config.get("output_dir"), str):
        config["output_dir"] = os.path.abspath(os.path.join(base_dir, config["output_dir"]))
    return config


def _run_config(args, need_observations=True):
    """Merge the config file (or manifest) with command-line overrides."""
    if getattr(args, "manifest", None):
        manifest = _load_json(args.manifest, "manifest")
        if "config" not in manifest:
            raise CliError("manifest has no 'config' field")
        config = manifest["config"]
        for role, entry in manifest.get("inputs", {}).items():
            for path, digest in zip(entry["paths"], entry["sha256"]):
                if not os.path.exists(path) or sha256_file(path) != digest:
                    raise CliError(f"input {role} ({path}) differs from the manifest")
    elif args.config:
        config = _resolve_paths(_load_json(args.config, "config"),
                                os.path.dirname(os.path.abspath(args.config)))
    else:
        config = {}
    cwd = os.getcwd()
    for key in ("estimator", "mu", "graph", "observations", "truth", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            if key in ("graph", "observations", "truth", "output_dir"):
                value = os.path.abspath(os.path.join(cwd, value))
            config[key] = value
    config.setdefault("estimator", "kkf")
    config.setdefault("kernel", copy.deepcopy(DEFAULT_KERNEL))
    config.setdefault("noise", None)
    config.setdefault("truth", None)
    if config["estimator"] not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {config['estimator']!r}; expected one of "
                          f"{list(ESTIMATORS)}", "estimator")
    mu = config.get("mu")
    if not isinstance(mu, (int, float)) or isinstance(mu, bool) or not mu > 0:
        raise ConfigError("mu must be a positive number", "mu")
    if "graph" not in config:
        raise ConfigError("missing graph source", "graph")
    if need_observations and not config.get("observations"):
        raise ConfigError("missing observations file", "observations")
    return config


def _load_graph(config, n_slots=None):
    try:
        g = load_graph(config["graph"])
    except GraphValidationError as exc:
        raise CliError(f"graph: {exc}") from None
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc), "graph") from None
    if n_slots is not None and g.n_slots not in (1, n_slots):
        raise ConfigError(f"graph has {g.n_slots} slots but the data have {n_slots}", "graph")
    if n_slots is not None and g.n_slots == 1:
        g = TimeVaryingGraph.constant(g.slots[0], n_slots)
    return g


def _noise(config, n_slots):
    noise = config.get("noise")
    if noise is None:
        return None
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (n_slots,))
    if not np.all(noise > 0):
        raise ConfigError("noise weights must be positive", "noise")
    return tuple(noise)


def _estimate(config, graph, obs, plan):
    mu, spec, T = float(config["mu"]), config["kernel"], plan.n_slots
    name = config["estimator"]
    stage = "kernel"
    try:
        if name == "instantaneous":
            stage = "instantaneous"
            return instantaneous_estimates(obs, plan, spatial_kernels(spec, graph, T), mu).values
        if name == "kkf":
            stage = "schedule"
            schedule = None
            if spec.get("type", "timevarying") == "timevarying":
                schedule = build_schedule(spec, graph, T, read_matrix_csv)
                kernel = None
            else:
                kernel = build_kernel(spec, graph, T, read_matrix_csv)
            stage = "kkf"
            return run_kkf(kernel, obs, plan, mu, noise=_noise(config, T),
                           schedule=schedule).values
        kernel = build_kernel(spec, graph, T, read_matrix_csv)
        stage = name
        if config.get("noise") is not None:
            obs = ObservationSet(obs.values, _noise(config, T))
        if name == "batch":
            return batch_estimate(obs, plan, kernel, mu).values
        return online_closedform_filtered(obs, plan, kernel, mu).values
    except ConfigError:
        raise
    except (NumericalError, KernelError, np.linalg.LinAlgError) as exc:
        raise CliError(f"numerical failure in stage {getattr(exc, 'stage', None) or stage}: "
                       f"{exc}", EXIT_NUMERIC) from None


def _input_digests(config):
    inputs = {}
    _, files = graph_files(config["graph"])
    inputs["graph"] = files
    for key in ("observations", "truth"):
        if config.get(key):
            inputs[key] = [config[key]]
    bridges = config["kernel"].get("bridges", {})
    if isinstance(bridges, dict) and bridges.get("path"):
        inputs["bridges"] = [bridges["path"]]
    return {role: {"paths": paths, "sha256": [sha256_file(p) for p in paths]}
            for role, paths in inputs.items()}


def cmd_reconstruct(args):
    config = _run_config(args)
    out_dir = config.get("output_dir") or os.path.abspath("graphtime-out")
    config["output_dir"] = out_dir
    graph = _load_graph(config)
    n_slots = config.get("horizon")
    if n_slots is not None and (not isinstance(n_slots, int) or isinstance(n_slots, bool)
                                or n_slots < 1):
        raise ConfigError("horizon must be a positive integer", "horizon")
    if n_slots is None and graph.n_slots > 1:
        n_slots = graph.n_slots
    try:
        obs, plan = load_observations(config["observations"], graph.n_vertices, n_slots)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc), "observations") from None
    if plan.n_slots == 0:
        raise ConfigError("no observation slots", "observations")
    graph = _load_graph(config, plan.n_slots)
    config["horizon"] = plan.n_slots
    F = _estimate(config, graph, obs, plan)

    os.makedirs(out_dir, exist_ok=True)
    write_matrix_csv(os.path.join(out_dir, "estimates.csv"), F)
    outputs = ["estimates.csv"]
    if config.get("truth"):
        try:
            truth = read_matrix_csv(config["truth"])
        except OSError as exc:
            raise ConfigError(str(exc), "truth") from None
        if truth.shape != F.shape:
            raise ConfigError(f"truth has shape {truth.shape}, estimates {F.shape}", "truth")
        series = nmse_series(truth, F, plan)
        with open(os.path.join(out_dir, "nmse.csv"), "w", newline="") as fh:
            fh.write("t,nmse\n")
            for t, v in enumerate(series):
                fh.write(f"{t},{'%.17g' % v}\n")
        outputs.append("nmse.csv")
    manifest = {
        "config": config,
        "inputs": _input_digests(config),
        "outputs": {name: sha256_file(os.path.join(out_dir, name)) for name in outputs},
        "version": __version__,
        "seed": config.get("seed"),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    log.info("wrote %s to %s", ", ".join(outputs), out_dir)
    return EXIT_OK


def _emit(out, record):
    out.write(json.dumps(record) + "\n")
    out.flush()


def cmd_stream(args, stdin=None, stdout=None):
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    config = _run_config(args, need_observations=False)
    mu = float(config["mu"])
    spec = config["kernel"]
    if args.steady_state:
        graph = _load_graph(config)
        if not graph.is_time_invariant():
            raise ConfigError("steady-state streaming needs a time-invariant graph", "graph")
        schedule = build_steady_state_schedule(spec, graph.slots[0], read_matrix_csv)
        horizon = None
    else:
        graph = _load_graph(config)
        horizon = args.horizon or config.get("horizon")
        if horizon is None:
            if graph.n_slots == 1:
                raise ConfigError("streaming needs --horizon or --steady-state for a "
                                  "static graph", "horizon")
            horizon = graph.n_slots
        graph = _load_graph(config, int(horizon))
        try:
            schedule = build_schedule(spec, graph, int(horizon), read_matrix_csv)
        except NumericalError as exc:
            raise CliError(f"numerical failure in stage schedule: {exc}", EXIT_NUMERIC) from None
    noise = config.get("noise")
    if noise is not None and not (isinstance(noise, (int, float)) and noise > 0):
        raise ConfigError("streaming needs a single positive noise weight", "noise")
    N = schedule.n_vertices
    state = KkfState.initial(N)
    empty = np.zeros(0, dtype=np.int64)

    def advance(idx, vals):
        nonlocal state
        Q_t, P_t = schedule.slot(state.t + 1)
        v = noise if noise is not None else (mu * idx.size if idx.size else 1.0)
        state = kkf_step(state, Q_t, P_t, vals, idx, v)
        _emit(stdout, {"t": state.t, "estimate": state.f_filtered.tolist()})

    for line in stdin:
        if not line.strip():
            continue
        try:
            t, idx, vals = parse_record(line)
            if idx.size and (idx[0] < 0 or idx[-1] >= N):
                raise ValueError(f"vertex index out of range [0, {N})")
        except ValueError as exc:
            _emit(stdout, {"error": str(exc)})
            continue
        if t <= state.t:
            _emit(stdout, {"error": "non-monotone slot", "t": t})
            continue
        if horizon is not None and t >= horizon:
            _emit(stdout, {"error": "slot beyond horizon", "t": t})
            continue
        try:
            while state.t + 1 < t:
                advance(empty, np.zeros(0))
            advance(idx, vals)
        except NumericalError as exc:
            raise CliError(f"numerical failure in stage kkf-step: {exc}", EXIT_NUMERIC) from None
    return EXIT_OK


def _sweep_configs(doc):
    base = doc.get("base", {})
    try:
        base = ExperimentConfig(**base)
    except TypeError as exc:
        raise ConfigError(str(exc), "base") from None
    axes = doc.get("grid", {})
    if not isinstance(axes, dict):
        raise ConfigError("expected an object of field -> list", "grid")
    try:
        return grid(base, **axes) if axes else [base]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"cannot apply grid axis: {exc}", "grid") from None


def cmd_sweep(args):
    doc = _load_json(args.config, "sweep config")
    configs = _sweep_configs(doc)
    out = args.out
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    failures = []
    with open(out, "w", newline="") as fh:
        fh.write("config_id,seed,t,nmse,wall_ms\n")
        fh.flush()

        def write(result):
            if result.error is not None:
                failures.append({"config_id": result.config_id, "seed": result.seed,
                                 "error": result.error})
                log.warning("run %s seed %s failed: %s", result.config_id, result.seed,
                            result.error)
                return
            for t, v in enumerate(result.nmse):
                # one write per row keeps a partial file valid CSV
                fh.write(f"{result.config_id},{result.seed},{t},{'%.17g' % v},"
                         f"{'%.17g' % result.wall_ms}\n")
            fh.flush()

        sweep(configs, workers=args.workers, on_result=write)
    manifest = {
        "configs": {c.config_id(): {k: v for k, v in c.to_dict().items() if k != "seed"}
                    for c in configs},
        "failures": failures,
        "version": __version__,
    }
    with open(os.path.splitext(out)[0] + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return EXIT_OK


def cmd_validate(args):
    report = {"ok": True, "checks": []}
    config = None
    if args.config:
        config = _resolve_paths(_load_json(args.config, "config"),
                                os.path.dirname(os.path.abspath(args.config)))
    if args.graph:
        config = dict(config or {})
        config["graph"] = os.path.abspath(args.graph)
    if not config or "graph" not in config:
        raise ConfigError("nothing to validate; give --graph or --config", "graph")
    graph = _load_graph(config)
    report["checks"].append({"check": "graph", "n_vertices": graph.n_vertices,
                             "n_slots": graph.n_slots, "ok": True})
    spec = config.get("kernel")
    if spec is not None:
        T = args.horizon or config.get("horizon") or max(graph.n_slots, 2)
        graph = _load_graph(config, T)
        try:
            kernel = build_kernel(spec, graph, T, read_matrix_csv)
            min_eig = kernel.min_eigenvalue()
            entry = {"check": "kernel", "horizon": T, "min_eigenvalue": min_eig,
                     "tridiagonal_inverse": kernel.tridiagonal_inverse,
                     "block_bandwidth": kernel.block_bandwidth, "ok": min_eig > 0}
            if kernel.tridiagonal_inverse:
                build_schedule(spec, graph, T, read_matrix_csv)
                entry["schedule"] = "ok"
        except NumericalError as exc:
            entry = {"check": "kernel", "ok": False, "error": str(exc)}
        report["checks"].append(entry)
        report["ok"] = entry["ok"]
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["ok"] else EXIT_CONFIG


def cmd_simulate(args):
    """Write a synthetic dataset: adjacency, truth, observations and a run config."""
    os.makedirs(args.out, exist_ok=True)
    data = {"n_vertices": args.n_vertices, "n_slots": args.n_slots, "k": args.k,
            "graph_seed": args.seed,
            "spatial": {"family": "diffusion", "sigma2": args.sigma2}, "s": args.s}
    graph, truth = synthetic_dataset(data, args.seed)
    rng = np.random.default_rng(args.seed + 1)
    plan = make_plan({"type": "fixed-random", "m": args.m}, args.n_vertices, args.n_slots, rng)
    obs = sample_signal(truth, plan, args.noise_std, rng)
    write_matrix_csv(os.path.join(args.out, "adj.csv"), graph.adjacency)
    write_matrix_csv(os.path.join(args.out, "truth.csv"), truth)
    write_matrix_csv(os.path.join(args.out, "observations.csv"), obs.to_matrix(plan))
    mu = max(args.noise_std, 1e-3) ** 2 / max(args.m, 1)
    config = {"graph": "adj.csv", "observations": "observations.csv", "truth": "truth.csv",
              "estimator": "kkf", "mu": mu, "output_dir": "out",
              "kernel": {"type": "timevarying", "spatial": dict(data["spatial"]),
                         "bridges": {"type": "scaled-identity", "s": args.s}}}
    with open(os.path.join(args.out, "run.json"), "w") as fh:
        json.dump(config, fh, indent=2)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="graphtime",
        description="Reconstruct time-varying signals on graphs from vertex samples.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p):
        p.add_argument("--config", help="run config JSON")
        p.add_argument("--estimator", choices=ESTIMATORS)
        p.add_argument("--mu", type=float)
        p.add_argument("--graph", help="adjacency CSV or graph JSON")

    p = sub.add_parser("reconstruct", help="estimate a signal from samples")
    run_options(p)
    p.add_argument("--manifest", help="re-run from a manifest written by a previous run")
    p.add_argument("--observations")
    p.add_argument("--truth")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("stream", help="kernel Kalman filter over NDJSON records on stdin")
    run_options(p)
    p.add_argument("--horizon", type=int, help="number of slots the schedule covers")
    p.add_argument("--steady-state", action="store_true",
                   help="experimental infinite-horizon schedule")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("sweep", help="run a grid of synthetic experiments")
    p.add_argument("--config", required=True, help="sweep JSON with 'base' and 'grid'")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--workers", type=int, default=None,
                   help="process pool size (default $GRAPHTIME_THREADS or 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a graph and kernel")
    p.add_argument("--config")
    p.add_argument("--graph")
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-vertices", type=int, default=20)
    p.add_argument("--n-slots", type=int, default=30)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--sigma2", type=float, default=3.24)
    p.add_argument("--s", type=float, default=10.0)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, GraphValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
