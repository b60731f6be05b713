"""Benchmark command line: generate instances, decode, verify, and sweep.

Subcommands
-----------
gen     write a random model + observation file (defaults K=512, M=50,
        T=512, p=0.253)
decode  run one algorithm on a model/observation pair, optionally verify
        against the exact optimum and write the decoded path
verify  decode with the chosen algorithm and with textbook Viterbi, report
        the score delta and relative error
sweep   run a parameter sweep and emit a plot-ready CSV/JSON table, one row
        per (configuration, algorithm, repetition)

Exit codes: 0 success, 2 flag/configuration error, 3 infeasible decode,
4 beam exhausted, 5 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .beam import BeamDiagnostics, relative_error
from .errors import (
    BeamExhaustedError,
    ConfigurationError,
    InfeasibleDecodeError,
    InternalConsistencyError,
    ModelFormatError,
)
from .metering import ALGORITHMS, metered_run
from .model import (
    GeneratorConfig,
    generate_er_hmm,
    load_model,
    load_observations,
    sample_observations,
    save_model,
    save_observations,
)
from .oracle import vanilla_viterbi

EXIT_OK = 0
EXIT_FLAG = 2
EXIT_INFEASIBLE = 3
EXIT_BEAM_EXHAUSTED = 4
EXIT_IO = 5

DEFAULT_STATES = 512
DEFAULT_SYMBOLS = 50
DEFAULT_TIMESTEPS = 512
DEFAULT_EDGE_PROB = 0.253

# vanilla verification is skipped above this K*T product during sweeps
VERIFY_CAP = 1 << 20

_BEAM_ALGOS = {"static-bs", "flash-bs"}
_PARALLEL_ALGOS = {"flash", "flash-bs"}

SWEEP_AXES = ("states", "timesteps", "edge-prob", "beam", "parallel")

_DEFAULT_GRIDS = {
    "states": [32, 64, 128, 256, 512, 1024, 2048],
    "timesteps": [32, 64, 128, 256, 512, 1024, 2048],
    "beam": [1024, 512, 256, 128, 64, 32],
    "edge-prob": [0.05, 0.075, 0.1125, 0.16875, 0.253125, 0.3796875, 0.56953125, 0.854296875, 1.0],
    "parallel": [1, 2, 4, 8, 16],
}

CSV_COLUMNS = [
    "axis",
    "algo",
    "rep",
    "states",
    "symbols",
    "timesteps",
    "edge_prob",
    "beam",
    "parallel",
    "seed",
    "wall_seconds",
    "dp_cell_updates",
    "scratch_prob",
    "scratch_state",
    "heap_elements",
    "queue_bytes",
    "recursion_bytes",
    "checkpoint_bytes",
    "psi_table_bytes",
    "peak_total",
    "score",
    "optimal_score",
    "score_delta",
    "eta",
    "inexact_traceback",
]

_U64 = (1 << 64) - 1


def instance_seeds(master_seed: int, states: int, symbols: int, timesteps: int, edge_prob: float):
    """Model and observation seeds derived from the master seed and the
    model-shaping parameters (so beam/parallel sweeps reuse one instance)."""
    ss = np.random.SeedSequence(
        [master_seed & _U64, states, symbols, timesteps, int(round(edge_prob * 1e9))]
    )
    a, b = ss.generate_state(2, np.uint64)
    return int(a), int(b)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flashviterbi", description="Viterbi decoding benchmark harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a random model and observation file")
    gen.add_argument("--states", type=int, default=DEFAULT_STATES)
    gen.add_argument("--symbols", type=int, default=DEFAULT_SYMBOLS)
    gen.add_argument("--timesteps", type=int, default=DEFAULT_TIMESTEPS)
    gen.add_argument("--edge-prob", type=float, default=DEFAULT_EDGE_PROB)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--model", default="model.json", help="output model path")
    gen.add_argument("--obs", default="obs.json", help="output observation path")
    gen.set_defaults(func=cmd_gen)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="model.json", help="model file")
    common.add_argument("--obs", default="obs.json", help="observation file")
    common.add_argument("--algo", required=True, help="one of: " + ", ".join(ALGORITHMS))
    common.add_argument("--parallel", type=int, default=1, help="worker count (flash, flash-bs)")
    common.add_argument(
        "--beam", type=int, default=None, help="beam width (static-bs, flash-bs); default K"
    )

    dec = sub.add_parser("decode", parents=[common], help="decode one instance")
    dec.add_argument("--verify", action="store_true", help="also run vanilla and report the gap")
    dec.add_argument("--out", default=None, help="write the decoded path to this file")
    dec.set_defaults(func=cmd_decode)

    ver = sub.add_parser("verify", parents=[common], help="compare against the exact optimum")
    ver.set_defaults(func=cmd_verify)

    sw = sub.add_parser("sweep", help="run a parameter sweep, emit a CSV/JSON table")
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", default=None, help="comma-separated axis values (default grid otherwise)")
    sw.add_argument("--algo", required=True, help="comma-separated algorithm list")
    sw.add_argument("--states", type=int, default=DEFAULT_STATES)
    sw.add_argument("--symbols", type=int, default=DEFAULT_SYMBOLS)
    sw.add_argument("--timesteps", type=int, default=DEFAULT_TIMESTEPS)
    sw.add_argument("--edge-prob", type=float, default=DEFAULT_EDGE_PROB)
    sw.add_argument("--beam", type=int, default=None)
    sw.add_argument("--parallel", type=int, default=1)
    sw.add_argument("--seed", type=int, default=0, help="master seed")
    sw.add_argument("--reps", type=int, default=3, help="timing repetitions per configuration")
    sw.add_argument("--verify", action="store_true", help="report eta against vanilla (capped)")
    sw.add_argument("--out", default=None, help="output file (default stdout)")
    sw.add_argument("--format", choices=("csv", "json"), default="csv")
    sw.set_defaults(func=cmd_sweep)

    return parser


def cmd_gen(args) -> int:
    config = GeneratorConfig(
        num_states=args.states,
        num_symbols=args.symbols,
        seq_len=args.timesteps,
        edge_prob=args.edge_prob,
        seed=args.seed,
    )
    model = generate_er_hmm(config)
    obs = sample_observations(model, args.timesteps, args.seed + 1)
    save_model(model, args.model)
    save_observations(obs, args.obs)
    print(
        f"generated K={args.states} M={args.symbols} T={args.timesteps} "
        f"p={args.edge_prob} seed={args.seed} -> {args.model}, {args.obs}"
    )
    return EXIT_OK


def _resolve_algo_params(args, model):
    algo = args.algo
    if algo not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algo!r} (choose from {', '.join(ALGORITHMS)})")
    beam = args.beam
    if algo in _BEAM_ALGOS and beam is None:
        beam = model.num_states
    return algo, beam


def _run_once(algo, model, obs, parallelism, beam):
    diag = BeamDiagnostics()
    path, mem, tim = metered_run(
        algo, model, obs, parallelism=parallelism, beam_width=beam, diagnostics=diag
    )
    return path, mem, tim, diag


def _verify_block(model, obs, path):
    opt = vanilla_viterbi(model, obs)
    delta = abs(opt.log_likelihood - path.log_likelihood)
    block = {
        "optimal_score": opt.log_likelihood,
        "score_delta": delta,
        "paths_match": bool(np.array_equal(opt.states, path.states)),
    }
    try:
        block["eta"] = relative_error(opt.log_likelihood, path.log_likelihood)
    except ValueError:
        block["eta"] = None  # optimum is exactly 0; the delta above is the gap
    return block


def cmd_decode(args) -> int:
    model = load_model(args.model)
    obs = load_observations(args.obs)
    algo, beam = _resolve_algo_params(args, model)
    path, mem, tim, diag = _run_once(algo, model, obs, args.parallel, beam)
    report = {
        "algo": algo,
        "timesteps": len(obs),
        "score": path.log_likelihood,
        "wall_seconds": tim.wall_seconds,
        "dp_cell_updates": tim.dp_cell_updates,
        "memory": mem.to_dict(),
        "inexact_traceback": diag.inexact_traceback,
    }
    if args.verify:
        report["verify"] = _verify_block(model, obs, path)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(
                {"states": path.states.tolist(), "log_likelihood": path.log_likelihood}, fh
            )
        report["path_file"] = args.out
    print(json.dumps(report))
    return EXIT_OK


def cmd_verify(args) -> int:
    model = load_model(args.model)
    obs = load_observations(args.obs)
    algo, beam = _resolve_algo_params(args, model)
    path, _, _, diag = _run_once(algo, model, obs, args.parallel, beam)
    report = {"algo": algo, "score": path.log_likelihood, "inexact_traceback": diag.inexact_traceback}
    report.update(_verify_block(model, obs, path))
    print(json.dumps(report))
    return EXIT_OK


def _parse_axis_values(axis: str, raw: str | None, num_states: int):
    if raw is None:
        values = list(_DEFAULT_GRIDS[axis])
        if axis == "beam":
            # the default grid spans every benchmark K; keep the widths this
            # model admits (explicit --values stay strict)
            values = [v for v in values if v <= num_states]
        return values
    kind = float if axis == "edge-prob" else int
    try:
        return [kind(v) for v in raw.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigurationError(f"bad --values for axis {axis}: {raw!r}") from exc


def sweep_rows(args) -> list[dict]:
    """Assemble the sweep table; shared by the CSV and JSON output paths."""
    axis = args.axis
    values = _parse_axis_values(axis, args.values, args.states)
    algos = [a.strip() for a in args.algo.split(",") if a.strip()]
    for algo in algos:
        if algo not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {algo!r}")
        if axis == "beam" and algo not in _BEAM_ALGOS:
            raise ConfigurationError(f"axis beam is undefined for algorithm {algo}")
        if axis == "parallel" and algo not in _PARALLEL_ALGOS:
            raise ConfigurationError(f"axis parallel is undefined for algorithm {algo}")
    if args.reps < 1:
        raise ConfigurationError("--reps must be >= 1")

    rows = []
    for value in values:
        params = {
            "states": args.states,
            "symbols": args.symbols,
            "timesteps": args.timesteps,
            "edge_prob": args.edge_prob,
            "beam": args.beam,
            "parallel": args.parallel,
        }
        params[axis.replace("-", "_")] = value
        model_seed, obs_seed = instance_seeds(
            args.seed, params["states"], params["symbols"], params["timesteps"], params["edge_prob"]
        )
        model = generate_er_hmm(
            GeneratorConfig(
                num_states=params["states"],
                num_symbols=params["symbols"],
                seq_len=params["timesteps"],
                edge_prob=params["edge_prob"],
                seed=model_seed,
            )
        )
        obs = sample_observations(model, params["timesteps"], obs_seed)
        optimal = None
        if args.verify and params["states"] * params["timesteps"] <= VERIFY_CAP:
            optimal = vanilla_viterbi(model, obs)
        for algo in algos:
            beam = params["beam"]
            if algo in _BEAM_ALGOS and beam is None:
                beam = model.num_states
            for rep in range(args.reps):
                path, mem, tim, diag = _run_once(
                    algo, model, obs, params["parallel"], beam if algo in _BEAM_ALGOS else None
                )
                row = {
                    "axis": axis,
                    "algo": algo,
                    "rep": rep,
                    "states": params["states"],
                    "symbols": params["symbols"],
                    "timesteps": params["timesteps"],
                    "edge_prob": params["edge_prob"],
                    "beam": beam if algo in _BEAM_ALGOS else "",
                    "parallel": params["parallel"] if algo in _PARALLEL_ALGOS else "",
                    "seed": args.seed,
                    "wall_seconds": tim.wall_seconds,
                    "dp_cell_updates": tim.dp_cell_updates,
                    **mem.to_dict(),
                    "score": path.log_likelihood,
                    "optimal_score": "",
                    "score_delta": "",
                    "eta": "",
                    "inexact_traceback": diag.inexact_traceback,
                }
                if optimal is not None:
                    row["optimal_score"] = optimal.log_likelihood
                    row["score_delta"] = abs(optimal.log_likelihood - path.log_likelihood)
                    if optimal.log_likelihood != 0.0:
                        row["eta"] = relative_error(optimal.log_likelihood, path.log_likelihood)
                rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    rows = sweep_rows(args)
    if args.format == "json":
        text = json.dumps(rows)
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_FLAG
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLAG
    except InfeasibleDecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BeamExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BEAM_EXHAUSTED
    except (OSError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InternalConsistencyError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
