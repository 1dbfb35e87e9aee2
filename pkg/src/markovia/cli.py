"""Command-line front end.

Exit codes: 0 success (or certified), 1 I/O error, 2 validation error,
3 check failed.  The primary artifact goes to stdout (or ``--out``);
diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import io as mio
from .channels import apply
from .errors import MarkoviaError
from .markov import (
    DecompositionFailure,
    find_markov_decomposition,
    reconstruct,
    verify_decomposition,
)
from .measures import one_norm_distance
from .revival import detect_revivals, dephasing_bell_scenario, run_scenario
from .channels import reduce_localized_dynamics
from .states import conditional_mutual_information, partial_trace, permute_parts

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_CHECK_FAILED = 3


class _CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _emit(text: str, out_path: str | None):
    if out_path:
        try:
            with open(out_path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as err:
            raise _CliError(EXIT_IO, str(err))
    else:
        sys.stdout.write(text)


def _load(path: str, parser):
    try:
        doc = mio.load_json(path)
    except OSError as err:
        raise _CliError(EXIT_IO, str(err))
    try:
        return parser(doc)
    except MarkoviaError as err:
        raise _CliError(EXIT_INVALID, f"{path}: {err}")


def _positive_tol(value: str) -> float:
    tol = float(value)
    if tol <= 0:
        raise argparse.ArgumentTypeError("tolerance must be > 0")
    return tol


def _parse_partition(spec: str, labels) -> tuple[list, list, list]:
    groups = spec.split(";")
    if len(groups) != 3:
        raise _CliError(EXIT_INVALID, f"partition {spec!r} needs three ';' groups")
    parts = [[x for x in g.split(",") if x] for g in groups]
    known = set(labels)
    for g in parts:
        for label in g:
            if label not in known:
                raise _CliError(EXIT_INVALID, f"unknown label {label!r} in partition")
    return parts[0], parts[1], parts[2]


def _cmd_check(args) -> int:
    state = _load(args.state, mio.state_from_json)
    specs = args.partition
    if not specs:
        if len(state.labels) != 3:
            raise _CliError(
                EXIT_INVALID,
                "state is not tripartite; pass --partition explicitly",
            )
        specs = [";".join(state.labels)]
    values = {}
    for spec in specs:
        a, b, e = _parse_partition(spec, state.labels)
        try:
            values[spec] = conditional_mutual_information(state, a, b, e)
        except MarkoviaError as err:
            raise _CliError(EXIT_INVALID, str(err))
    certified = all(v <= args.tol for v in values.values())
    if len(values) == 1:
        payload = {"cmi": next(iter(values.values())), "certified": certified}
    else:
        payload = {"cmi": values, "certified": certified}
    _emit(mio.dumps(payload) + "\n", args.out)
    return EXIT_OK if certified else EXIT_CHECK_FAILED


def _cmd_decompose(args) -> int:
    state = _load(args.state, mio.state_from_json)
    try:
        result = find_markov_decomposition(state, tol=args.tol)
    except MarkoviaError as err:
        raise _CliError(EXIT_INVALID, str(err))
    if isinstance(result, DecompositionFailure):
        payload = {"status": result.reason, "cmi": result.cmi}
        _emit(mio.dumps(payload) + "\n", None)
        return EXIT_CHECK_FAILED

    residual = verify_decomposition(state, result)
    a, b, e = state.labels
    payload = {
        "status": "ok",
        "cmi": conditional_mutual_information(state, [a], [b], [e]),
        "blocks": [[l, r] for l, r in result.specs[b].blocks],
        "weights": [float(w) for w in result.weights.reshape(-1)],
        "residual": residual,
    }
    _emit(mio.dumps(payload) + "\n", None)
    if args.out:
        _emit(mio.dumps(mio.decomposition_to_json(result)) + "\n", args.out)
    return EXIT_OK


def _cmd_construct(args) -> int:
    decomp = _load(args.decomposition, mio.decomposition_from_json)
    try:
        state = reconstruct(decomp)
    except MarkoviaError as err:
        raise _CliError(EXIT_INVALID, str(err))
    _emit(mio.dumps(mio.state_to_json(state)) + "\n", args.out)
    return EXIT_OK


def _thread_count() -> int | None:
    raw = os.environ.get("MARKOVIA_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise _CliError(EXIT_INVALID, f"MARKOVIA_THREADS={raw!r} is not an integer")
    if n < 0:
        raise _CliError(EXIT_INVALID, "MARKOVIA_THREADS must be >= 0")
    if n == 0:
        return min(8, os.cpu_count() or 1)
    return n


def _cmd_simulate(args) -> int:
    if args.scenario == "dephasing-bell":
        scenario = dephasing_bell_scenario()
    else:
        scenario = _load(args.scenario, mio.scenario_from_json)
    try:
        series = run_scenario(scenario, threads=_thread_count())
        intervals = detect_revivals(series)
    except MarkoviaError as err:
        raise _CliError(EXIT_INVALID, str(err))
    for interval in intervals:
        record = {
            "death_t": interval.death_t,
            "revival_start_t": interval.revival_start_t,
            "end_t": interval.end_t,
            "certified": interval.certified,
            "certificate": [[t, c] for t, c in interval.certificate],
        }
        sys.stderr.write(mio.dumps(record) + "\n")
    if args.format == "csv":
        _emit(series.to_csv(), args.out)
    else:
        rows = [
            {
                "t": r.t,
                "concurrence": r.concurrence,
                "negativity": r.negativity,
                "cmi_bits": r.cmi_bits,
                "hidden_entanglement": r.hidden_entanglement,
            }
            for r in series.rows
        ]
        _emit(mio.dumps({"rows": rows}) + "\n", args.out)
    return EXIT_OK


def _channel_map(doc):
    if not isinstance(doc, dict):
        raise MarkoviaError("expected a JSON object mapping labels to channels")
    return doc


def _cmd_reduce(args) -> int:
    state = _load(args.state, mio.state_from_json)
    lambdas_doc = _load(args.lambdas, _channel_map)
    dynamics_doc = _load(args.dynamics, _channel_map)
    try:
        lambdas = {k: mio.channel_from_json(v) for k, v in lambdas_doc.items()}
        dynamics = {k: mio.channel_from_json(v) for k, v in dynamics_doc.items()}
        unknown = set(lambdas) - set(state.labels)
        if unknown:
            raise MarkoviaError(f"channels for unknown subsystems {sorted(unknown)}")
        reduced = reduce_localized_dynamics(lambdas, dynamics)

        joint = state
        for s in state.labels:
            if s in lambdas:
                joint = apply(lambdas[s], joint, [s])
        evolved = joint
        for s in state.labels:
            if s in dynamics:
                env = lambdas[s].out_layout.parts[1][0]
                evolved = apply(dynamics[s], evolved, [s, env])
        via_joint = partial_trace(evolved, state.labels)

        direct = state
        for s in state.labels:
            if s in reduced:
                direct = apply(reduced[s], direct, [s])
        residual = one_norm_distance(
            permute_parts(via_joint, state.labels).matrix,
            permute_parts(direct, state.labels).matrix,
        )
    except MarkoviaError as err:
        raise _CliError(EXIT_INVALID, str(err))
    payload = {
        "residual": residual,
        "channels": {s: mio.channel_to_json(ch) for s, ch in reduced.items()},
    }
    _emit(mio.dumps(payload) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markovia",
        description="Construct, certify, decompose, and simulate quantum Markov states.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="conditional mutual information certificate")
    p.add_argument("state", help="state JSON file")
    p.add_argument("--partition", action="append", default=[],
                   help='three ";"-separated label groups, e.g. "A;B;E"')
    p.add_argument("--tol", type=_positive_tol, default=1e-9)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("decompose", help="find a Markov block decomposition")
    p.add_argument("state", help="tripartite state JSON file")
    p.add_argument("--tol", type=_positive_tol, default=1e-9)
    p.add_argument("--out", default=None, help="write the full decomposition JSON here")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("construct", help="assemble a state from a decomposition")
    p.add_argument("decomposition", help="decomposition JSON file")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_construct)

    p = sub.add_parser("simulate", help="run a random-unitary scenario")
    p.add_argument("scenario", help='scenario JSON file or "dephasing-bell"')
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reduce", help="reduce localized dynamics to subdynamics")
    p.add_argument("state", help="system state JSON file")
    p.add_argument("lambdas", help="JSON map label -> embedding channel")
    p.add_argument("dynamics", help="JSON map label -> joint dynamics channel")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_reduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except _CliError as err:
        sys.stderr.write(f"markovia: {err}\n")
        return err.code


if __name__ == "__main__":
    sys.exit(main())
