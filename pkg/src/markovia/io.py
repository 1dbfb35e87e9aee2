"""JSON/CSV serialization with reproducible number formatting.

All floating-point numbers are written with the C ``%.12g`` format so
outputs are byte-identical across runs.  Matrices are stored as separate
row-major ``re``/``im`` arrays; states additionally carry their layout as
``[[label, dim], ...]`` pairs.
"""
from __future__ import annotations

import json
from typing import Any, Mapping

import numpy as np

from .errors import InvariantError, LayoutError, MarkoviaError
from .channels import KrausChannel
from .markov import BlockSpec, MarkovDecomposition
from .revival import RandomUnitaryScenario
from .states import (
    MultipartiteState,
    SubsystemLayout,
    state_invariant_failures,
)


def format_number(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    value = float(x)
    if not np.isfinite(value):
        raise InvariantError("cannot serialize non-finite number", ["finite"])
    return f"{value:.12g}"


def dumps(obj: Any) -> str:
    """Serialize nested dicts/lists/numbers/strings deterministically."""
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, float, np.integer, np.floating)):
        return format_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Mapping):
        inner = ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items())
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        return "[" + ", ".join(dumps(v) for v in seq) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def matrix_to_json(matrix: np.ndarray) -> dict:
    arr = np.asarray(matrix, dtype=complex)
    return {
        "re": [float(v) for v in arr.real.reshape(-1)],
        "im": [float(v) for v in arr.imag.reshape(-1)],
    }


def matrix_from_json(obj, rows: int, cols: int | None = None) -> np.ndarray:
    cols = rows if cols is None else cols
    if not isinstance(obj, Mapping) or "re" not in obj or "im" not in obj:
        raise InvariantError("matrix object needs 're' and 'im' arrays", ["matrix"])
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj["im"], dtype=float)
    if re.shape != (rows * cols,) or im.shape != (rows * cols,):
        raise InvariantError(
            f"matrix arrays have length {re.size}/{im.size}, expected {rows * cols}",
            ["matrix"],
        )
    if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
        raise InvariantError("matrix entries must be finite", ["finite"])
    return (re + 1j * im).reshape(rows, cols)


def layout_from_json(obj) -> SubsystemLayout:
    try:
        parts = tuple((str(label), int(dim)) for label, dim in obj)
    except (TypeError, ValueError) as err:
        raise InvariantError(f"malformed layout: {err}", ["layout"]) from err
    return SubsystemLayout(parts)


def state_to_json(state: MultipartiteState) -> dict:
    out = {"layout": [[l, d] for l, d in state.layout.parts]}
    out.update(matrix_to_json(state.matrix))
    return out


def state_from_json(obj) -> MultipartiteState:
    """Parse and validate a state, reporting every violated invariant."""
    if not isinstance(obj, Mapping) or "layout" not in obj:
        raise InvariantError("state object needs a 'layout' field", ["layout"])
    layout = layout_from_json(obj["layout"])
    matrix = matrix_from_json(obj, layout.dim)
    failures = state_invariant_failures(matrix)
    if failures:
        raise InvariantError(
            "invalid state: " + "; ".join(failures), failures=failures
        )
    return MultipartiteState(matrix, layout)


def channel_to_json(channel: KrausChannel) -> dict:
    return {
        "in_layout": [[l, d] for l, d in channel.in_layout.parts],
        "out_layout": [[l, d] for l, d in channel.out_layout.parts],
        "kraus": [matrix_to_json(k) for k in channel.kraus_ops],
    }


def channel_from_json(obj) -> KrausChannel:
    if not isinstance(obj, Mapping):
        raise InvariantError("channel object must be a mapping", ["channel"])
    for key in ("in_layout", "out_layout", "kraus"):
        if key not in obj:
            raise InvariantError(f"channel object needs {key!r}", ["channel"])
    in_lay = layout_from_json(obj["in_layout"])
    out_lay = layout_from_json(obj["out_layout"])
    ops = [matrix_from_json(k, out_lay.dim, in_lay.dim) for k in obj["kraus"]]
    return KrausChannel(ops, in_lay, out_lay)


def decomposition_to_json(decomp: MarkovDecomposition) -> dict:
    subsystems = {}
    for s in decomp.spec_order:
        spec = decomp.specs[s]
        subsystems[s] = {
            "blocks": [[l, r] for l, r in spec.blocks],
            "isometry": matrix_to_json(spec.isometry),
        }
    components = []
    for idx in np.ndindex(decomp.weights.shape):
        core = decomp.cores.get(tuple(idx))
        if core is not None:
            components.append(
                {"kind": "core", "index": list(idx), "state": state_to_json(core)}
            )
    for s in decomp.spec_order:
        for j, factor in enumerate(decomp.env_factors[s]):
            if factor is not None:
                components.append(
                    {
                        "kind": "env",
                        "subsystem": s,
                        "block": j,
                        "state": state_to_json(factor),
                    }
                )
    return {
        "system": list(decomp.system),
        "environments": dict(decomp.env),
        "subsystems": subsystems,
        "weights": [float(w) for w in decomp.weights.reshape(-1)],
        "components": components,
    }


def decomposition_from_json(obj) -> MarkovDecomposition:
    if not isinstance(obj, Mapping):
        raise InvariantError("decomposition must be a mapping", ["decomposition"])
    for key in ("system", "environments", "subsystems", "weights", "components"):
        if key not in obj:
            raise InvariantError(f"decomposition needs {key!r}", ["decomposition"])
    system = tuple(str(s) for s in obj["system"])
    env = {str(k): str(v) for k, v in obj["environments"].items()}
    specs = {}
    for s, entry in obj["subsystems"].items():
        blocks = [(int(l), int(r)) for l, r in entry["blocks"]]
        dim = sum(l * r for l, r in blocks)
        iso = matrix_from_json(entry["isometry"], dim)
        specs[str(s)] = BlockSpec(blocks, iso)
    order = [s for s in system if s in specs]
    shape = tuple(len(specs[s].blocks) for s in order)
    weights = np.asarray(obj["weights"], dtype=float)
    expected = int(np.prod(shape)) if shape else 0
    if weights.size != expected:
        raise InvariantError(
            f"{weights.size} weights for block-count shape {shape}", ["weights"]
        )
    weights = weights.reshape(shape)

    cores: dict[tuple[int, ...], MultipartiteState | None] = {
        tuple(idx): None for idx in np.ndindex(shape)
    }
    env_factors = {s: [None] * len(specs[s].blocks) for s in order}
    for entry in obj["components"]:
        kind = entry.get("kind")
        state = state_from_json(entry["state"])
        if kind == "core":
            idx = tuple(int(i) for i in entry["index"])
            if idx not in cores:
                raise InvariantError(f"core index {idx} out of range", ["components"])
            cores[idx] = state
        elif kind == "env":
            s = str(entry["subsystem"])
            j = int(entry["block"])
            if s not in env_factors or not 0 <= j < len(env_factors[s]):
                raise InvariantError(
                    f"env factor ({s}, {j}) out of range", ["components"]
                )
            env_factors[s][j] = state
        else:
            raise InvariantError(f"unknown component kind {kind!r}", ["components"])
    return MarkovDecomposition(
        system=system,
        env=env,
        specs=specs,
        weights=weights,
        cores=cores,
        env_factors={s: tuple(v) for s, v in env_factors.items()},
    )


def scenario_to_json(sc: RandomUnitaryScenario) -> dict:
    grid = sc.time_grid
    step = float(grid[1] - grid[0]) if grid.size > 1 else 1.0
    return {
        "rho_ab0": state_to_json(sc.rho_ab0),
        "ensemble": [
            {"p": float(p), "H": matrix_to_json(h)} for p, h in sc.ensemble
        ],
        "time_grid": {
            "start": float(grid[0]),
            "stop": float(grid[-1]),
            "step": step,
        },
        "env_label": sc.env_label,
    }


def scenario_from_json(obj) -> RandomUnitaryScenario:
    if not isinstance(obj, Mapping):
        raise InvariantError("scenario must be a mapping", ["scenario"])
    for key in ("rho_ab0", "ensemble", "time_grid"):
        if key not in obj:
            raise InvariantError(f"scenario needs {key!r}", ["scenario"])
    rho = state_from_json(obj["rho_ab0"])
    d_b = rho.dims[1]
    ensemble = []
    for entry in obj["ensemble"]:
        if "p" not in entry or "H" not in entry:
            raise InvariantError("ensemble entries need 'p' and 'H'", ["ensemble"])
        ensemble.append((float(entry["p"]), matrix_from_json(entry["H"], d_b)))
    tg = obj["time_grid"]
    for key in ("start", "stop", "step"):
        if key not in tg:
            raise InvariantError(f"time_grid needs {key!r}", ["time-grid"])
    start, stop, step = float(tg["start"]), float(tg["stop"]), float(tg["step"])
    if step <= 0 or stop <= start:
        raise InvariantError(
            "time_grid needs step > 0 and stop > start", ["time-grid"]
        )
    grid = np.arange(start, stop + step * 1e-9, step)
    env_label = str(obj.get("env_label", "E"))
    return RandomUnitaryScenario(rho, ensemble, grid, env_label=env_label)


def load_json(path: str):
    """Read a JSON document; I/O and parse problems raise OSError/ValueError
    distinct from the package's validation errors."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise OSError(f"{path}: invalid JSON: {err}") from err
