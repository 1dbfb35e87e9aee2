"""Random-unitary dynamics with a classical environment.

One party of a bipartite system evolves under an ensemble of Hamiltonians,
each branch tagged by an orthonormal pointer state of the environment.  The
reduced system dynamics is the probabilistic mixture of the branch
unitaries; the environment state never changes and stays diagonal, yet the
joint state generically leaves the Markov family, which is exactly when
entanglement revivals become possible.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import InvariantError, LayoutError
from .measures import concurrence, negativity, one_norm
from .states import (
    MultipartiteState,
    SubsystemLayout,
    as_complex_matrix,
    bell_state,
    conditional_mutual_information,
)


class RandomUnitaryScenario:
    """Initial bipartite state, Hamiltonian ensemble on the second party,
    and a strictly increasing time grid (hbar = 1 throughout)."""

    __slots__ = ("rho_ab0", "ensemble", "time_grid", "env_label")

    def __init__(self, rho_ab0: MultipartiteState, ensemble, time_grid,
                 env_label: str = "E"):
        if len(rho_ab0.labels) != 2:
            raise InvariantError(
                f"initial state must be bipartite, got {rho_ab0.labels}",
                ["bipartite"],
            )
        if env_label in rho_ab0.labels:
            raise LayoutError(f"environment label {env_label!r} collides with system")
        pairs = []
        d_b = rho_ab0.dims[1]
        for p, h in ensemble:
            p = float(p)
            h = as_complex_matrix(h)
            if p < 0:
                raise InvariantError("ensemble probabilities must be >= 0", ["probabilities"])
            if h.shape != (d_b, d_b):
                raise LayoutError(
                    f"Hamiltonian shape {h.shape} does not match dim {d_b}"
                )
            dev = np.max(np.abs(h - h.conj().T))
            if dev > 1e-10:
                raise InvariantError(
                    f"Hamiltonian not Hermitian within 1e-10 (deviation {dev:.3e})",
                    ["hermiticity"],
                )
            h.setflags(write=False)
            pairs.append((p, h))
        if not pairs:
            raise InvariantError("ensemble must be nonempty", ["ensemble"])
        total = sum(p for p, _ in pairs)
        if abs(total - 1.0) > 1e-12:
            raise InvariantError(
                f"ensemble probabilities sum to {total:.12g}, not 1",
                ["probabilities"],
            )
        grid = np.asarray(time_grid, dtype=float).reshape(-1)
        if grid.size == 0 or not np.all(np.isfinite(grid)):
            raise InvariantError("time grid must be nonempty and finite", ["time-grid"])
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise InvariantError("time grid must be strictly increasing", ["time-grid"])
        grid.setflags(write=False)
        object.__setattr__(self, "rho_ab0", rho_ab0)
        object.__setattr__(self, "ensemble", tuple(pairs))
        object.__setattr__(self, "time_grid", grid)
        object.__setattr__(self, "env_label", str(env_label))

    def __setattr__(self, name, value):
        raise AttributeError("RandomUnitaryScenario is immutable")

    @property
    def labels(self) -> tuple[str, str]:
        return self.rho_ab0.labels

    @property
    def env_dim(self) -> int:
        return len(self.ensemble)

    def joint_layout(self) -> SubsystemLayout:
        a, b = self.rho_ab0.layout.parts
        return SubsystemLayout((a, b, (self.env_label, self.env_dim)))


def branch_unitary(hamiltonian: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) via eigendecomposition (exact at these sizes)."""
    vals, vecs = np.linalg.eigh(hamiltonian)
    return (vecs * np.exp(-1j * vals * t)) @ vecs.conj().T


def _branch_matrices(sc: RandomUnitaryScenario, t: float) -> list[np.ndarray]:
    d_a = sc.rho_ab0.dims[0]
    eye_a = np.eye(d_a)
    out = []
    for _, h in sc.ensemble:
        u = np.kron(eye_a, branch_unitary(h, t))
        out.append(u @ sc.rho_ab0.matrix @ u.conj().T)
    return out


def branch_states(sc: RandomUnitaryScenario, t: float) -> list[MultipartiteState]:
    """Per-branch system states at time t (each a unitary image of the start)."""
    return [MultipartiteState(m, sc.rho_ab0.layout) for m in _branch_matrices(sc, t)]


def evolve_system(sc: RandomUnitaryScenario, t: float) -> MultipartiteState:
    """Mixture over branches of the unitarily evolved system state."""
    mats = _branch_matrices(sc, t)
    mixed = sum(p * m for (p, _), m in zip(sc.ensemble, mats))
    return MultipartiteState(mixed, sc.rho_ab0.layout)


def joint_unitary(sc: RandomUnitaryScenario, t: float) -> np.ndarray:
    """Controlled evolution: branch unitary on the system conditioned on the
    environment pointer basis."""
    d_a = sc.rho_ab0.dims[0]
    d_e = sc.env_dim
    eye_a = np.eye(d_a)
    total = np.zeros((d_a * sc.rho_ab0.dims[1] * d_e,) * 2, dtype=complex)
    for j, (_, h) in enumerate(sc.ensemble):
        proj = np.zeros((d_e, d_e))
        proj[j, j] = 1.0
        total += np.kron(np.kron(eye_a, branch_unitary(h, t)), proj)
    return total


def build_joint(
    sc: RandomUnitaryScenario,
) -> tuple[MultipartiteState, Callable[[float], np.ndarray]]:
    """Initial joint state (system (x) diagonal environment) and the
    one-parameter family of joint unitaries."""
    diag = np.diag(np.array([p for p, _ in sc.ensemble], dtype=complex))
    joint0 = MultipartiteState(np.kron(sc.rho_ab0.matrix, diag), sc.joint_layout())
    return joint0, lambda t: joint_unitary(sc, t)


def evolve_joint(sc: RandomUnitaryScenario, t: float) -> MultipartiteState:
    """Joint state at time t: branch states tagged by environment pointers."""
    mats = _branch_matrices(sc, t)
    d_e = sc.env_dim
    dim = sc.rho_ab0.dim * d_e
    out = np.zeros((dim, dim), dtype=complex)
    for j, ((p, _), m) in enumerate(zip(sc.ensemble, mats)):
        proj = np.zeros((d_e, d_e))
        proj[j, j] = 1.0
        out += p * np.kron(m, proj)
    return MultipartiteState(out, sc.joint_layout())


def _measure_fn(sc: RandomUnitaryScenario, name: str):
    if name == "concurrence":
        if sc.rho_ab0.dims != (2, 2):
            raise InvariantError(
                "concurrence needs a two-qubit system", ["measure"]
            )
        return concurrence
    if name == "negativity":
        first = sc.labels[0]
        return lambda s: negativity(s, [first])
    raise InvariantError(f"unknown measure {name!r}", ["measure"])


def hidden_entanglement(
    sc: RandomUnitaryScenario, t: float, measure: str = "concurrence"
) -> float:
    """Branch-average entanglement minus entanglement of the mixture.

    The branch average is what survives per ensemble member (unitary
    branches preserve it); the difference is what classical mixing hides.
    """
    fn = _measure_fn(sc, measure)
    branches = branch_states(sc, t)
    avg = sum(p * fn(s) for (p, _), s in zip(sc.ensemble, branches))
    return float(avg - fn(evolve_system(sc, t)))


def classicality_check(state: MultipartiteState, env_label: str) -> float:
    """Trace-norm disturbance under the projective pointer measurement of
    the environment; zero means the correlations with it are classical."""
    pos = state.layout.position(env_label)
    dims = state.dims
    n = len(dims)
    d_e = dims[pos]
    tensor = state.matrix.reshape(list(dims) + list(dims))
    dephased = np.zeros_like(tensor)
    for j in range(d_e):
        sel = [slice(None)] * (2 * n)
        sel[pos] = slice(j, j + 1)
        sel[n + pos] = slice(j, j + 1)
        dephased[tuple(sel)] = tensor[tuple(sel)]
    diff = (tensor - dephased).reshape(state.dim, state.dim)
    return one_norm(diff)


class TimeRow(NamedTuple):
    t: float
    concurrence: float
    negativity: float
    cmi_bits: float
    hidden_entanglement: float
    branch_entanglements: tuple[float, ...]


class TimeSeries:
    """Per-time records of a scenario run, ordered by time."""

    __slots__ = ("rows",)

    def __init__(self, rows: Sequence[TimeRow]):
        rows = tuple(rows)
        for r in rows:
            values = [r.t, r.concurrence, r.negativity, r.cmi_bits,
                      r.hidden_entanglement, *r.branch_entanglements]
            if not all(np.isfinite(values)):
                raise InvariantError(f"non-finite entry in row at t={r.t}", ["finite"])
            if r.cmi_bits < -1e-9:
                raise InvariantError(
                    f"negative conditional mutual information at t={r.t}",
                    ["cmi"],
                )
        ts = [r.t for r in rows]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvariantError("rows must be ordered by increasing t", ["order"])
        object.__setattr__(self, "rows", rows)

    def __setattr__(self, name, value):
        raise AttributeError("TimeSeries is immutable")

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self) -> str:
        lines = ["t,concurrence,negativity,cmi_bits,hidden_entanglement"]
        for r in self.rows:
            fields = (r.t, r.concurrence, r.negativity, r.cmi_bits,
                      r.hidden_entanglement)
            lines.append(",".join(f"{x:.12g}" for x in fields))
        return "\n".join(lines) + "\n"


def _scenario_row(sc: RandomUnitaryScenario, t: float, hidden_measure: str) -> TimeRow:
    a, b = sc.labels
    fn = _measure_fn(sc, hidden_measure)
    branches = branch_states(sc, t)
    branch_vals = tuple(fn(s) for s in branches)
    mixed = evolve_system(sc, t)
    joint = evolve_joint(sc, t)
    cmi = conditional_mutual_information(joint, [a], [b], [sc.env_label])
    avg = sum(p * v for (p, _), v in zip(sc.ensemble, branch_vals))
    return TimeRow(
        t=float(t),
        concurrence=concurrence(mixed),
        negativity=negativity(mixed, [a]),
        cmi_bits=cmi,
        hidden_entanglement=float(avg - fn(mixed)),
        branch_entanglements=branch_vals,
    )


def run_scenario(
    sc: RandomUnitaryScenario,
    measures: Sequence[str] = ("concurrence", "negativity"),
    threads: int | None = None,
) -> TimeSeries:
    """Evaluate all trajectory columns over the scenario's time grid.

    ``measures`` must list the entanglement monotones to report (both are
    always recorded; the first one drives the hidden-entanglement and
    branch columns).  The grid points are independent, so with
    ``threads > 1`` they are evaluated in a thread pool and merged back in
    grid order; results are identical either way.
    """
    for m in measures:
        _measure_fn(sc, m)  # validates names and dimensions
    if not measures:
        raise InvariantError("need at least one measure", ["measure"])
    if sc.rho_ab0.dims != (2, 2):
        raise InvariantError(
            "trajectory columns need a two-qubit system", ["measure"]
        )
    hidden_measure = measures[0]
    grid = sc.time_grid
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda t: _scenario_row(sc, t, hidden_measure), grid))
    else:
        rows = [_scenario_row(sc, t, hidden_measure) for t in grid]
    return TimeSeries(rows)


class RevivalInterval(NamedTuple):
    death_t: float
    revival_start_t: float
    end_t: float
    certificate: tuple[tuple[float, float], ...]
    certified: bool


def detect_revivals(
    ts: TimeSeries,
    measure: str = "concurrence",
    rise_tol: float = 1e-9,
    cert_tol: float = 1e-6,
) -> list[RevivalInterval]:
    """Maximal strictly increasing runs of an entanglement column.

    ``death_t`` is the start of the flat-or-minimum stretch preceding the
    rise, ``revival_start_t`` the sample where the increase begins, and the
    certificate lists (t, conditional mutual information) at each sample of
    the half-open revival interval: a strictly positive value there
    witnesses that the joint state is not Markov at that instant (it may
    return to zero exactly at a full-revival endpoint).
    """
    if len(ts) < 3:
        raise InvariantError("need at least three rows", ["rows"])
    if measure not in ("concurrence", "negativity"):
        raise InvariantError(f"unknown measure column {measure!r}", ["measure"])
    values = ts.column(measure)
    times = ts.column("t")
    cmis = ts.column("cmi_bits")

    intervals = []
    i = 0
    n = len(values)
    while i < n - 1:
        if values[i + 1] > values[i] + rise_tol:
            start = i
            end = i + 1
            while end < n - 1 and values[end + 1] > values[end] + rise_tol:
                end += 1
            death = start
            while death > 0 and values[death - 1] <= values[start] + rise_tol:
                death -= 1
            certificate = tuple(
                (float(times[k]), float(cmis[k])) for k in range(start, end)
            )
            certified = all(c > cert_tol for _, c in certificate)
            intervals.append(
                RevivalInterval(
                    death_t=float(times[death]),
                    revival_start_t=float(times[start]),
                    end_t=float(times[end]),
                    certificate=certificate,
                    certified=certified,
                )
            )
            i = end
        else:
            i += 1
    return intervals


def dephasing_bell_scenario(
    omega: float = 1.0,
    step: float = np.pi / 100,
    stop: float = 2 * np.pi,
) -> RandomUnitaryScenario:
    """Bundled scenario: a Bell pair dephased by opposite-sign level shifts.

    Two equally likely branches shift the second qubit's excited level by
    +/- omega, so the mixed-state concurrence is |cos(omega t)| while each
    branch stays maximally entangled.
    """
    h = np.zeros((2, 2))
    h[1, 1] = omega
    grid = np.arange(0.0, stop + step * 1e-9, step)
    return RandomUnitaryScenario(
        rho_ab0=bell_state(("A", "B")),
        ensemble=[(0.5, h), (0.5, -h)],
        time_grid=grid,
    )
