import os
import pathlib
import subprocess
import sys

import pytest

FIXTURES = pathlib.Path(__file__).resolve().parent / "fixtures"
GOLDEN = FIXTURES / "golden"

CLI_ENV = {
    **os.environ,
    "OPENBLAS_NUM_THREADS": "1",
    "OMP_NUM_THREADS": "1",
    "MKL_NUM_THREADS": "1",
    "MARKOVIA_THREADS": "1",
}


def run_cli(*args, env=None):
    return subprocess.run(
        [sys.executable, "-m", "markovia", *args],
        capture_output=True,
        env=env or CLI_ENV,
        cwd=str(FIXTURES),
    )


GOLDEN_CASES = {
    "check_ghz": ("check", "ghz.json"),
    "check_product": ("check", "product.json"),
    "check_ghz_coarse": ("check", "ghz.json", "--partition", "A,B;;E"),
    "decompose_product": ("decompose", "product.json"),
    "decompose_ghz": ("decompose", "ghz.json"),
    "construct_two_block": ("construct", "two_block_decomp.json"),
    "simulate_bell": ("simulate", "dephasing-bell"),
    "simulate_coarse_json": ("simulate", "scenario_coarse.json", "--format", "json"),
    "reduce_unitary": ("reduce", "rho_s.json", "lambdas.json", "dynamics.json"),
}


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES))
def test_golden(name):
    proc = run_cli(*GOLDEN_CASES[name])
    assert proc.returncode == int((GOLDEN / f"{name}.exit").read_text())
    assert proc.stdout == (GOLDEN / f"{name}.stdout").read_bytes()
    assert proc.stderr == (GOLDEN / f"{name}.stderr").read_bytes()


def test_exit_codes_cover_contract():
    codes = {int((GOLDEN / f"{n}.exit").read_text()) for n in GOLDEN_CASES}
    assert 0 in codes and 3 in codes


def test_check_missing_file_is_io_error():
    proc = run_cli("check", "no_such_file.json")
    assert proc.returncode == 1
    assert b"no_such_file" in proc.stderr


def test_check_malformed_json_is_io_error(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text("{this is not json")
    proc = run_cli("check", str(bad))
    assert proc.returncode == 1
    assert b"invalid JSON" in proc.stderr


def test_check_invalid_state_names_invariant():
    proc = run_cli("check", "bad_trace.json")
    assert proc.returncode == 2
    assert b"trace" in proc.stderr


def test_check_unknown_flag_rejected():
    proc = run_cli("check", "ghz.json", "--frobnicate")
    assert proc.returncode == 2


def test_check_bad_partition():
    proc = run_cli("check", "ghz.json", "--partition", "A;B")
    assert proc.returncode == 2
    proc = run_cli("check", "ghz.json", "--partition", "A;B;Q")
    assert proc.returncode == 2


def test_check_nonpositive_tolerance_rejected():
    proc = run_cli("check", "ghz.json", "--tol", "0")
    assert proc.returncode == 2
    proc = run_cli("check", "ghz.json", "--tol", "-1")
    assert proc.returncode == 2


def test_simulate_invalid_scenarios():
    proc = run_cli("simulate", "bad_scenario.json")
    assert proc.returncode == 2
    assert b"time_grid" in proc.stderr or b"step" in proc.stderr


def test_simulate_empty_ensemble(tmp_path):
    import json

    doc = json.loads((FIXTURES / "scenario_coarse.json").read_text())
    doc["ensemble"] = []
    path = tmp_path / "empty.json"
    path.write_text(json.dumps(doc))
    proc = run_cli("simulate", str(path))
    assert proc.returncode == 2


def test_simulate_out_file(tmp_path):
    out = tmp_path / "run.csv"
    proc = run_cli("simulate", "scenario_coarse.json", "--out", str(out))
    assert proc.returncode == 0
    assert proc.stdout == b""
    text = out.read_text()
    assert text.startswith("t,concurrence,negativity,cmi_bits,hidden_entanglement\n")


def test_simulate_threads_do_not_change_output():
    env = dict(CLI_ENV)
    env["MARKOVIA_THREADS"] = "4"
    proc = run_cli("simulate", "scenario_coarse.json", env=env)
    assert proc.returncode == 0
    single = run_cli("simulate", "scenario_coarse.json")
    assert proc.stdout == single.stdout
    assert proc.stderr == single.stderr


def test_reduce_mismatched_dims():
    proc = run_cli("reduce", "rho_s.json", "lambdas.json", "dynamics_mismatched.json")
    assert proc.returncode == 2


def test_decompose_out_writes_full_decomposition(tmp_path):
    out = tmp_path / "decomp.json"
    proc = run_cli("decompose", "product.json", "--out", str(out))
    assert proc.returncode == 0
    import json

    doc = json.loads(out.read_text())
    assert doc["subsystems"]["B"]["blocks"] == [[2, 1]]

    # the emitted decomposition reconstructs the input via `construct`
    proc2 = run_cli("construct", str(out))
    assert proc2.returncode == 0
    import numpy as np

    from markovia import io as mio

    rebuilt = mio.state_from_json(json.loads(proc2.stdout))
    original = mio.state_from_json(json.loads((FIXTURES / "product.json").read_text()))
    assert np.max(np.abs(rebuilt.matrix - original.matrix)) < 1e-9


def test_construct_output_is_valid_state():
    import json

    from markovia import io as mio

    proc = run_cli("construct", "two_block_decomp.json")
    assert proc.returncode == 0
    state = mio.state_from_json(json.loads(proc.stdout))
    assert state.labels == ("A", "B", "E")
