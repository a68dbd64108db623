import json
import math
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from twobose import __version__
from twobose.cli import COMMANDS, load_schema, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TOY = {"kind": "random_miscible", "d1": 2, "d2": 2, "N1": 2, "N2": 2, "coupling": 1.0, "seed": 5}
MODEL = {"grid": {"dim": 1, "points": 64, "length": 16.0},
         "traps": [{"kind": "harmonic"}, {"kind": "harmonic"}],
         "interactions": {"V1": {"kind": "gaussian", "strength": 3.0, "width": 0.5},
                          "V2": {"kind": "gaussian", "strength": 2.0, "width": 0.5},
                          "V12": {"kind": "gaussian", "strength": 1.0, "width": 0.5}},
         "ratios": [0.5, 0.5]}
SMALL = {
    "scatter": {"command": "scatter", "potential": {"kind": "gaussian", "strength": 2.0, "width": 0.3, "cutoff": 3.0},
                "numerics": {"neumann": {"N": [100], "ell": 0.5}}},
    "minimize": {"command": "minimize", "model": MODEL, "numerics": {"tol": 1e-9}},
    "bogoliubov": {"command": "bogoliubov", "model": MODEL, "numerics": {"tol": 1e-10, "M1": 2, "M2": 2}},
    "exactdiag": {"command": "exactdiag", "toy": TOY},
    "convergence": {"command": "convergence", "toy": TOY, "numerics": {"Ns": [4, 8]}},
    "definetti": {"command": "definetti", "numerics": {"Ns": [2, 4], "samples": 2000,
                                                        "schur": {"d": 2, "N": 2, "samples": 2000}}},
    "check": {"command": "check", "model": MODEL, "toy": TOY,
              "numerics": {"convexity_samples": 3, "relations": [[2, 2, 2, 2]]}},
}


def write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def run(tmp_path, cfg, *extra, out="out"):
    code = main([cfg["command"], "--config", str(write(tmp_path, cfg)), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def result(out_dir, name):
    return json.loads((out_dir / name).read_text())


# --- schema and configuration errors ------------------------------------------------------------


def test_schema_is_valid_and_examples_conform():
    schema = load_schema()
    jsonschema.Draft202012Validator.check_schema(schema)
    for path in sorted(CONFIGS.glob("*.json")):
        jsonschema.validate(json.loads(path.read_text()), schema)
    for cfg in SMALL.values():
        jsonschema.validate(cfg, schema)


def test_every_command_has_example_config():
    assert {p.stem for p in CONFIGS.glob("*.json")} == set(COMMANDS)


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(extra=1),
    lambda c: c["numerics"].update(tolerance=1e-3),
    lambda c: c["potential"].update(colour="red"),
    lambda c: c.update(output={"directory": "x", "format": "csv"}),
])
def test_unknown_keys_rejected(tmp_path, mutate, capsys):
    cfg = json.loads(json.dumps(SMALL["scatter"]))
    mutate(cfg)
    assert run(tmp_path, cfg)[0] == 2
    assert "config error" in capsys.readouterr().err


def test_missing_potential_file(tmp_path, capsys):
    cfg = {"command": "scatter", "potential": {"kind": "csv", "path": "nope.csv"}}
    assert run(tmp_path, cfg)[0] == 2
    assert "config error" in capsys.readouterr().err


def test_other_config_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["scatter", "--config", str(p)]) == 2
    assert main(["scatter", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["minimize", "--config", str(write(tmp_path, SMALL["scatter"]))]) == 2  # command mismatch
    assert run(tmp_path, {"command": "minimize"})[0] == 2  # model section required
    bad_split = {"command": "convergence", "toy": TOY, "numerics": {"Ns": [3]}}
    assert run(tmp_path, bad_split)[0] == 2
    hermitian = {"command": "exactdiag", "toy": {"T1": [[0, 1], [0, 0]], "T2": [[0]], "V1": [[[[0] * 2] * 2] * 2] * 2,
                                                  "V2": [[[[0]]]], "V12": [[[[0]] * 2]] * 2, "N1": 1, "N2": 1}}
    assert run(tmp_path, hermitian)[0] == 2


def test_validate_only_writes_nothing(tmp_path, capsys):
    code, out = run(tmp_path, SMALL["check"], "--validate-only")
    assert code == 0 and not out.exists()
    assert "config ok" in capsys.readouterr().out


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = {"command": "minimize", "model": MODEL, "numerics": {"tol": 1e-14, "max_iter": 2}}
    code, out = run(tmp_path, cfg)
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err
    assert result(out, "minimize.json")["converged"] is False  # best-so-far report kept


# --- command results against oracles --------------------------------------------------------------


def test_scatter_zero_potential(tmp_path):
    code, out = run(tmp_path, {"command": "scatter", "potential": {"kind": "zero"}})
    assert code == 0
    assert result(out, "scatter.json")["result"]["a"] == 0.0


def test_scatter_hard_barrier(tmp_path):
    # -f'' + ½ h f = 0 inside r < R: a = R - tanh(κR)/κ with κ = √(h/2)
    h, R = 2.0e4, 1.0
    # the jump at R spoils the extrapolation, so the variational tolerance is loosened
    cfg = {"command": "scatter", "potential": {"kind": "barrier", "height": h, "radius": R, "resolution": 8000},
           "numerics": {"tol": 1e-3}}
    code, out = run(tmp_path, cfg)
    k = math.sqrt(h / 2)
    assert code == 0
    assert result(out, "scatter.json")["result"]["a"] == pytest.approx(R - math.tanh(k * R) / k, rel=1e-3)


def test_scatter_csv_potential(tmp_path):
    r = np.linspace(0, 1, 201)
    v = np.where(r < 1, 3 * (1 - r**2) ** 2, 0.0)
    (tmp_path / "v.csv").write_text("r,V\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(r.tolist(), v.tolist())))
    code, out = run(tmp_path, {"command": "scatter", "potential": {"kind": "csv", "path": "v.csv"}})
    from twobose.scattering import RadialPotential, scattering_length

    assert code == 0
    assert result(out, "scatter.json")["result"]["a"] == scattering_length(RadialPotential(v, 1.0)).a


def test_exactdiag_one_plus_one_matches_two_body(tmp_path):
    rng = np.random.default_rng(0)
    T1 = rng.standard_normal((2, 2))
    T1 = T1 + T1.T
    T2 = np.diag([0.0, 1.5])
    V12 = rng.standard_normal((2, 2, 2, 2))
    V12 = (V12 + V12.transpose(2, 3, 0, 1)) / 2
    toy = {"T1": T1.tolist(), "T2": T2.tolist(), "V1": np.zeros((2,) * 4).tolist(), "V2": np.zeros((2,) * 4).tolist(),
           "V12": V12.tolist(), "N1": 1, "N2": 1}
    cfg = {"command": "exactdiag", "toy": toy, "numerics": {"hartree_frame": False}}
    code, out = run(tmp_path, cfg)
    direct = np.kron(T1, np.eye(2)) + np.kron(np.eye(2), T2) + 0.5 * V12.reshape(4, 4)
    assert code == 0
    assert result(out, "exactdiag.json")["result"]["E"] == pytest.approx(np.linalg.eigvalsh(direct)[0], abs=1e-12)


def test_convergence_free_toy_zero_column(tmp_path):
    z = np.zeros((2,) * 4).tolist()
    toy = {"T1": [[0.0, 0.0], [0.0, 1.0]], "T2": [[0.5, 0.0], [0.0, 2.0]], "V1": z, "V2": z, "V12": z, "N1": 1, "N2": 1}
    code, out = run(tmp_path, {"command": "convergence", "toy": toy, "numerics": {"Ns": [2, 4, 6]}})
    assert code == 0
    lines = [x for x in (out / "convergence.csv").read_text().splitlines() if not x.startswith("#")]
    col = lines[0].split(",").index("second_order_error")
    assert [float(x.split(",")[col]) for x in lines[1:]] == [0.0, 0.0, 0.0]


def test_check_miscible_model_passes(tmp_path):
    code, out = run(tmp_path, SMALL["check"])
    res = result(out, "check.json")["result"]
    assert code == 0 and res["all_pass"]
    assert {"miscibility", "fourier_positivity", "convexity", "relations_2_2_2_2", "split_M"} <= set(res["checks"])


def test_check_reports_immiscible(tmp_path):
    model = json.loads(json.dumps(MODEL))
    model["interactions"]["V12"]["strength"] = 10.0
    code, out = run(tmp_path, {"command": "check", "model": model, "numerics": {"convexity_samples": 0}})
    assert code == 0
    assert result(out, "check.json")["result"]["checks"]["miscibility"]["status"] == "fail"


# --- provenance, overrides and determinism ---------------------------------------------------------


@pytest.mark.parametrize("command", COMMANDS)
def test_outputs_carry_hash_and_version(tmp_path, command):
    code, out = run(tmp_path, SMALL[command])
    assert code == 0
    for f in out.iterdir():
        if f.suffix == ".json":
            data = json.loads(f.read_text())
            assert data["artifact_version"] == __version__ and len(data["config_hash"]) == 64
        elif f.suffix == ".csv":
            head = f.read_text().splitlines()[:4]
            assert any(x.startswith("# config_hash: ") for x in head)
            assert f"# artifact_version: {__version__}" in head
        else:
            raw = f.read_bytes()
            assert b'"config_hash"' in raw[:4096] and b'"artifact_version"' in raw[:4096]


@pytest.mark.parametrize("command", COMMANDS)
def test_rerun_is_bit_identical(tmp_path, command):
    _, a = run(tmp_path, SMALL[command], out="a")
    _, b = run(tmp_path, SMALL[command], out="b")
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir()) and files
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_seed_flag_changes_hash_and_samples(tmp_path):
    _, a = run(tmp_path, SMALL["definetti"], out="a")
    _, b = run(tmp_path, SMALL["definetti"], "--seed", "11", out="b")
    ra, rb = result(a, "definetti.json"), result(b, "definetti.json")
    assert rb["seed"] == 11 and ra["config_hash"] != rb["config_hash"]
    assert ra["result"]["rows"] != rb["result"]["rows"]


def test_threads_do_not_change_results(tmp_path):
    _, a = run(tmp_path, SMALL["definetti"], "--threads", "1", out="a")
    _, b = run(tmp_path, SMALL["definetti"], "--threads", "3", out="b")
    for name in ("definetti.json", "definetti.csv", "ensemble.bin"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_environment_overrides(tmp_path, monkeypatch):
    cfg_path = write(tmp_path, SMALL["exactdiag"])
    monkeypatch.setenv("TWOBOSE_OUT", str(tmp_path / "env_out"))
    monkeypatch.setenv("TWOBOSE_THREADS", "2")
    assert main(["exactdiag", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "env_out" / "exactdiag.json").exists()
    # the flag wins over the environment
    assert main(["exactdiag", "--config", str(cfg_path), "--out", str(tmp_path / "flag_out")]) == 0
    assert (tmp_path / "flag_out" / "exactdiag.json").exists()
    monkeypatch.setenv("TWOBOSE_THREADS", "zero")
    assert main(["exactdiag", "--config", str(cfg_path)]) == 2


def test_other_environment_ignored(tmp_path, monkeypatch):
    _, a = run(tmp_path, SMALL["definetti"], out="a")
    monkeypatch.setenv("TWOBOSE_SEED", "99")
    monkeypatch.setenv("TWOBOSE_SAMPLES", "100")
    _, b = run(tmp_path, SMALL["definetti"], out="b")
    assert (a / "definetti.json").read_bytes() == (b / "definetti.json").read_bytes()


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, SMALL["scatter"])
    proc = subprocess.run([sys.executable, "-m", "twobose.cli", "scatter", "--config", str(cfg), "--validate-only"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "config ok" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "twobose.cli", "frobnicate", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 2  # argparse usage errors share the config exit code
