"""Command-line front end: ``twobose <command> --config run.json``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  Every
file written carries the config hash and the package version; reruns with
the same config and seed are byte-identical.  Only the output directory
(TWOBOSE_OUT) and the thread count (TWOBOSE_THREADS) can be overridden
from the environment.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__

COMMANDS = ("scatter", "minimize", "bogoliubov", "exactdiag", "convergence", "definetti", "check")
ENV_OUT = "TWOBOSE_OUT"
ENV_THREADS = "TWOBOSE_THREADS"
DEFAULT_OUT = "twobose-out"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    """Anything wrong with the configuration or its referenced files."""


def load_schema() -> dict:
    return json.loads(resources.files("twobose").joinpath("config.schema.json").read_text())


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}")


def _referenced_files(cfg, base: Path):
    """(json pointer, path) of every file the config points to."""
    out = []

    def walk(node, ptr):
        if isinstance(node, dict):
            if "path" in node and isinstance(node["path"], str):
                p = Path(node["path"])
                out.append((ptr, p if p.is_absolute() else base / p))
            for k in sorted(node):
                walk(node[k], f"{ptr}/{k}")
        elif isinstance(node, list):
            for i, x in enumerate(node):
                walk(x, f"{ptr}/{i}")

    walk(cfg, "")
    return out


def config_hash(cfg: dict, base: Path) -> str:
    """sha256 over the canonical config (minus output and threads) and referenced file contents."""
    core = {k: v for k, v in cfg.items() if k not in ("output", "threads")}
    h = hashlib.sha256(json.dumps(core, sort_keys=True, separators=(",", ":")).encode())
    for ptr, path in _referenced_files(core, base):
        try:
            h.update(ptr.encode() + b"\0" + hashlib.sha256(path.read_bytes()).digest())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return h.hexdigest()


# -- JSON / CSV emission ------------------------------------------------------------------------


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return {"real": _plain(float(x.real)), "imag": _plain(float(x.imag))}
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _matrix(a) -> dict | list:
    a = np.asarray(a)
    if np.iscomplexobj(a) and np.any(a.imag):
        return {"real": a.real.tolist(), "imag": a.imag.tolist()}
    return np.real(a).tolist()


class Run:
    """Effective settings of one invocation plus the output helpers."""

    def __init__(self, cfg: dict, base: Path, out: Path, seed: int, threads: int):
        self.cfg = cfg
        self.base = base
        self.out = out
        self.seed = seed
        self.threads = threads
        self.hash = config_hash(cfg, base)
        self.numerics = cfg.get("numerics", {})
        self.binary = cfg.get("output", {}).get("binary", True)

    @property
    def meta(self) -> dict:
        return {"config_hash": self.hash, "artifact_version": __version__,
                "command": self.cfg["command"], "seed": self.seed}

    def write_json(self, name: str, result: dict) -> Path:
        payload = dict(self.meta)
        payload["result"] = _plain(result)
        path = self.out / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")
        return path

    def write_csv(self, name: str, columns, rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            for k, v in sorted(self.meta.items()):
                fh.write(f"# {k}: {v}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        return path


# -- model construction -------------------------------------------------------------------------


def _potential(cfg: dict, base: Path):
    from .meanfield.model import potential_from_config

    try:
        return potential_from_config(cfg, base)
    except FileNotFoundError as exc:
        raise ConfigError(f"potential file not found: {exc.filename}") from None


def _model(cfg: dict, base: Path):
    from .meanfield import ModelSpec

    for name in ("V1", "V2", "V12"):
        p = cfg.get("interactions", {}).get(name)
        if p and p.get("kind") == "csv":
            path = Path(p["path"])
            if not (path if path.is_absolute() else base / path).exists():
                raise ConfigError(f"potential file not found: {path}")
    return ModelSpec.from_config(cfg, base)


def _toy(cfg: dict, base: Path):
    from .fock import ToyModel

    if "path" in cfg:
        path = Path(cfg["path"])
        path = path if path.is_absolute() else base / path
        if not path.exists():
            raise ConfigError(f"toy model file not found: {path}")
        try:
            return ToyModel.from_json(path)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    return ToyModel.from_dict(cfg)


def prepare(cfg: dict, base: Path) -> dict:
    """Build every object the command needs; raises on bad configuration only."""
    built = {}
    if "potential" in cfg:
        built["potential"] = _potential(cfg["potential"], base)
    if "model" in cfg:
        built["model"] = _model(cfg["model"], base)
    if "toy" in cfg:
        built["toy"] = _toy(cfg["toy"], base)
    n = cfg.get("numerics", {})
    if cfg["command"] == "convergence":
        toy = built["toy"]
        c1 = n.get("c1", toy.ratios[0])
        for N in n.get("Ns", [toy.N]):
            if abs(round(c1 * N) - c1 * N) > 1e-9 or round(c1 * N) in (0, N):
                raise ConfigError(f"numerics/c1 = {c1} does not split N = {N} into two positive integers")
    if cfg["command"] == "definetti" and "toy" in cfg:
        toy = built["toy"]
        if toy.d1 != toy.d2:
            raise ConfigError("definetti with a toy model needs d1 = d2")
    return built


# -- commands -----------------------------------------------------------------------------------


def cmd_scatter(run: Run, built: dict) -> None:
    from .scattering import born_approximation, neumann_ground, scattering_length

    V = built["potential"]
    res = scattering_length(V, tol=run.numerics.get("tol", 1e-6))
    out = {"a": res.a, "residual": res.residual, "born": born_approximation(V), "lambda_N": None}
    lam = run.numerics.get("born_lambda")
    if lam is not None:
        small = scattering_length(V * lam, tol=run.numerics.get("tol", 1e-6)).a
        out["born_ratio"] = small / (lam * out["born"]) if out["born"] else None
    neu = run.numerics.get("neumann")
    if neu is not None:
        rows = []
        for N in neu["N"]:
            ev = neumann_ground(V, N, neu["ell"], a=res.a).eigenvalue
            law = ev * N * neu["ell"] ** 3 / (3 * res.a) if res.a else None
            rows.append({"N": N, "ell": neu["ell"], "lambda_N": ev, "law_ratio": law})
        out["lambda_N"] = [r["lambda_N"] for r in rows]
        out["neumann"] = rows
        run.write_csv("scatter_neumann.csv", ["N", "ell", "lambda_N", "law_ratio"],
                      [[r["N"], r["ell"], r["lambda_N"], r["law_ratio"] if r["law_ratio"] is not None else ""]
                       for r in rows])
    run.write_json("scatter.json", out)
    run.write_csv("scatter_profile.csv", ["r", "f"], zip(res.radii, res.profile))


def _minimizer(run: Run, spec):
    from .meanfield import HartreeMinimizer

    n = run.numerics
    est = HartreeMinimizer(tol=n.get("tol", 1e-8), max_iter=n.get("max_iter", 100_000),
                           method=n.get("method", "cg"), seed=run.seed, n_starts=n.get("n_starts", 1),
                           workers=run.threads)
    return est.fit(spec)


def cmd_minimize(run: Run, built: dict) -> None:
    from .meanfield import MinimizationError, write_report

    try:
        est = _minimizer(run, built["model"])
    except MinimizationError as exc:
        if getattr(exc, "report", None) is not None:
            write_report(exc.report, run.out, "minimize", meta={**run.meta, "converged": False})
        raise
    meta = {**run.meta, "start_spread": est.start_spread_, "n_starts": len(est.reports_)}
    write_report(est.report_, run.out, "minimize", meta=meta)
    # the trace CSV from write_report has no provenance lines; prepend them
    trace = run.out / "minimize_trace.csv"
    body = trace.read_text()
    trace.write_text("".join(f"# {k}: {v}\n" for k, v in sorted(run.meta.items())) + body)


def cmd_bogoliubov(run: Run, built: dict) -> None:
    from .bogoliubov import BogoliubovModel, save_tensor

    spec = built["model"]
    est = _minimizer(run, spec)
    n = run.numerics
    bog = BogoliubovModel(M1=n.get("M1", 4), M2=n.get("M2", 4)).fit(spec, est.orbitals_)
    out = bog.summary()
    out.update(minimizer_energy=est.energy_, minimizer_residual=est.residual_, blocks=bog.blocks_.to_dict())
    run.write_json("bogoliubov.json", out)
    run.write_csv("bogoliubov_xi.csv", ["index", "xi"], enumerate(bog.xi_))
    if run.binary:
        save_tensor(bog.tensor_, run.out / "tensor.bin", meta=run.meta)


def _framed(run: Run, toy):
    from .fock import hartree_frame

    if run.numerics.get("hartree_frame", True) and toy.N1 > 0 and toy.N2 > 0:
        h, framed = hartree_frame(toy)
        return framed, h
    return toy, None


def cmd_exactdiag(run: Run, built: dict) -> None:
    from .fock import build_hamiltonian, condensation_fraction, ground_state, reduced_density, save_state

    toy, h = _framed(run, built["toy"])
    H = build_hamiltonian(toy, cap=run.numerics.get("cap", 200_000))
    E, psi = ground_state(H, seed=run.seed)
    frac = condensation_fraction(psi)
    dens = {}
    for k, l in run.numerics.get("densities", [[1, 0], [0, 1]]):
        dens[f"{k},{l}"] = _matrix(reduced_density(psi, k, l))
    out = {"E": E, "E_per_N": E / toy.N, "dim": H.basis.dim, "N1": toy.N1, "N2": toy.N2,
           "lambda1": frac.lambda1, "lambda2": frac.lambda2, "densities": dens,
           "hartree_frame": h is not None, "e_H": h.energy if h else None}
    run.write_json("exactdiag.json", out)
    if run.binary:
        save_state(psi, run.out / "state.bin", meta=run.meta)


def cmd_convergence(run: Run, built: dict) -> None:
    from .fock import bogoliubov_convergence_study
    from .fock.convergence import COLUMNS

    toy = built["toy"]
    n = run.numerics
    tab = bogoliubov_convergence_study(toy, n.get("Ns", [toy.N]), c1=n.get("c1"),
                                       cap=n.get("cap", 200_000), seed=run.seed)
    run.write_csv("convergence.csv", list(COLUMNS), [[r[c] for c in COLUMNS] for r in tab.rows])
    out = tab.to_dict()
    out["trends"] = {c: tab.decreasing(c) for c in ("leading_error", "second_order_error", "depletion_1",
                                                     "depletion_2")}
    run.write_json("convergence.json", out)


def cmd_definetti(run: Run, built: dict) -> None:
    from .definetti import definetti_error, husimi_sample, save_ensemble, schur_check
    from .fock import FockBasis, ManyBodyVector, build_hamiltonian, ground_state

    n = run.numerics
    Ns = n.get("Ns", [4, 8, 16])
    k, l = n.get("k", 1), n.get("l", 0)
    count = n.get("samples", 100_000)
    toy = built.get("toy")
    rows, ens = [], None
    for i, N in enumerate(Ns):
        if toy is None:
            d = n.get("d", 2)
            psi = ManyBodyVector.condensate(FockBasis(d, d, N, N))
        else:
            framed, _ = _framed(run, toy.with_particles(N, N))
            _, psi = ground_state(build_hamiltonian(framed, cap=n.get("cap", 200_000)), seed=run.seed)
        b = psi.basis
        ens = husimi_sample(psi, b.d1, b.d2, N, N, count, seed=run.seed + i, threads=run.threads)
        rows.append([N, definetti_error(psi, k, l, ens), ens.mass, ens.standard_error, ens.effective_samples])
    slope = None
    if len(rows) > 1:
        x = np.log(1.0 / np.array([r[0] for r in rows], dtype=float))
        slope = float(np.polyfit(x, np.log([r[1] for r in rows]), 1)[0])
    sc = n.get("schur", {})
    sd, sN, ss = sc.get("d", 2), sc.get("N", 2), sc.get("samples", 10**6)
    schur = schur_check(sd, sN, ss, seed=run.seed, threads=run.threads)
    cols = ["N", "error", "mass", "standard_error", "effective_samples"]
    run.write_csv("definetti.csv", cols, rows)
    run.write_json("definetti.json", {"rows": [dict(zip(cols, r)) for r in rows], "slope": slope, "k": k, "l": l,
                                      "family": "condensate" if toy is None else "toy ground states",
                                      "schur": {"d": sd, "N": sN, "samples": ss, "deviation": schur}})
    if run.binary and ens is not None:
        save_ensemble(ens, run.out / "ensemble.bin", meta=run.meta)


def cmd_check(run: Run, built: dict) -> None:
    checks = {}

    def record(name, ok, **values):
        checks[name] = {"status": "pass" if ok else "fail", **values}

    if "model" in built:
        from .meanfield import convexity_gap, miscibility_gp, miscibility_mf, random_density

        spec = built["model"]
        mis = miscibility_gp(*spec.scattering_lengths) if spec.regime == "GP" else miscibility_mf(spec)
        record("miscibility", bool(mis), worst_margin=mis.worst_margin, violations=mis.violations[:5])
        if spec.regime == "MF":
            record("fourier_positivity", spec.check_fourier_positivity())
        record("confining_traps", spec.check_confining())
        count = run.numerics.get("convexity_samples", 20)
        if count:
            rng = np.random.default_rng(run.seed)
            gaps = [convexity_gap(*(random_density(spec.grid, rng) for _ in range(4)), spec) for _ in range(count)]
            record("convexity", min(gaps) >= -1e-10, min_gap=min(gaps), samples=count)
    if "toy" in built:
        from .fock import split_M, verify_relations

        for dims in run.numerics.get("relations", [[2, 2, 2, 2], [2, 3, 3, 2]]):
            rep = verify_relations(*dims)
            record(f"relations_{'_'.join(map(str, dims))}", rep.max_deviation < 1e-10,
                   max_deviation=rep.max_deviation)
        framed, _ = _framed(run, built["toy"])
        rep = split_M(framed)
        worst = max(x for x in (rep.residual, rep.isolation_0, rep.cancellation, rep.isolation_2) if x is not None)
        record("split_M", worst < 1e-10, residual=rep.residual, isolation_0=rep.isolation_0,
               cancellation=rep.cancellation, isolation_2=rep.isolation_2)
    run.write_json("check.json", {"checks": checks, "all_pass": all(c["status"] == "pass" for c in checks.values())})


HANDLERS = {"scatter": cmd_scatter, "minimize": cmd_minimize, "bogoliubov": cmd_bogoliubov,
            "exactdiag": cmd_exactdiag, "convergence": cmd_convergence, "definetti": cmd_definetti,
            "check": cmd_check}


# -- entry point --------------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twobose", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"twobose {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, help=f"output directory (env {ENV_OUT})")
    p.add_argument("--seed", type=int, help="RNG seed, overrides the config")
    p.add_argument("--threads", type=int, help=f"worker threads (env {ENV_THREADS})")
    p.add_argument("--validate-only", action="store_true", help="check the config and exit")
    return p


def _env_threads() -> int | None:
    raw = os.environ.get(ENV_THREADS)
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{ENV_THREADS} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{ENV_THREADS} must be a positive integer, got {raw!r}")
    return value


def _load(args) -> tuple[Run, dict]:
    try:
        cfg = json.loads(args.config.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    validate_config(cfg)
    if cfg["command"] != args.command:
        raise ConfigError(f"config is for {cfg['command']!r}, not {args.command!r}")
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    threads = args.threads or _env_threads() or cfg.get("threads", 1)
    if threads < 1:
        raise ConfigError("--threads must be positive")
    out = args.out or os.environ.get(ENV_OUT) or cfg.get("output", {}).get("directory", DEFAULT_OUT)
    base = args.config.resolve().parent
    out = Path(out)
    run = Run(cfg, base, out if out.is_absolute() else Path.cwd() / out, cfg["seed"], threads)
    built = prepare(cfg, base)
    return run, built


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        run, built = _load(args)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"twobose: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.validate_only:
        print(f"config ok ({args.command}, hash {run.hash})")
        return EXIT_OK
    run.out.mkdir(parents=True, exist_ok=True)
    try:
        with threadpool_limits(run.threads):
            HANDLERS[args.command](run, built)
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"twobose: numerical failure in {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"twobose: config error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.command}: wrote {run.out} (hash {run.hash[:12]})")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
