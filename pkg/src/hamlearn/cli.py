"""Command-line entry point: learn, structure, coeff, sweep, oracle-audit."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, build_model, hierarchy_config, load_config
from .errors import ConfigError, FormatError, HamlearnError
from .hierarchy import LearnReport, heisenberg_fit, hierarchical_learn, ledger_breakdown
from .pauli import PauliString
from .rfe import ReshapeConfig, robust_frequency_estimate
from .sim import EvolutionOracle, SpamModel, TimeLedger
from .structure import StructureConfig, structure_learn_two_copy
from .twirl import structure_learn_single_copy

log = logging.getLogger("hamlearn")

EXIT_OK, EXIT_OTHER, EXIT_USAGE, EXIT_IO, EXIT_SCHEMA, EXIT_CONTRACT = 0, 1, 2, 3, 4, 5
THREADS_ENV = "HAMLEARN_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    # repr-based float output is full precision and locale independent
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def dump_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def coefficient_rows(report: LearnReport):
    rows = []
    for rec in report.per_level:
        for e in rec.estimates:
            rows.append((e.pauli.label, float(e.mu_hat * report.scale), float(e.stderr * report.scale),
                         rec.level, int(e.accepted)))
    return rows


# ------------------------------------------------------------------ commands

def cmd_learn(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    hcfg = hierarchy_config(cfg, model, worker_count())
    report = hierarchical_learn(model.oracle, hcfg, scale=model.scale)
    atomic_write(out / f"{cfg.prefix}_report.json", dump_json(report.to_dict()))
    atomic_write(out / f"{cfg.prefix}_coefficients.csv",
                 dump_csv(("pauli", "coeff", "stderr", "level", "accepted"), coefficient_rows(report)))
    bd = ledger_breakdown(report)
    log.info("learned %d terms, total evolution time %r", len(report.learned), bd["total"])
    return EXIT_OK


def cmd_structure(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    hcfg = hierarchy_config(cfg, model, worker_count())
    mu_m, T, _ = hcfg.level_settings(0)
    scfg = StructureConfig(mu_m, hcfg.M_est, hcfg.shots_structure, hcfg.C)
    rng = np.random.default_rng(cfg.seed)
    hat = model.hamiltonian.scaled(0.0)
    with model.oracle.in_phase("structure/0"):
        if hcfg.structure_route == "two-copy":
            support = structure_learn_two_copy(model.oracle, hat, scfg, hcfg.spam, rng, tau=T)
        else:
            support = structure_learn_single_copy(model.oracle, hat, scfg, hcfg.spam, rng, delta=hcfg.delta, tau=T)
    doc = {"route": hcfg.structure_route, "support": support.to_dict(),
           "ledger": model.oracle.ledger.to_dict()}
    atomic_write(out / f"{cfg.prefix}_support.json", dump_json(doc))
    return EXIT_OK


def cmd_coeff(cfg: ExperimentConfig, out: Path) -> int:
    if not cfg.coeff:
        raise ConfigError("config has no 'coeff' section")
    model = build_model(cfg)
    hcfg = hierarchy_config(cfg, model, worker_count())
    P = PauliString.from_label(cfg.coeff["pauli"])
    if P.n != model.oracle.n:
        raise ConfigError(f"coeff.pauli acts on {P.n} qubits, model has {model.oracle.n}")
    eps = cfg.coeff.get("eps", hcfg.eps * model.scale) / model.scale
    rng = np.random.default_rng(cfg.seed)
    with model.oracle.in_phase("coeff/0"):
        est = robust_frequency_estimate(model.oracle, P, eps, ReshapeConfig(hcfg.M_est), hcfg.spam, rng,
                                        shots_budget=hcfg.shots_coeff)
    doc = est.to_dict()
    doc["mu_hat_physical"] = est.mu_hat * model.scale
    doc["ledger"] = model.oracle.ledger.to_dict()
    atomic_write(out / f"{cfg.prefix}_coeff.json", dump_json(doc))
    return EXIT_OK


def run_sweep(cfg: ExperimentConfig) -> tuple[list[tuple[float, float]], float | None]:
    sw = cfg.sweep
    if not sw:
        raise ConfigError("config has no 'sweep' section")
    mode = sw.get("mode", "rfe")
    points = []
    rng = np.random.default_rng(cfg.seed)
    for eps, stream in zip(sw["eps"], rng.spawn(len(sw["eps"]))):
        if mode == "synthetic":
            points.append((float(eps), sw.get("constant", 1.0) / eps))
            continue
        model = build_model(cfg)
        if mode == "rfe":
            label = sw.get("pauli") or model.hamiltonian.paulis()[0].label
            P = PauliString.from_label(label)
            robust_frequency_estimate(model.oracle, P, eps / model.scale, ReshapeConfig(max(1, len(model.hamiltonian))),
                                      SpamModel(cfg.learner.get("spam", 0.0)), stream,
                                      shots_budget=sw.get("shots_budget"))
        else:
            sub = ExperimentConfig(cfg.builder, cfg.params, {**cfg.learner, "eps": eps}, seed=cfg.seed)
            hierarchical_learn(model.oracle, hierarchy_config(sub, model, worker_count()), stream)
        points.append((float(eps), model.oracle.ledger.total_evolution_time / model.scale))
    slope = heisenberg_fit(points) if len(points) >= 4 else None
    return points, slope


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> int:
    points, slope = run_sweep(cfg)
    atomic_write(out / f"{cfg.prefix}_sweep.csv", dump_csv(("eps", "total_time"), points))
    atomic_write(out / f"{cfg.prefix}_sweep_fit.json", dump_json({"slope": slope, "points": len(points)}))
    print(f"slope {slope!r}" if slope is not None else "slope n/a (fewer than 4 points)")
    return EXIT_OK


def cmd_audit(report_path: Path) -> int:
    doc = json.loads(report_path.read_text(encoding="utf-8"))
    ledger = doc["ledger"]
    replay = TimeLedger.replay(ledger["calls"])
    rebuilt = TimeLedger.from_dict(ledger)
    ok = float(replay) == ledger["total_evolution_time"] and replay == rebuilt.exact_total
    if "levels" in doc:
        bd = ledger_breakdown(LearnReport.from_dict(doc))
        ok = ok and bd["exact_total"] == replay
    print(f"replayed {len(ledger['calls'])} call records: total {float(replay)!r} "
          f"reported {ledger['total_evolution_time']!r} -> {'match' if ok else 'MISMATCH'}")
    return EXIT_OK if ok else EXIT_CONTRACT


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hamlearn", description="Learn sparse Hamiltonians from forward evolution.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("learn", "full level-by-level learning"), ("structure", "one structure-learning pass"),
                        ("coeff", "one coefficient estimate"), ("sweep", "time-versus-accuracy sweep")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--route", choices=["two-copy", "single-copy"])
        p.add_argument("--spam", type=float, metavar="EPS")
    p = sub.add_parser("oracle-audit", help="replay the oracle call log of a report")
    p.add_argument("--report", required=True)
    return ap


COMMANDS = {"learn": cmd_learn, "structure": cmd_structure, "coeff": cmd_coeff, "sweep": cmd_sweep}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "oracle-audit":
            return cmd_audit(Path(args.report))
        cfg = load_config(args.config)
        if args.spam is not None and not 0 <= args.spam <= 1:
            raise ConfigError("--spam must lie in [0, 1]")
        cfg = cfg.with_overrides(args.seed, args.out_dir, args.route, args.spam)
        return COMMANDS[args.command](cfg, Path(cfg.out_dir))
    except OSError as exc:
        print(f"error: I/O failure on {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, FormatError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except HamlearnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except KeyError as exc:
        print(f"error: malformed input, missing key {exc}", file=sys.stderr)
        return EXIT_OTHER
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
