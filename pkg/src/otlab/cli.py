"""Command line entry point: ``otlab solve|stability-pot|stability-map|verify|bench``.

Exit codes: 0 success, 1 verification failure, 2 config error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .dual import increments, solve_eps_schedule
from .errors import ConfigError, NumericsError, OTLabError, SolverError
from .stability import default_suite, format_float, perturbation_family, run_map_stability, run_potential_stability
from .verify import run_suites

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
MIN_LEVELS = 4
COMPLETION_THRESHOLD = 0.75


def provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed, "version": __version__}


def provenance_line(cfg: RunConfig) -> str:
    prov = provenance(cfg)
    return f"# config_hash={prov['config_hash']} seed={prov['seed']} version={prov['version']}\n"


def write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def write_json(path: Path, payload: dict) -> None:
    write_text(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def vector_csv(values: np.ndarray, cfg: RunConfig) -> str:
    lines = ["index,value"] + [f"{i},{format_float(v)}" for i, v in enumerate(values)]
    return "\n".join(lines) + "\n" + provenance_line(cfg)


def cmd_solve(cfg: RunConfig, out: Path, args) -> int:
    quad, mu = cfg.quadrature(), cfg.target_measure()
    sols = solve_eps_schedule(quad, mu, cfg.cost, cfg.solver)
    final = sols[-1]
    payload = final.to_dict()
    payload["schedule"] = [{"eps": s.eps, "residual": s.residual, "iters": s.iters, "objective": s.objective} for s in sols]
    payload["increments"] = [float(x) for x in increments(sols)]
    payload["provenance"] = provenance(cfg)
    write_json(out / "solution.json", payload)
    write_text(out / "psi.csv", vector_csv(final.psi, cfg))
    write_text(out / "phi.csv", vector_csv(final.phi, cfg))
    print(f"solved n={mu.n} m={quad.m} eps={final.eps:.3e} residual={final.residual:.3e}")
    return EXIT_OK


def build_family(cfg: RunConfig):
    fam = cfg.family
    if not fam["kinds"] or fam["levels"] < MIN_LEVELS:
        raise ConfigError(f"perturbation family needs at least one kind and {MIN_LEVELS} levels")
    params = cfg.source.get("params") or {}
    lo, hi = params.get("lo"), params.get("hi")
    base = cfg.target_measure()
    if sorted(fam["kinds"]) == sorted(("location", "mass", "jitter")):
        return default_suite(base, fam["levels"], fam["delta"], cfg.seed, lo, hi)
    return [rec for kind in fam["kinds"]
            for rec in perturbation_family(base, kind, fam["levels"], fam["delta"], cfg.seed, lo, hi)]


def cmd_stability(cfg: RunConfig, out: Path, args, kind: str) -> int:
    family = build_family(cfg)
    runner = run_potential_stability if kind == "pot" else run_map_stability
    report = runner(cfg.quadrature(), family, cfg.cost, cfg.solver, oracle=args.oracle)
    write_text(out / "report.csv", report.to_csv() + provenance_line(cfg))
    payload = report.to_dict()
    payload["provenance"] = provenance(cfg)
    write_json(out / "report.json", payload)
    frac = report.completed_fraction
    print(f"stability-{kind}: {len(report.records)} records, {frac:.0%} completed, "
          f"theta_theory={report.theta_theory:.6g} theta_fit={report.theta_fit:.6g} "
          f"bound_violations={report.bound_violations}")
    return EXIT_OK if frac >= COMPLETION_THRESHOLD else EXIT_SOLVER


def cmd_verify(cfg: RunConfig, out: Path, args) -> int:
    names = [s for item in (args.suite or []) for s in item.split(",") if s] or cfg.verify.get("suites")
    results = run_suites(names, cfg.seed, cfg.verify.get("gamma_scale", 1.0), cfg.verify.get("trials", 100_000))
    for r in results:
        print(r.line())
    payload = {"suites": [{"name": r.name, "passed": r.passed, "max_violation": r.max_violation, "detail": r.detail}
                          for r in results], "provenance": provenance(cfg)}
    write_json(out / "verify.json", payload)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failing suites: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_bench(cfg: RunConfig, out: Path, args) -> int:
    quad, mu = cfg.quadrature(), cfg.target_measure()
    t0 = time.perf_counter()
    sols = solve_eps_schedule(quad, mu, cfg.cost, cfg.solver)
    elapsed = time.perf_counter() - t0
    payload = {
        "n": mu.n, "m": quad.m, "method": cfg.solver.method, "seconds": elapsed,
        "levels": [{"eps": s.eps, "iters": s.iters, "residual": s.residual} for s in sols],
        "provenance": provenance(cfg),
    }
    write_json(out / "bench.json", payload)
    print(f"bench: {len(sols)} levels, {sum(s.iters for s in sols)} iterations, {elapsed:.3f}s")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "stability-pot": lambda c, o, a: cmd_stability(c, o, a, "pot"),
    "stability-map": lambda c, o, a: cmd_stability(c, o, a, "map"),
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otlab", description="Entropic semi-discrete OT stability lab")
    parser.add_argument("--version", action="version", version=f"otlab {__version__}")
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--oracle", action="store_true", help="use exact LP potentials in stability records")
    parser.add_argument("--suite", action="append", help="verify suite(s) to run, repeatable or comma separated")
    parser.add_argument("--out", help="output directory (overrides config output_dir)")
    parser.add_argument("--seed", type=int, help="seed (overrides config seed)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, output_dir=args.out)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except (SolverError, NumericsError) as exc:
        print(f"otlab: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OTLabError, OSError) as exc:
        print(f"otlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
