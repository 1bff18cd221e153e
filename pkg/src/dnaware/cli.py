"""Command line entry point: ``simulate``, ``gen-dn`` and ``validate``."""

from __future__ import annotations

import argparse
import json
import sys

from .agent import PRESETS, AgentConfig
from .dialogue import ProtocolError
from .network import load, save, to_dict, validate
from .simulation import ExperimentConfig, emit_metrics, generate_random_dn, resolve_dn, run_once


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnaware", description="Learning decision networks with a simulated expert.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run learning episodes and write per-step metrics as CSV")
    s.add_argument("--dn", default="barley", help="network file, a bundled name (barley, dn_best, dn_worst) or 'random'")
    s.add_argument("--agent", default="default", choices=PRESETS)
    s.add_argument("--expert-beta", type=float, default=0.9)
    s.add_argument("--expert-gamma", type=int, default=50)
    s.add_argument("--steps", type=int, default=3000)
    s.add_argument("--runs", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pe-period", type=int, default=50)
    s.add_argument("--su-period", type=int, default=100)
    s.add_argument("--max-seconds", type=float, default=None, help="per-run wall-clock budget; the run is truncated past it")
    s.add_argument("--check", action="store_true", help="assert validity of every learned network against the evidence")
    s.add_argument("--no-timing", action="store_true", help="leave the ms column empty so output is reproducible")
    s.add_argument("--out", default="-", help="CSV path, '-' for stdout")

    g = sub.add_parser("gen-dn", help="write a random decision network as JSON")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", default="-")

    v = sub.add_parser("validate", help="check a network file")
    v.add_argument("file")
    return p


def _simulate(args) -> int:
    exp = ExperimentConfig(dn=args.dn, steps=args.steps, runs=args.runs, seed=args.seed, beta=args.expert_beta,
                           gamma=args.expert_gamma, pe_period=args.pe_period, su_period=args.su_period,
                           max_seconds=args.max_seconds, check_validity=args.check, timing=not args.no_timing)
    agent = AgentConfig.preset(args.agent)
    true = resolve_dn(exp.dn, exp.seed)
    problems = validate(true)
    if problems:
        raise ValueError("invalid network: " + "; ".join(problems))
    rows = []
    bad = 0
    for run in range(exp.runs):
        res = run_once(true, agent, exp, run)
        rows.extend(res.rows)
        if res.truncated:
            print(f"run {run}: truncated by the time budget", file=sys.stderr)
        for msg in res.violations:
            print(f"run {run}: {msg}", file=sys.stderr)
        bad += len(res.violations)
    if args.out == "-":
        emit_metrics(rows, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            emit_metrics(rows, fh)
    return 3 if bad else 0


def _gen(args) -> int:
    dn = generate_random_dn(args.seed)
    if args.out == "-":
        json.dump(to_dict(dn), sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        save(dn, args.out)
    return 0


def _validate(args) -> int:
    problems = validate(load(args.file))
    for msg in problems:
        print(msg)
    if not problems:
        print("valid")
    return 1 if problems else 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"simulate": _simulate, "gen-dn": _gen, "validate": _validate}[args.command]
    try:
        return handler(args)
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
