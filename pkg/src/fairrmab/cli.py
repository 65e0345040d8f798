"""Command-line front end: ``gen``, ``run`` and ``verify``.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import load_instance, save_instance
from .datasets import CpapSpec, SyntheticSpec, generate_cpap, generate_synthetic
from .sim import ExperimentConfig, parse_policy, run_experiment
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULT_POLICIES = "softfair,oracle,myopic,fairmyopic,random,none"


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _c_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("c values must be positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairrmab", description="Fair restless bandit simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate an instance file")
    gen.add_argument("--kind", choices=("synthetic", "cpap"), required=True)
    gen.add_argument("--n", type=_positive_int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--k", type=_positive_int, default=1)
    gen.add_argument("--T", type=_positive_int, default=None, help="default 50 (synthetic) or 80 (cpap)")
    gen.add_argument("--gamma", type=float, default=1.0)
    gen.add_argument("--c", type=float, default=1.0)
    gen.add_argument("--adherent-fraction", type=float, default=0.5, help="cpap only")
    gen.add_argument("--noise", type=float, default=0.02, help="cpap only")

    run = sub.add_parser("run", help="run a multi-policy experiment")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--instance", help="instance JSON file")
    src.add_argument("--generator", choices=("synthetic", "cpap"), help="draw a fresh instance per simulation")
    run.add_argument("--n", type=_positive_int, help="number of arms for --generator")
    run.add_argument("--policies", default=None, help=f"comma list, default {DEFAULT_POLICIES}; "
                     "softfair:<c> and fairmyopic:<c> pin c per policy")
    run.add_argument("--k", type=_positive_int)
    run.add_argument("--T", type=_positive_int)
    run.add_argument("--gamma", type=float)
    run.add_argument("--c", type=_c_list, help="multiplier, or a comma list for a sweep (one report per value)")
    run.add_argument("--episodes", type=_positive_int)
    run.add_argument("--sims", type=_positive_int)
    run.add_argument("--seed", type=int)
    run.add_argument("--inclusion-mode", choices=("exact", "monte_carlo", "quadrature"))
    run.add_argument("--out-dir")
    run.add_argument("--config", help="JSON config; explicit flags override it")
    run.add_argument("--threads", type=int, help="worker processes (default: RMAB_THREADS or CPU count)")

    ver = sub.add_parser("verify", help="run a property suite")
    ver.add_argument("--suite", choices=SUITES + ("all",), required=True)
    ver.add_argument("--trials", type=_positive_int)
    ver.add_argument("--seed", type=int, default=0)
    return parser


def cmd_gen(args) -> int:
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    if args.k >= args.n:
        raise UsageError(f"--k must be smaller than --n (k={args.k}, n={args.n})")
    common = dict(n=args.n, seed=args.seed, k=args.k, gamma=args.gamma, c=args.c)
    if args.T is not None:
        common["T"] = args.T
    try:
        if args.kind == "synthetic":
            inst = generate_synthetic(SyntheticSpec(**common))
        else:
            inst = generate_cpap(CpapSpec(adherent_fraction=args.adherent_fraction, noise=args.noise, **common))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_instance(inst, args.out)
    print(f"wrote {args.out} (n={inst.n}, k={inst.k}, T={inst.T})")
    return EXIT_OK


def _merged_run_settings(args) -> dict:
    settings: dict = {}
    if args.config:
        try:
            settings = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if "simulations" in settings and "sims" not in settings:
        settings["sims"] = settings.pop("simulations")
    if args.instance:
        settings["source"] = {"path": args.instance}
    elif args.generator:
        settings["source"] = {"kind": args.generator}
    if args.n is not None:
        settings.setdefault("source", {})
        if "path" in settings["source"]:
            raise UsageError("--n applies only to --generator")
        settings["source"]["n"] = args.n
    for key in ("k", "T", "gamma", "c", "episodes", "sims", "seed", "inclusion_mode", "threads", "policies", "out_dir"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    return settings


def _summary_lines(report) -> list[str]:
    lines = []
    for label, m in report.summary().items():
        parts = [f"{label:<18}", f"reward {m['reward_mean']:.6g} +- {m['reward_std']:.6g}"]
        if m["benefit_mean"] == m["benefit_mean"]:  # not NaN
            parts.append(f"benefit {m['benefit_mean']:.6g}% +- {m['benefit_std']:.6g}")
        if m["entropy_mean"] == m["entropy_mean"]:
            parts.append(f"entropy {m['entropy_mean']:.6g}")
        parts.append(f"never-pulled {m['never_pulled_fraction']:.6g}")
        lines.append("  ".join(parts))
    return lines


def cmd_run(args) -> int:
    s = _merged_run_settings(args)
    source = s.get("source")
    if not source:
        raise UsageError("give --instance, --generator (with --n) or a config with a source")
    if "kind" in source and "n" not in source:
        raise UsageError("--generator needs --n")
    policies = s.get("policies", DEFAULT_POLICIES)
    if isinstance(policies, str):
        policies = [p for p in policies.split(",") if p.strip()]
    try:
        policies = [parse_policy(p) for p in policies]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    c_values = s.get("c")
    if c_values is not None and not isinstance(c_values, list):
        c_values = [float(c_values)]
    if "path" in source:
        try:
            inst = load_instance(source["path"])
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load instance: {exc}") from None
        n = inst.n
    else:
        n = int(source["n"])
    k = s.get("k")
    if k is not None and k >= n:
        raise UsageError(f"k must be smaller than n (k={k}, n={n})")

    out_dir = Path(s.get("out_dir", "out"))
    sweep = c_values if c_values else [None]
    for c in sweep:
        try:
            config = ExperimentConfig(
                source=dict(source), policies=list(policies), k=k, T=s.get("T"), gamma=s.get("gamma"), c=c,
                episodes=int(s.get("episodes", 1)), simulations=int(s.get("sims", 50)), seed=int(s.get("seed", 0)),
                inclusion_mode=s.get("inclusion_mode"), threads=s.get("threads") or 0,
            )
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None
        report = run_experiment(config)
        stem = "report" if len(sweep) == 1 else f"report_c{c:g}"
        paths = report.write(out_dir, stem)
        if c is not None:
            print(f"c = {c:g}")
        for line in _summary_lines(report):
            print(line)
        print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def cmd_verify(args) -> int:
    names = SUITES if args.suite == "all" else (args.suite,)
    ok = True
    for name in names:
        result = run_suite(name, args.trials, args.seed)
        print(result.line())
        for failure in result.failures[:10]:
            print(f"  {failure}")
        if len(result.failures) > 10:
            print(f"  ... {len(result.failures) - 10} more")
        if result.details:
            print("  details: " + json.dumps(result.details, sort_keys=True))
        ok &= result.passed
    return EXIT_OK if ok else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": cmd_gen, "run": cmd_run, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
