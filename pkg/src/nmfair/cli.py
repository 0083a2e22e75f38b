"""Command-line entry point.

Exit codes: 0 pass/success, 1 fail with counterexample, 2 inconclusive,
3 usage or data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .envs import DoughnutSpec, build_doughnut, unbounded_memory_witness
from .fairspec import SpecError, fairness_from_json, machine_to_json
from .io import (FORMAT_VERSION, FormatError, is_product, load_model, model_to_json, policy_from_json,
                 product_from_json, product_policy_to_json, product_to_json, read_json, read_traces,
                 write_json, write_traces)
from .learn import LearnerConfig, q_learning, value_iteration
from .model import rollout, spawn_generators, validate_mdp
from .product import build_product
from .verify import (Anytime, Bounded, ExactPeriodic, Limit, Periodic, Verdict, check_trace, trace_labels,
                     verify_policy_exhaustive, verify_policy_monte_carlo)

EXIT_USAGE = 3
log = logging.getLogger("nmfair")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(args, inputs: dict[str, str | None]) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "command") and k not in inputs}
    return {
        "subcommand": args.command,
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in inputs.items() if v},
        "config": config,
        "seed": getattr(args, "seed", None),
        "format_version": FORMAT_VERSION,
        "artifact_version": __version__,
    }


def _emit(report: dict, args, inputs: dict) -> None:
    manifest = _manifest(args, inputs)
    out = getattr(args, "out", None)
    if out:
        write_json(str(out) + ".manifest.json", manifest)
    print(json.dumps({"report": report, "manifest": manifest}, indent=1))


def _load_fairness(args, m, model_obj):
    if args.fairness:
        obj = read_json(args.fairness)
        obj = obj.get("fairness", obj)
    elif "fairness" in model_obj:
        obj = model_obj["fairness"]
    else:
        raise UsageError("no fairness spec: pass --fairness or add a 'fairness' key to the model")
    return fairness_from_json(obj, m)


def _notion(args, m):
    kind = args.notion
    if kind == "anytime":
        if args.epsilon is None:
            raise UsageError("--notion anytime needs --epsilon")
        lo, hi = 1, None
        if args.interval:
            lo_s, _, hi_s = args.interval.partition(":")
            lo = int(lo_s) if lo_s else 1
            hi = int(hi_s) if hi_s not in ("", "inf") else None
        return Anytime(args.epsilon, lo, hi)
    if kind in ("periodic", "exact-periodic"):
        if args.k is None:
            raise UsageError(f"--notion {kind} needs --k")
        return Periodic(args.k) if kind == "periodic" else ExactPeriodic(args.k)
    if kind == "bounded":
        if not args.checkpoint:
            raise UsageError("--notion bounded needs --checkpoint STATE[,STATE...]")
        return Bounded(frozenset(m.state_index(s) for s in args.checkpoint.split(",")))
    if kind == "limit":
        delta = args.delta if args.delta is not None else args.epsilon
        if delta is None:
            raise UsageError("--notion limit needs --delta (or --epsilon)")
        return Limit(delta, args.t_check)
    raise UsageError(f"unknown notion {kind}")


def cmd_simulate(args) -> int:
    m, model_obj = load_model(args.model)
    pi = policy_from_json(read_json(args.policy), m, model_obj)
    traces = [rollout(m, pi, args.horizon, rng) for rng in spawn_generators(args.seed, args.rollouts)]
    write_traces(args.out, traces, m)
    _emit({"traces": len(traces), "horizon": args.horizon, "out": str(args.out)}, args,
          {"model": args.model, "policy": args.policy})
    return 0


def cmd_verify_trace(args) -> int:
    m, model_obj = load_model(args.model)
    spec = _load_fairness(args, m, model_obj)
    notion = _notion(args, m)
    results = []
    worst = Verdict.PASS
    for n, tau in enumerate(read_traces(args.trace, m)):
        v = check_trace(notion, spec.trace, tau, m)
        entry = {"trace": n, "verdict": v.verdict.value, "detail": v.detail}
        warnings = spec.trace.warnings(tau, m)
        if warnings:
            entry["warnings"] = warnings
        if v.verdict is Verdict.FAIL:
            entry["counterexample"] = {"step": v.step, "value": v.value, "trace": trace_labels(tau, m)}
            worst = Verdict.FAIL
        elif v.verdict is Verdict.INCONCLUSIVE and worst is Verdict.PASS:
            worst = Verdict.INCONCLUSIVE
        results.append(entry)
    if not results:
        raise UsageError("trace file is empty")
    _emit({"verdict": worst.value, "notion": args.notion, "fairness": spec.trace.name, "traces": results},
          args, {"model": args.model, "fairness": args.fairness, "trace": args.trace})
    return worst.exit_code


def cmd_verify_policy(args) -> int:
    m, model_obj = load_model(args.model)
    spec = _load_fairness(args, m, model_obj)
    pi = policy_from_json(read_json(args.policy), m, model_obj)
    notion = _notion(args, m)
    if args.method == "exhaustive":
        report = verify_policy_exhaustive(m, pi, notion, spec.trace, args.horizon, args.budget)
    else:
        report = verify_policy_monte_carlo(m, pi, notion, spec.trace, args.horizon, args.rollouts,
                                           args.confidence, args.seed)
    if report.counterexample is not None and args.counterexample_out:
        write_traces(args.counterexample_out, [report.counterexample], m)
    body = report.to_dict(m)
    body["notion"] = args.notion
    _emit(body, args, {"model": args.model, "policy": args.policy, "fairness": args.fairness})
    return report.verdict.exit_code


def cmd_compile(args) -> int:
    m, model_obj = load_model(args.model)
    spec = _load_fairness(args, m, model_obj)
    p = build_product(m, spec.require_machine())
    write_json(args.out, product_to_json(p))
    _emit({"product_states": p.n_states, "base_states": m.n_states, "memory_states": p.machine.n_memory,
           "out": str(args.out)}, args, {"model": args.model, "fairness": args.fairness})
    return 0


def cmd_learn(args) -> int:
    obj = read_json(args.product)
    p = product_from_json(obj)
    cfg = LearnerConfig(alpha1=args.alpha1, alpha2=args.alpha2,
                        weights=tuple(args.weights) if args.weights else None,
                        learning_rate=args.learning_rate, episodes=args.episodes,
                        horizon=args.horizon, seed=args.seed)
    greedy = value_iteration(p, cfg) if args.method == "vi" else q_learning(p, cfg)
    write_json(args.out, product_policy_to_json(p, greedy))
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        for rec in greedy.log:
            fh.write(json.dumps(rec) + "\n")
    _emit({"method": args.method, "out": str(args.out), "log": str(log_path),
           "policy": {p.mdp.state_labels[i]: p.mdp.action_labels[a] for i, a in enumerate(greedy.actions.tolist())},
           "unvisited": [p.mdp.state_labels[i] for i in greedy.unvisited]},
          args, {"product": args.product})
    return 0


def cmd_witness(args) -> int:
    report = unbounded_memory_witness(args.horizon)
    _emit(report.to_dict(), args, {})
    return 0 if report.exceeds_markov_bound else 1


def cmd_doughnut(args) -> int:
    m, spec = build_doughnut(DoughnutSpec(args.n, args.m, args.bound, args.gamma))
    obj = model_to_json(m)
    if args.n == 2:
        obj["fairness"] = {"kind": "imbalance", "params": spec.params, "normalize": "reciprocal"}
    else:
        obj["fairness"] = {"kind": "memory", "params": machine_to_json(spec.machine)}
    assert validate_mdp(m).ok
    write_json(args.out, obj)
    _emit({"states": m.n_states, "actions": list(m.action_labels), "out": str(args.out)}, args, {})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nmfair", description="Non-Markovian fairness: verify, compile and learn.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="roll out a policy and write traces")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rollouts", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    def notion_args(p):
        p.add_argument("--notion", required=True, choices=["anytime", "periodic", "exact-periodic", "bounded", "limit"])
        p.add_argument("--epsilon", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--t-check", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--interval", help="LO:HI, HI may be empty or 'inf'")
        p.add_argument("--checkpoint", help="comma-separated state labels for bounded fairness")
        p.add_argument("--fairness", help="fairness spec file (default: the model's 'fairness' key)")

    p = sub.add_parser("verify-trace", help="check recorded traces against a fairness notion")
    p.add_argument("--model", required=True)
    p.add_argument("--trace", required=True)
    notion_args(p)
    p.set_defaults(func=cmd_verify_trace)

    p = sub.add_parser("verify-policy", help="check a policy exhaustively or by sampling")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", required=True)
    notion_args(p)
    p.add_argument("--method", choices=["exhaustive", "mc"], default="exhaustive")
    p.add_argument("--rollouts", type=int, default=1000)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--budget", type=int, default=10**6)
    p.add_argument("--counterexample-out")
    p.set_defaults(func=cmd_verify_policy)

    p = sub.add_parser("compile", help="build the Markovian product model for a finite-memory fairness spec")
    p.add_argument("--model", required=True)
    p.add_argument("--fairness")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("learn", help="plan or learn a fair-optimal policy on a product model")
    p.add_argument("--product", required=True)
    p.add_argument("--alpha1", type=float, default=1.0)
    p.add_argument("--alpha2", type=float, default=1.0)
    p.add_argument("--weights", type=float, nargs="+")
    p.add_argument("--method", choices=["vi", "q"], default="vi")
    p.add_argument("--episodes", type=int, default=5000)
    p.add_argument("--horizon", type=int, default=50)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="training log path (default: OUT.log.jsonl)")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("witness", help="enumerate doughnut traces to show imbalance needs unbounded memory")
    p.add_argument("--horizon", type=int, required=True)
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("doughnut", help="write a doughnut allocation model file")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--bound", type=int, default=3)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_doughnut)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, FormatError, SpecError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"nmfair {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
