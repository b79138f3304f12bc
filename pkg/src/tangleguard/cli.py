"""Command-line entry point.

Subcommands:

  run                train and evaluate one scenario across seeds
  topo debug-braid   parse a braid word, show the rewrite trace and normal form
  validate-schedule  check a process trace against a shipped schedule fixture

Exit status is 0 on success, 1 on a failed validation, 2 on bad arguments.
"""

from __future__ import annotations

import argparse
import sys

from .braid import apply_rule, format_word, measure, parse_word, simplify
from .harness import ABLATABLE, RunConfig, run
from .schedules import SCHEDULE_FIXTURES, load_trace, validate_schedule

_METRIC_LINES = (
    ("entanglement rate", "entanglement_rate_pct", "%"),
    ("task success rate", "task_success_rate_pct", "%"),
    ("intervention rate", "intervention_rate_pct", "%"),
    ("arm idle rate", "arm_idle_rate_pct", "%"),
    ("convergence episode", "convergence_episode", ""),
    ("sample AUC / 1e3", "sample_auc_per_1e3", ""),
)


def _parse_seeds(text: str):
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tangleguard",
        description="topology-guarded multi-arm training harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train and evaluate one scenario")
    run_p.add_argument("--scenario", required=True,
                       choices=["low", "med", "medium", "high"])
    run_p.add_argument("--seeds", type=_parse_seeds, default=(0,),
                       help="comma-separated seed list, default 0")
    run_p.add_argument("--episodes", type=int, default=None,
                       help="episode cap, default per scenario")
    run_p.add_argument("--ablate", action="append", default=[],
                       metavar="COMPONENT",
                       help=f"disable one of {', '.join(ABLATABLE)}; "
                            "repeatable, commas allowed")
    run_p.add_argument("--updates-per-episode", type=int, default=2)
    run_p.add_argument("--out", required=True, help="artifact directory")

    topo_p = sub.add_parser("topo", help="topology debugging helpers")
    topo_sub = topo_p.add_subparsers(dest="topo_command", required=True)
    braid_p = topo_sub.add_parser("debug-braid",
                                  help="simplify a braid word step by step")
    braid_p.add_argument("--word", required=True,
                         help="tokens s<i> (positive) and S<i> (inverse)")

    val_p = sub.add_parser("validate-schedule",
                           help="check a trace against a schedule fixture")
    val_p.add_argument("--trace", required=True, help="JSONL trace file")
    val_p.add_argument("--fixture", required=True,
                       choices=sorted(SCHEDULE_FIXTURES))
    return parser


def _cmd_run(args) -> int:
    ablated = [tok.strip()
               for entry in args.ablate for tok in entry.split(",") if tok.strip()]
    unknown = sorted(set(ablated) - set(ABLATABLE))
    if unknown:
        print(f"unknown ablation(s): {', '.join(unknown)}; "
              f"choose from {', '.join(ABLATABLE)}", file=sys.stderr)
        return 2
    switches = {name: name not in ablated for name in ABLATABLE}
    try:
        config = RunConfig(scenario=args.scenario, seeds=args.seeds,
                           episodes=args.episodes,
                           updates_per_episode=args.updates_per_episode,
                           out_dir=args.out, **switches)
    except (ValueError, TypeError) as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return 2
    report = run(config)
    print(f"scenario {config.scenario}, seeds {', '.join(map(str, config.seeds))}, "
          f"{config.episodes} episodes")
    if ablated:
        print(f"ablated: {', '.join(sorted(set(ablated)))}")
    for label, attr, unit in _METRIC_LINES:
        print(f"  {label:<20} {getattr(report, attr):10.3f}{unit}")
    print(f"  {'mean reward':<20} {report.mean_reward:10.3f} "
          f"+/- {report.reward_std:.3f} across seeds")
    print(f"artifacts in {args.out}")
    return 0


def _cmd_debug_braid(args) -> int:
    try:
        word = parse_word(args.word)
    except ValueError as err:
        print(str(err), file=sys.stderr)
        return 2
    normal, trace = simplify(word)
    length, inversions = measure(word)
    print(f"input   {format_word(word)}   on {word.strand_count} strands, "
          f"measure ({length}, {inversions})")
    if trace.steps:
        current = word
        for rule, pos in trace.steps:
            letters = apply_rule(list(current.letters), rule, pos)
            current = type(current)(tuple(letters), current.strand_count)
            print(f"  {rule:<8} at {pos:<3} -> {format_word(current)}")
    else:
        print("  already in normal form")
    length, inversions = measure(normal)
    print(f"normal  {format_word(normal)}   measure ({length}, {inversions})")
    return 0


def _cmd_validate_schedule(args) -> int:
    try:
        trace = load_trace(args.trace)
        verdict = validate_schedule(trace, SCHEDULE_FIXTURES[args.fixture])
    except (OSError, ValueError) as err:
        print(f"cannot validate: {err}", file=sys.stderr)
        return 2
    if verdict:
        print(f"trace conforms to fixture {args.fixture}")
        return 0
    print(f"trace violates fixture {args.fixture}:")
    for violation in verdict.violations:
        print(f"  {violation}")
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "topo":
        return _cmd_debug_braid(args)
    return _cmd_validate_schedule(args)


if __name__ == "__main__":
    sys.exit(main())
