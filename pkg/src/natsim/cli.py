"""Command-line entry points.

    natsim identify <scenario.json> [--seed N] [--csv PATH] [--trace PATH] [--quiet]
    natsim attack   <scenario.json> [--seed N] [--repeat N] [--csv PATH] [--trace PATH] [--quiet]
    natsim assess   [<dir|file> ...] [--seed N] [--csv PATH] [--trace PATH] [--quiet]
    natsim replay   <trace>

Exit codes: 0 all expected outcomes matched, 1 configuration error,
2 at least one mismatch (or trace divergence).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import assess as assess_mod
from . import scenario as scenario_mod
from .scenario import ScenarioError


def _load_doc(path: str) -> scenario_mod.Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ScenarioError(f"{path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: invalid JSON: {e}") from None
    return scenario_mod.load_scenario(doc)


def _collect_scenarios(paths: list[str]) -> list[scenario_mod.Scenario]:
    if not paths:
        return scenario_mod.default_suite()
    out = []
    for path in paths:
        if os.path.isdir(path):
            for entry in sorted(os.listdir(path)):
                if entry.endswith(".json"):
                    out.append(_load_doc(os.path.join(path, entry)))
        else:
            out.append(_load_doc(path))
    if not out:
        raise ScenarioError("no scenario files found")
    return out


def _write(path: str | None, text: str) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_identify(args) -> int:
    scn = _load_doc(args.scenario)
    verdict, handles = assess_mod.identify_scenario(scn, seed=args.seed)
    if not args.quiet:
        print(f"{scn.name}: {verdict.kind.value} ({verdict.reason.value})")
        ev = verdict.evidence
        payloads = [s - 20 for s in ev.echo_reply_fragments]
        print(f"  baseline={ev.baseline_tcp_size} post-probe={ev.post_probe_tcp_size}")
        print(
            f"  echo reply fragments={ev.echo_reply_fragments} wire octets "
            f"(payloads {payloads}), total={ev.echo_reply_total}"
        )
    _write(args.csv, assess_mod.probe_csv(scn.target_addr, verdict))
    if args.trace:
        sink = assess_mod.TraceFile()
        sink.add_section(scn, "identify", handles.sim)
        sink.write(args.trace)
    if scn.expect and scn.expect.verdict is not None:
        return 0 if verdict.kind.value == scn.expect.verdict else 2
    return 0


def cmd_attack(args) -> int:
    scn = _load_doc(args.scenario)
    base_seed = args.seed if args.seed is not None else scn.seed
    rows = []
    sink = assess_mod.TraceFile() if args.trace else None
    mismatched = False
    for i in range(args.repeat):
        seed = base_seed + i
        report, handles = assess_mod.attack_scenario(scn, seed=seed)
        rows.append((f"{scn.name}@{seed}", scn.policy_summary(), report))
        if sink is not None:
            sink.add_section(scn, "attack", handles.sim)
        if not args.quiet:
            outcome = "success" if report.success else f"failed ({report.failure_diagnosis.value})"
            print(
                f"{scn.name} seed={seed}: {outcome}; torn {report.client_connections_torn}/"
                f"{report.victim_connections}, blocked {report.new_connections_blocked}/"
                f"{report.new_connections_attempted}, {report.octets_sent} octets in "
                f"{report.duration_ticks} ticks"
            )
        if scn.expect and scn.expect.attack_success is not None:
            mismatched |= report.success != scn.expect.attack_success
    if not args.quiet:
        print(assess_mod.FIELD_CONTEXT_NOTE)
    _write(args.csv, assess_mod.strike_csv(rows))
    if sink is not None:
        sink.write(args.trace)
    return 2 if mismatched else 0


def cmd_assess(args) -> int:
    scenarios = _collect_scenarios(args.paths)
    sink = assess_mod.TraceFile() if args.trace else None
    rows, csv, summary, matched = assess_mod.assess(scenarios, seed=args.seed, trace_sink=sink)
    if not args.quiet:
        print(summary, end="")
    _write(args.csv, csv)
    if sink is not None:
        sink.write(args.trace)
    return 0 if matched else 2


def cmd_replay(args) -> int:
    result = assess_mod.replay(args.trace)
    print(result.describe())
    return 0 if result.identical else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="natsim", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_id = sub.add_parser("identify", help="run the NAT identification probe on a scenario")
    p_id.add_argument("scenario")
    p_id.set_defaults(fn=cmd_identify)

    p_atk = sub.add_parser("attack", help="run the DoS attack on a scenario")
    p_atk.add_argument("scenario")
    p_atk.add_argument("--repeat", type=int, default=1, help="repetitions with consecutive seeds")
    p_atk.set_defaults(fn=cmd_attack)

    p_ass = sub.add_parser("assess", help="grade scenario files (default: built-in suite)")
    p_ass.add_argument("paths", nargs="*")
    p_ass.set_defaults(fn=cmd_assess)

    p_rep = sub.add_parser("replay", help="re-run a trace file and compare byte-for-byte")
    p_rep.add_argument("trace")
    p_rep.set_defaults(fn=cmd_replay)

    for p in (p_id, p_atk, p_ass):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--csv", default=None)
        p.add_argument("--trace", default=None)
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 1
    except scenario_mod.EstablishError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
