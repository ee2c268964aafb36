"""Command-line entry point.

    stmlab run       run a workload and check it
    stmlab check     check a history file (JSON lines)
    stmlab count     count RAW / multi-RAW / AWAR patterns per transaction
    stmlab probe     valence sweep of a solo updating transaction
    stmlab enumerate list the schedules of a workload

Output is JSON; ``--pretty`` prints readable tables instead.  Exit codes:
0 all checks pass, 1 some check fails, 2 bad input or usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from .analysis.opacity import DEFAULT_MAX_TXS, SearchTooLarge, check_opacity, check_strict_serializability
from .analysis.patterns import detect_patterns, tx_classes
from .analysis.progress import check_progressiveness, check_strong_progressiveness
from .analysis.valence import ProbeSetup, find_protecting_prefix
from .core import History, validate_history
from .harness import (
    CHECKS,
    DEFAULT_CHECKS,
    PRESETS,
    WorkloadError,
    WorkloadSpec,
    WorkloadTemplate,
    build,
    check_windows,
    enumerate_runs,
    gen_workload,
    preset,
    random_workload,
    run_checks,
    run_experiment,
    run_schedule,
)
from .memory import MemoryFault
from .sched import ExplorationStats, run_native
from .stm import VARIANTS

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
HISTORY_CHECKS = ("opacity", "strict-serializability", "progressiveness", "strong-progressiveness")


class UsageError(Exception):
    pass


def _emit(args, payload: dict, table: Optional[str] = None) -> None:
    text = json.dumps(payload, indent=2 if args.pretty else None, default=str)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    if args.pretty and table:
        print(table)
    elif not args.out:
        print(text)


def _checks(arg: Optional[str], default) -> list[str]:
    if not arg:
        return list(default)
    out = [c.strip() for c in arg.split(",") if c.strip()]
    bad = [c for c in out if c not in CHECKS]
    if bad:
        raise UsageError(f"unknown check(s) {', '.join(bad)}; expected {', '.join(CHECKS)}")
    return out


def _load_json(path: str):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON: {exc}") from exc


def _workload(args) -> WorkloadSpec:
    variant = args.variant
    if args.workload:
        d = _load_json(args.workload)
        if not isinstance(d, dict):
            raise UsageError("workload file must hold a JSON object")
        d.setdefault("variant", variant)
        w = WorkloadSpec.from_dict(d)
        return w.with_variant(variant) if variant else w
    variant = variant or "prog-raw"
    if args.preset:
        if args.preset == "random":
            return random_workload(args.seed or 0, variant)
        return preset(args.preset, variant, **({"m": args.probe_wset} if args.probe_wset else {}))
    if args.seed is not None:
        return gen_workload(WorkloadTemplate(variant=variant), args.seed)
    raise UsageError("give --preset, --workload or --seed")


def _schedules(args) -> list[list[int]]:
    d = _load_json(args.schedule)
    if isinstance(d, list) and all(isinstance(x, int) for x in d):
        return [d]
    if isinstance(d, list) and all(isinstance(s, list) and all(isinstance(x, int) for x in s) for s in d):
        return d
    raise UsageError("schedule file must be a JSON array of process ids (or an array of such arrays)")


def _verdict_table(verdicts: dict) -> str:
    width = max((len(k) for k in verdicts), default=5)
    rows = [f"{k:<{width}}  {'pass' if v.passed else 'FAIL'}  {v.reason}" for k, v in verdicts.items()]
    return "\n".join(rows)


def _pattern_table(rep, classes=None) -> str:
    lines = ["tx    class      RAW  multi-RAW  AWAR"]
    for k, c in sorted(rep.per_tx.items()):
        if k == 0:
            continue
        cls = (classes or {}).get(k, "")
        lines.append(f"T{k:<4} {cls:<10} {c.raw_count:>3}  {c.multi_raw_count:>9}  {c.awar_count:>4}")
    return "\n".join(lines)


# -- commands ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    w = _workload(args)
    checks = _checks(args.check, DEFAULT_CHECKS[w.variant])
    backend = args.backend or os.environ.get("STMLAB_BACKEND", "deterministic")
    if backend == "native":
        if args.schedule or args.exhaustive:
            raise UsageError("the native backend takes no schedule and cannot enumerate")
        stm, progs = build(w)
        trace = run_native(progs, stm.mem, timeout=args.timeout)
        verdicts = run_checks(w.variant, trace, [c for c in checks if c != "opacity"])
        if "opacity" in checks:
            h = trace.history
            if len(h.transactions()) <= DEFAULT_MAX_TXS:
                verdicts["opacity"] = check_opacity(h)
            else:  # too many transactions for one search: sampled windows
                verdicts["opacity-windows"] = check_windows(h, seed=args.seed or 0)
        ok = trace.complete and all(v.passed for v in verdicts.values())
        payload = {"workload": w.to_dict(), "backend": "native", "complete": trace.complete, "pass": ok,
                   "verdicts": {k: v.to_dict() for k, v in verdicts.items()}}
        table = _verdict_table(verdicts)
        if args.count_patterns:
            rep = detect_patterns(trace)
            payload["patterns"] = rep.to_dict()["per_tx"]
            table += "\n\n" + _pattern_table(rep)
        _emit(args, payload, table)
        return EXIT_PASS if ok else EXIT_FAIL
    if backend != "deterministic":
        raise UsageError(f"unknown backend {backend!r}")
    if args.exhaustive:
        rep = run_experiment(w, exhaustive=True, depth=args.depth, preemptions=args.preemptions,
                             checks=checks, max_nodes=args.max_nodes, include_cut=args.include_cut)
    else:
        scheds = _schedules(args) if args.schedule else None
        rep = run_experiment(w, scheds, checks=checks, keep_traces=not args.exhaustive)
    payload = rep.to_dict(runs=not args.exhaustive)
    if not args.count_patterns:
        for r in payload.get("runs", []):
            r.pop("patterns", None)
    lines = [f"{w.name} / {w.variant}: {len(rep.runs)} runs, {len(rep.failures)} failing, "
             f"{sum(s.get('count', 1) for s in rep.skipped)} skipped, {rep.seconds:.2f}s"]
    if rep.runs:
        first_bad = rep.failures[0] if rep.failures else rep.runs[0]
        lines.append(_verdict_table(first_bad.verdicts))
    if args.count_patterns:
        lines.append("\nmax per transaction class:")
        for cls, agg in sorted(rep.aggregates.items()):
            lines.append(f"  {cls:<10} RAW {agg['raw_count']}  multi-RAW {agg['multi_raw_count']}  "
                         f"AWAR {agg['awar_count']}  ({agg['transactions']} txns)")
    _emit(args, payload, "\n".join(lines))
    return EXIT_PASS if rep.passed and rep.runs else (EXIT_FAIL if rep.runs else EXIT_PASS)


def cmd_check(args) -> int:
    try:
        with open(args.history) as f:
            text = f.read()
    except OSError as exc:
        raise UsageError(f"cannot read {args.history}: {exc}") from exc
    if not text.strip():
        raise UsageError(f"{args.history} is empty")
    try:
        h = History.from_jsonl(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{args.history}: {exc}") from exc
    checks = [c.strip() for c in (args.check or "opacity").split(",") if c.strip()]
    bad = [c for c in checks if c not in HISTORY_CHECKS]
    if bad:
        raise UsageError(f"check {', '.join(bad)} needs a trace; history checks: {', '.join(HISTORY_CHECKS)}")
    wf = validate_history(h)
    verdicts = {"well-formed": wf}
    if wf:
        fns = {"opacity": check_opacity, "strict-serializability": check_strict_serializability,
               "progressiveness": check_progressiveness, "strong-progressiveness": check_strong_progressiveness}
        try:
            for c in checks:
                verdicts[c] = fns[c](h)
        except SearchTooLarge as exc:
            raise UsageError(str(exc)) from exc
    ok = all(v.passed for v in verdicts.values())
    payload = {"pass": ok, "verdicts": {k: v.to_dict() for k, v in verdicts.items()}}
    if "opacity" in verdicts:
        payload["witness"] = verdicts["opacity"].witness
    _emit(args, payload, _verdict_table(verdicts))
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_count(args) -> int:
    w = _workload(args)
    scheds = _schedules(args) if args.schedule else [None]
    out, tables = [], []
    for s in scheds:
        if s is None:
            rep_exp = run_experiment(w, None, checks=["budget"], keep_traces=True)
            if not rep_exp.runs:
                raise UsageError("round-robin run did not complete")
            s = rep_exp.runs[0].schedule
        trace = run_schedule(w, s)
        if not trace.complete:
            raise UsageError(f"schedule {s} does not complete the workload")
        rep = detect_patterns(trace)
        budget = run_checks(w.variant, trace, ["budget"])["budget"]
        classes = tx_classes(trace)
        out.append({"schedule": s, "budget": budget.to_dict(), "classes": {str(k): v for k, v in classes.items()},
                    **rep.to_dict()})
        tables.append(f"schedule {s}\n{_pattern_table(rep, classes)}\nbudget: "
                      f"{'pass' if budget else 'FAIL ' + budget.reason}")
    ok = all(o["budget"]["pass"] for o in out)
    _emit(args, {"workload": w.to_dict(), "pass": ok, "runs": out}, "\n\n".join(tables))
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_probe(args) -> int:
    variant = args.variant or "prog-raw"
    m = args.probe_wset if args.probe_wset is not None else 2
    if m < 0:
        raise UsageError("--probe-wset must be >= 0")
    rset = [int(x) for x in args.rset.split(",")] if args.rset else []
    warnings = []
    if variant in ("single-lock", "strong-prog"):
        warnings.append(f"{variant} is not disjoint-access parallel; protection is not guaranteed to be tight")
    for msg in warnings:
        print(f"warning: {msg}", file=sys.stderr)
    rep = find_protecting_prefix(ProbeSetup(variant, tuple(range(m)), tuple(rset)))
    payload = rep.to_dict()
    payload["warnings"] = warnings
    v = rep.verdict()
    table = rep.render() + f"\n\nprotecting prefix: {rep.prefix}  ({'pass' if v else 'FAIL'}: {v.reason})"
    _emit(args, payload, table)
    return EXIT_PASS if v else EXIT_FAIL


def cmd_enumerate(args) -> int:
    w = _workload(args)
    stats = ExplorationStats()
    scheds = [s for s, _ in enumerate_runs(w, args.depth, args.preemptions, max_nodes=args.max_nodes,
                                           stats=stats)]
    payload = {"workload": w.to_dict(), "depth": args.depth, "count": len(scheds), "stats": stats.to_dict(),
               "schedules": scheds}
    table = f"{len(scheds)} schedules (stranded {stats.stranded}, cut by depth {stats.cut})"
    _emit(args, payload, table)
    return EXIT_PASS


# -- parser -----------------------------------------------------------------------------------


def parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--backend", choices=("deterministic", "native"))
    common.add_argument("--preset", choices=PRESETS + ("random",))
    common.add_argument("--workload", metavar="FILE")
    common.add_argument("--schedule", metavar="FILE")
    common.add_argument("--exhaustive", action="store_true")
    common.add_argument("--depth", type=int, default=60)
    common.add_argument("--preemptions", type=int, default=None,
                        help="bound on preemptive context switches when enumerating")
    common.add_argument("--max-nodes", type=int, default=None)
    common.add_argument("--include-cut", action="store_true",
                        help="also check the histories of prefixes stopped at --depth")
    common.add_argument("--seed", type=int)
    common.add_argument("--check", metavar="LIST", help="comma-separated checks")
    common.add_argument("--count-patterns", action="store_true")
    common.add_argument("--probe-wset", type=int, metavar="M")
    common.add_argument("--rset", metavar="LIST", help="read set of the probed transaction")
    common.add_argument("--timeout", type=float, default=600.0)
    common.add_argument("--out", metavar="FILE")
    common.add_argument("--pretty", action="store_true")

    p = argparse.ArgumentParser(prog="stmlab", description="STM laboratory: run, check, count, probe.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run a workload and check it").set_defaults(fn=cmd_run)
    c = sub.add_parser("check", parents=[common], help="check a history file")
    c.add_argument("history")
    c.set_defaults(fn=cmd_check)
    sub.add_parser("count", parents=[common], help="count RAW/AWAR patterns").set_defaults(fn=cmd_count)
    sub.add_parser("probe", parents=[common], help="valence sweep").set_defaults(fn=cmd_probe)
    sub.add_parser("enumerate", parents=[common], help="list schedules").set_defaults(fn=cmd_enumerate)
    return p


def main(argv=None) -> int:
    try:
        args = parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_PASS
    try:
        return args.fn(args)
    except (UsageError, WorkloadError, MemoryFault, ValueError) as exc:
        print(f"stmlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
