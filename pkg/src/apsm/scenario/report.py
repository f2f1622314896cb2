"""Human and machine renderings of a scenario trace."""

from __future__ import annotations

import json

from apsm.scenario.runner import DENY, ERROR, PASS, Trace

EXIT_PASS = 0
EXIT_ASSERTION = 1
EXIT_PARSE = 2


def exit_code(trace: Trace) -> int:
    return EXIT_PASS if trace.passed else EXIT_ASSERTION


def denials_by_threat(trace: Trace) -> dict[str, list[int]]:
    """Event indices of denials, keyed by the threat tags on each event."""
    out: dict[str, list[int]] = {}
    for r in trace.records:
        if r.decision != DENY:
            continue
        for tag in r.threats or ("untagged",):
            out.setdefault(tag, []).append(r.index)
    return dict(sorted(out.items()))


def _args(args: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in sorted(args.items()))


def text_report(trace: Trace) -> str:
    lines = [f"scenario {trace.scenario}",
             f"threats  {','.join(trace.threats) or '-'}", ""]
    for r in trace.records:
        why = f"  [{', '.join(r.reasons)}]" if r.reasons else ""
        lines.append(f"{r.index:>3} t={r.time:<6} {r.verb:<17} {r.decision:<5} "
                     f"{_args(r.args)}{why}")
    lines.append("")
    lines.append(f"prompts: {trace.prompts}")
    denials = denials_by_threat(trace)
    lines.append("denials by threat:" if denials else "denials by threat: none")
    for tag, idx in denials.items():
        lines.append(f"  {tag}: {len(idx)} (events {', '.join(map(str, idx))})")
    errors = [r for r in trace.records if r.decision == ERROR]
    for r in errors:
        lines.append(f"error #{r.index} {r.verb}: {', '.join(r.reasons)} "
                     f"{r.detail.get('message', '')}".rstrip())
    passed = sum(r.decision == PASS for r in trace.records)
    failed = trace.failures
    lines.append(f"assertions: {passed} passed, {len(failed)} failed")
    for r in failed:
        lines.append(f"FAIL #{r.index} (line t={r.time}): {'; '.join(r.reasons)}")
    lines.append(f"result: {'PASS' if trace.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def summary_record(trace: Trace) -> dict:
    return {
        "summary": True,
        "scenario": trace.scenario,
        "threats": list(trace.threats),
        "events": len(trace.records),
        "prompts": trace.prompts,
        "denials": denials_by_threat(trace),
        "failures": [r.index for r in trace.failures],
        "final_digest": trace.final_digest,
        "result": "pass" if trace.passed else "fail",
    }


def machine_report(trace: Trace) -> str:
    """One JSON object per line with sorted keys, then a summary line."""
    rows = [r.as_dict() for r in trace.records] + [summary_record(trace)]
    return "".join(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n"
                   for row in rows)


def first_divergence(expected: str, actual: str) -> int | None:
    """Index of the first differing trace line, or None when equal."""
    a, b = expected.splitlines(), actual.splitlines()
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    return None if len(a) == len(b) else min(len(a), len(b))
