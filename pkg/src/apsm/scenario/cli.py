"""``simctl`` and ``avb`` command-line entry points."""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from apsm.boot.attestation import attest_result, verify_attestation
from apsm.boot.chain import BootColor, verify_boot_chain
from apsm.boot.images import make_fixture, read_image_dir
from apsm.errors import KeystoreUnavailable
from apsm.scenario.dsl import ScenarioParseError, parse_scenario
from apsm.scenario.report import (
    EXIT_PARSE,
    exit_code,
    first_divergence,
    machine_report,
    text_report,
)
from apsm.scenario.runner import run

COLOR_EXIT = {BootColor.GREEN: 0, BootColor.YELLOW: 0, BootColor.ORANGE: 2, BootColor.RED: 3}
SCENARIO_SUFFIX = ".scn"
TRACE_SUFFIX = ".trace"


def corpus_dir() -> Path:
    return Path(str(resources.files("apsm.scenario") / "corpus"))


def _load(path: Path):
    return parse_scenario(path.read_text(encoding="utf-8"))


def cmd_run(args) -> int:
    try:
        scenario = _load(Path(args.file))
    except ScenarioParseError as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    trace = run(scenario, seed=args.seed)
    out = machine_report(trace) if args.format == "machine" else text_report(trace)
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    return exit_code(trace)


def cmd_check(args) -> int:
    """Re-run every scenario in a directory and diff against its golden trace."""
    root = Path(args.dir) if args.dir else corpus_dir()
    scripts = sorted(root.glob(f"*{SCENARIO_SUFFIX}"))
    if not scripts:
        print(f"no {SCENARIO_SUFFIX} files in {root}", file=sys.stderr)
        return EXIT_PARSE
    worst = 0
    for path in scripts:
        golden = path.with_suffix(TRACE_SUFFIX)
        try:
            trace = run(_load(path), seed=args.seed)
        except ScenarioParseError as exc:
            print(f"PARSE  {path.name}: {exc}")
            worst = max(worst, EXIT_PARSE)
            continue
        actual = machine_report(trace)
        if args.update:
            golden.write_text(actual, encoding="utf-8")
        if not golden.exists():
            print(f"NOGOLD {path.name}")
            worst = max(worst, 1)
            continue
        line = first_divergence(golden.read_text(encoding="utf-8"), actual)
        if line is not None:
            print(f"DIFF   {path.name}: first difference at trace line {line}")
            worst = max(worst, 1)
        elif not trace.passed:
            print(f"FAIL   {path.name}: assertions {[r.index for r in trace.failures]}")
            worst = max(worst, 1)
        else:
            print(f"OK     {path.name}")
    return worst


def cmd_corpus(args) -> int:
    print(corpus_dir())
    return 0


# ---------------------------------------------------------------------------
# avb


def cmd_verify(args) -> int:
    d = read_image_dir(args.dir)
    result = verify_boot_chain(d.chain, d.images, d.scheme)
    report = {
        "color": result.color.value,
        "device_locked": result.state.device_locked,
        "root": result.root.value if result.root else None,
        "os_found": result.os_found,
        "reasons": list(result.reasons),
        "vbmeta_digest": result.vbmeta_digest.hex() if result.vbmeta_digest else None,
    }
    if args.json:
        print(json.dumps(report, sort_keys=True, indent=2))
    else:
        print(result.color.value)
        for r in result.reasons:
            print(f"  {r}")
    return COLOR_EXIT[result.color]


def cmd_attest(args) -> int:
    d = read_image_dir(args.dir)
    result = verify_boot_chain(d.chain, d.images, d.scheme)
    try:
        record = attest_result(result, d.attestation_key, d.scheme, args.challenge)
    except KeystoreUnavailable as exc:
        print(f"no attestation: {exc}", file=sys.stderr)
        return COLOR_EXIT[BootColor.RED]
    check = verify_attestation(record, d.scheme, d.attestation_key,
                               result.vbmeta_digest, args.challenge)
    print(record.to_json())
    if not check.ok:
        print(f"attestation does not verify: {', '.join(check.reasons)}", file=sys.stderr)
        return COLOR_EXIT[BootColor.RED]
    return COLOR_EXIT[result.color]


def cmd_make_fixture(args) -> int:
    make_fixture(args.dir, seed=args.seed, os_version=args.os,
                 locked=not args.unlocked, rollback_index=args.rollback)
    print(args.dir)
    return 0


def _add_avb_commands(sub) -> None:
    p = sub.add_parser("verify", help="verify an image directory and print the boot color")
    p.add_argument("dir")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("attest", help="print a signed attestation record for an image directory")
    p.add_argument("dir")
    p.add_argument("--challenge", default="")
    p.set_defaults(func=cmd_attest)
    p = sub.add_parser("make-fixture", help="write a consistent OEM-signed image directory")
    p.add_argument("dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--os", type=int, default=1)
    p.add_argument("--rollback", type=int, default=0)
    p.add_argument("--unlocked", action="store_true")
    p.set_defaults(func=cmd_make_fixture)


def simctl_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simctl", description="Run device security scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario script")
    p.add_argument("file")
    p.add_argument("--format", choices=("text", "machine"), default="text")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="compare scenario runs against their golden traces")
    p.add_argument("dir", nargs="?", help="defaults to the bundled corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--update", action="store_true", help="rewrite the golden traces")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("corpus", help="print the bundled corpus directory")
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("avb", help="verified-boot tools")
    _add_avb_commands(p.add_subparsers(dest="avb_command", required=True))
    return parser


def avb_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avb", description="Verified-boot image tools.")
    _add_avb_commands(parser.add_subparsers(dest="command", required=True))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = simctl_parser().parse_args(argv)
    return args.func(args)


def avb_main(argv: Optional[Sequence[str]] = None) -> int:
    args = avb_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
