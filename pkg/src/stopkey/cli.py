"""Command-line front end.

Eight verbs cover the protocol surface: decompose, keygen-common,
keygen-almost, keygen-correlated, verify-rsbs, bounds, simulate, and
report. All file I/O uses the structured text formats; --format selects
human-readable text or the structured document on stdout/--out.

Exit codes: 0 when every checked bound holds (or the verb checks none),
2 when a checked bound is violated, 3 on input errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Any

from . import formats
from .common import alice_keygen, bob_keygen
from .dyadic import decompose
from .errors import StopkeyError
from .harness import (
    ExperimentConfig,
    Report,
    bounds_dashboard,
    parse_reconciler,
    resolve_hash,
    run_simulation,
)
from .keylaws import verify_rsbs
from .probability import JointPmf, Pmf
from .randomsource import RandomSource
from .reconciled import (
    HashFunction,
    almost_common_keygen,
    correlated_keygen,
    sample_joint,
    union_alphabet,
)


def _seed_value(text: str) -> int | str:
    stripped = text.lstrip("-")
    return int(text) if stripped.isdigit() and stripped else text


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _add_output_args(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--out", help="write output to this file instead of stdout")
    sp.add_argument(
        "--format", choices=("text", "structured"), default="text",
        help="human-readable text or the structured document format",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stopkey",
        description="secret key agreement via randomly stopped bit sequences",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    sp = sub.add_parser("decompose", help="dyadic decomposition dump")
    sp.add_argument("--dist", required=True)
    sp.add_argument("--w-max", type=int, default=8)
    _add_output_args(sp)

    sp = sub.add_parser("keygen-common", help="one common-randomness key")
    sp.add_argument("--dist", required=True)
    sp.add_argument("--role", choices=("alice", "bob"), required=True)
    sp.add_argument("--x", required=True, help="the shared symbol's label")
    sp.add_argument("--w", type=int, help="round index (bob only)")
    sp.add_argument("--seed", type=_seed_value, default=0)
    _add_output_args(sp)

    sp = sub.add_parser("keygen-almost", help="hash-check protocol trials")
    sp.add_argument("--joint", required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--hash", help="fixed:FILE or random:SEED (default: derandomized)")
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--seed", type=_seed_value, default=0)
    _add_output_args(sp)

    sp = sub.add_parser("keygen-correlated", help="two-stage pipeline trials")
    sp.add_argument("--joint", required=True)
    sp.add_argument(
        "--reconciler", default="identity", help="identity, constant, or hashmap:BITS"
    )
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--seed", type=_seed_value, default=0)
    _add_output_args(sp)

    sp = sub.add_parser("verify-rsbs", help="check a key-law file")
    sp.add_argument("--law", required=True)
    sp.add_argument("--max-depth", type=int, default=64)
    sp.add_argument("--tail-slack", help="allowed tail mass, as a rational")
    _add_output_args(sp)

    sp = sub.add_parser("bounds", help="bound lines for a source")
    sp.add_argument("--dist")
    sp.add_argument("--joint")
    sp.add_argument("--m", type=int, default=1)
    _add_output_args(sp)

    for verb, trials in (("simulate", 10000), ("report", 0)):
        sp = sub.add_parser(
            verb,
            help="Monte Carlo run with bound checks"
            if verb == "simulate"
            else "full report (bounds, exact sections, optional trials)",
        )
        sp.add_argument("--dist")
        sp.add_argument("--joint")
        sp.add_argument(
            "--protocol", choices=("common", "almost", "correlated"),
            help="default: common for --dist, almost or correlated for --joint",
        )
        sp.add_argument("--m", type=int, default=1)
        sp.add_argument("--w-max", type=int, default=30)
        sp.add_argument("--trials", type=int, default=trials)
        sp.add_argument("--seed", type=_seed_value, default=0)
        sp.add_argument("--reconciler")
        sp.add_argument("--hash", dest="hash_spec")
        _add_output_args(sp)

    return parser


def _source_args(args: argparse.Namespace) -> tuple[str, str]:
    if bool(args.dist) == bool(args.joint):
        raise StopkeyError("exactly one of --dist/--joint is required")
    if args.dist:
        return "dist", args.dist
    return "joint", args.joint


def _cmd_decompose(args) -> int:
    p = formats.load_distribution(args.dist)
    doc = formats.decomposition_document(decompose(p), args.w_max)
    if args.format == "structured":
        _emit(formats.dumps(doc), args.out)
        return 0
    lines = [f"alphabet: {' '.join(doc['alphabet'])}"]
    for rnd in doc["rounds"]:
        words = " ".join(f'{label}="{code}"' for label, code in rnd["codewords"].items())
        lines.append(f"w={rnd['w']} weight={rnd['weight']} codewords: {words}")
    lines.append(f"tail: {doc['tail']}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_keygen_common(args) -> int:
    p = formats.load_distribution(args.dist)
    x = p.index(args.x)
    if args.role == "alice":
        key, w = alice_keygen(p, x, RandomSource(args.seed).substream("keygen-common"))
    else:
        if args.w is None:
            raise StopkeyError("--w is required for --role bob")
        w = args.w
        key = bob_keygen(p, x, w)
    if args.format == "structured":
        _emit(formats.dumps({"key": key, "w": w}), args.out)
    else:
        _emit(f"key={key} w={w}\n", args.out)
    return 0


def _run_log_output(args, doc: dict) -> None:
    if args.format == "structured":
        _emit(formats.dumps(doc), args.out)
        return
    lines = []
    for i, rec in enumerate(doc["runs"]):
        t = "|".join(
            "{sender}:{kind}={value}".format(**r) for r in rec["transcript"]
        )
        keys = rec["keys"]
        lines.append(
            f"trial={i} transcript={t or '(none)'} "
            f"alice={keys['alice']!r} bob={keys['bob']!r} ideal={keys['ideal']!r}"
        )
    lines.append(
        "trials={trials} errors={errors} error_rate={rate:.6g}".format(
            trials=doc["trials"], errors=doc["errors"],
            rate=doc["errors"] / doc["trials"] if doc["trials"] else 0.0,
        )
    )
    _emit("\n".join(lines) + "\n", args.out)


def _cmd_keygen_almost(args) -> int:
    j = formats.load_joint(args.joint)
    mode, table, hash_seed = resolve_hash(args.hash, j, args.m)
    rng = RandomSource(args.seed)
    records = []
    errors = 0
    for i in range(args.trials):
        sub = rng.substream("trial", i)
        if table is not None:
            h = table
        else:
            h = HashFunction.random(
                union_alphabet(j), args.m, RandomSource(hash_seed).substream("table", i)
            )
        x, y = sample_joint(j, sub.substream("source"))
        run = almost_common_keygen(j, x, y, args.m, h, sub.substream("keys"))
        errors += not run.agreed
        records.append(
            formats.run_record(run.transcript, run.key_a, run.key_b, run.ideal_key)
        )
    doc = {
        "protocol": "almost",
        "m": args.m,
        "hash_mode": mode,
        "trials": args.trials,
        "errors": errors,
        "runs": records,
    }
    if table is not None:
        doc["hash_table"] = formats.hash_function_document(table)
    _run_log_output(args, doc)
    return 0


def _cmd_keygen_correlated(args) -> int:
    j = formats.load_joint(args.joint)
    rec = parse_reconciler(args.reconciler, args.seed)
    rng = RandomSource(args.seed)
    records = []
    errors = 0
    for i in range(args.trials):
        run = correlated_keygen(j, rec, args.m, rng.substream("trial", i))
        errors += not run.agreed
        records.append(
            formats.run_record(run.transcript, run.key_a, run.key_b, run.ideal_key)
        )
    doc = {
        "protocol": "correlated",
        "m": args.m,
        "reconciler": args.reconciler,
        "trials": args.trials,
        "errors": errors,
        "runs": records,
    }
    _run_log_output(args, doc)
    return 0


def _cmd_verify_rsbs(args) -> int:
    doc = formats.read_document(args.law)
    if not isinstance(doc, dict):
        raise StopkeyError(f"{args.law}: expected an object document")
    law = formats.parse_key_law(doc)
    slack = None if args.tail_slack is None else formats.parse_rational(args.tail_slack)
    verdict = verify_rsbs(law, max_depth=args.max_depth, tail_slack=slack)
    if args.format == "structured":
        _emit(formats.dumps(formats.rsbs_verdict_document(verdict)), args.out)
    else:
        lines = [
            f"valid: {verdict.valid}",
            f"checked prefixes: {verdict.checked_prefixes}",
            f"tail: {verdict.tail}",
        ]
        for v in verdict.violations:
            lines.append(
                f"violation at position {v.position} prefix {v.prefix!r}: "
                f"P(0)={v.p_zero} P(1)={v.p_one}"
            )
        _emit("\n".join(lines) + "\n", args.out)
    return 0 if verdict.valid else 2


def _cmd_bounds(args) -> int:
    kind, path = _source_args(args)
    source = formats.load_source(path)
    if isinstance(source, Pmf):
        from .harness import _diag_joint

        j = _diag_joint(source)
    else:
        j = source
    dash = bounds_dashboard(j, args.m)
    if args.format == "structured":
        _emit(formats.dumps(dash), args.out)
        return 0
    lines = [
        f"p = {dash['p_agree']}  I(X;Y) = {dash['mutual_information']:.10g}",
    ]
    if dash["conditional_entropy"] is not None:
        lines.append(
            f"H(X|X=Y) = {dash['conditional_entropy']:.10g}"
            f"  kappa = {dash['kappa']:.10g}"
        )
    for line in dash["lines"]:
        tag = " [vacuous]" if line.get("vacuous") else ""
        value = line["value"]
        shown = "n/a" if value is None else f"{value:.10g}"
        lines.append(f"({line['kind']}) {line['label']} = {shown}{tag}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_simulate(args) -> int:
    kind, path = _source_args(args)
    protocol = args.protocol
    if protocol is None:
        if kind == "dist":
            protocol = "common"
        else:
            protocol = "correlated" if args.reconciler else "almost"
    cfg = ExperimentConfig(
        protocol=protocol,
        source_path=path,
        m=args.m,
        w_max=args.w_max,
        trials=args.trials,
        seed=args.seed,
        reconciler=args.reconciler,
        hash_spec=args.hash_spec,
        out=args.out,
        format=args.format,
    )
    report = run_simulation(cfg)
    text = report.to_json() if args.format == "structured" else report.render_text()
    _emit(text, args.out)
    return 2 if report.violated else 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "decompose": _cmd_decompose,
        "keygen-common": _cmd_keygen_common,
        "keygen-almost": _cmd_keygen_almost,
        "keygen-correlated": _cmd_keygen_correlated,
        "verify-rsbs": _cmd_verify_rsbs,
        "bounds": _cmd_bounds,
        "simulate": _cmd_simulate,
        "report": _cmd_simulate,
    }
    try:
        return handlers[args.verb](args)
    except (StopkeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
