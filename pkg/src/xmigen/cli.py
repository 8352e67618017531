"""Command-line entry point.

Exit codes: 0 success, 1 the run produced error diagnostics (outputs are
still written), 2 usage or I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .cim import load_cim, validate_structure
from .compiler import compile_cim
from .diagnostics import has_errors, write_jsonl
from .ecore import load_ecore
from .evaluator import ReplayCompleter, evaluate, run_benchmark
from .exceptions import GenerationFailed, XmigenError
from .llm import generate_instance_model, load_config, load_examples
from .plantuml import render_plantuml
from .xmi import load_xmi, parse_xmi, serialize_xmi

logger = logging.getLogger("xmigen")

OK, DIAGNOSTIC_ERRORS, FAILURE = 0, 1, 2


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_log(path: Optional[str], diagnostics) -> None:
    if path is not None:
        with open(path, "w", encoding="utf-8") as fp:
            write_jsonl(diagnostics, fp)


def cmd_ecore2puml(args) -> int:
    _write(args.out, render_plantuml(load_ecore(args.ecore)))
    return OK


def cmd_validate_cim(args) -> int:
    cim, diags = load_cim(args.cim)
    diags += validate_structure(cim)
    if args.ecore:
        diags += compile_cim(load_ecore(args.ecore), cim).diagnostics
    for d in diags:
        logger.info("%s", d)
    write_jsonl(diags, sys.stdout)
    return DIAGNOSTIC_ERRORS if has_errors(diags) else OK


def cmd_compile(args) -> int:
    m = load_ecore(args.ecore)
    cim, parse_diags = load_cim(args.cim)
    report = compile_cim(m, cim)
    diags = parse_diags + report.diagnostics
    _write(args.out, serialize_xmi(report, m))
    _write_log(args.log, diags)
    for d in diags:
        logger.info("%s", d)
    c = report.counts
    logger.info(
        "objects %d/%d, attributes %d/%d, associations %d/%d",
        c["objects"].accepted, c["objects"].attempted,
        c["attributes"].accepted, c["attributes"].attempted,
        c["associations"].accepted, c["associations"].attempted,
    )
    return DIAGNOSTIC_ERRORS if has_errors(diags) else OK


def cmd_generate(args) -> int:
    m = load_ecore(args.ecore)
    spec = Path(args.spec).read_text(encoding="utf-8")
    config = load_config(args.config)
    examples = load_examples(args.examples) if args.examples else []
    try:
        trace = generate_instance_model(m, spec, examples, config)
    except GenerationFailed as exc:
        logger.error("generation failed: %s", exc)
        if args.trace and exc.trace is not None:
            _write(args.trace, json.dumps(exc.trace.to_dict(), indent=2) + "\n")
        return DIAGNOSTIC_ERRORS
    if args.trace:
        _write(args.trace, json.dumps(trace.to_dict(), indent=2) + "\n")
    _write(args.out, serialize_xmi(trace.report, m))
    diags = trace.parse_diagnostics + trace.report.diagnostics
    _write_log(args.log, diags)
    logger.info("%d attempt(s), GA %.3f", trace.attempts, float(trace.report.grammatical_accuracy()))
    return DIAGNOSTIC_ERRORS if has_errors(diags) else OK


def cmd_eval(args) -> int:
    m = load_ecore(args.ecore)
    reference = load_xmi(args.reference, m)
    report = None
    result: dict = {}
    if args.generated.endswith(".json"):
        cim, _ = load_cim(args.generated)
        report = compile_cim(m, cim)
        generated = report.model
        try:
            parse_xmi(serialize_xmi(report, m), m)
            result["valid"] = True
        except XmigenError as exc:
            result["valid"] = False
            result["note"] = str(exc)
    else:
        try:
            generated = load_xmi(args.generated, m)
            result["valid"] = True
        except XmigenError as exc:
            result.update(valid=False, note=f"{type(exc).__name__}: {exc}", metrics=None)
            _write(args.out, json.dumps(result, indent=2) + "\n")
            return DIAGNOSTIC_ERRORS
    metrics, match, gen, truth = evaluate(generated, reference, m, report)
    result["metrics"] = metrics.to_dict()
    result["sizes"] = {
        "generated": {c: gen.size(c) for c in ("objects", "attributes", "associations")},
        "reference": {c: truth.size(c) for c in ("objects", "attributes", "associations")},
        "matched": match.matched,
    }
    result["ambiguousKeys"] = gen.ambiguous or truth.ambiguous
    _write(args.out, json.dumps(result, indent=2) + "\n")
    return OK if result["valid"] else DIAGNOSTIC_ERRORS


def cmd_bench(args) -> int:
    config = load_config(args.config) if args.config else None
    complete = ReplayCompleter(args.mock) if args.mock else None
    examples = load_examples(args.examples) if args.examples else []
    batch = run_benchmark(
        args.dataset, config, examples=examples, complete=complete, out_dir=args.out, jobs=args.jobs
    )
    logger.info("VR %d/%d = %.3f", batch.valid_count, batch.task_count, float(batch.validity_rate))
    if args.out is None:
        sys.stdout.write(batch.to_json())
    return OK if batch.valid_count == batch.task_count else DIAGNOSTIC_ERRORS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xmigen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log every diagnostic to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ecore2puml", parents=[common], help="render a metamodel as PlantUML")
    p.add_argument("--ecore", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ecore2puml)

    p = sub.add_parser("validate-cim", parents=[common], help="check a conceptual instance model")
    p.add_argument("--cim", required=True)
    p.add_argument("--ecore", help="also compile against this metamodel")
    p.set_defaults(func=cmd_validate_cim)

    p = sub.add_parser("compile", parents=[common], help="compile a CIM to XMI")
    p.add_argument("--ecore", required=True)
    p.add_argument("--cim", required=True)
    p.add_argument("--out", help="XMI output file (default stdout)")
    p.add_argument("--log", help="diagnostics as JSON lines")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("generate", parents=[common], help="generate an instance model with an LLM")
    p.add_argument("--ecore", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--examples", help="directory of few-shot example directories")
    p.add_argument("--out", help="XMI output file (default stdout)")
    p.add_argument("--trace", help="write the generation trace (JSON) here")
    p.add_argument("--log", help="diagnostics as JSON lines")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", parents=[common], help="score a generated model against a reference")
    p.add_argument("--ecore", required=True)
    p.add_argument("--generated", required=True, help=".xmi file or CIM .json file")
    p.add_argument("--reference", required=True)
    p.add_argument("--out", help="report.json path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="run a dataset of tasks")
    p.add_argument("--dataset", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="LLM config JSON")
    src.add_argument("--mock", help="directory of canned responses <task>.txt")
    p.add_argument("--examples", help="directory of few-shot example directories")
    p.add_argument("--out", help="output directory for report.json, tasks.csv and per-task files")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (XmigenError, OSError, ValueError) as exc:
        print(f"xmigen {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return FAILURE


if __name__ == "__main__":
    sys.exit(main())
