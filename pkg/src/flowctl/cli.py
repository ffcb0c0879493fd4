"""Command line entry points.

Exit codes are uniform across subcommands: 0 for success, 1 for an
operational failure (validation errors, failed jobs, missing names), 2 for
input that could not even be parsed against the document schema.
"""

from __future__ import annotations

import argparse
import socket
import sys
from pathlib import Path

from . import wire
from .errors import (
    FlowError,
    InvariantViolation,
    MalformedXml,
    NotFound,
    SchemaViolation,
    SubmitRejected,
)
from .executor import execute
from .store import Store
from .validation import Severity, validate_concrete, validate_structure

DEFAULT_STORE = "flowctl-data"


def _read_doc(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(2)


def _parse_doc(data: bytes):
    """Decode a document for validation, keeping rule findings reportable."""
    try:
        return wire.parse_lenient(data)
    except (MalformedXml, SchemaViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(2)


def _print_findings(findings) -> None:
    for finding in findings:
        print(finding.render())


def cmd_validate(args) -> int:
    workflow, _ = _parse_doc(_read_doc(args.file))
    if args.mode == "graph":
        findings = validate_structure(workflow.graph)
    else:
        findings = validate_concrete(workflow)
    _print_findings(findings)
    errors = [f for f in findings if f.severity is Severity.ERROR]
    if errors:
        return 1
    print(f"{args.file}: ok ({args.mode} mode)")
    return 0


def cmd_run(args) -> int:
    workflow, _ = _parse_doc(_read_doc(args.file))
    store = Store(args.store)

    def show(t):
        line = f"{t.job} {t.state.value}"
        if t.detail:
            line += f" ({t.detail})"
        print(line, flush=True)

    try:
        record = execute(
            workflow,
            store,
            parallel=args.parallel,
            on_transition=show,
            job_timeout=args.job_timeout,
        )
    except SubmitRejected as exc:
        _print_findings(exc.findings)
        print("error: workflow rejected, nothing was run", file=sys.stderr)
        return 2
    print(f"run {record.run_id}: {'finished' if record.succeeded() else 'failed'}")
    print(f"workdir {record.workdir}")
    return 0 if record.succeeded() else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1
    finally:
        probe.close()

    app = create_app(args.store, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_import(args) -> int:
    try:
        workflow = wire.parse(_read_doc(args.file))
    except (MalformedXml, SchemaViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        _print_findings(exc.findings)
        print("error: document violates structural rules", file=sys.stderr)
        return 2
    store = Store(args.store)
    store.put_graph(workflow.graph)
    key = store.put_workflow(workflow)
    print(f"imported workflow {key} (graph {workflow.graph.name})")
    return 0


def cmd_export(args) -> int:
    store = Store(args.store)
    try:
        workflow = store.get_workflow(args.name)
    except NotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    data = wire.serialize(workflow)
    if args.output:
        Path(args.output).write_bytes(data)
        print(f"wrote {args.output}")
    else:
        sys.stdout.buffer.write(data)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowctl",
        description="Edit, validate, store and run workflow documents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a workflow document against the rules")
    p.add_argument("file")
    p.add_argument(
        "--mode",
        choices=["graph", "workflow"],
        default="workflow",
        help="graph checks structure only; workflow also checks runnability",
    )
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="execute a workflow document locally")
    p.add_argument("file")
    p.add_argument("--store", default=DEFAULT_STORE)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--job-timeout", type=float, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--store", default=DEFAULT_STORE)
    p.add_argument("--ui-dir", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("import", help="store a workflow document")
    p.add_argument("file")
    p.add_argument("--store", default=DEFAULT_STORE)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("export", help="print a stored workflow as XML")
    p.add_argument("name")
    p.add_argument("--store", default=DEFAULT_STORE)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except FlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
