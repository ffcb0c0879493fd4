"""Canonical XML serialization, parsing, and state digests.

The format is self-contained and deterministic: fixed element and attribute
order, 2-space indent, LF line endings, UTF-8. Determinism is what makes the
SHA-256 digest usable as a state-equivalence check between a server cache
and an editor canvas.

Canonical grammar (attribute order as shown; ids are decimal integers)::

    <workflow fmt="1" name=".." graph=".." created=".." modified="..">
      <graph name=".." description="..">
        <job id=".." name=".." description=".." x=".." y="..">
          <port id=".." name=".." seq=".." kind="input|output"/>*
        </job>*
        <connection id=".." fromJob=".." fromPort=".." toJob=".." toPort=".."/>*
      </graph>
      <config>?
        <jobconfig job=".." type="binary|script" target="..">
          <exec encoding="text|base64">..</exec>
          <args>..</args>
        </jobconfig>*
        <binding job=".." port=".." source="channel|file|inline" value=".."/>*
      </config>
    </workflow>

Documents without a ``<config>`` section are legacy graph-only workflows and
parse with all configs and bindings absent. ``created``/``modified`` default
to the epoch when absent. Script bodies and inline binding payloads travel
as base64. Output-port bindings are written with ``source="file"`` and the
filename as ``value``; the port's kind disambiguates on parse.
"""

from __future__ import annotations

import base64
import hashlib
import re
import xml.etree.ElementTree as ET
from dataclasses import replace
from datetime import datetime, timezone

from .errors import InvariantViolation, MalformedXml, SchemaViolation
from .model import (
    EPOCH,
    BindingSource,
    ConcreteWorkflow,
    Connection,
    ExecutableType,
    Graph,
    InputBinding,
    Job,
    JobConfig,
    OutputBinding,
    Port,
    PortKind,
    PortRef,
    Position,
)
from .validation import Severity, has_errors, validate_structure

FORMAT_VERSION = "1"
_TIMESTAMP_FMT = "%Y-%m-%dT%H:%M:%SZ"
_INT_RE = re.compile(r"\A[0-9]+\Z")


def _attr(value: str) -> str:
    """Escape an attribute value; whitespace goes through character
    references so parsers cannot normalize it away."""
    value = (
        value.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
        .replace("\t", "&#9;")
        .replace("\n", "&#10;")
        .replace("\r", "&#13;")
    )
    return f'"{value}"'


def _text(value: str) -> str:
    return (
        value.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace("\r", "&#13;")
    )


def _fmt_ts(ts: datetime) -> str:
    return ts.strftime(_TIMESTAMP_FMT)


def serialize(workflow: ConcreteWorkflow) -> bytes:
    """Render a workflow to canonical XML bytes.

    Refuses structurally invalid models; serialize is a pure function of the
    value, so equal workflows always produce identical bytes.
    """
    findings = validate_structure(workflow.graph)
    errors = [f for f in findings if f.severity is Severity.ERROR]
    if errors:
        raise InvariantViolation(
            f"refusing to serialize invalid workflow: {errors[0].message}",
            rule=errors[0].rule.value,
            findings=errors,
        )

    g = workflow.graph
    out: list[str] = ['<?xml version="1.0" encoding="UTF-8"?>']
    out.append(
        f"<workflow fmt={_attr(FORMAT_VERSION)} name={_attr(workflow.name)}"
        f" graph={_attr(workflow.graph_name)}"
        f" created={_attr(_fmt_ts(workflow.created_at))}"
        f" modified={_attr(_fmt_ts(workflow.modified_at))}>"
    )

    graph_open = f"  <graph name={_attr(g.name)} description={_attr(g.description)}"
    if not g.jobs and not g.connections:
        out.append(graph_open + "/>")
    else:
        out.append(graph_open + ">")
        for job in g.jobs:
            job_open = (
                f"    <job id={_attr(str(job.id))} name={_attr(job.name)}"
                f" description={_attr(job.description)}"
                f" x={_attr(str(job.position.x))} y={_attr(str(job.position.y))}"
            )
            if not job.ports:
                out.append(job_open + "/>")
            else:
                out.append(job_open + ">")
                for port in job.ports:
                    out.append(
                        f"      <port id={_attr(str(port.id))} name={_attr(port.name)}"
                        f" seq={_attr(str(port.seq))} kind={_attr(port.kind.value)}/>"
                    )
                out.append("    </job>")
        for conn in g.connections:
            out.append(
                f"    <connection id={_attr(str(conn.id))}"
                f" fromJob={_attr(str(conn.source.job_id))}"
                f" fromPort={_attr(str(conn.source.port_id))}"
                f" toJob={_attr(str(conn.target.job_id))}"
                f" toPort={_attr(str(conn.target.port_id))}/>"
            )
        out.append("  </graph>")

    config_lines: list[str] = []
    for job in g.jobs:
        if job.config is None:
            continue
        cfg = job.config
        if cfg.executable_type is ExecutableType.SCRIPT:
            encoding = "base64"
            exec_text = base64.b64encode(cfg.executable.encode("utf-8")).decode("ascii")
        else:
            encoding = "text"
            exec_text = _text(cfg.executable)
        config_lines.append(
            f"    <jobconfig job={_attr(str(job.id))}"
            f" type={_attr(cfg.executable_type.value)} target={_attr(cfg.target)}>"
        )
        config_lines.append(f"      <exec encoding={_attr(encoding)}>{exec_text}</exec>")
        if cfg.arguments:
            config_lines.append(f"      <args>{_text(cfg.arguments)}</args>")
        else:
            config_lines.append("      <args/>")
        config_lines.append("    </jobconfig>")
    for job in g.jobs:
        for port in job.ports:
            if port.binding is None:
                continue
            if isinstance(port.binding, OutputBinding):
                source, value = "file", port.binding.filename
            elif port.binding.source is BindingSource.FILE:
                source, value = "file", port.binding.path
            elif port.binding.source is BindingSource.INLINE:
                source = "inline"
                value = base64.b64encode(port.binding.content).decode("ascii")
            else:
                source, value = "channel", ""
            config_lines.append(
                f"    <binding job={_attr(str(job.id))} port={_attr(str(port.id))}"
                f" source={_attr(source)} value={_attr(value)}/>"
            )
    if config_lines:
        out.append("  <config>")
        out.extend(config_lines)
        out.append("  </config>")

    out.append("</workflow>")
    return ("\n".join(out) + "\n").encode("utf-8")


def digest(workflow: ConcreteWorkflow) -> str:
    """SHA-256 over the canonical serialization with timestamps zeroed.

    Equal digests mean equal editable state; timestamps are bookkeeping, not
    state a canvas displays.
    """
    frozen = replace(workflow, created_at=EPOCH, modified_at=EPOCH)
    return hashlib.sha256(serialize(frozen)).hexdigest()


def parse(doc: bytes) -> ConcreteWorkflow:
    """Parse canonical (or legacy graph-only) XML into a workflow.

    Raises MalformedXml for syntax errors, SchemaViolation for documents
    that do not fit the grammar, and InvariantViolation (with the violated
    rule id and full findings) for schema-valid documents that break
    structural rules.
    """
    workflow, findings = parse_lenient(doc)
    errors = [f for f in findings if f.severity is Severity.ERROR]
    if errors:
        raise InvariantViolation(errors[0].message, rule=errors[0].rule.value, findings=errors)
    return workflow


def parse_lenient(doc) -> tuple[ConcreteWorkflow, list]:
    """Like :func:`parse` but reports structural rule violations as findings
    instead of raising, for validation front-ends."""
    if isinstance(doc, str):
        doc = doc.encode("utf-8")
    try:
        root = ET.fromstring(doc)
    except ET.ParseError as exc:
        raise MalformedXml(f"not well-formed XML: {exc}") from None

    workflow = _decode_workflow(root)
    return workflow, validate_structure(workflow.graph)


# -- decoding -----------------------------------------------------------

def _schema_error(path, message):
    raise SchemaViolation(path, message)


def _take_attrs(elem, path, required, optional=()):
    attrs = dict(elem.attrib)
    values = {}
    for name in required:
        if name not in attrs:
            _schema_error(path, f"missing attribute {name!r}")
        values[name] = attrs.pop(name)
    for name in optional:
        if name in attrs:
            values[name] = attrs.pop(name)
    if attrs:
        _schema_error(path, f"unexpected attribute {sorted(attrs)[0]!r}")
    return values


def _require_empty(elem, path):
    if (elem.text or "").strip() or any((c.tail or "").strip() for c in elem):
        _schema_error(path, "unexpected text content")


def _int_attr(values, name, path, minimum=0):
    raw = values[name]
    if not _INT_RE.match(raw):
        _schema_error(f"{path}/@{name}", f"expected a decimal integer, got {raw!r}")
    value = int(raw)
    if value < minimum:
        _schema_error(f"{path}/@{name}", f"value {value} below minimum {minimum}")
    return value


def _parse_ts(raw, path):
    try:
        return datetime.strptime(raw, _TIMESTAMP_FMT).replace(tzinfo=timezone.utc)
    except ValueError:
        _schema_error(path, f"expected UTC timestamp like 1970-01-01T00:00:00Z, got {raw!r}")


def _decode_workflow(root) -> ConcreteWorkflow:
    if root.tag != "workflow":
        _schema_error("workflow", f"root element must be <workflow>, got <{root.tag}>")
    attrs = _take_attrs(root, "workflow", ["fmt", "name"], ["graph", "created", "modified"])
    if attrs["fmt"] != FORMAT_VERSION:
        _schema_error("workflow/@fmt", f"unsupported format version {attrs['fmt']!r}")
    _require_empty(root, "workflow")

    graph_elem = None
    config_elem = None
    for child in root:
        if child.tag == "graph" and graph_elem is None:
            graph_elem = child
        elif child.tag == "config" and config_elem is None and graph_elem is not None:
            config_elem = child
        else:
            _schema_error("workflow", f"unexpected element <{child.tag}>")
    if graph_elem is None:
        _schema_error("workflow", "missing <graph> element")

    jobs_raw, conns_raw = _decode_graph(graph_elem)
    configs, bindings = ({}, {}) if config_elem is None else _decode_config(
        config_elem, jobs_raw
    )

    jobs = []
    for raw in jobs_raw:
        ports = []
        for praw in raw["ports"]:
            binding = bindings.get((raw["id"], praw["id"]))
            try:
                ports.append(Port(praw["id"], praw["name"], praw["seq"], praw["kind"], binding))
            except InvariantViolation as exc:
                _schema_error(praw["path"], str(exc))
        try:
            jobs.append(
                Job(
                    id=raw["id"],
                    name=raw["name"],
                    description=raw["description"],
                    position=Position(raw["x"], raw["y"]),
                    ports=tuple(ports),
                    config=configs.get(raw["id"]),
                )
            )
        except InvariantViolation as exc:
            _schema_error(raw["path"], str(exc))

    connections = []
    for raw in conns_raw:
        connections.append(
            Connection(
                id=raw["id"],
                source=PortRef(raw["fromJob"], raw["fromPort"]),
                target=PortRef(raw["toJob"], raw["toPort"]),
            )
        )

    gattrs = graph_elem.attrib
    try:
        graph = Graph(
            name=gattrs.get("name", ""),
            description=gattrs.get("description", ""),
            jobs=tuple(jobs),
            connections=tuple(connections),
        )
    except InvariantViolation as exc:
        _schema_error("workflow/graph", str(exc))

    try:
        return ConcreteWorkflow(
            name=attrs["name"],
            graph=graph,
            graph_name=attrs.get("graph", graph.name),
            created_at=_parse_ts(attrs["created"], "workflow/@created") if "created" in attrs else EPOCH,
            modified_at=_parse_ts(attrs["modified"], "workflow/@modified") if "modified" in attrs else EPOCH,
        )
    except InvariantViolation as exc:
        _schema_error("workflow", str(exc))


def _decode_graph(graph_elem):
    _take_attrs(graph_elem, "workflow/graph", ["name"], ["description"])
    _require_empty(graph_elem, "workflow/graph")
    jobs_raw = []
    conns_raw = []
    seen_ids = set()

    def claim_id(node_id, path):
        if node_id in seen_ids:
            _schema_error(path, f"duplicate node id {node_id}")
        seen_ids.add(node_id)
        return node_id

    job_index = 0
    conn_index = 0
    for child in graph_elem:
        if child.tag == "job":
            if conns_raw:
                _schema_error("workflow/graph", "<job> elements must precede <connection> elements")
            job_index += 1
            path = f"workflow/graph/job[{job_index}]"
            values = _take_attrs(child, path, ["id", "name", "x", "y"], ["description"])
            _require_empty(child, path)
            ports = []
            port_index = 0
            for pchild in child:
                if pchild.tag != "port":
                    _schema_error(path, f"unexpected element <{pchild.tag}>")
                port_index += 1
                ppath = f"{path}/port[{port_index}]"
                pvalues = _take_attrs(pchild, ppath, ["id", "name", "seq", "kind"])
                _require_empty(pchild, ppath)
                if len(pchild):
                    _schema_error(ppath, "port elements have no children")
                if pvalues["kind"] not in (PortKind.INPUT.value, PortKind.OUTPUT.value):
                    _schema_error(f"{ppath}/@kind", f"unknown port kind {pvalues['kind']!r}")
                ports.append(
                    {
                        "id": claim_id(_int_attr(pvalues, "id", ppath, 1), ppath),
                        "name": pvalues["name"],
                        "seq": _int_attr(pvalues, "seq", ppath),
                        "kind": PortKind(pvalues["kind"]),
                        "path": ppath,
                    }
                )
            jobs_raw.append(
                {
                    "id": claim_id(_int_attr(values, "id", path, 1), path),
                    "name": values["name"],
                    "description": values.get("description", ""),
                    "x": _int_attr(values, "x", path),
                    "y": _int_attr(values, "y", path),
                    "ports": ports,
                    "path": path,
                }
            )
        elif child.tag == "connection":
            conn_index += 1
            path = f"workflow/graph/connection[{conn_index}]"
            values = _take_attrs(child, path, ["id", "fromJob", "fromPort", "toJob", "toPort"])
            _require_empty(child, path)
            if len(child):
                _schema_error(path, "connection elements have no children")
            conns_raw.append(
                {
                    "id": claim_id(_int_attr(values, "id", path, 1), path),
                    "fromJob": _int_attr(values, "fromJob", path, 1),
                    "fromPort": _int_attr(values, "fromPort", path, 1),
                    "toJob": _int_attr(values, "toJob", path, 1),
                    "toPort": _int_attr(values, "toPort", path, 1),
                }
            )
        else:
            _schema_error("workflow/graph", f"unexpected element <{child.tag}>")
    return jobs_raw, conns_raw


def _decode_config(config_elem, jobs_raw):
    _take_attrs(config_elem, "workflow/config", [])
    _require_empty(config_elem, "workflow/config")
    jobs_by_id = {raw["id"]: raw for raw in jobs_raw}
    ports_by_ref = {
        (raw["id"], praw["id"]): praw for raw in jobs_raw for praw in raw["ports"]
    }

    configs = {}
    bindings = {}
    cfg_index = 0
    bind_index = 0
    seen_binding_done = False
    for child in config_elem:
        if child.tag == "jobconfig":
            if seen_binding_done:
                _schema_error("workflow/config", "<jobconfig> elements must precede <binding> elements")
            cfg_index += 1
            path = f"workflow/config/jobconfig[{cfg_index}]"
            values = _take_attrs(child, path, ["job", "type", "target"])
            _require_empty(child, path)
            job_id = _int_attr(values, "job", path, 1)
            if job_id not in jobs_by_id:
                _schema_error(f"{path}/@job", f"unknown job id {job_id}")
            if job_id in configs:
                _schema_error(path, f"duplicate jobconfig for job id {job_id}")
            if values["type"] not in (ExecutableType.BINARY.value, ExecutableType.SCRIPT.value):
                _schema_error(f"{path}/@type", f"unknown executable type {values['type']!r}")
            exec_type = ExecutableType(values["type"])

            exec_elem = None
            args_elem = None
            for sub in child:
                if sub.tag == "exec" and exec_elem is None:
                    exec_elem = sub
                elif sub.tag == "args" and args_elem is None and exec_elem is not None:
                    args_elem = sub
                else:
                    _schema_error(path, f"unexpected element <{sub.tag}>")
            if exec_elem is None or args_elem is None:
                _schema_error(path, "jobconfig requires <exec> then <args>")
            evalues = _take_attrs(exec_elem, f"{path}/exec", ["encoding"])
            _take_attrs(args_elem, f"{path}/args", [])
            if len(exec_elem) or len(args_elem):
                _schema_error(path, "exec/args elements have no children")
            raw_exec = exec_elem.text or ""
            if evalues["encoding"] == "base64":
                executable = _b64_text(raw_exec, f"{path}/exec")
            elif evalues["encoding"] == "text":
                executable = raw_exec
            else:
                _schema_error(f"{path}/exec/@encoding", f"unknown encoding {evalues['encoding']!r}")
            try:
                configs[job_id] = JobConfig(
                    executable_type=exec_type,
                    executable=executable,
                    arguments=args_elem.text or "",
                    target=values["target"],
                )
            except InvariantViolation as exc:
                _schema_error(path, str(exc))
        elif child.tag == "binding":
            seen_binding_done = True
            bind_index += 1
            path = f"workflow/config/binding[{bind_index}]"
            values = _take_attrs(child, path, ["job", "port", "source", "value"])
            _require_empty(child, path)
            if len(child):
                _schema_error(path, "binding elements have no children")
            job_id = _int_attr(values, "job", path, 1)
            port_id = _int_attr(values, "port", path, 1)
            praw = ports_by_ref.get((job_id, port_id))
            if praw is None:
                _schema_error(path, f"unknown port {port_id} on job {job_id}")
            if (job_id, port_id) in bindings:
                _schema_error(path, f"duplicate binding for port {port_id} on job {job_id}")
            source = values["source"]
            value = values["value"]
            try:
                if praw["kind"] is PortKind.OUTPUT:
                    if source != "file":
                        _schema_error(f"{path}/@source", "output port bindings use source=\"file\"")
                    binding = OutputBinding(filename=value)
                elif source == "channel":
                    if value:
                        _schema_error(f"{path}/@value", "channel bindings carry no value")
                    binding = InputBinding(BindingSource.CHANNEL)
                elif source == "file":
                    binding = InputBinding(BindingSource.FILE, path=value)
                elif source == "inline":
                    binding = InputBinding(
                        BindingSource.INLINE,
                        content=_b64_bytes(value, f"{path}/@value"),
                    )
                else:
                    _schema_error(f"{path}/@source", f"unknown binding source {source!r}")
            except InvariantViolation as exc:
                _schema_error(path, str(exc))
            bindings[(job_id, port_id)] = binding
        else:
            _schema_error("workflow/config", f"unexpected element <{child.tag}>")
    return configs, bindings


def _b64_bytes(raw, path):
    try:
        return base64.b64decode(raw.strip().encode("ascii"), validate=True)
    except Exception:
        _schema_error(path, "invalid base64 payload")


def _b64_text(raw, path):
    try:
        return _b64_bytes(raw, path).decode("utf-8")
    except UnicodeDecodeError:
        _schema_error(path, "base64 payload is not valid UTF-8")
