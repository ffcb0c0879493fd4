"""Server-side edit sessions: the authoritative cache of a workflow under
incremental modification.

Each session holds one live workflow, a revision counter, and an append-only
log of accepted change events. One handler per change kind validates the
change against the current state and produces a replacement workflow value;
rejected changes leave the session byte-identical. Replaying the accepted
log onto the session's initial snapshot always reproduces the live state,
which is what lets a remote canvas prove it mirrors the cache.
"""

from __future__ import annotations

import base64
import binascii
import threading
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Optional

from . import wire
from .errors import (
    InvariantViolation,
    MalformedPayload,
    NotFound,
    StaleRevision,
    ValidationError,
)
from .model import (
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
    empty_workflow,
    now_utc,
)
from .validation import Severity, check_connection, validate_structure


class ChangeKind(str, Enum):
    ADD_JOB = "add_job"
    REMOVE_JOB = "remove_job"
    MOVE_JOB = "move_job"
    RENAME_JOB = "rename_job"
    SET_JOB_DESCRIPTION = "set_job_description"
    ADD_PORT = "add_port"
    REMOVE_PORT = "remove_port"
    CHANGE_PORT_CONFIG = "change_port_config"
    ADD_CONNECTION = "add_connection"
    REMOVE_CONNECTION = "remove_connection"
    SET_JOB_CONFIG = "set_job_config"
    SET_PORT_BINDING = "set_port_binding"
    RENAME_WORKFLOW = "rename_workflow"


@dataclass(frozen=True)
class ChangeEvent:
    """One atomic edit; payloads are JSON-compatible mappings so events can
    travel the wire and be replayed verbatim."""

    kind: ChangeKind
    payload: Mapping[str, Any]
    expected_revision: int

    def __post_init__(self):
        if not isinstance(self.kind, ChangeKind):
            raise MalformedPayload(f"unknown change kind {self.kind!r}")
        if not isinstance(self.payload, Mapping):
            raise MalformedPayload("change payload must be a mapping")
        if (
            not isinstance(self.expected_revision, int)
            or isinstance(self.expected_revision, bool)
            or self.expected_revision < 0
        ):
            raise MalformedPayload("expected_revision must be a non-negative integer")


@dataclass(frozen=True)
class ChangeResult:
    revision: int
    digest: str
    created_id: Optional[int] = None
    cascaded_removals: tuple[int, ...] = ()


class EditSession:
    """Live workflow plus revision counter, id allocator and change log.

    Changes are strictly serialized per session; the model values themselves
    are immutable, so snapshots can be shared freely.
    """

    def __init__(self, workflow: ConcreteWorkflow):
        self.session_id = uuid.uuid4().hex
        self.initial = workflow
        self.revision = 0
        self.change_log: list[ChangeEvent] = []
        self._workflow = workflow
        self._next_id = max(workflow.graph.all_ids(), default=0) + 1
        self._lock = threading.RLock()

    # -- reads ---------------------------------------------------------

    def snapshot(self) -> ConcreteWorkflow:
        with self._lock:
            return self._workflow

    def digest(self) -> str:
        with self._lock:
            return wire.digest(self._workflow)

    # -- writes --------------------------------------------------------

    def apply_change(self, event: ChangeEvent) -> ChangeResult:
        """Dispatch one change to its handler.

        On success the revision increments by exactly one and the event is
        appended to the log; on any failure the session (including the id
        allocator) is left untouched.
        """
        with self._lock:
            if event.expected_revision != self.revision:
                raise StaleRevision(self.revision, event.expected_revision)
            handler = _HANDLERS[event.kind]
            saved_next_id = self._next_id
            try:
                workflow, created_id, cascaded = handler(self, self._workflow, dict(event.payload))
            except Exception:
                self._next_id = saved_next_id
                raise
            workflow = replace(workflow, modified_at=now_utc())
            state_digest = wire.digest(workflow)
            self._workflow = workflow
            self.revision += 1
            self.change_log.append(event)
            return ChangeResult(
                revision=self.revision,
                digest=state_digest,
                created_id=created_id,
                cascaded_removals=tuple(sorted(cascaded)),
            )

    def save(self, store) -> tuple[str, str]:
        """Persist the abstract graph under its name, then the concrete
        workflow referencing it. The session stays open."""
        with self._lock:
            w = self._workflow
            findings = validate_structure(w.graph)
            errors = [f for f in findings if f.severity is Severity.ERROR]
            if errors:
                raise ValidationError(errors[0].rule.value, errors[0].message, findings)
            if not w.graph.jobs:
                raise ValidationError(
                    "W1", "graph must contain at least one job to be saved", findings
                )
            graph_key = store.put_graph(w.graph)
            workflow_key = store.put_workflow(w)
            return graph_key, workflow_key

    # -- allocator -----------------------------------------------------

    def _alloc(self) -> int:
        node_id = self._next_id
        self._next_id += 1
        return node_id


def open_session(initial: Optional[ConcreteWorkflow], name: Optional[str] = None) -> EditSession:
    """Open a session on an existing workflow, or an empty one by name."""
    if initial is None:
        if not name:
            raise MalformedPayload("a new session needs a workflow name")
        initial = empty_workflow(name)
    else:
        findings = validate_structure(initial.graph)
        errors = [f for f in findings if f.severity is Severity.ERROR]
        if errors:
            raise InvariantViolation(errors[0].message, rule=errors[0].rule.value, findings=errors)
    return EditSession(initial)


# -- payload decoding ----------------------------------------------------

def _finish(payload):
    if payload:
        raise MalformedPayload(f"unexpected payload field {sorted(payload)[0]!r}")


def _req(payload, key):
    if key not in payload:
        raise MalformedPayload(f"missing payload field {key!r}")
    return payload.pop(key)


def _req_int(payload, key, minimum=0):
    value = _req(payload, key)
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise MalformedPayload(f"payload field {key!r} must be an integer >= {minimum}")
    return value


def _req_str(payload, key):
    value = _req(payload, key)
    if not isinstance(value, str):
        raise MalformedPayload(f"payload field {key!r} must be a string")
    return value


def _opt_str(payload, key, default=""):
    if key not in payload:
        return default
    return _req_str(payload, key)


def decode_binding(kind: PortKind, raw) -> Optional[InputBinding | OutputBinding]:
    """Decode the JSON shape of a port binding; None clears the binding."""
    if raw is None:
        return None
    if not isinstance(raw, Mapping):
        raise MalformedPayload("binding must be a mapping or null")
    data = dict(raw)
    try:
        if kind is PortKind.OUTPUT:
            binding = OutputBinding(filename=_req_str(data, "filename"))
        else:
            source = _req_str(data, "source")
            if source == BindingSource.CHANNEL.value:
                binding = InputBinding(BindingSource.CHANNEL)
            elif source == BindingSource.FILE.value:
                binding = InputBinding(BindingSource.FILE, path=_req_str(data, "path"))
            elif source == BindingSource.INLINE.value:
                encoded = _req_str(data, "content")
                try:
                    content = base64.b64decode(encoded.encode("ascii"), validate=True)
                except (binascii.Error, UnicodeEncodeError, ValueError):
                    raise MalformedPayload("inline binding content must be base64")
                binding = InputBinding(BindingSource.INLINE, content=content)
            else:
                raise MalformedPayload(f"unknown binding source {source!r}")
    except InvariantViolation as exc:
        raise MalformedPayload(str(exc)) from None
    _finish(data)
    return binding


def encode_binding(binding) -> Optional[dict]:
    if binding is None:
        return None
    if isinstance(binding, OutputBinding):
        return {"filename": binding.filename}
    if binding.source is BindingSource.FILE:
        return {"source": "file", "path": binding.path}
    if binding.source is BindingSource.INLINE:
        return {
            "source": "inline",
            "content": base64.b64encode(binding.content).decode("ascii"),
        }
    return {"source": "channel"}


def decode_config(raw) -> Optional[JobConfig]:
    """Decode the JSON shape of a job config; None clears the config."""
    if raw is None:
        return None
    if not isinstance(raw, Mapping):
        raise MalformedPayload("config must be a mapping or null")
    data = dict(raw)
    type_name = _req_str(data, "type")
    if type_name not in (ExecutableType.BINARY.value, ExecutableType.SCRIPT.value):
        raise MalformedPayload(f"unknown executable type {type_name!r}")
    try:
        config = JobConfig(
            executable_type=ExecutableType(type_name),
            executable=_req_str(data, "executable"),
            arguments=_opt_str(data, "arguments"),
            target=_opt_str(data, "target", "local"),
        )
    except InvariantViolation as exc:
        raise MalformedPayload(str(exc)) from None
    _finish(data)
    return config


def encode_config(config) -> Optional[dict]:
    if config is None:
        return None
    return {
        "type": config.executable_type.value,
        "executable": config.executable,
        "arguments": config.arguments,
        "target": config.target,
    }


# -- handlers ------------------------------------------------------------

def _get_job(graph: Graph, job_id: int) -> Job:
    job = graph.job(job_id)
    if job is None:
        raise NotFound("job", job_id)
    return job


def _get_port(job: Job, port_id: int) -> Port:
    port = job.port(port_id)
    if port is None:
        raise NotFound("port", port_id)
    return port


def _swap_job(graph: Graph, job: Job) -> Graph:
    jobs = tuple(j for j in graph.jobs if j.id != job.id) + (job,)
    return replace(graph, jobs=jobs)


def _new_entity(value, what):
    """Construct a model value from payload data, mapping field violations
    to payload errors."""
    try:
        return value()
    except InvariantViolation as exc:
        raise MalformedPayload(f"invalid {what}: {exc}") from None


def _check_job_name_free(graph: Graph, name: str, ignore_id=None):
    existing = graph.job_named(name)
    if existing is not None and existing.id != ignore_id:
        raise ValidationError("R7", f"job name {name!r} is already in use")


def _check_port_slot_free(job: Job, name: str, seq: int, ignore_id=None):
    for other in job.ports:
        if other.id == ignore_id:
            continue
        if other.name == name:
            raise ValidationError(
                "R1", f"port name {name!r} is already used on job {job.name!r}"
            )
        if other.seq == seq:
            raise ValidationError(
                "R1", f"port seq {seq} is already used on job {job.name!r}"
            )


def _add_job(session, w, p):
    name = _req_str(p, "name")
    description = _opt_str(p, "description")
    x = _req_int(p, "x")
    y = _req_int(p, "y")
    _finish(p)
    _check_job_name_free(w.graph, name)
    job = _new_entity(
        lambda: Job(session._alloc(), name, description, Position(x, y)), "job"
    )
    return w.with_graph(replace(w.graph, jobs=w.graph.jobs + (job,))), job.id, []


def _remove_job(session, w, p):
    job = _get_job(w.graph, _req_int(p, "job", 1))
    _finish(p)
    cascaded = [port.id for port in job.ports]
    kept_conns = []
    for conn in w.graph.connections:
        if conn.source.job_id == job.id or conn.target.job_id == job.id:
            cascaded.append(conn.id)
        else:
            kept_conns.append(conn)
    graph = replace(
        w.graph,
        jobs=tuple(j for j in w.graph.jobs if j.id != job.id),
        connections=tuple(kept_conns),
    )
    return w.with_graph(graph), None, cascaded


def _move_job(session, w, p):
    job = _get_job(w.graph, _req_int(p, "job", 1))
    x = _req_int(p, "x")
    y = _req_int(p, "y")
    _finish(p)
    moved = _new_entity(lambda: replace(job, position=Position(x, y)), "position")
    return w.with_graph(_swap_job(w.graph, moved)), None, []


def _rename_job(session, w, p):
    job = _get_job(w.graph, _req_int(p, "job", 1))
    name = _req_str(p, "name")
    _finish(p)
    _check_job_name_free(w.graph, name, ignore_id=job.id)
    renamed = _new_entity(lambda: replace(job, name=name), "job name")
    return w.with_graph(_swap_job(w.graph, renamed)), None, []


def _set_job_description(session, w, p):
    job = _get_job(w.graph, _req_int(p, "job", 1))
    description = _req_str(p, "description")
    _finish(p)
    changed = _new_entity(lambda: replace(job, description=description), "description")
    return w.with_graph(_swap_job(w.graph, changed)), None, []


def _add_port(session, w, p):
    job = _get_job(w.graph, _req_int(p, "job", 1))
    name = _req_str(p, "name")
    seq = _req_int(p, "seq")
    kind_name = _req_str(p, "kind")
    _finish(p)
    if kind_name not in (PortKind.INPUT.value, PortKind.OUTPUT.value):
        raise MalformedPayload(f"unknown port kind {kind_name!r}")
    _check_port_slot_free(job, name, seq)
    port = _new_entity(
        lambda: Port(session._alloc(), name, seq, PortKind(kind_name)), "port"
    )
    changed = replace(job, ports=job.ports + (port,))
    return w.with_graph(_swap_job(w.graph, changed)), port.id, []


def _remove_port(session, w, p):
    job = _get_job(w.graph, _req_int(p, "job", 1))
    port = _get_port(job, _req_int(p, "port", 1))
    _finish(p)
    cascaded = []
    kept_conns = []
    ref = PortRef(job.id, port.id)
    for conn in w.graph.connections:
        if conn.source == ref or conn.target == ref:
            cascaded.append(conn.id)
        else:
            kept_conns.append(conn)
    changed = replace(job, ports=tuple(pt for pt in job.ports if pt.id != port.id))
    graph = replace(_swap_job(w.graph, changed), connections=tuple(kept_conns))
    return w.with_graph(graph), None, cascaded


def _change_port_config(session, w, p):
    job = _get_job(w.graph, _req_int(p, "job", 1))
    port = _get_port(job, _req_int(p, "port", 1))
    name = _req_str(p, "name") if "name" in p else port.name
    seq = _req_int(p, "seq") if "seq" in p else port.seq
    binding = decode_binding(port.kind, p.pop("binding")) if "binding" in p else port.binding
    _finish(p)
    _check_port_slot_free(job, name, seq, ignore_id=port.id)
    changed_port = _new_entity(
        lambda: replace(port, name=name, seq=seq, binding=binding), "port"
    )
    changed = replace(
        job, ports=tuple(changed_port if pt.id == port.id else pt for pt in job.ports)
    )
    return w.with_graph(_swap_job(w.graph, changed)), None, []


def _add_connection(session, w, p):
    source = PortRef(_req_int(p, "from_job", 1), _req_int(p, "from_port", 1))
    target = PortRef(_req_int(p, "to_job", 1), _req_int(p, "to_port", 1))
    _finish(p)
    finding = check_connection(w.graph, source, target)
    if finding is not None:
        raise ValidationError(finding.rule.value, finding.message, [finding])
    conn = Connection(session._alloc(), source, target)
    graph = replace(w.graph, connections=w.graph.connections + (conn,))
    return w.with_graph(graph), conn.id, []


def _remove_connection(session, w, p):
    conn_id = _req_int(p, "connection", 1)
    _finish(p)
    conn = w.graph.connection(conn_id)
    if conn is None:
        raise NotFound("connection", conn_id)
    graph = replace(
        w.graph, connections=tuple(c for c in w.graph.connections if c.id != conn_id)
    )
    return w.with_graph(graph), None, []


def _set_job_config(session, w, p):
    job = _get_job(w.graph, _req_int(p, "job", 1))
    config = decode_config(_req(p, "config"))
    _finish(p)
    changed = replace(job, config=config)
    return w.with_graph(_swap_job(w.graph, changed)), None, []


def _set_port_binding(session, w, p):
    job = _get_job(w.graph, _req_int(p, "job", 1))
    port = _get_port(job, _req_int(p, "port", 1))
    binding = decode_binding(port.kind, _req(p, "binding"))
    _finish(p)
    changed_port = replace(port, binding=binding)
    changed = replace(
        job, ports=tuple(changed_port if pt.id == port.id else pt for pt in job.ports)
    )
    return w.with_graph(_swap_job(w.graph, changed)), None, []


def _rename_workflow(session, w, p):
    name = _req_str(p, "name")
    _finish(p)
    return _new_entity(lambda: replace(w, name=name), "workflow name"), None, []


_HANDLERS = {
    ChangeKind.ADD_JOB: _add_job,
    ChangeKind.REMOVE_JOB: _remove_job,
    ChangeKind.MOVE_JOB: _move_job,
    ChangeKind.RENAME_JOB: _rename_job,
    ChangeKind.SET_JOB_DESCRIPTION: _set_job_description,
    ChangeKind.ADD_PORT: _add_port,
    ChangeKind.REMOVE_PORT: _remove_port,
    ChangeKind.CHANGE_PORT_CONFIG: _change_port_config,
    ChangeKind.ADD_CONNECTION: _add_connection,
    ChangeKind.REMOVE_CONNECTION: _remove_connection,
    ChangeKind.SET_JOB_CONFIG: _set_job_config,
    ChangeKind.SET_PORT_BINDING: _set_port_binding,
    ChangeKind.RENAME_WORKFLOW: _rename_workflow,
}
