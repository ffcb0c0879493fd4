"""In-memory data model for abstract graphs and concrete workflows.

All types are immutable values; editing happens in :mod:`flowctl.session`
by constructing replacement values. Constructors enforce local field
constraints (charset, lengths, ranges) and canonical ordering. Cross-object
structural rules (port uniqueness, direction, acyclicity, ...) are owned by
:mod:`flowctl.validation` so that decoded-but-invalid structures remain
representable and reportable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Optional, Union

from .errors import DanglingConnection, InvariantViolation, NotFound

# Names are restricted so entity names can double as file names and XML
# attribute values without escaping surprises.
# \Z, not $: $ would let a trailing newline through.
NAME_RE = re.compile(r"\A[A-Za-z0-9_.\-]{1,64}\Z")

MAX_COORD = 2**31 - 1
MAX_DESCRIPTION = 1024
MAX_FILENAME = 255

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

# XML 1.0 cannot carry most control characters, even escaped.
_XML_UNSAFE = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f]")


def now_utc() -> datetime:
    """Current UTC time at second precision (the wire format's resolution)."""
    return datetime.now(timezone.utc).replace(microsecond=0)


def _check_name(value, what):
    if not isinstance(value, str) or not NAME_RE.match(value):
        raise InvariantViolation(
            f"{what} must match [A-Za-z0-9_.-]{{1,64}}, got {value!r}"
        )


def _check_text(value, what, limit=None):
    if not isinstance(value, str):
        raise InvariantViolation(f"{what} must be a string")
    if limit is not None and len(value) > limit:
        raise InvariantViolation(f"{what} longer than {limit} characters")
    if _XML_UNSAFE.search(value):
        raise InvariantViolation(f"{what} contains characters not representable in XML")


def _check_timestamp(value, what):
    if not isinstance(value, datetime) or value.tzinfo is None:
        raise InvariantViolation(f"{what} must be a timezone-aware datetime")
    if value.utcoffset().total_seconds() != 0:
        raise InvariantViolation(f"{what} must be UTC")
    if value.microsecond != 0:
        raise InvariantViolation(f"{what} must have second precision")


class PortKind(str, Enum):
    INPUT = "input"
    OUTPUT = "output"


class ExecutableType(str, Enum):
    BINARY = "binary"
    SCRIPT = "script"


class BindingSource(str, Enum):
    CHANNEL = "channel"
    FILE = "file"
    INLINE = "inline"


@dataclass(frozen=True)
class Position:
    """Canvas placement; presentational only, never affects execution."""

    x: int
    y: int

    def __post_init__(self):
        for label, v in (("x", self.x), ("y", self.y)):
            if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v <= MAX_COORD:
                raise InvariantViolation(f"position {label} must be an integer in [0, 2^31)")


@dataclass(frozen=True)
class InputBinding:
    """Data source for an input port: an upstream channel, a local file,
    or inline content materialized at staging time."""

    source: BindingSource
    path: str = ""
    content: bytes = b""

    def __post_init__(self):
        if not isinstance(self.source, BindingSource):
            raise InvariantViolation("input binding source must be a BindingSource")
        if self.source is BindingSource.FILE:
            _check_text(self.path, "input binding path")
            if not self.path:
                raise InvariantViolation("file binding requires a non-empty path")
            if self.content:
                raise InvariantViolation("file binding carries no inline content")
        elif self.source is BindingSource.INLINE:
            if not isinstance(self.content, bytes):
                raise InvariantViolation("inline binding content must be bytes")
            if self.path:
                raise InvariantViolation("inline binding carries no path")
        else:  # CHANNEL
            if self.path or self.content:
                raise InvariantViolation("channel binding carries no payload")


@dataclass(frozen=True)
class OutputBinding:
    """Name of the file a job must produce on the owning output port."""

    filename: str

    def __post_init__(self):
        _check_text(self.filename, "output filename", MAX_FILENAME)
        if not self.filename:
            raise InvariantViolation("output filename must be non-empty")
        if "/" in self.filename or "\\" in self.filename:
            raise InvariantViolation("output filename must not contain path separators")
        if self.filename in (".", ".."):
            raise InvariantViolation("output filename must name a plain file")


PortBinding = Union[InputBinding, OutputBinding]


@dataclass(frozen=True)
class Port:
    id: int
    name: str
    seq: int
    kind: PortKind
    binding: Optional[PortBinding] = None

    def __post_init__(self):
        _check_id(self.id, "port id")
        _check_name(self.name, "port name")
        if not isinstance(self.seq, int) or isinstance(self.seq, bool) or not 0 <= self.seq <= MAX_COORD:
            raise InvariantViolation("port seq must be an integer in [0, 2^31)")
        if not isinstance(self.kind, PortKind):
            raise InvariantViolation("port kind must be a PortKind")
        if self.binding is not None:
            if self.kind is PortKind.INPUT and not isinstance(self.binding, InputBinding):
                raise InvariantViolation("input port requires an input binding")
            if self.kind is PortKind.OUTPUT and not isinstance(self.binding, OutputBinding):
                raise InvariantViolation("output port requires an output binding")


@dataclass(frozen=True)
class JobConfig:
    """Execution configuration: what to run and where."""

    executable_type: ExecutableType
    executable: str
    arguments: str = ""
    target: str = "local"

    def __post_init__(self):
        if not isinstance(self.executable_type, ExecutableType):
            raise InvariantViolation("executable type must be an ExecutableType")
        if not isinstance(self.executable, str) or not self.executable:
            raise InvariantViolation("executable must be a non-empty string")
        if self.executable_type is ExecutableType.BINARY:
            # Binary paths travel as XML text; script bodies travel base64.
            _check_text(self.executable, "executable path")
        _check_text(self.arguments, "arguments")
        _check_name(self.target, "target")


@dataclass(frozen=True)
class Job:
    id: int
    name: str
    description: str
    position: Position
    ports: tuple[Port, ...] = ()
    config: Optional[JobConfig] = None

    def __post_init__(self):
        _check_id(self.id, "job id")
        _check_name(self.name, "job name")
        _check_text(self.description, "job description", MAX_DESCRIPTION)
        if self.config is not None and not isinstance(self.config, JobConfig):
            raise InvariantViolation("job config must be a JobConfig")
        # Canonical port order: ascending seq (name/id break pre-validation ties).
        ports = tuple(sorted(self.ports, key=lambda p: (p.seq, p.name, p.id)))
        object.__setattr__(self, "ports", ports)

    def port(self, port_id: int) -> Optional[Port]:
        for p in self.ports:
            if p.id == port_id:
                return p
        return None


@dataclass(frozen=True)
class PortRef:
    """Address of one port: (job id, port id)."""

    job_id: int
    port_id: int

    def __post_init__(self):
        _check_id(self.job_id, "job id")
        _check_id(self.port_id, "port id")


@dataclass(frozen=True)
class Connection:
    id: int
    source: PortRef
    target: PortRef

    def __post_init__(self):
        _check_id(self.id, "connection id")
        if not isinstance(self.source, PortRef) or not isinstance(self.target, PortRef):
            raise InvariantViolation("connection endpoints must be PortRefs")


@dataclass(frozen=True)
class Graph:
    """Abstract workflow: topology and geometry, no execution detail."""

    name: str
    description: str = ""
    jobs: tuple[Job, ...] = ()
    connections: tuple[Connection, ...] = ()

    def __post_init__(self):
        _check_name(self.name, "graph name")
        _check_text(self.description, "graph description")
        jobs = tuple(sorted(self.jobs, key=lambda j: (j.name, j.id)))
        conns = tuple(
            sorted(
                self.connections,
                key=lambda c: (
                    c.source.job_id,
                    c.source.port_id,
                    c.target.job_id,
                    c.target.port_id,
                    c.id,
                ),
            )
        )
        object.__setattr__(self, "jobs", jobs)
        object.__setattr__(self, "connections", conns)
        # One id space per workflow: jobs, ports and connections never collide.
        seen: set[int] = set()
        for node_id in self.all_ids():
            if node_id in seen:
                raise InvariantViolation(f"duplicate node id {node_id}")
            seen.add(node_id)

    def all_ids(self):
        for job in self.jobs:
            yield job.id
            for port in job.ports:
                yield port.id
        for conn in self.connections:
            yield conn.id

    def job(self, job_id: int) -> Optional[Job]:
        for j in self.jobs:
            if j.id == job_id:
                return j
        return None

    def job_named(self, name: str) -> Optional[Job]:
        for j in self.jobs:
            if j.name == name:
                return j
        return None

    def connection(self, conn_id: int) -> Optional[Connection]:
        for c in self.connections:
            if c.id == conn_id:
                return c
        return None


@dataclass(frozen=True)
class ConcreteWorkflow:
    """A graph plus execution configuration; the submittable entity.

    ``graph_name`` records the abstract graph this workflow was promoted
    from and is normally the embedded graph's own name.
    """

    name: str
    graph: Graph
    graph_name: str
    created_at: datetime = field(default_factory=now_utc)
    modified_at: datetime = field(default_factory=now_utc)

    def __post_init__(self):
        _check_name(self.name, "workflow name")
        _check_name(self.graph_name, "graph name reference")
        if not isinstance(self.graph, Graph):
            raise InvariantViolation("workflow graph must be a Graph")
        _check_timestamp(self.created_at, "created_at")
        _check_timestamp(self.modified_at, "modified_at")

    def with_graph(self, graph: Graph) -> "ConcreteWorkflow":
        return replace(self, graph=graph, modified_at=now_utc())


def _check_id(value, what):
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise InvariantViolation(f"{what} must be a positive integer")


def empty_workflow(name: str) -> ConcreteWorkflow:
    """A fresh workflow whose graph shares its name."""
    ts = now_utc()
    return ConcreteWorkflow(
        name=name,
        graph=Graph(name=name),
        graph_name=name,
        created_at=ts,
        modified_at=ts,
    )


def resolve_port(graph: Graph, job_id: int, port_id: int) -> Port:
    """Look up a port by (job id, port id); pure."""
    job = graph.job(job_id)
    if job is None:
        raise NotFound("job", job_id)
    port = job.port(port_id)
    if port is None:
        raise NotFound("port", port_id)
    return port


def dependency_edges(graph: Graph) -> set[tuple[int, int]]:
    """Job-level dependency relation: (producer job id, consumer job id).

    Duplicates collapse; self-edges can appear for graphs that have not
    passed validation.
    """
    edges = set()
    for conn in graph.connections:
        for ref in (conn.source, conn.target):
            job = graph.job(ref.job_id)
            if job is None or job.port(ref.port_id) is None:
                raise DanglingConnection(
                    f"connection {conn.id} references missing port "
                    f"{ref.port_id} on job {ref.job_id}"
                )
        edges.add((conn.source.job_id, conn.target.job_id))
    return edges
