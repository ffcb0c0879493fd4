"""Structural and submission-readiness rule engine.

Rules produce :class:`Finding` records instead of raising, so callers can
report everything at once. Structural rules (R1-R7) gate saving and every
edit; concrete rules (C1-C4) gate submission; warnings (W1, W2) never block
anything except W1, which the session escalates on save.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .model import (
    BindingSource,
    ConcreteWorkflow,
    Graph,
    PortKind,
    PortRef,
)


class Rule(Enum):
    PORT_UNIQUENESS = "R1"
    DIRECTION = "R2"
    INPUT_FAN_IN = "R3"
    ACYCLIC = "R4"
    DANGLING = "R5"
    DUPLICATE_EDGE = "R6"
    JOB_NAME_UNIQUE = "R7"
    EXEC_MISSING = "C1"
    INPUT_UNBOUND = "C2"
    CHANNEL_MISMATCH = "C3"
    OUTPUT_FILENAME_MISSING = "C4"
    EMPTY_GRAPH = "W1"
    ISOLATED_JOB = "W2"


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


_RULE_ORDER = {rule: i for i, rule in enumerate(Rule)}


@dataclass(frozen=True)
class Finding:
    rule: Rule
    severity: Severity
    target: str
    message: str

    def render(self) -> str:
        return f"{self.severity.value.upper()} {self.rule.value} {self.target} {self.message}"


def _finding(rule: Rule, target: str, message: str) -> Finding:
    severity = Severity.WARNING if rule.value.startswith("W") else Severity.ERROR
    return Finding(rule, severity, target, message)


def has_errors(findings) -> bool:
    return any(f.severity is Severity.ERROR for f in findings)


def _sorted(findings) -> list[Finding]:
    return sorted(findings, key=lambda f: (_RULE_ORDER[f.rule], f.target, f.message))


def _job_target(job) -> str:
    return f"job:{job.name}"


def _port_target(job, port) -> str:
    return f"job:{job.name}/port:{port.name}"


def _conn_target(conn) -> str:
    return f"connection:{conn.id}"


def _resolve(graph: Graph, ref: PortRef):
    job = graph.job(ref.job_id)
    if job is None:
        return None, None
    return job, job.port(ref.port_id)


def _job_edges(graph: Graph) -> dict[int, set[int]]:
    """Adjacency over jobs, built from connections that resolve."""
    edges: dict[int, set[int]] = {}
    for conn in graph.connections:
        _, sp = _resolve(graph, conn.source)
        _, tp = _resolve(graph, conn.target)
        if sp is None or tp is None:
            continue
        edges.setdefault(conn.source.job_id, set()).add(conn.target.job_id)
    return edges


def _reaches(edges: dict[int, set[int]], start: int, goal: int) -> bool:
    stack = [start]
    seen = set()
    while stack:
        node = stack.pop()
        if node == goal:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(edges.get(node, ()))
    return False


def validate_structure(graph: Graph) -> list[Finding]:
    """All structural findings (R1-R7, W1, W2), ordered by (rule, target)."""
    findings: list[Finding] = []

    # R7: job names unique (jobs arrive sorted by name, id).
    for prev, job in zip(graph.jobs, graph.jobs[1:]):
        if prev.name == job.name:
            findings.append(
                _finding(Rule.JOB_NAME_UNIQUE, _job_target(job),
                         f"job name {job.name!r} is used more than once")
            )

    # R1: port names and seqs unique within each job, across both kinds.
    for job in graph.jobs:
        seen_names: set[str] = set()
        seen_seqs: set[int] = set()
        for port in job.ports:
            if port.name in seen_names:
                findings.append(
                    _finding(Rule.PORT_UNIQUENESS, _port_target(job, port),
                             f"port name {port.name!r} is used more than once on job {job.name!r}")
                )
            elif port.seq in seen_seqs:
                findings.append(
                    _finding(Rule.PORT_UNIQUENESS, _port_target(job, port),
                             f"port seq {port.seq} is used more than once on job {job.name!r}")
                )
            seen_names.add(port.name)
            seen_seqs.add(port.seq)

    # R5 / R2 per connection.
    resolvable = []
    for conn in graph.connections:
        sj, sp = _resolve(graph, conn.source)
        tj, tp = _resolve(graph, conn.target)
        if sp is None or tp is None:
            findings.append(
                _finding(Rule.DANGLING, _conn_target(conn),
                         "connection endpoint does not resolve to a port")
            )
            continue
        resolvable.append(conn)
        if sp.kind is not PortKind.OUTPUT or tp.kind is not PortKind.INPUT:
            findings.append(
                _finding(Rule.DIRECTION, _conn_target(conn),
                         "connection must run from an output port to an input port")
            )

    # R6: duplicate (source, target) pairs; R3: distinct sources feeding one
    # input. Exact duplicates are R6's alone so the two rules stay disjoint.
    by_pair: dict[tuple, list] = {}
    by_target: dict[PortRef, list] = {}
    for conn in resolvable:
        pair = (conn.source, conn.target)
        by_pair.setdefault(pair, []).append(conn)
        if pair not in by_target.setdefault(conn.target, []):
            by_target[conn.target].append(pair)
    for pair, conns in by_pair.items():
        for dup in conns[1:]:
            findings.append(
                _finding(Rule.DUPLICATE_EDGE, _conn_target(dup),
                         "a connection between these ports already exists")
            )
    for target_ref, pairs in by_target.items():
        if len(pairs) > 1:
            tj, tp = _resolve(graph, target_ref)
            for pair in pairs[1:]:
                conn = by_pair[pair][0]
                findings.append(
                    _finding(Rule.INPUT_FAN_IN, _conn_target(conn),
                             f"input port {tp.name!r} on job {tj.name!r} already has an incoming connection")
                )

    # R4: flag every connection lying on a job-level cycle.
    edges = _job_edges(graph)
    for conn in resolvable:
        u, v = conn.source.job_id, conn.target.job_id
        if u == v or _reaches(edges, v, u):
            findings.append(
                _finding(Rule.ACYCLIC, _conn_target(conn),
                         "connection lies on a job-level dependency cycle")
            )

    # Warnings.
    if not graph.jobs:
        findings.append(_finding(Rule.EMPTY_GRAPH, f"graph:{graph.name}",
                                 "graph contains no jobs"))
    referenced = set()
    for conn in graph.connections:
        referenced.add(conn.source.job_id)
        referenced.add(conn.target.job_id)
    for job in graph.jobs:
        if job.id not in referenced:
            findings.append(_finding(Rule.ISOLATED_JOB, _job_target(job),
                                     f"job {job.name!r} has no connections"))

    return _sorted(findings)


def validate_concrete(w: ConcreteWorkflow) -> list[Finding]:
    """Structural findings plus submission-readiness checks (C1-C4)."""
    graph = w.graph
    findings = validate_structure(graph)

    connected_inputs = set()
    for conn in graph.connections:
        _, tp = _resolve(graph, conn.target)
        if tp is not None:
            connected_inputs.add(conn.target)

    for job in graph.jobs:
        if job.config is None or not job.config.executable:
            findings.append(
                _finding(Rule.EXEC_MISSING, _job_target(job),
                         f"job {job.name!r} has no executable configured")
            )
        for port in job.ports:
            ref = PortRef(job.id, port.id)
            if port.kind is PortKind.INPUT:
                connected = ref in connected_inputs
                if port.binding is None and not connected:
                    findings.append(
                        _finding(Rule.INPUT_UNBOUND, _port_target(job, port),
                                 f"input port {port.name!r} has neither a connection nor a data binding")
                    )
                elif port.binding is not None:
                    is_channel = port.binding.source is BindingSource.CHANNEL
                    if is_channel and not connected:
                        findings.append(
                            _finding(Rule.CHANNEL_MISMATCH, _port_target(job, port),
                                     f"input port {port.name!r} is bound to a channel but has no incoming connection")
                        )
                    elif not is_channel and connected:
                        findings.append(
                            _finding(Rule.CHANNEL_MISMATCH, _port_target(job, port),
                                     f"input port {port.name!r} has an incoming connection but a non-channel binding")
                        )
            else:
                if port.binding is None:
                    findings.append(
                        _finding(Rule.OUTPUT_FILENAME_MISSING, _port_target(job, port),
                                 f"output port {port.name!r} has no output filename")
                    )

    return _sorted(findings)


def check_connection(graph: Graph, source: PortRef, target: PortRef) -> Optional[Finding]:
    """Vet a candidate connection before it exists.

    Returns the first violated rule in the order R5, R2, R3, R6, R4, or
    None when the connection is admissible. Pure; the graph is unmodified.
    """
    sj, sp = _resolve(graph, source)
    tj, tp = _resolve(graph, target)
    if sp is None or tp is None:
        return _finding(Rule.DANGLING, f"connection:{source.job_id}.{source.port_id}->{target.job_id}.{target.port_id}",
                        "connection endpoint does not resolve to a port")
    target_path = f"job:{tj.name}/port:{tp.name}"
    if sp.kind is not PortKind.OUTPUT or tp.kind is not PortKind.INPUT:
        return _finding(Rule.DIRECTION, target_path,
                        "connection must run from an output port to an input port")
    for conn in graph.connections:
        if conn.target == target and conn.source != source:
            return _finding(Rule.INPUT_FAN_IN, target_path,
                            f"input port {tp.name!r} on job {tj.name!r} already has an incoming connection")
    for conn in graph.connections:
        if conn.source == source and conn.target == target:
            return _finding(Rule.DUPLICATE_EDGE, target_path,
                            "a connection between these ports already exists")
    edges = _job_edges(graph)
    if source.job_id == target.job_id or _reaches(edges, target.job_id, source.job_id):
        return _finding(Rule.ACYCLIC, target_path,
                        "connection would create a job-level dependency cycle")
    return None
