"""Workflow editing, validation, storage and local execution.

The pieces compose in lifecycle order: build a :class:`Graph` or open an
:class:`EditSession`, validate it, persist it through a :class:`Store`,
then hand it to the executor. ``flowctl serve`` exposes the same lifecycle
over HTTP for remote editors.
"""

from .errors import (
    DanglingConnection,
    FlowError,
    InvariantViolation,
    MalformedPayload,
    MalformedXml,
    NotFound,
    SchemaViolation,
    SpawnError,
    StaleRevision,
    StoreError,
    SubmitRejected,
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
    dependency_edges,
    empty_workflow,
)
from .session import ChangeEvent, ChangeKind, ChangeResult, EditSession, open_session
from .store import Store
from .validation import (
    Finding,
    Rule,
    Severity,
    check_connection,
    has_errors,
    validate_concrete,
    validate_structure,
)
from .wire import digest, parse, parse_lenient, serialize
from .executor import (
    ExecutionPlan,
    Executor,
    JobState,
    RunRecord,
    execute,
    load_record,
    plan,
)

__version__ = "0.1.0"

__all__ = [
    "BindingSource",
    "ChangeEvent",
    "ChangeKind",
    "ChangeResult",
    "ConcreteWorkflow",
    "Connection",
    "DanglingConnection",
    "EditSession",
    "ExecutableType",
    "ExecutionPlan",
    "Executor",
    "Finding",
    "FlowError",
    "Graph",
    "InputBinding",
    "InvariantViolation",
    "Job",
    "JobConfig",
    "JobState",
    "MalformedPayload",
    "MalformedXml",
    "NotFound",
    "OutputBinding",
    "Port",
    "PortKind",
    "PortRef",
    "Position",
    "Rule",
    "RunRecord",
    "SchemaViolation",
    "Severity",
    "SpawnError",
    "StaleRevision",
    "Store",
    "StoreError",
    "SubmitRejected",
    "ValidationError",
    "check_connection",
    "dependency_edges",
    "digest",
    "empty_workflow",
    "execute",
    "has_errors",
    "load_record",
    "open_session",
    "parse",
    "parse_lenient",
    "plan",
    "serialize",
    "validate_concrete",
    "validate_structure",
    "__version__",
]
