"""Exception types shared across the package.

Errors are split along the same lines as the validation pipeline:
syntax (MalformedXml), schema (SchemaViolation), and semantics
(InvariantViolation carrying a rule id).
"""

from __future__ import annotations


class FlowError(Exception):
    """Base class for all errors raised by this package."""


class InvariantViolation(FlowError):
    """A model value or document violates a structural rule.

    ``rule`` is a validation rule id ("R1".."R7", ...) when the violation
    maps to one, else None for local field constraints. ``findings`` carries
    the full list of error findings when the violation came from running the
    rule engine over a decoded document.
    """

    def __init__(self, message, rule=None, findings=None):
        super().__init__(message)
        self.rule = rule
        self.findings = list(findings) if findings else []


class MalformedXml(FlowError):
    """Input is not well-formed XML."""


class SchemaViolation(FlowError):
    """Well-formed XML that does not match the workflow document schema.

    ``path`` locates the offending element/attribute, e.g.
    "workflow/graph/job[2]/@x".
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class NotFound(FlowError):
    """A named or id-addressed entity does not exist."""

    def __init__(self, kind, target):
        super().__init__(f"{kind} not found: {target}")
        self.kind = kind
        self.target = target


class DanglingConnection(FlowError):
    """A connection endpoint does not resolve to a job/port."""


class StaleRevision(FlowError):
    """Optimistic-concurrency failure: the session moved on."""

    def __init__(self, actual, expected):
        super().__init__(
            f"stale revision: session is at {actual}, change expected {expected}"
        )
        self.actual = actual
        self.expected = expected


class ValidationError(FlowError):
    """A change or save was refused by the rule engine."""

    def __init__(self, rule, message, findings=None):
        super().__init__(f"{rule}: {message}")
        self.rule = rule
        self.findings = list(findings) if findings else []


class MalformedPayload(FlowError):
    """A change event payload is missing fields or has the wrong types."""


class StoreError(FlowError):
    """Filesystem-level persistence failure."""


class SubmitRejected(FlowError):
    """A workflow failed submission-readiness validation."""

    def __init__(self, findings):
        rules = ", ".join(sorted({f.rule.value for f in findings}))
        super().__init__(f"workflow not submittable: {rules}")
        self.findings = list(findings)


class SpawnError(FlowError):
    """A job process could not be staged or started."""

    def __init__(self, job, message):
        super().__init__(f"job {job}: {message}")
        self.job = job
        self.message = message
