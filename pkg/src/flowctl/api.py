"""HTTP facade over sessions, the store and the executor.

All routes live under ``/api/v1`` and speak JSON, except import/export which
carry the XML documents themselves. Request bodies are parsed by hand so
that malformed input maps onto the same error vocabulary as the rest of the
system instead of framework-specific responses.

Error mapping: 400 for malformed requests, 404 for unknown names and ids,
409 for stale revisions, 422 for anything the rule engine refused, 500 for
storage faults.
"""

from __future__ import annotations

import threading
from typing import Optional

from fastapi import APIRouter, FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import wire
from .errors import (
    InvariantViolation,
    MalformedPayload,
    MalformedXml,
    NotFound,
    SchemaViolation,
    StaleRevision,
    StoreError,
    SubmitRejected,
    ValidationError,
)
from .executor import Executor, load_record
from .model import ConcreteWorkflow, now_utc
from .session import (
    ChangeEvent,
    ChangeKind,
    EditSession,
    encode_binding,
    encode_config,
    open_session,
)
from .store import Store
from .validation import validate_concrete, validate_structure


def finding_json(finding) -> dict:
    return {
        "rule": finding.rule.value,
        "severity": finding.severity.value,
        "target": finding.target,
        "message": finding.message,
    }


def workflow_state(workflow: ConcreteWorkflow) -> dict:
    """JSON shape of a workflow as an editor canvas consumes it."""
    g = workflow.graph
    return {
        "name": workflow.name,
        "graph_name": workflow.graph_name,
        "created": wire._fmt_ts(workflow.created_at),
        "modified": wire._fmt_ts(workflow.modified_at),
        "digest": wire.digest(workflow),
        "graph": {
            "name": g.name,
            "description": g.description,
            "jobs": [
                {
                    "id": job.id,
                    "name": job.name,
                    "description": job.description,
                    "x": job.position.x,
                    "y": job.position.y,
                    "ports": [
                        {
                            "id": port.id,
                            "name": port.name,
                            "seq": port.seq,
                            "kind": port.kind.value,
                            "binding": encode_binding(port.binding),
                        }
                        for port in job.ports
                    ],
                    "config": encode_config(job.config),
                }
                for job in g.jobs
            ],
            "connections": [
                {
                    "id": conn.id,
                    "from_job": conn.source.job_id,
                    "from_port": conn.source.port_id,
                    "to_job": conn.target.job_id,
                    "to_port": conn.target.port_id,
                }
                for conn in g.connections
            ],
        },
    }


def _session_json(session: EditSession) -> dict:
    return {
        "session_id": session.session_id,
        "revision": session.revision,
        "digest": session.digest(),
        "state": workflow_state(session.snapshot()),
    }


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise MalformedPayload("request body must be valid JSON") from None
    if not isinstance(body, dict):
        raise MalformedPayload("request body must be a JSON object")
    return body


def create_app(store_root, ui_dir: Optional[str] = None) -> FastAPI:
    store = Store(store_root)
    executor = Executor(store)
    sessions: dict[str, EditSession] = {}
    sessions_lock = threading.Lock()

    app = FastAPI(title="flowctl", openapi_url=None, docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.executor = executor
    api = APIRouter(prefix="/api/v1")

    def _session(session_id: str) -> EditSession:
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise NotFound("session", session_id)
        return session

    # -- sessions ------------------------------------------------------

    @api.post("/sessions")
    async def create_session(request: Request):
        body = await _json_body(request)
        from_workflow = body.pop("from_workflow", None)
        from_graph = body.pop("from_graph", None)
        name = body.pop("name", None)
        if body:
            raise MalformedPayload(f"unexpected field {sorted(body)[0]!r}")
        for value in (from_workflow, from_graph, name):
            if value is not None and not isinstance(value, str):
                raise MalformedPayload("session names must be strings")
        if from_workflow is not None and from_graph is not None:
            raise MalformedPayload("pass either from_workflow or from_graph, not both")

        if from_workflow is not None:
            session = open_session(store.get_workflow(from_workflow))
        elif from_graph is not None:
            graph = store.get_graph(from_graph)
            created = now_utc()
            try:
                workflow = ConcreteWorkflow(
                    name=name or graph.name,
                    graph=graph,
                    graph_name=graph.name,
                    created_at=created,
                    modified_at=created,
                )
            except InvariantViolation as exc:
                raise MalformedPayload(str(exc)) from None
            session = open_session(workflow)
        else:
            session = open_session(None, name)
        with sessions_lock:
            sessions[session.session_id] = session
        return _session_json(session)

    @api.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        return _session_json(_session(session_id))

    @api.delete("/sessions/{session_id}")
    async def close_session(session_id: str):
        with sessions_lock:
            if sessions.pop(session_id, None) is None:
                raise NotFound("session", session_id)
        return {"closed": session_id}

    @api.post("/sessions/{session_id}/changes")
    async def apply_change(session_id: str, request: Request):
        session = _session(session_id)
        body = await _json_body(request)
        kind_name = body.pop("kind", None)
        payload = body.pop("payload", {})
        expected = body.pop("expected_revision", None)
        if body:
            raise MalformedPayload(f"unexpected field {sorted(body)[0]!r}")
        try:
            kind = ChangeKind(kind_name)
        except ValueError:
            raise MalformedPayload(f"unknown change kind {kind_name!r}") from None
        if not isinstance(payload, dict):
            raise MalformedPayload("payload must be a JSON object")
        if expected is None:
            raise MalformedPayload("expected_revision is required")
        result = session.apply_change(ChangeEvent(kind, payload, expected))
        return {
            "revision": result.revision,
            "digest": result.digest,
            "created_id": result.created_id,
            "cascaded_removals": list(result.cascaded_removals),
        }

    @api.post("/sessions/{session_id}/validate")
    async def validate_session(session_id: str, mode: str = "workflow"):
        session = _session(session_id)
        workflow = session.snapshot()
        if mode == "graph":
            findings = validate_structure(workflow.graph)
        elif mode == "workflow":
            findings = validate_concrete(workflow)
        else:
            raise MalformedPayload(f"unknown validation mode {mode!r}")
        return {"findings": [finding_json(f) for f in findings]}

    @api.post("/sessions/{session_id}/save")
    async def save_session(session_id: str):
        session = _session(session_id)
        graph_key, workflow_key = session.save(store)
        return {"graph": graph_key, "workflow": workflow_key}

    # -- stored documents ------------------------------------------------

    @api.get("/graphs")
    async def list_graphs():
        return {"graphs": store.list_graphs()}

    @api.get("/workflows")
    async def list_workflows():
        return {"workflows": store.list_workflows()}

    @api.get("/workflows/{name}")
    async def get_workflow(name: str):
        return workflow_state(store.get_workflow(name))

    @api.get("/export/{name}")
    async def export_workflow(name: str):
        data = wire.serialize(store.get_workflow(name))
        return Response(content=data, media_type="application/xml")

    @api.post("/validate")
    async def validate_document(request: Request, mode: str = "workflow"):
        """Stateless document check: same report as `flowctl validate`."""
        data = await request.body()
        workflow, _ = wire.parse_lenient(data)
        if mode == "graph":
            findings = validate_structure(workflow.graph)
        elif mode == "workflow":
            findings = validate_concrete(workflow)
        else:
            raise MalformedPayload(f"unknown validation mode {mode!r}")
        return {"findings": [finding_json(f) for f in findings]}

    @api.post("/import")
    async def import_workflow(request: Request):
        data = await request.body()
        workflow = wire.parse(data)
        store.put_graph(workflow.graph)
        key = store.put_workflow(workflow)
        return {"workflow": key, "graph": workflow.graph.name}

    # -- execution -------------------------------------------------------

    @api.post("/workflows/{name}/submit")
    async def submit_workflow(name: str):
        workflow = store.get_workflow(name)
        run_id = executor.submit(workflow)
        return {"run_id": run_id}

    @api.get("/runs/{run_id}")
    async def get_run(run_id: str):
        record = load_record(store, run_id)
        return {
            "run_id": record.run_id,
            "workflow": record.workflow,
            "digest": record.digest,
            "started": wire._fmt_ts(record.started_at),
            "finished": wire._fmt_ts(record.finished_at) if record.finished_at else None,
            "done": record.done,
            "succeeded": record.succeeded(),
            "jobs": {
                name: {"state": status.state.value, "detail": status.detail}
                for name, status in record.jobs.items()
            },
            "transitions": [
                {
                    "seq": t.seq,
                    "job": t.job,
                    "state": t.state.value,
                    "detail": t.detail,
                    "at": wire._fmt_ts(t.at),
                }
                for t in record.transitions
            ],
        }

    app.include_router(api)

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    # -- error mapping ----------------------------------------------------

    def _err(status: int, code: str, exc: Exception, **extra):
        return JSONResponse(
            status_code=status, content={"code": code, "message": str(exc), **extra}
        )

    @app.exception_handler(MalformedPayload)
    async def _malformed_payload(request, exc):
        return _err(400, "malformed_payload", exc)

    @app.exception_handler(MalformedXml)
    async def _malformed_xml(request, exc):
        return _err(400, "malformed_xml", exc)

    @app.exception_handler(SchemaViolation)
    async def _schema_violation(request, exc):
        return _err(400, "schema_violation", exc, path=exc.path)

    @app.exception_handler(NotFound)
    async def _not_found(request, exc):
        return _err(404, "not_found", exc, kind=exc.kind, target=str(exc.target))

    @app.exception_handler(StaleRevision)
    async def _stale_revision(request, exc):
        return _err(409, "stale_revision", exc, revision=exc.actual, expected=exc.expected)

    @app.exception_handler(ValidationError)
    async def _validation_error(request, exc):
        return _err(
            422, "validation_error", exc, rule=exc.rule,
            findings=[finding_json(f) for f in exc.findings],
        )

    @app.exception_handler(SubmitRejected)
    async def _submit_rejected(request, exc):
        return _err(
            422, "submit_rejected", exc,
            findings=[finding_json(f) for f in exc.findings],
        )

    @app.exception_handler(InvariantViolation)
    async def _invariant_violation(request, exc):
        return _err(
            422, "invalid_workflow", exc, rule=exc.rule,
            findings=[finding_json(f) for f in exc.findings],
        )

    @app.exception_handler(StoreError)
    async def _store_error(request, exc):
        return _err(500, "store_error", exc)

    return app
