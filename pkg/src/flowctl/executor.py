"""Local execution backend.

Submission re-validates the workflow, levels the job graph so producers run
before consumers, and drives each job as a local process in its own working
directory under ``runs/<run_id>/``. Input files are staged under the input
port's name; a job succeeds when its process exits 0 and every declared
output file exists. The run record on disk is rewritten atomically after
every state transition, so an observer polling mid-run sees a consistent
snapshot.

Jobs downstream of a failed producer are never started and stay in the
``init`` state.
"""

from __future__ import annotations

import shlex
import shutil
import subprocess
import threading
import uuid
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from . import wire
from .errors import NotFound, SpawnError, StoreError, SubmitRejected
from .model import (
    BindingSource,
    ConcreteWorkflow,
    Graph,
    InputBinding,
    OutputBinding,
    PortKind,
    PortRef,
    dependency_edges,
    now_utc,
)
from .store import Store
from .validation import Severity, validate_concrete

RECORD_FILE = "record.xml"
_SCRIPT_NAME = ".flowctl.script"


class JobState(str, Enum):
    INIT = "init"
    RUNNING = "running"
    FINISHED = "finished"
    ERROR = "error"


@dataclass(frozen=True)
class JobStatus:
    state: JobState
    detail: str = ""


@dataclass(frozen=True)
class Transition:
    seq: int
    job: str
    state: JobState
    detail: str
    at: datetime


@dataclass(frozen=True)
class ExecutionPlan:
    """Job names grouped into dependency levels; every producer sits in an
    earlier level than all of its consumers."""

    levels: tuple[tuple[str, ...], ...]

    def job_names(self) -> list[str]:
        return [name for level in self.levels for name in level]


@dataclass
class RunRecord:
    run_id: str
    workflow: str
    digest: str
    started_at: datetime
    finished_at: Optional[datetime]
    jobs: dict[str, JobStatus]
    transitions: list[Transition] = field(default_factory=list)
    workdir: Optional[Path] = None

    @property
    def done(self) -> bool:
        return self.finished_at is not None

    def succeeded(self) -> bool:
        return self.done and all(
            s.state is JobState.FINISHED for s in self.jobs.values()
        )


def plan(workflow: ConcreteWorkflow) -> ExecutionPlan:
    """Validate for submission and compute dependency levels.

    Raises SubmitRejected with the error findings when the workflow is not
    runnable; validation and planning are the same gate on purpose.
    """
    findings = validate_concrete(workflow)
    errors = [f for f in findings if f.severity is Severity.ERROR]
    if errors:
        raise SubmitRejected(errors)
    return ExecutionPlan(levels=_levels(workflow.graph))


def _levels(graph: Graph) -> tuple[tuple[str, ...], ...]:
    by_id = {job.id: job for job in graph.jobs}
    consumers: dict[int, set[int]] = {job_id: set() for job_id in by_id}
    indegree = {job_id: 0 for job_id in by_id}
    for producer, consumer in dependency_edges(graph):
        if consumer not in consumers[producer]:
            consumers[producer].add(consumer)
            indegree[consumer] += 1

    levels = []
    frontier = sorted(
        (job_id for job_id, d in indegree.items() if d == 0),
        key=lambda job_id: by_id[job_id].name,
    )
    emitted = 0
    while frontier:
        levels.append(tuple(by_id[job_id].name for job_id in frontier))
        emitted += len(frontier)
        ready = []
        for job_id in frontier:
            for consumer in consumers[job_id]:
                indegree[consumer] -= 1
                if indegree[consumer] == 0:
                    ready.append(consumer)
        frontier = sorted(ready, key=lambda job_id: by_id[job_id].name)
    if emitted != len(by_id):
        # unreachable for validated input; planning never silently drops jobs
        raise SubmitRejected([])
    return tuple(levels)


def _producers_by_name(graph: Graph) -> dict[str, set[str]]:
    by_id = {job.id: job.name for job in graph.jobs}
    deps: dict[str, set[str]] = {job.name: set() for job in graph.jobs}
    for producer, consumer in dependency_edges(graph):
        deps[by_id[consumer]].add(by_id[producer])
    return deps


# -- run records ----------------------------------------------------------

def _record_bytes(record: RunRecord) -> bytes:
    a = wire._attr
    ts = wire._fmt_ts
    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    finished = ts(record.finished_at) if record.finished_at else ""
    out.append(
        f"<run id={a(record.run_id)} workflow={a(record.workflow)}"
        f" digest={a(record.digest)} started={a(ts(record.started_at))}"
        f" finished={a(finished)}>"
    )
    for name in sorted(record.jobs):
        status = record.jobs[name]
        out.append(
            f"  <job name={a(name)} state={a(status.state.value)} detail={a(status.detail)}/>"
        )
    for t in record.transitions:
        out.append(
            f"  <transition seq={a(str(t.seq))} job={a(t.job)} state={a(t.state.value)}"
            f" detail={a(t.detail)} at={a(ts(t.at))}/>"
        )
    out.append("</run>")
    return ("\n".join(out) + "\n").encode("utf-8")


def _write_record(store: Store, record: RunRecord) -> None:
    store.write_atomic(store.runs_dir / record.run_id / RECORD_FILE, _record_bytes(record))


def load_record(store: Store, run_id: str) -> RunRecord:
    path = store.runs_dir / run_id / RECORD_FILE
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise NotFound("run", run_id) from None
    try:
        root = ET.fromstring(data)
        record = RunRecord(
            run_id=root.attrib["id"],
            workflow=root.attrib["workflow"],
            digest=root.attrib["digest"],
            started_at=wire._parse_ts(root.attrib["started"], "run/@started"),
            finished_at=(
                wire._parse_ts(root.attrib["finished"], "run/@finished")
                if root.attrib["finished"]
                else None
            ),
            jobs={},
            workdir=path.parent,
        )
        for child in root:
            if child.tag == "job":
                record.jobs[child.attrib["name"]] = JobStatus(
                    JobState(child.attrib["state"]), child.attrib["detail"]
                )
            elif child.tag == "transition":
                record.transitions.append(
                    Transition(
                        seq=int(child.attrib["seq"]),
                        job=child.attrib["job"],
                        state=JobState(child.attrib["state"]),
                        detail=child.attrib["detail"],
                        at=wire._parse_ts(child.attrib["at"], "run/transition/@at"),
                    )
                )
    except (KeyError, ValueError) as exc:
        raise StoreError(f"corrupt run record {path}: {exc}") from None
    return record


# -- execution --------------------------------------------------------------

class _Run:
    """Mutable driver state for one submission."""

    def __init__(self, workflow, store, record, on_transition, job_timeout):
        self.workflow = workflow
        self.store = store
        self.record = record
        self.on_transition = on_transition
        self.job_timeout = job_timeout
        self.lock = threading.Lock()
        self.workdir = record.workdir

    def emit(self, job_name: str, state: JobState, detail: str = "") -> None:
        with self.lock:
            t = Transition(
                seq=len(self.record.transitions) + 1,
                job=job_name,
                state=state,
                detail=detail,
                at=now_utc(),
            )
            self.record.transitions.append(t)
            self.record.jobs[job_name] = JobStatus(state, detail)
            _write_record(self.store, self.record)
        if self.on_transition is not None:
            self.on_transition(t)


def _prepare(workflow: ConcreteWorkflow, store: Store) -> tuple[_Run, ExecutionPlan]:
    shaped = plan(workflow)
    run_id = uuid.uuid4().hex
    workdir = store.run_dir(run_id)
    record = RunRecord(
        run_id=run_id,
        workflow=workflow.name,
        digest=wire.digest(workflow),
        started_at=now_utc(),
        finished_at=None,
        jobs={name: JobStatus(JobState.INIT) for name in shaped.job_names()},
        workdir=workdir,
    )
    _write_record(store, record)
    return _Run(workflow, store, record, None, None), shaped


def _stage_inputs(run: _Run, job, jobdir: Path) -> None:
    graph = run.workflow.graph
    incoming = {}
    for conn in graph.connections:
        incoming[conn.target] = conn.source
    for port in job.ports:
        if port.kind is not PortKind.INPUT:
            continue
        dest = jobdir / port.name
        binding = port.binding
        channel_fed = binding is None or (
            isinstance(binding, InputBinding) and binding.source is BindingSource.CHANNEL
        )
        if channel_fed:
            source_ref = incoming.get(PortRef(job.id, port.id))
            if source_ref is None:
                raise SpawnError(job.name, f"input {port.name!r} has no producer")
            producer = graph.job(source_ref.job_id)
            produced = producer.port(source_ref.port_id)
            if not isinstance(produced.binding, OutputBinding):
                raise SpawnError(job.name, f"producer of {port.name!r} declares no output file")
            src = run.workdir / producer.name / produced.binding.filename
            if not src.is_file():
                raise SpawnError(job.name, f"missing input from {producer.name}: {produced.binding.filename}")
            shutil.copyfile(src, dest)
        elif binding.source is BindingSource.FILE:
            src = Path(binding.path)
            if not src.is_file():
                raise SpawnError(job.name, f"missing input file: {binding.path}")
            shutil.copyfile(src, dest)
        else:
            dest.write_bytes(binding.content)


def _run_job(run: _Run, job_name: str) -> None:
    job = run.workflow.graph.job_named(job_name)
    cfg = job.config
    jobdir = run.workdir / job.name
    run.emit(job.name, JobState.RUNNING)
    try:
        jobdir.mkdir(parents=True, exist_ok=True)
        if cfg.executable_type.value == "script":
            script = jobdir / _SCRIPT_NAME
            script.write_text(cfg.executable, encoding="utf-8")
            script.chmod(0o755)
            argv = [str(script)]
        else:
            argv = [cfg.executable]
        try:
            argv += shlex.split(cfg.arguments)
        except ValueError as exc:
            raise SpawnError(job.name, f"unparseable arguments: {exc}")
        _stage_inputs(run, job, jobdir)
        with open(jobdir / ".stdout", "wb") as out, open(jobdir / ".stderr", "wb") as err:
            try:
                proc = subprocess.run(
                    argv,
                    cwd=jobdir,
                    stdout=out,
                    stderr=err,
                    timeout=run.job_timeout,
                )
            except subprocess.TimeoutExpired:
                raise SpawnError(job.name, "timed out")
            except OSError as exc:
                raise SpawnError(job.name, f"cannot spawn {argv[0]!r}: {exc}")
        if proc.returncode != 0:
            run.emit(job.name, JobState.ERROR, f"exit status {proc.returncode}")
            return
        for port in job.ports:
            if port.kind is PortKind.OUTPUT and isinstance(port.binding, OutputBinding):
                if not (jobdir / port.binding.filename).is_file():
                    run.emit(job.name, JobState.ERROR, f"missing output: {port.binding.filename}")
                    return
        run.emit(job.name, JobState.FINISHED)
    except SpawnError as exc:
        run.emit(job.name, JobState.ERROR, exc.message)
    except OSError as exc:
        run.emit(job.name, JobState.ERROR, f"io failure: {exc}")


def _drive(run: _Run, shaped: ExecutionPlan, parallel: bool) -> RunRecord:
    deps = _producers_by_name(run.workflow.graph)
    finished: set[str] = set()
    for level in shaped.levels:
        runnable = [name for name in level if deps[name] <= finished]
        if parallel and len(runnable) > 1:
            threads = [
                threading.Thread(target=_run_job, args=(run, name), daemon=True)
                for name in runnable
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        else:
            for name in runnable:
                _run_job(run, name)
        for name in runnable:
            if run.record.jobs[name].state is JobState.FINISHED:
                finished.add(name)
    with run.lock:
        run.record.finished_at = now_utc()
        _write_record(run.store, run.record)
    return run.record


def execute(
    workflow: ConcreteWorkflow,
    store: Store,
    *,
    parallel: bool = False,
    on_transition: Optional[Callable[[Transition], None]] = None,
    job_timeout: Optional[float] = None,
) -> RunRecord:
    """Run a workflow to completion synchronously and return its record."""
    run, shaped = _prepare(workflow, store)
    run.on_transition = on_transition
    run.job_timeout = job_timeout
    return _drive(run, shaped, parallel)


class Executor:
    """Submission front: validates synchronously, executes in the background.

    Poll with :meth:`status` (reads the persisted record, so it reflects
    whatever the worker has committed) or block with :meth:`wait`.
    """

    def __init__(self, store: Store, *, parallel: bool = False, job_timeout: Optional[float] = None):
        self.store = store
        self.parallel = parallel
        self.job_timeout = job_timeout
        self._threads: dict[str, threading.Thread] = {}
        self._lock = threading.Lock()

    def submit(self, workflow: ConcreteWorkflow) -> str:
        run, shaped = _prepare(workflow, self.store)
        run.job_timeout = self.job_timeout
        worker = threading.Thread(
            target=_drive, args=(run, shaped, self.parallel), daemon=True
        )
        with self._lock:
            self._threads[run.record.run_id] = worker
        worker.start()
        return run.record.run_id

    def status(self, run_id: str) -> RunRecord:
        return load_record(self.store, run_id)

    def wait(self, run_id: str, timeout: Optional[float] = None) -> RunRecord:
        with self._lock:
            worker = self._threads.get(run_id)
        if worker is not None:
            worker.join(timeout)
        return load_record(self.store, run_id)
