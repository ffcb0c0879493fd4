"""File-backed persistence for graphs, workflows and run records.

Layout under the store root::

    graphs/<name>.xml       abstract graphs (structure only, no config)
    workflows/<name>.xml    concrete workflows
    runs/<run_id>/          one directory per submission

Every write goes through a temp file in the target directory followed by
os.replace, so readers never observe a half-written document.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import replace
from pathlib import Path

from . import wire
from .errors import FlowError, NotFound, StoreError
from .model import NAME_RE, EPOCH, ConcreteWorkflow, Graph


def _strip_concrete(graph: Graph) -> Graph:
    jobs = tuple(
        replace(
            job,
            config=None,
            ports=tuple(replace(port, binding=None) for port in job.ports),
        )
        for job in graph.jobs
    )
    return replace(graph, jobs=jobs)


class Store:
    def __init__(self, root):
        self.root = Path(root)
        self.graphs_dir = self.root / "graphs"
        self.workflows_dir = self.root / "workflows"
        self.runs_dir = self.root / "runs"
        try:
            for directory in (self.graphs_dir, self.workflows_dir, self.runs_dir):
                directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreError(f"cannot initialize store at {self.root}: {exc}") from None

    # -- helpers ---------------------------------------------------------

    @staticmethod
    def _check_key(name: str) -> str:
        if not isinstance(name, str) or not NAME_RE.match(name):
            raise StoreError(f"invalid store key {name!r}")
        return name

    def write_atomic(self, path: Path, data: bytes) -> None:
        path = Path(path)
        try:
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as handle:
                    handle.write(data)
                    handle.flush()
                    os.fsync(handle.fileno())
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        except OSError as exc:
            raise StoreError(f"cannot write {path}: {exc}") from None

    def _read(self, path: Path, kind: str, name: str) -> bytes:
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise NotFound(kind, name) from None
        except OSError as exc:
            raise StoreError(f"cannot read {path}: {exc}") from None

    @staticmethod
    def _parse(data: bytes, path: Path) -> ConcreteWorkflow:
        # corruption on disk is a store failure, not a caller mistake
        try:
            return wire.parse(data)
        except FlowError as exc:
            raise StoreError(f"corrupt document {path}: {exc}") from None

    @staticmethod
    def _list(directory: Path) -> list[str]:
        return sorted(p.stem for p in directory.glob("*.xml"))

    # -- graphs ----------------------------------------------------------

    def put_graph(self, graph: Graph) -> str:
        """Store the abstract structure of a graph under its own name.

        Configs and bindings are deliberately dropped: a stored graph is the
        reusable template, not any one concrete workflow.
        """
        key = self._check_key(graph.name)
        stripped = _strip_concrete(graph)
        doc = ConcreteWorkflow(
            name=key,
            graph=stripped,
            graph_name=key,
            created_at=EPOCH,
            modified_at=EPOCH,
        )
        self.write_atomic(self.graphs_dir / f"{key}.xml", wire.serialize(doc))
        return key

    def get_graph(self, name: str) -> Graph:
        key = self._check_key(name)
        path = self.graphs_dir / f"{key}.xml"
        return self._parse(self._read(path, "graph", name), path).graph

    def list_graphs(self) -> list[str]:
        return self._list(self.graphs_dir)

    # -- workflows ---------------------------------------------------------

    def put_workflow(self, workflow: ConcreteWorkflow) -> str:
        key = self._check_key(workflow.name)
        self.write_atomic(self.workflows_dir / f"{key}.xml", wire.serialize(workflow))
        return key

    def get_workflow(self, name: str) -> ConcreteWorkflow:
        key = self._check_key(name)
        path = self.workflows_dir / f"{key}.xml"
        return self._parse(self._read(path, "workflow", name), path)

    def list_workflows(self) -> list[str]:
        return self._list(self.workflows_dir)

    def delete_workflow(self, name: str) -> None:
        key = self._check_key(name)
        try:
            (self.workflows_dir / f"{key}.xml").unlink()
        except FileNotFoundError:
            raise NotFound("workflow", name) from None
        except OSError as exc:
            raise StoreError(f"cannot delete workflow {name!r}: {exc}") from None

    # -- runs --------------------------------------------------------------

    def run_dir(self, run_id: str) -> Path:
        if not NAME_RE.match(run_id):
            raise StoreError(f"invalid run id {run_id!r}")
        path = self.runs_dir / run_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    def list_runs(self) -> list[str]:
        return sorted(p.name for p in self.runs_dir.iterdir() if p.is_dir())
