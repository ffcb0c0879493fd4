import random
from dataclasses import replace
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import random_workflow
from flowctl.errors import DanglingConnection, InvariantViolation, NotFound
from flowctl.model import (
    MAX_COORD,
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
    now_utc,
    resolve_port,
)

UTC = timezone.utc


def job(jid=1, name="A", ports=(), **kw):
    return Job(jid, name, kw.pop("description", ""), Position(0, 0), tuple(ports), **kw)


class TestNames:
    @pytest.mark.parametrize("good", ["a", "A-b_c.d", "0", "x" * 64])
    def test_accepted(self, good):
        assert job(name=good).name == good

    @pytest.mark.parametrize("bad", ["", "x" * 65, "a b", "a/b", "é", "a\n", None, 7])
    def test_rejected(self, bad):
        with pytest.raises(InvariantViolation):
            job(name=bad)

    @given(st.text(min_size=1, max_size=64, alphabet="ABCXYZabcxyz0189_.-"))
    @settings(max_examples=50)
    def test_name_charset_property(self, name):
        # every string from the documented alphabet constructs
        assert job(name=name).name == name


class TestText:
    def test_descriptions_allow_markup_and_whitespace(self):
        ok = "quotes \" <tags> & tabs\t newlines\n cr\r"
        assert job(description=ok).description == ok

    @pytest.mark.parametrize("bad", ["nul\x00", "bell\x07", "esc\x1b", "x" * 1025])
    def test_descriptions_reject_control_chars_and_overflow(self, bad):
        with pytest.raises(InvariantViolation):
            job(description=bad)


class TestPosition:
    def test_bounds(self):
        Position(0, 0)
        Position(MAX_COORD, MAX_COORD)
        for x, y in [(-1, 0), (0, -1), (MAX_COORD + 1, 0), (1.5, 0), (True, 0)]:
            with pytest.raises(InvariantViolation):
                Position(x, y)


class TestBindings:
    def test_channel_carries_no_payload(self):
        InputBinding(BindingSource.CHANNEL)
        with pytest.raises(InvariantViolation):
            InputBinding(BindingSource.CHANNEL, path="x")
        with pytest.raises(InvariantViolation):
            InputBinding(BindingSource.CHANNEL, content=b"x")

    def test_file_needs_path(self):
        InputBinding(BindingSource.FILE, path="/data/in")
        with pytest.raises(InvariantViolation):
            InputBinding(BindingSource.FILE)
        with pytest.raises(InvariantViolation):
            InputBinding(BindingSource.FILE, path="/data/in", content=b"x")

    def test_inline_wants_bytes(self):
        assert InputBinding(BindingSource.INLINE, content=b"").content == b""
        with pytest.raises(InvariantViolation):
            InputBinding(BindingSource.INLINE, content="text")
        with pytest.raises(InvariantViolation):
            InputBinding(BindingSource.INLINE, path="no")

    @pytest.mark.parametrize("bad", ["", "a/b", "a\\b", ".", "..", "x" * 256])
    def test_output_filename_rules(self, bad):
        with pytest.raises(InvariantViolation):
            OutputBinding(bad)

    def test_binding_kind_must_match_port_kind(self):
        Port(1, "in", 0, PortKind.INPUT, InputBinding(BindingSource.CHANNEL))
        Port(2, "out", 0, PortKind.OUTPUT, OutputBinding("f.txt"))
        with pytest.raises(InvariantViolation):
            Port(3, "in", 0, PortKind.INPUT, OutputBinding("f.txt"))
        with pytest.raises(InvariantViolation):
            Port(4, "out", 0, PortKind.OUTPUT, InputBinding(BindingSource.CHANNEL))


class TestJobConfig:
    def test_requires_executable(self):
        with pytest.raises(InvariantViolation):
            JobConfig(ExecutableType.BINARY, "")

    def test_binary_path_must_be_xml_safe(self):
        with pytest.raises(InvariantViolation):
            JobConfig(ExecutableType.BINARY, "bad\x00path")
        # script bodies are carried base64, so anything goes short of non-str
        JobConfig(ExecutableType.SCRIPT, "#!/bin/sh\nexit 0\n")

    def test_target_is_a_name(self):
        with pytest.raises(InvariantViolation):
            JobConfig(ExecutableType.BINARY, "/bin/true", target="no spaces")


class TestTimestamps:
    def test_now_utc_has_second_precision(self):
        ts = now_utc()
        assert ts.tzinfo is not None and ts.microsecond == 0

    def test_workflow_rejects_sloppy_timestamps(self):
        g = Graph(name="g")
        naive = datetime(2020, 1, 1)
        micro = datetime(2020, 1, 1, tzinfo=UTC).replace(microsecond=5)
        for ts in (naive, micro):
            with pytest.raises(InvariantViolation):
                ConcreteWorkflow("w", g, "g", created_at=ts, modified_at=now_utc())


class TestCanonicalOrder:
    def test_ports_sort_by_seq_then_name_then_id(self):
        ports = [
            Port(5, "b", 1, PortKind.INPUT),
            Port(4, "a", 1, PortKind.INPUT),
            Port(3, "z", 0, PortKind.OUTPUT),
        ]
        j = job(ports=ports)
        assert [p.id for p in j.ports] == [3, 4, 5]

    def test_jobs_and_connections_sort(self):
        a = Job(2, "A", "", Position(0, 0), (Port(3, "o", 0, PortKind.OUTPUT),))
        b = Job(1, "B", "", Position(0, 0), (Port(4, "i", 0, PortKind.INPUT),))
        c1 = Connection(9, PortRef(2, 3), PortRef(1, 4))
        g1 = Graph("g", jobs=(b, a), connections=(c1,))
        g2 = Graph("g", jobs=(a, b), connections=(c1,))
        assert g1 == g2
        assert [j.name for j in g1.jobs] == ["A", "B"]

    def test_construction_order_never_matters(self):
        rng = random.Random(7)
        w = random_workflow(rng)
        shuffled_jobs = list(w.graph.jobs)
        rng.shuffle(shuffled_jobs)
        shuffled_conns = list(w.graph.connections)
        rng.shuffle(shuffled_conns)
        again = replace(w.graph, jobs=tuple(shuffled_jobs), connections=tuple(shuffled_conns))
        assert again == w.graph


class TestGraph:
    def test_duplicate_ids_rejected_across_kinds(self):
        with pytest.raises(InvariantViolation):
            Graph("g", jobs=(job(1, "A"), job(1, "B")))
        with pytest.raises(InvariantViolation):
            Graph("g", jobs=(job(1, "A", ports=[Port(1, "p", 0, PortKind.INPUT)]),))

    def test_lookups(self):
        g = Graph("g", jobs=(job(1, "A"),))
        assert g.job(1).name == "A"
        assert g.job(2) is None
        assert g.job_named("A").id == 1
        assert g.job_named("B") is None

    def test_resolve_port_not_found_kinds(self):
        g = Graph("g", jobs=(job(1, "A"),))
        with pytest.raises(NotFound) as e:
            resolve_port(g, 9, 1)
        assert e.value.kind == "job"
        with pytest.raises(NotFound) as e:
            resolve_port(g, 1, 9)
        assert e.value.kind == "port"


class TestDependencyEdges:
    def test_collapses_parallel_connections(self):
        a = Job(1, "A", "", Position(0, 0), (Port(2, "o1", 0, PortKind.OUTPUT), Port(3, "o2", 1, PortKind.OUTPUT)))
        b = Job(4, "B", "", Position(0, 0), (Port(5, "i1", 0, PortKind.INPUT), Port(6, "i2", 1, PortKind.INPUT)))
        g = Graph(
            "g",
            jobs=(a, b),
            connections=(
                Connection(7, PortRef(1, 2), PortRef(4, 5)),
                Connection(8, PortRef(1, 3), PortRef(4, 6)),
            ),
        )
        assert dependency_edges(g) == {(1, 4)}

    def test_self_edge_survives_for_invalid_graphs(self):
        a = Job(1, "A", "", Position(0, 0), (Port(2, "o", 0, PortKind.OUTPUT), Port(3, "i", 1, PortKind.INPUT)))
        g = Graph("g", jobs=(a,), connections=(Connection(4, PortRef(1, 2), PortRef(1, 3)),))
        assert dependency_edges(g) == {(1, 1)}

    def test_dangling_raises(self):
        a = Job(1, "A", "", Position(0, 0), (Port(2, "o", 0, PortKind.OUTPUT),))
        g = Graph("g", jobs=(a,), connections=(Connection(3, PortRef(1, 2), PortRef(1, 99)),))
        with pytest.raises(DanglingConnection):
            dependency_edges(g)


def test_empty_workflow_shares_its_name():
    w = empty_workflow("fresh")
    assert w.graph.name == "fresh" and w.graph_name == "fresh"
    assert w.created_at == w.modified_at
    assert w.graph.jobs == () and w.graph.connections == ()


def test_value_equality_is_structural():
    w1 = random_workflow(random.Random(42))
    w2 = random_workflow(random.Random(42))
    assert w1 == w2
    assert w1 is not w2
