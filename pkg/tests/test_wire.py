import base64
import hashlib
import random
from dataclasses import replace
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import random_workflow
from flowctl import wire
from flowctl.errors import InvariantViolation, MalformedXml, SchemaViolation
from flowctl.model import (
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

TS = datetime(2024, 5, 4, 12, 30, 0, tzinfo=timezone.utc)


def empty(name="g"):
    return ConcreteWorkflow(name, Graph(name=name), name, EPOCH, EPOCH)


class TestGoldenDocuments:
    """Expected bytes written out by hand from the format description."""

    def test_empty_workflow_bytes(self):
        expected = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            '<workflow fmt="1" name="g" graph="g" created="1970-01-01T00:00:00Z"'
            ' modified="1970-01-01T00:00:00Z">\n'
            '  <graph name="g" description=""/>\n'
            "</workflow>\n"
        ).encode()
        assert wire.serialize(empty()) == expected

    def test_empty_workflow_digest_pinned(self):
        # digest == sha256 of the canonical bytes with epoch timestamps; the
        # hex constant freezes the format against accidental drift
        expected_bytes = wire.serialize(empty())
        assert wire.digest(empty()) == hashlib.sha256(expected_bytes).hexdigest()
        assert (
            wire.digest(empty())
            == "c0b2cbb3d569dc388cd148b03e81613c514b9bf42c5e6ac728be4acad2d5e643"
        )

    def test_one_job_document_bytes(self):
        script = "#!/bin/sh\necho hi > greeting.txt\n"
        inline = b"\x00\x01binary"
        w = ConcreteWorkflow(
            name="demo",
            graph=Graph(
                name="main",
                description='greets "world" & <everyone>\nsecond line',
                jobs=(
                    Job(
                        1,
                        "hello",
                        "says hi\tloudly",
                        Position(40, 25),
                        (
                            Port(2, "out", 0, PortKind.OUTPUT, OutputBinding("greeting.txt")),
                            Port(3, "cfg", 1, PortKind.INPUT, InputBinding(BindingSource.INLINE, content=inline)),
                        ),
                        JobConfig(ExecutableType.SCRIPT, script, arguments='--mode "fast"'),
                    ),
                ),
            ),
            graph_name="main",
            created_at=TS,
            modified_at=TS,
        )
        script_b64 = base64.b64encode(script.encode()).decode()
        inline_b64 = base64.b64encode(inline).decode()
        expected = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            '<workflow fmt="1" name="demo" graph="main" created="2024-05-04T12:30:00Z"'
            ' modified="2024-05-04T12:30:00Z">\n'
            '  <graph name="main" description="greets &quot;world&quot; &amp;'
            ' &lt;everyone&gt;&#10;second line">\n'
            '    <job id="1" name="hello" description="says hi&#9;loudly" x="40" y="25">\n'
            '      <port id="2" name="out" seq="0" kind="output"/>\n'
            '      <port id="3" name="cfg" seq="1" kind="input"/>\n'
            "    </job>\n"
            "  </graph>\n"
            "  <config>\n"
            '    <jobconfig job="1" type="script" target="local">\n'
            f'      <exec encoding="base64">{script_b64}</exec>\n'
            '      <args>--mode "fast"</args>\n'
            "    </jobconfig>\n"
            f'    <binding job="1" port="2" source="file" value="greeting.txt"/>\n'
            f'    <binding job="1" port="3" source="inline" value="{inline_b64}"/>\n'
            "  </config>\n"
            "</workflow>\n"
        ).encode()
        assert wire.serialize(w) == expected
        assert wire.parse(expected) == w

    def test_binary_config_and_connection_bytes(self):
        w = ConcreteWorkflow(
            name="two",
            graph=Graph(
                name="two",
                jobs=(
                    Job(1, "a", "", Position(0, 0), (Port(2, "o", 0, PortKind.OUTPUT),),
                        JobConfig(ExecutableType.BINARY, "/bin/true")),
                    Job(3, "b", "", Position(5, 6), (Port(4, "i", 0, PortKind.INPUT),)),
                ),
                connections=(Connection(7, PortRef(1, 2), PortRef(3, 4)),),
            ),
            graph_name="two",
            created_at=EPOCH,
            modified_at=EPOCH,
        )
        expected = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            '<workflow fmt="1" name="two" graph="two" created="1970-01-01T00:00:00Z"'
            ' modified="1970-01-01T00:00:00Z">\n'
            '  <graph name="two" description="">\n'
            '    <job id="1" name="a" description="" x="0" y="0">\n'
            '      <port id="2" name="o" seq="0" kind="output"/>\n'
            "    </job>\n"
            '    <job id="3" name="b" description="" x="5" y="6">\n'
            '      <port id="4" name="i" seq="0" kind="input"/>\n'
            "    </job>\n"
            '    <connection id="7" fromJob="1" fromPort="2" toJob="3" toPort="4"/>\n'
            "  </graph>\n"
            "  <config>\n"
            '    <jobconfig job="1" type="binary" target="local">\n'
            '      <exec encoding="text">/bin/true</exec>\n'
            "      <args/>\n"
            "    </jobconfig>\n"
            "  </config>\n"
            "</workflow>\n"
        ).encode()
        assert wire.serialize(w) == expected


class TestDeterminism:
    def test_equal_values_equal_bytes(self):
        w1 = random_workflow(random.Random(11))
        w2 = random_workflow(random.Random(11))
        assert wire.serialize(w1) == wire.serialize(w2)

    def test_construction_order_invisible_on_the_wire(self):
        w = random_workflow(random.Random(12))
        rng = random.Random(13)
        jobs = list(w.graph.jobs)
        conns = list(w.graph.connections)
        rng.shuffle(jobs)
        rng.shuffle(conns)
        w2 = replace(w, graph=replace(w.graph, jobs=tuple(jobs), connections=tuple(conns)))
        assert wire.serialize(w2) == wire.serialize(w)

    def test_refuses_structurally_invalid_models(self):
        g = Graph("g", jobs=(Job(1, "A", "", Position(0, 0)), Job(2, "A", "", Position(0, 0))))
        w = ConcreteWorkflow("w", g, "g", EPOCH, EPOCH)
        with pytest.raises(InvariantViolation) as e:
            wire.serialize(w)
        assert e.value.rule == "R7"


class TestDigest:
    def test_ignores_timestamps(self):
        w = random_workflow(random.Random(21))
        later = replace(w, created_at=TS, modified_at=TS)
        assert wire.digest(later) == wire.digest(w)
        assert wire.serialize(later) != wire.serialize(w)

    def test_tracks_content(self):
        w = empty()
        renamed = replace(w, name="other")
        assert wire.digest(renamed) != wire.digest(w)

    def test_digest_equals_manual_hash_of_frozen_serialization(self):
        for seed in range(50):
            w = random_workflow(random.Random(seed))
            frozen = replace(w, created_at=EPOCH, modified_at=EPOCH)
            assert wire.digest(w) == hashlib.sha256(wire.serialize(frozen)).hexdigest()


class TestRoundTrip:
    def test_many_random_workflows(self):
        for seed in range(300):
            w = random_workflow(random.Random(seed))
            data = wire.serialize(w)
            again = wire.parse(data)
            assert again == w, seed
            assert wire.serialize(again) == data, seed

    @given(st.integers(min_value=0, max_value=10**9))
    @settings(max_examples=80, deadline=None)
    def test_round_trip_property(self, seed):
        w = random_workflow(random.Random(seed))
        assert wire.parse(wire.serialize(w)) == w

    def test_whitespace_only_arguments_survive(self):
        cfg = JobConfig(ExecutableType.BINARY, "/bin/true", arguments="  ")
        g = Graph("g", jobs=(Job(1, "A", "", Position(0, 0), (), cfg),))
        w = ConcreteWorkflow("w", g, "g", EPOCH, EPOCH)
        assert wire.parse(wire.serialize(w)).graph.jobs[0].config.arguments == "  "

    def test_carriage_returns_survive_attribute_escaping(self):
        # bare \r would be normalized away by any XML parser; the character
        # reference must bring it back
        g = Graph("g", description="cr\rhere", jobs=(Job(1, "A", "a\rb", Position(0, 0)),))
        w = ConcreteWorkflow("w", g, "g", EPOCH, EPOCH)
        again = wire.parse(wire.serialize(w))
        assert again.graph.description == "cr\rhere"
        assert again.graph.jobs[0].description == "a\rb"

    def test_non_canonical_input_is_accepted(self):
        w = random_workflow(random.Random(33), max_jobs=3)
        data = wire.serialize(w)
        minified = data.replace(b">\n", b">").replace(b"  ", b"")
        assert wire.parse(minified) == w


class TestLegacyDocuments:
    def test_graph_only_document(self, fixtures):
        w = wire.parse((fixtures / "legacy_graph.xml").read_bytes())
        assert w.name == "legacy"
        assert w.graph_name == "legacy"  # defaults to the embedded graph name
        assert w.created_at == EPOCH and w.modified_at == EPOCH
        assert all(j.config is None for j in w.graph.jobs)
        assert all(p.binding is None for j in w.graph.jobs for p in j.ports)
        # re-serializing yields a fully attributed document that parses back
        assert wire.parse(wire.serialize(w)) == w


REJECTS = [
    (b"not xml at all", MalformedXml, None),
    (b"<workflow", MalformedXml, None),
    (b'<?xml version="1.0"?><graph name="g"/>', SchemaViolation, "workflow"),
    (b'<workflow name="w"><graph name="g"/></workflow>', SchemaViolation, "fmt"),
    (b'<workflow fmt="2" name="w"><graph name="g"/></workflow>', SchemaViolation, "fmt"),
    (b'<workflow fmt="1" name="w" extra="1"><graph name="g"/></workflow>', SchemaViolation, "extra"),
    (b'<workflow fmt="1" name="w"></workflow>', SchemaViolation, "missing <graph>"),
    (b'<workflow fmt="1" name="w"><graph name="g"/><graph name="h"/></workflow>', SchemaViolation, "unexpected element"),
    (b'<workflow fmt="1" name="w">text<graph name="g"/></workflow>', SchemaViolation, "text"),
    (b'<workflow fmt="1" name="w" created="yesterday"><graph name="g"/></workflow>', SchemaViolation, "created"),
    (b'<workflow fmt="1" name="w"><graph name="g"><widget/></graph></workflow>', SchemaViolation, "widget"),
    (b'<workflow fmt="1" name="w"><graph name="g">'
     b'<connection id="1" fromJob="2" fromPort="3" toJob="4" toPort="5"/>'
     b'<job id="2" name="A" x="0" y="0"/></graph></workflow>', SchemaViolation, "precede"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0" z="9"/></graph></workflow>', SchemaViolation, "z"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0"/></graph></workflow>', SchemaViolation, "y"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="0" name="A" x="0" y="0"/></graph></workflow>', SchemaViolation, "id"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="-1" name="A" x="0" y="0"/></graph></workflow>', SchemaViolation, "id"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1.5" name="A" x="0" y="0"/></graph></workflow>', SchemaViolation, "id"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="a b" x="0" y="0"/></graph></workflow>', SchemaViolation, "job[1]"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0"/>'
     b'<job id="1" name="B" x="0" y="0"/></graph></workflow>', SchemaViolation, "duplicate node id"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0">'
     b'<port id="2" name="p" seq="0" kind="sideways"/></job></graph></workflow>', SchemaViolation, "kind"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0">'
     b'<port id="2" name="p" seq="0" kind="input"><x/></port></job></graph></workflow>', SchemaViolation, "port"),
    (b'<workflow fmt="1" name="w"><config/><graph name="g"/></workflow>', SchemaViolation, "unexpected element"),
    (b'<workflow fmt="1" name="w"><graph name="g"/><config><jobconfig job="9" type="binary" target="local">'
     b'<exec encoding="text">x</exec><args/></jobconfig></config></workflow>', SchemaViolation, "unknown job"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0"/></graph>'
     b'<config><jobconfig job="1" type="binary" target="local"><exec encoding="text">x</exec><args/></jobconfig>'
     b'<jobconfig job="1" type="binary" target="local"><exec encoding="text">x</exec><args/></jobconfig></config></workflow>',
     SchemaViolation, "duplicate jobconfig"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0"/></graph>'
     b'<config><jobconfig job="1" type="binary" target="local"><args/><exec encoding="text">x</exec></jobconfig></config></workflow>',
     SchemaViolation, "args"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0"/></graph>'
     b'<config><jobconfig job="1" type="rocket" target="local"><exec encoding="text">x</exec><args/></jobconfig></config></workflow>',
     SchemaViolation, "type"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0"/></graph>'
     b'<config><jobconfig job="1" type="script" target="local"><exec encoding="base64">!!!</exec><args/></jobconfig></config></workflow>',
     SchemaViolation, "base64"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0"/></graph>'
     b'<config><binding job="1" port="9" source="channel" value=""/></config></workflow>',
     SchemaViolation, "unknown port"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0">'
     b'<port id="2" name="p" seq="0" kind="input"/></job></graph>'
     b'<config><binding job="1" port="2" source="channel" value="x"/></config></workflow>',
     SchemaViolation, "channel"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0">'
     b'<port id="2" name="p" seq="0" kind="output"/></job></graph>'
     b'<config><binding job="1" port="2" source="inline" value="eA=="/></config></workflow>',
     SchemaViolation, "output"),
    (b'<workflow fmt="1" name="w"><graph name="g"><job id="1" name="A" x="0" y="0">'
     b'<port id="2" name="p" seq="0" kind="input"/></job></graph>'
     b'<config><binding job="1" port="2" source="channel" value=""/>'
     b'<binding job="1" port="2" source="channel" value=""/></config></workflow>',
     SchemaViolation, "duplicate binding"),
]


class TestParseRejection:
    @pytest.mark.parametrize("doc,exc,fragment", REJECTS, ids=range(len(REJECTS)))
    def test_rejects(self, doc, exc, fragment):
        with pytest.raises(exc) as e:
            wire.parse(doc)
        if fragment is not None:
            assert fragment in str(e.value)

    def test_schema_violation_paths_are_specific(self):
        doc = (b'<workflow fmt="1" name="w"><graph name="g">'
               b'<job id="1" name="A" x="0" y="0">'
               b'<port id="2" name="p" seq="0" kind="input"/>'
               b'<port id="3" name="q" seq="oops" kind="input"/>'
               b"</job></graph></workflow>")
        with pytest.raises(SchemaViolation) as e:
            wire.parse(doc)
        assert e.value.path == "workflow/graph/job[1]/port[2]/@seq"

    def test_structural_errors_carry_rule_and_findings(self, fixtures):
        with pytest.raises(InvariantViolation) as e:
            wire.parse((fixtures / "r4_cycle.xml").read_bytes())
        assert e.value.rule == "R4"
        assert all(f.rule.value == "R4" for f in e.value.findings)

    def test_parse_lenient_reports_instead_of_raising(self, fixtures):
        w, findings = wire.parse_lenient((fixtures / "r4_cycle.xml").read_bytes())
        assert w.name == "r4"
        assert {f.rule.value for f in findings} == {"R4"}
