import json
from pathlib import Path

import pytest

from daclear.errors import SchemaError
from daclear.io import (
    parse_instance,
    parse_solution,
    serialize_instance,
    solution_to_doc,
)
from daclear.driver import clear_exact

FIXTURE = Path(__file__).resolve().parent.parent / "fixtures" / "appendix_a.json"

from helpers import appendix_a, f3, ramp_fixture, random_instance


class TestParseInstance:
    def test_appendix_a_fixture_file(self):
        inst = parse_instance(FIXTURE.read_text())
        assert inst.areas == ("X",)
        assert inst.hours == 1
        assert len(inst.blocks) == 4

    def test_missing_field_path(self):
        with pytest.raises(SchemaError) as exc:
            parse_instance(json.dumps({"price_interval": {"lower": 0, "upper": 5}}))
        assert "$." in str(exc.value)

    def test_bad_type_path(self):
        doc = json.loads(FIXTURE.read_text())
        doc["blocks"][0]["limit_price"] = "one"
        with pytest.raises(SchemaError) as exc:
            parse_instance(json.dumps(doc))
        assert "blocks[0]" in str(exc.value)

    def test_round_trip_preserves_semantics(self):
        for seed in range(6):
            inst = random_instance(seed)
            text = serialize_instance(inst)
            again = parse_instance(text)
            assert serialize_instance(again) == text
            assert again.areas == inst.areas
            assert again.hours == inst.hours
            assert len(again.segments) == len(inst.segments)


class TestSolutionDocs:
    def test_round_trip(self):
        inst = f3()
        res = clear_exact(inst)
        text = json.dumps(solution_to_doc(inst, res.solution, res.prices))
        sel, delta, flows, prices = parse_solution(text)
        assert sel.blocks == res.solution.selection.blocks
        for k, v in res.solution.flows.items():
            assert flows[k] == v
        for k, v in res.prices.pi.items():
            assert prices[k] == v

    def test_delta_keys_survive(self):
        inst = ramp_fixture()
        res = clear_exact(inst)
        text = json.dumps(solution_to_doc(inst, res.solution, res.prices))
        _, delta, _, _ = parse_solution(text)
        for k, v in res.solution.delta.items():
            assert delta[k] == v
