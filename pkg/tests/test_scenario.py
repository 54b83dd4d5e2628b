import json
import math

import pytest

from burnside_lab.errors import ValidationError
from burnside_lab.scenario import (
    EXPERIMENTS,
    TABLE_HEADERS,
    load_scenario,
    parse_scenario,
    report_schema,
    run_scenario,
    shipped_scenarios,
    table_rows,
    validate_report,
)

MINIMAL = {
    "name": "tiny",
    "generators": [{"name": "r", "kind": "rotation", "axis": [0, 0, 1], "angle": 1.0}],
    "experiments": ["growth"],
}


def scenario_text(**changes):
    doc = json.loads(json.dumps(MINIMAL))
    doc.update(changes)
    return json.dumps(doc)


def test_minimal_scenario_defaults():
    s = parse_scenario(json.dumps(MINIMAL))
    assert s.name == "tiny" and s.seed == 0 and s.experiments == ("growth",)
    assert len(s.generator_set().names) == 1


def test_duplicate_generator_name():
    gens = [MINIMAL["generators"][0], dict(MINIMAL["generators"][0])]
    with pytest.raises(ValidationError, match="duplicate generator name 'r'"):
        parse_scenario(scenario_text(generators=gens))


def test_negative_epsilon():
    with pytest.raises(ValidationError, match="epsilon must be positive"):
        parse_scenario(scenario_text(epsilon=-1))


def test_unknown_keys_are_named():
    with pytest.raises(ValidationError, match="unknown key 'colour'"):
        parse_scenario(scenario_text(colour="red"))
    gen = dict(MINIMAL["generators"][0], spin=1)
    with pytest.raises(ValidationError, match=r"unknown key 'generators\[0\].spin'"):
        parse_scenario(scenario_text(generators=[gen]))
    with pytest.raises(ValidationError, match="unknown key 'options.bogus'"):
        parse_scenario(scenario_text(options={"bogus": 1}))


def test_parse_error_has_line_and_column():
    with pytest.raises(ValidationError, match="line 3, column"):
        parse_scenario('{\n  "name": "x",\n  "generators": [,]\n}')


def test_field_paths_in_errors():
    gen = dict(MINIMAL["generators"][0], angle="big")
    with pytest.raises(ValidationError, match=r"generators\[0\]\.angle"):
        parse_scenario(scenario_text(generators=[gen]))
    with pytest.raises(ValidationError, match=r"epsilon\[1\]"):
        parse_scenario(scenario_text(epsilon=[0.5, 0]))
    with pytest.raises(ValidationError, match=r"experiments\[0\]"):
        parse_scenario(scenario_text(experiments=["dance"]))
    with pytest.raises(ValidationError, match="seed"):
        parse_scenario(scenario_text(seed=2 ** 64))
    with pytest.raises(ValidationError, match="name: required"):
        parse_scenario(json.dumps({"generators": MINIMAL["generators"], "experiments": ["growth"]}))


def test_experiments_run_in_fixed_order():
    s = parse_scenario(scenario_text(experiments=["order", "growth"]))
    assert s.experiments == ("growth", "order")


def test_mobius_generator_accepts_complex_pairs():
    gen = {"name": "m", "kind": "mobius", "a": [2, 0], "b": 0, "c": 0, "d": [0.5, 0]}
    s = parse_scenario(scenario_text(generators=[gen]))
    assert len(s.generator_set().names) == 1


def test_shipped_scenarios_present_and_valid():
    shipped = shipped_scenarios()
    assert {"so3-baseline", "cyclic4", "commuting-twists", "free-rotations", "linked-twists"} <= set(shipped)
    for name in shipped:
        assert load_scenario(name).experiments == EXPERIMENTS


def test_partial_failure_is_recorded_per_block():
    # derivs needs radius >= 2; growth still runs
    s = parse_scenario(scenario_text(experiments=["growth", "derivs"], max_radius=1))
    doc = run_scenario(s).to_json()
    validate_report(doc)
    assert doc["experiments"]["derivs"]["status"] == "error"
    assert "rows" in doc["experiments"]["growth"]


def test_truncation_flag():
    s = parse_scenario(scenario_text(generators=[
        {"name": "a", "kind": "rotation", "axis": [0, 0, 1], "angle": math.acos(1 / 3)},
        {"name": "b", "kind": "rotation", "axis": [1, 0, 0], "angle": math.acos(1 / 3)},
    ], max_radius=6, options={"element_cap": 100}))
    rep = run_scenario(s)
    assert rep.truncated and rep.to_json()["truncated"]
    validate_report(rep.to_json())


def test_baseline_report_content():
    s = load_scenario("so3-baseline").with_overrides(experiments=("growth", "derivs", "qc"))
    doc = run_scenario(s).to_json()
    validate_report(doc)
    ex = doc["experiments"]
    assert ex["growth"]["classification"] == "finite"
    assert abs(ex["derivs"]["exponent"]) < 1e-9
    for run in ex["qc"]["runs"]:
        assert all(abs(k - 1) < 1e-9 for k in run["max_dilatation_per_generator"].values())


def test_csv_headers():
    s = parse_scenario(scenario_text(experiments=["growth", "derivs", "pesin"], max_radius=3,
                                     samples=200, options={"pesin_radius": 2}))
    rep = run_scenario(s)
    for name in ("growth", "derivs"):
        rows = table_rows(rep, name)
        assert tuple(rows[0]) == TABLE_HEADERS[name] and len(rows) > 1
    rows = table_rows(rep, "pesin", 0.5)
    assert tuple(rows[0]) == ("sample_index", "x", "y", "z", "m11", "m12", "m22")
    assert len(rows) == 201


def test_schema_is_draft_2020():
    assert report_schema()["$schema"].endswith("2020-12/schema")
