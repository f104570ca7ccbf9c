import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import golden
from findex.condexp import validate_ce
from findex.inclusion import EmbeddingError
from findex.scenario import (CHECK_IDS, DEFAULT_CHECKS, SCHEMA_VERSION, ScenarioError,
                             parse_scenario, random_scenario, scenario_from_dict)


def test_golden_files_round_trip_bit_exactly(corpus_dir):
    files = sorted(corpus_dir.glob("*.json"))
    assert len(files) >= 12
    for f in files:
        text = f.read_text(encoding="utf-8")
        assert parse_scenario(text).to_json() == text, f.name


def test_ex1_golden_file():
    sc = golden("ex1")
    assert sc.kind == "trace"
    assert str(sc.embedding.amb_shape) == "M2"
    assert sc.checks == DEFAULT_CHECKS
    E = sc.build()
    assert E.shape.dim == 4


def _doc(**over):
    d = {"schema_version": SCHEMA_VERSION, "name": "t",
         "expectation": {"kind": "trace", "params": {}},
         "embedding": {"sub_blocks": [1], "amb_blocks": [2], "inclusion_matrix": [[2]]}}
    d.update(over)
    return d


def test_unknown_check_is_rejected_with_its_position():
    with pytest.raises(ScenarioError, match=r"checks\[1\]"):
        scenario_from_dict(_doc(checks=["sandwich", "no_such_check"]))


def test_unitality_violation_names_the_block():
    d = _doc(embedding={"sub_blocks": [1], "amb_blocks": [2, 3], "inclusion_matrix": [[2], [2]]})
    with pytest.raises(EmbeddingError, match="A-block 1"):
        scenario_from_dict(d)


def test_json_syntax_error_reports_line():
    with pytest.raises(ScenarioError, match="line 3"):
        parse_scenario('{\n  "name": "x",\n  oops\n}')


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d.pop("name"), "name"),
    (lambda d: d.pop("expectation"), "expectation"),
    (lambda d: d.update(schema_version="9"), "schema_version"),
    (lambda d: d["expectation"].update(kind="nope"), "expectation.kind"),
    (lambda d: d.pop("embedding"), "embedding"),
    (lambda d: d["embedding"].pop("inclusion_matrix"), "embedding.inclusion_matrix"),
    (lambda d: d.update(tolerances={"tol": 1e-9}), "tolerances.tol"),
    (lambda d: d.update(tolerances={"bogus": "1"}), "tolerances.bogus"),
    (lambda d: d["expectation"].update(kind="weighted_corner",
                                       params={"n_blocks": [1], "lambda": 0.5}),
     "expectation.params.lambda"),
])
def test_schema_errors_name_the_field(mutate, path):
    d = _doc()
    mutate(d)
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(d)
    assert info.value.path == path


def test_tolerance_override_round_trips():
    d = _doc(tolerances={"tol": "1e-07"})
    sc = scenario_from_dict(d)
    assert sc.tolerances.tol == 1e-7
    assert parse_scenario(sc.to_json()).tolerances == sc.tolerances


@given(st.integers(1, 10_000))
def test_random_scenario_is_deterministic_and_round_trips(seed):
    a, b = random_scenario(seed), random_scenario(seed)
    assert a.to_json() == b.to_json()
    again = parse_scenario(a.to_json())
    assert again.to_json() == a.to_json()
    for u, v in zip(a.embedding.block_unitaries, again.embedding.block_unitaries):
        assert np.array_equal(u, v)
    assert max(a.embedding.amb_shape.blocks) <= 6
    assert a.embedding.amb_shape.n_blocks <= 3 and a.embedding.sub_shape.n_blocks <= 3


def test_block_dim_one_gives_commutative_scenarios():
    for seed in range(1, 30):
        sc = random_scenario(seed, max_block_dim=1)
        assert sc.embedding.amb_shape.is_commutative


def test_random_scenario_rejects_bad_bounds():
    with pytest.raises(ValueError):
        random_scenario(1, max_blocks=0)


def test_seed_sweep_builds_valid_expectations():
    for seed in range(1, 101):
        E = random_scenario(seed).build(validate=False)
        rep = validate_ce(E, restarts=2)
        assert rep.ok, (seed, rep.failures())


def test_with_checks_and_expected_counterexample():
    sc = golden("elambda-1_2.25")
    assert sc.expect_counterexample == ("floor_k_squared",)
    assert "floor_k_squared" in sc.checks
    assert golden("ex1").with_checks(["sandwich"]).checks == ("sandwich",)
    assert set(DEFAULT_CHECKS) == set(CHECK_IDS) - {"floor_k_squared"}


def test_numbers_are_decimal_strings_in_files(corpus_dir):
    d = json.loads((corpus_dir / "elambda-1_3.json").read_text())
    assert d["expectation"]["params"]["lambda"] == "0.3333333333333333"
