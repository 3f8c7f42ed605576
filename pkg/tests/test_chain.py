import json

import pytest

from blendkit import fixtures
from blendkit.chain import ChainSpec, Collect, _substitute, collect_values, parse_chain, run_chain
from blendkit.controller import Blender
from blendkit.description import load_catalog
from blendkit.errors import ChainAborted, SpecErrors, UnknownInteraction, UnknownServer
from blendkit.policy import ScriptedClock

from conftest import golden, normalized_chain

CATALOG = load_catalog(fixtures.config_dir())


def _good_spirit():
    return json.loads(fixtures.chain_path("good-spirit").read_text())


def _paths(doc, catalog=None):
    with pytest.raises(SpecErrors) as info:
        parse_chain(doc, catalog)
    return {e.path for e in info.value.errors}


def test_parse_good_spirit():
    spec = parse_chain(_good_spirit(), CATALOG)
    assert [s.id for s in spec.steps] == ["search", "followers", "followees"]
    assert spec.steps[0].collect == Collect("users", "results.from_user", True)
    assert len(spec.steps[0].params) == 2
    assert spec.steps[1].foreach == "users"
    assert spec.is_required(spec.steps[0])
    assert not spec.is_required(spec.steps[1])


def test_dangling_references():
    doc = _good_spirit()
    doc["steps"][1]["foreach"] = "${people}"
    doc["steps"][2]["params"]["screen_name"] = "${item} of ${people}"
    assert _paths(doc) == {"steps.1.foreach", "steps.2.params.screen_name"}


def test_collection_must_be_defined_earlier():
    doc = _good_spirit()
    doc["steps"].reverse()
    assert "steps.0.foreach" in _paths(doc)


def test_item_outside_foreach():
    doc = _good_spirit()
    doc["steps"][0]["params"][0]["q"] = "${item}"
    assert _paths(doc) == {"steps.0.params.0.q"}


def test_structural_errors():
    assert _paths({"steps": [{"id": "a", "server": "s", "interaction": "i", "params": [],
                              "collect": {"name": "x"}, "colour": 1, "required": "y"}],
                   "extra": 1}) == {"extra", "steps.0.params", "steps.0.collect", "steps.0.colour",
                                    "steps.0.required"}
    assert _paths({"steps": [{"id": "a", "server": "s", "interaction": "i"},
                             {"id": "a", "server": "s", "interaction": "i"}]}) == {"steps.1.id"}
    assert _paths({"nope": []}) == {"steps"}


def test_catalog_checks():
    doc = _good_spirit()
    doc["steps"][0]["server"] = "myspace"
    with pytest.raises(UnknownServer):
        parse_chain(doc, CATALOG)
    doc = _good_spirit()
    doc["steps"][1]["interaction"] = "friends"
    with pytest.raises(UnknownInteraction):
        parse_chain(doc, CATALOG)
    doc = _good_spirit()
    doc["steps"][1]["params"]["user"] = "x"
    assert _paths(doc, CATALOG) == {"steps.followers.params"}


def test_empty_chain_runs_to_nothing(blender):
    result = run_chain(parse_chain({"steps": []}), blender)
    assert (result.status, result.steps, result.collections) == ("ok", [], {})


def test_collect_values():
    tree = {"results": [{"u": "a"}, {"u": None}, {"v": 1}, {"u": "b"}], "one": {"u": "c"},
            "ids": [1, 2], "nested": [{"l": [1, 2]}, {"l": [3]}]}
    assert collect_values(tree, "results.u") == ["a", "b"]
    assert collect_values(tree, "one.u") == ["c"]
    assert collect_values(tree, "ids") == [1, 2]
    assert collect_values(tree, "nested.l") == [[1, 2], [3]]
    assert collect_values(tree, "missing.x") == []


def test_substitute():
    colls = {"users": ["a", "b"], "ids": [1, 2]}
    assert _substitute("${item}", 5, colls) == 5
    assert _substitute("${ids}", None, colls) == "1,2"
    assert _substitute("u=${item}; all=${users}", "x", colls) == "u=x; all=a,b"
    assert _substitute(3, None, colls) == 3


def test_good_spirit_run(blender, social_mock, social_fixture):
    spec = parse_chain(_good_spirit(), blender.catalog)
    result = run_chain(spec, blender)
    assert result.status == "ok"
    expected = []
    for route in social_fixture["routes"]:
        if route["path"] == "/search.json" and route["params"].get("q") == "good spirit":
            for r in route["responses"][0]["body"]["results"]:
                if r["from_user"] not in expected:
                    expected.append(r["from_user"])
    assert result.collections["users"] == expected == ["alice", "bob", "carol"]
    for step_id in ("followers", "followees"):
        assert [run.item for run in result.step(step_id).runs] == expected
    assert result.step("followers").runs[1].result.prepared_content["followers"] == [2001, 2004]
    # 2 searches + 1 token request + 3 followers + 3 followees
    assert len(social_mock.log) == 9


def test_good_spirit_matches_golden(blender, social_mock):
    result = run_chain(parse_chain(_good_spirit(), blender.catalog), blender)
    actual = normalized_chain(result, social_mock.base_url)
    assert actual == golden("good-spirit", actual)


def test_replay_is_identical_modulo_timing(tmp_path):
    from blendkit.mock import materialize_config, start_mock
    outputs = []
    for i in range(2):
        clock = ScriptedClock(0.0)
        with start_mock(fixtures.mock_fixture_path(), clock=clock.now) as mock:
            config = materialize_config(fixtures.config_dir(), tmp_path / str(i), mock.base_url)
            blender = Blender(config, clock=clock)
            result = run_chain(parse_chain(_good_spirit(), blender.catalog), blender)
            outputs.append(normalized_chain(result, mock.base_url))
    assert outputs[0] == outputs[1]


def test_required_step_with_nothing_collected_aborts(blender, social_mock):
    doc = _good_spirit()
    doc["steps"][0]["params"] = {"q": "nobody says this"}
    with pytest.raises(ChainAborted) as info:
        run_chain(parse_chain(doc), blender)
    partial = info.value.result
    assert partial.status == "aborted"
    assert partial.collections == {"users": []}
    assert [s.id for s in partial.steps] == ["search"]
    assert len(social_mock.log) == 1


def test_optional_step_over_empty_collection(blender):
    doc = _good_spirit()
    doc["steps"][0]["params"] = {"q": "nobody says this"}
    doc["steps"][0]["required"] = False
    result = run_chain(parse_chain(doc), blender)
    assert result.status == "ok"
    assert result.step("followers").runs == []


def test_failed_requests_make_the_chain_partial(blender):
    spec = ChainSpec(parse_chain({"steps": [
        {"id": "p", "server": "facebook-like", "interaction": "post", "params": {"id": "42"}},
        {"id": "s", "server": "twitter-search", "interaction": "search",
         "params": {"q": "good spirit", "page": 1}},
    ]}).steps)
    result = run_chain(spec, blender)
    assert result.status == "partial"
    assert result.step("p").errors == 1
    assert result.step("s").errors == 0


def test_bad_parameter_becomes_a_failed_run(blender):
    spec = parse_chain({"steps": [{"id": "s", "server": "twitter-search", "interaction": "search",
                                   "params": {"q": "x", "page": "two"}}]})
    result = run_chain(spec, blender)
    assert result.step("s").runs[0].result.error["type"] == "TypeMismatch"
    assert result.status == "partial"
