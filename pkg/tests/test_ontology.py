import itertools
import json

import pytest
from hypothesis import given, strategies as st

from crossview.ontology import (
    PERSON_ACTIONS, MalformedDocument, OntologyEdge, OntologyGraph, OntologyNode, ParseGraph,
    SchemaViolation, UnknownNodeId, default_ontology, dump_ontology, entity_parse_graph,
    is_valid_parse_graph, load_ontology,
)


def test_default_domain_has_three_object_types():
    ont = default_ontology()
    assert ont.object_types() == ["bicycle", "person", "vehicle"]
    assert ont.actions_for("person") == sorted(PERSON_ACTIONS)
    assert "hand" in ont.parts_of("arm")
    assert ont.incompatible("standing", "sitting") and ont.incompatible("sitting", "standing")


def test_empty_document_is_a_valid_ontology():
    ont = load_ontology('{"nodes": [], "edges": []}')
    assert ont.nodes == () and ont.edges == frozenset()


def test_dangling_edge_rejected():
    doc = {"nodes": [{"id": "person", "kind": "Object", "label": "p"}],
           "edges": [{"src": "ghost", "dst": "person", "relation": "CanPerform"}]}
    with pytest.raises(SchemaViolation):
        load_ontology(doc)


@pytest.mark.parametrize("doc", [
    "not json",
    '{"nodes": []}',
    '{"nodes": [], "edges": [], "extra": 1}',
])
def test_malformed_documents(doc):
    with pytest.raises(MalformedDocument):
        load_ontology(doc)


def test_unknown_fields_rejected():
    doc = {"nodes": [{"id": "a", "kind": "Object", "label": "a", "colour": "red"}], "edges": []}
    with pytest.raises(SchemaViolation):
        load_ontology(doc)


@pytest.mark.parametrize("src,dst,rel", [
    ("walk", "person", "PartOf"),          # action cannot be a part
    ("arm", "walk", "CanPerform"),         # wrong direction
    ("tall", "walk", "CanHave"),           # attribute on an action
    ("walk", "person", "Incompatible"),    # incompatibility only between actions
])
def test_relation_endpoint_rules(src, dst, rel):
    nodes = [OntologyNode("person", "Object"), OntologyNode("arm", "Part"),
             OntologyNode("walk", "Action"), OntologyNode("tall", "Attribute")]
    with pytest.raises(SchemaViolation):
        OntologyGraph(nodes, [OntologyEdge(src, dst, rel)])


def test_partof_cycle_rejected():
    nodes = [OntologyNode("a", "Part"), OntologyNode("b", "Part")]
    with pytest.raises(SchemaViolation):
        OntologyGraph(nodes, [OntologyEdge("a", "b", "PartOf"), OntologyEdge("b", "a", "PartOf")])


def test_duplicate_ids_rejected():
    with pytest.raises(SchemaViolation):
        OntologyGraph([OntologyNode("a", "Object"), OntologyNode("a", "Part")])


def test_round_trip():
    ont = default_ontology()
    assert load_ontology(dump_ontology(ont)) == ont
    assert load_ontology(json.loads(dump_ontology(ont))) == ont


def test_single_action_is_valid():
    ok, v = is_valid_parse_graph(default_ontology(), entity_parse_graph("person", "standing"))
    assert ok and v == []


def test_incompatible_actions_named_in_violation():
    pg = ParseGraph(("person", "standing", "sitting"),
                    (("standing", "person", "CanPerform"), ("sitting", "person", "CanPerform")))
    ok, v = is_valid_parse_graph(default_ontology(), pg)
    assert not ok
    assert any("sitting" in s and "standing" in s for s in v)


def test_empty_parse_graph_valid():
    assert is_valid_parse_graph(default_ontology(), ParseGraph()) == (True, [])


def test_unknown_node_in_parse_graph():
    with pytest.raises(UnknownNodeId):
        is_valid_parse_graph(default_ontology(), ParseGraph(("dragon",)))


def test_edge_not_in_ontology_is_a_violation():
    pg = ParseGraph(("vehicle", "walking"), (("walking", "vehicle", "CanPerform"),))
    ok, v = is_valid_parse_graph(default_ontology(), pg)
    assert not ok and len(v) == 1


def _person_graph(actions, attrs):
    nodes = ("person",) + tuple(actions) + tuple(attrs)
    edges = tuple((a, "person", "CanPerform") for a in actions) + tuple((a, "person", "CanHave") for a in attrs)
    return ParseGraph(nodes, edges)


actions_st = st.lists(st.sampled_from(PERSON_ACTIONS), unique=True, max_size=3)
attrs_st = st.lists(st.sampled_from(["hat", "male", "jeans"]), unique=True, max_size=3)


@given(actions_st, attrs_st, st.randoms())
def test_incompatibility_check_is_order_independent(actions, attrs, rnd):
    ont = default_ontology()
    shuffled = list(actions)
    rnd.shuffle(shuffled)
    assert is_valid_parse_graph(ont, _person_graph(actions, attrs))[0] == \
        is_valid_parse_graph(ont, _person_graph(shuffled, attrs))[0]


@given(actions_st, attrs_st)
def test_validation_is_monotone_under_node_removal(actions, attrs):
    ont = default_ontology()
    if not is_valid_parse_graph(ont, _person_graph(actions, attrs))[0]:
        return
    for k in range(len(actions)):
        for sub in itertools.combinations(actions, k):
            assert is_valid_parse_graph(ont, _person_graph(sub, attrs))[0]
