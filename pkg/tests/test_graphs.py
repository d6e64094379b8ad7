import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import box_at
from crossview.geometry import CameraModel, Homography
from crossview.graphs import (
    EmptyInput, EntityValues, IdentityMapping, MappingError, TypeMismatch, ViewEntityNode,
    ViewParseGraph, aggregate_scene_node, build_hierarchy, entity_track, hierarchy_records,
    read_records, scene_id_for, write_records,
)

H_GEN = [np.array([[1.1, 0.2, -4.0], [0.1, 0.9, 3.0], [2e-3, 1e-3, 1.0]]),
         np.array([[0.8, -0.1, 10.0], [0.3, 1.3, -2.0], [-1e-3, 3e-3, 1.0]]),
         np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 1.0], [0.0, 1e-3, 1.0]])]


def node(eid, x=0.0, y=0.0, feat=(0.0, 0.0), ty="person"):
    return ViewEntityNode(eid, ty, box_at(x, y), np.asarray(feat, float))


def test_single_view_aggregation():
    n = node("a", 3, 4, (0.5, 2.0))
    s = aggregate_scene_node([(n, Homography.identity())], "s")
    assert np.array_equal(s.appearance, n.appearance)
    assert s.location == (3.0, 4.0)


def test_mean_of_two_features():
    s = aggregate_scene_node([(node("a", feat=(0, 2)), Homography.identity()),
                              (node("b", feat=(2, 0)), Homography.identity())])
    assert np.array_equal(s.appearance, [1.0, 1.0])


def test_centroid_matches_projective_oracle():
    pts = [(100.0, 200.0), (50.0, 80.0), (300.0, 10.0)]
    views = [(node(f"v{i}", *p), Homography(m)) for i, (p, m) in enumerate(zip(pts, H_GEN))]
    want = []
    for (x, y), m in zip(pts, H_GEN):
        u = m @ np.array([x, y, 1.0])
        want.append(u[:2] / u[2])
    assert np.allclose(aggregate_scene_node(views).location, np.mean(want, axis=0), atol=1e-9)


def test_aggregation_errors():
    with pytest.raises(EmptyInput):
        aggregate_scene_node([])
    with pytest.raises(TypeMismatch):
        aggregate_scene_node([(node("a"), Homography.identity()), (node("b", ty="vehicle"), Homography.identity())])


@given(st.permutations(range(3)))
def test_aggregation_permutation_invariant(perm):
    views = [(node(f"v{i}", 10.0 * i, 5.0 + i, (i, -i)), Homography(H_GEN[i])) for i in range(3)]
    a = aggregate_scene_node(views)
    b = aggregate_scene_node([views[i] for i in perm])
    assert np.allclose(a.location, b.location, atol=1e-9) and np.allclose(a.appearance, b.appearance)


def test_identity_mapping_constraints():
    IdentityMapping(frozenset({("s", 1, "a", 0), ("s", 2, "b", 0)}))
    with pytest.raises(MappingError):   # one view entity, two scene entities
        IdentityMapping(frozenset({("s", 1, "a", 0), ("r", 1, "a", 0)}))
    with pytest.raises(MappingError):   # two view entities of one camera at one t
        IdentityMapping(frozenset({("s", 1, "a", 0), ("s", 1, "b", 0)}))


def test_malformed_bbox_rejected():
    with pytest.raises(ValueError):
        ViewEntityNode("a", "person", (5, 0, 1, 1), np.zeros(2))


def _views(layout):
    """layout: {(cam, t): [(eid, x, y), ...]}"""
    return {k: ViewParseGraph(k[0], k[1], [node(e, x, y) for e, x, y in v]) for k, v in layout.items()}


CAMS = {1: CameraModel(1, 100, 100, Homography.identity()), 2: CameraModel(2, 100, 100, Homography.identity())}


def test_entity_track_single_camera():
    views = _views({(1, t): [("a", t, 0)] for t in (1, 2, 3)})
    h = build_hierarchy(views, CAMS, 4)
    sid = scene_id_for([(1, "a")])
    tr = entity_track(h, sid)
    assert [t for t, _ in tr[1]] == [1, 2, 3] and tr[2] == []
    assert entity_track(h, "nobody") == {1: [], 2: []}


def test_entity_track_interleaved_sorted():
    views = _views({(1, 3): [("a", 3, 0)], (2, 0): [("b", 0, 0)], (1, 1): [("a", 1, 0)], (2, 2): [("b", 2, 0)]})
    h = build_hierarchy(views, CAMS, 4, {(1, "a"): "S", (2, "b"): "S"})
    tr = entity_track(h, "S")
    links = sorted([(c, t) for s, c, v, t in h.phi.links])   # sort oracle
    assert [(1, t) for t, _ in tr[1]] + [(2, t) for t, _ in tr[2]] == links


def test_build_hierarchy_interpolates_gaps():
    views = _views({(1, 0): [("a", 0, 0)], (1, 3): [("a", 3, 6)]})
    h = build_hierarchy(views, CAMS, 5)
    sid = scene_id_for([(1, "a")])
    assert [sg.get(sid) is not None for sg in h.scene] == [True, True, True, True, False]
    assert h.scene[1].get(sid).location == pytest.approx((1.0, 2.0))


def test_build_hierarchy_requires_full_assignment():
    views = _views({(1, 0): [("a", 0, 0), ("b", 1, 1)]})
    with pytest.raises(MappingError):
        build_hierarchy(views, CAMS, 1, {(1, "a"): "S"})


def test_same_camera_same_time_merge_rejected():
    views = _views({(1, 0): [("a", 0, 0), ("b", 1, 1)]})
    with pytest.raises(MappingError):
        build_hierarchy(views, CAMS, 1, {(1, "a"): "S", (1, "b"): "S"})


def test_records_round_trip(tmp_path):
    views = _views({(1, 0): [("a", 1, 2)], (2, 0): [("b", 1, 2)]})
    vals = {"S": EntityValues({0: "walking"}, {0: {"hat": True}}, {0: {"hat": 0.8}})}
    h = build_hierarchy(views, CAMS, 1, {(1, "a"): "S", (2, "b"): "S"}, vals)
    recs = hierarchy_records(h, vals)
    assert {r["view_id"] for r in recs} == {"a", "b"}
    assert all(r["action"] == "walking" and r["attributes"] == {"hat": True} for r in recs)
    assert recs[0]["attr_probs"] == {"hat": 0.8}
    path = tmp_path / "out.jsonl"
    write_records(recs, path)
    assert read_records(path) == recs
