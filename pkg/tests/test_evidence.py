import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import record
from crossview.evidence import (
    MalformedRecord, ScoreOutOfRange, UnknownCamera, initial_view_graphs, load_evidence,
    make_evidence, parse_record,
)
from crossview.geometry import CameraModel, Homography, dump_calibration
from crossview.ontology import default_ontology, entity_parse_graph, is_valid_parse_graph
from crossview.simulator import NoiseModel, SceneConfig, generate_scene, render_proposals, write_scene_files

CAMS = [CameraModel(1, 100, 100, Homography.identity()), CameraModel(2, 100, 100, Homography.identity())]


def _raw(**kw):
    rec = {"camera": 1, "t": 0, "tracklet": "a", "type": "person", "bbox": [0, 0, 2, 4], "det": 0.9,
           "feat": [0.0, 1.0], "actions": {}, "attrs": {}}
    rec.update(kw)
    return rec


def test_empty_proposal_file(tmp_path):
    (tmp_path / "p.jsonl").write_text("")
    dump_calibration(CAMS, tmp_path / "c.jsonl")
    ev = load_evidence(tmp_path / "p.jsonl", tmp_path / "c.jsonl")
    assert ev.T == 0 and ev.all_records() == []
    assert initial_view_graphs(ev) == {}


def test_one_record_per_cell_gives_one_graph_per_cell():
    recs = [record(c, t, f"x{c}", 5, 5, (0, 0)) for c in (1, 2) for t in range(3)]
    views = initial_view_graphs(make_evidence(recs, CAMS))
    assert sorted(views) == [(c, t) for c in (1, 2) for t in range(3)]
    assert all(len(vg.entities) == 1 for vg in views.values())


def test_simulated_scene_round_trips_through_files(tmp_path):
    r = render_proposals(generate_scene(SceneConfig(n_cameras=2, n_frames=4, n_entities=2), 1),
                         NoiseModel(clutter_rate=0.5), 1)
    paths = write_scene_files(r, tmp_path)
    ev = load_evidence(paths["proposals"], paths["calibration"], default_ontology(), T=r.T)
    assert ev.all_records() == r.evidence().all_records()


def test_det_threshold_filtering():
    recs = [record(1, 0, n, 5, 5, (0, 0), det=d) for n, d in (("a", 0.3), ("b", 0.6), ("c", 0.9))]
    ev = make_evidence(recs, CAMS)
    assert len(initial_view_graphs(ev, 0.0)[(1, 0)].entities) == 3
    assert len(initial_view_graphs(ev, 0.5)[(1, 0)].entities) == 2
    assert [e.entity_id for e in initial_view_graphs(ev, 0.9)[(1, 0)].entities] == ["c"]
    assert initial_view_graphs(ev, 1.0)[(1, 0)].entities == []
    with pytest.raises(ValueError):
        initial_view_graphs(ev, 1.5)


@given(st.lists(st.floats(0, 1), max_size=8), st.floats(0, 1))
def test_threshold_keeps_exactly_the_scores_above(dets, thr):
    recs = [record(1, 0, f"r{i}", 5, 5, (0, 0), det=d) for i, d in enumerate(dets)]
    vg = initial_view_graphs(make_evidence(recs, CAMS, T=1), thr)[(1, 0)]
    assert len(vg.entities) == sum(d >= thr for d in dets)


def test_view_nodes_are_valid_parse_graphs():
    ont = default_ontology()
    acts = {a: 0.2 for a in ont.actions_for("person")}
    acts["walking"] = 0.6
    rec = record(1, 0, "a", 5, 5, (0, 0), actions=acts, attrs={"hat": 0.8, "glasses": 0.1})
    node = initial_view_graphs(make_evidence([rec], CAMS, ontology=ont))[(1, 0)].entities[0]
    assert node.action == "walking" and node.attributes == {"glasses": False, "hat": True}
    ok, errs = is_valid_parse_graph(ont, entity_parse_graph(node.object_type, node.action, node.attributes))
    assert ok, errs


@pytest.mark.parametrize("bad", [
    {"bbox": [0, 0, 1]},
    {"bbox": [3, 0, 1, 4]},
    {"feat": "x"},
    {"t": -1},
    {"camera": None},
])
def test_malformed_records(bad):
    with pytest.raises(MalformedRecord):
        parse_record(_raw(**bad))


@pytest.mark.parametrize("bad", [{"det": 1.2}, {"actions": {"walking": -0.1}}, {"attrs": {"hat": 2}}])
def test_scores_out_of_range(bad):
    with pytest.raises(ScoreOutOfRange):
        parse_record(_raw(**bad))


def test_unknown_camera_and_dimension_mismatch():
    with pytest.raises(UnknownCamera):
        make_evidence([record(9, 0, "a", 1, 1, (0, 0))], CAMS)
    with pytest.raises(MalformedRecord):
        make_evidence([record(1, 0, "a", 1, 1, (0, 0)), record(2, 0, "b", 1, 1, (0, 0, 0))], CAMS)


def test_action_domain_must_match_ontology():
    with pytest.raises(MalformedRecord):
        make_evidence([record(1, 0, "a", 1, 1, (0, 0), actions={"walking": 1.0})], CAMS,
                      ontology=default_ontology())


def test_bad_json_line(tmp_path):
    (tmp_path / "p.jsonl").write_text(json.dumps(_raw()) + "\n{oops\n")
    dump_calibration(CAMS, tmp_path / "c.jsonl")
    with pytest.raises(MalformedRecord, match="line 2"):
        load_evidence(tmp_path / "p.jsonl", tmp_path / "c.jsonl")


def test_missing_tracklet_id_gets_a_unique_fallback(tmp_path):
    raw = _raw()
    del raw["tracklet"]
    (tmp_path / "p.jsonl").write_text(json.dumps(raw) + "\n" + json.dumps(raw) + "\n")
    dump_calibration(CAMS, tmp_path / "c.jsonl")
    ev = load_evidence(tmp_path / "p.jsonl", tmp_path / "c.jsonl")
    assert len({r.tracklet for r in ev.all_records()}) == 2
    assert np.array_equal(ev.all_records()[0].feat, [0.0, 1.0])
