import json
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crossview.energy import (
    EnergyWeights, action_energy, appearance_energy, attribute_energy, log_posterior, spatial_energy,
)
from crossview.evidence import initial_view_graphs, make_evidence
from crossview.experiments import SYNTH_WEIGHTS, train_prior, Workload
from crossview.graphs import EntityValues, build_hierarchy
from crossview.inference import with_values
from crossview.ontology import default_ontology
from crossview.simulator import (
    MAX_CONDITION, InvalidConfig, NoiseModel, SceneConfig, TooLarge, brute_force_map, config_from_json,
    config_to_json, enumerate_partitions, generate_scene, normalized_condition, render_proposals,
    structure_space,
)
from crossview.scoring import Problem

ONT = default_ontology()
NOISELESS = NoiseModel(bbox_sigma=0.0, appearance_sigma=0.0, action_flip=0.0, attr_flip=0.0, miss_prob=0.0,
                       clutter_rate=0.0, action_smoothing=0.0)


def test_zero_entities():
    s = generate_scene(SceneConfig(n_entities=0), 0)
    assert s.entities == [] and s.M == 3
    r = render_proposals(s, NoiseModel(), 0)
    assert r.records == [] and r.truth == []


def test_generation_and_rendering_are_deterministic():
    cfg = SceneConfig(n_cameras=2, n_frames=5, n_entities=3)
    a, b = generate_scene(cfg, 11), generate_scene(cfg, 11)
    assert all(np.array_equal(x.trajectory, y.trajectory) and x.actions == y.actions
               for x, y in zip(a.entities, b.entities))
    assert [c.homography.matrix.tolist() for c in a.cameras] == [c.homography.matrix.tolist() for c in b.cameras]
    ra, rb = render_proposals(a, NoiseModel(clutter_rate=1.0), 4), render_proposals(b, NoiseModel(clutter_rate=1.0), 4)
    assert ra.records == rb.records and ra.truth == rb.truth


def test_trajectories_in_bounds_and_cameras_conditioned():
    cfg = SceneConfig(n_cameras=1, n_frames=20, n_entities=2, arena=10.0)
    for seed in range(1000):
        s = generate_scene(cfg, seed)
        for e in s.entities:
            assert e.trajectory.shape == (20, 2)
            assert np.all((e.trajectory >= 0) & (e.trajectory <= cfg.arena))
            assert all(a in ONT.actions_for("person") for a in e.actions)
        assert normalized_condition(s.cameras[0], cfg.arena) <= MAX_CONDITION


def test_invalid_configs():
    with pytest.raises(InvalidConfig):
        generate_scene(SceneConfig(n_cameras=0))
    with pytest.raises(InvalidConfig):
        render_proposals(generate_scene(SceneConfig(n_entities=1)), NoiseModel(miss_prob=1.5))


def test_noiseless_truth_has_zero_energies():
    s = generate_scene(SceneConfig(n_cameras=3, n_frames=6, n_entities=3), 2)
    r = render_proposals(s, NOISELESS, 2)
    ev = r.evidence(ONT)
    views = initial_view_graphs(ev, 0.0)
    assign = {k: ent for k, ent in r.correspondence.items()}
    vals = {e.entity_id: EntityValues({t: e.actions[t] for t in range(s.T)},
                                      {t: dict(e.attributes) for t in range(s.T)}) for e in s.entities}
    h = build_hierarchy(views, ev.cameras, s.T, assign, vals)
    for t in range(s.T):
        for cam_id, cam in h.cameras.items():
            g, gv, links = h.scene[t], h.view_graph(cam_id, t), h.phi.at(t, cam_id)
            assert len(links) == 3
            assert spatial_energy(g, gv, links, cam) == pytest.approx(0.0, abs=1e-6)
            assert appearance_energy(g, gv, links) == pytest.approx(0.0, abs=1e-12)
            assert action_energy(g, gv, links, ev) == 0.0
            assert attribute_energy(g, gv, links) == 0.0


def test_noiseless_truth_is_the_exact_map():
    wl = Workload(SceneConfig(n_cameras=2, n_frames=4, n_entities=2), NOISELESS)
    prior = train_prior(wl)
    for seed in range(5):
        s = generate_scene(wl.scene, seed)
        r = render_proposals(s, NOISELESS, seed)
        h, lp = brute_force_map(r.evidence(ONT), SYNTH_WEIGHTS, prior)
        groups = defaultdict(set)
        for k, ent in r.correspondence.items():
            groups[ent].add(k)
        assert h.partition() == frozenset(frozenset(g) for g in groups.values())


def test_miss_probability_one_gives_no_proposals():
    s = generate_scene(SceneConfig(n_cameras=2, n_frames=5, n_entities=3), 0)
    r = render_proposals(s, NoiseModel(miss_prob=1.0), 0)
    assert r.records == [] and len(r.truth) == 2 * 5 * 3


def test_action_flip_rate():
    cfg = SceneConfig(n_cameras=4, n_frames=100, n_entities=25, appearance_margin=0.5, arena=50.0)
    s = generate_scene(cfg, 0)
    r = render_proposals(s, NoiseModel(action_flip=0.3, miss_prob=0.0), 0)
    truth = {(t["camera"], t["view_id"], t["t"]): t["action"] for t in r.truth}
    hits = [max(rec.actions, key=rec.actions.get) == truth[(rec.camera, rec.tracklet, rec.t)] for rec in r.records]
    assert len(hits) == 10_000
    assert np.mean(hits) == pytest.approx(0.7, abs=0.03)


def _tiny(n_entities, n_cameras, seed=0):
    s = generate_scene(SceneConfig(n_cameras=n_cameras, n_frames=3, n_entities=n_entities), seed)
    return render_proposals(s, NoiseModel(miss_prob=0.0), seed).evidence(ONT)


def test_brute_force_single_tracklet():
    ev = _tiny(1, 1)
    prior = train_prior(Workload(SceneConfig(), NoiseModel()))
    h, lp = brute_force_map(ev, SYNTH_WEIGHTS, prior)
    assert len(h.partition()) == 1
    assert lp == pytest.approx(log_posterior(h, ev, SYNTH_WEIGHTS, prior), abs=1e-9)


def test_brute_force_two_tracklets_picks_the_better_candidate():
    prior = train_prior(Workload(SceneConfig(), NoiseModel()))
    for seed in range(3):
        ev = _tiny(1, 2, seed)
        views = initial_view_graphs(ev)
        keys = sorted({(c, e.entity_id) for (c, t), vg in views.items() for e in vg.entities})
        assert len(keys) == 2
        scores = []
        for assign in ({keys[0]: "A", keys[1]: "A"}, {keys[0]: "A", keys[1]: "B"}):
            h, _ = with_values(build_hierarchy(views, ev.cameras, ev.T, assign), ev, SYNTH_WEIGHTS, prior)
            scores.append(log_posterior(h, ev, SYNTH_WEIGHTS, prior))
        h, lp = brute_force_map(ev, SYNTH_WEIGHTS, prior)
        assert lp == pytest.approx(max(scores), abs=1e-9)
        assert len(h.partition()) == (1 if scores[0] > scores[1] else 2)


def test_brute_force_limit():
    with pytest.raises(TooLarge):
        brute_force_map(_tiny(5, 2), SYNTH_WEIGHTS, train_prior(Workload(SceneConfig(), NoiseModel())), limit=8)


BELL = [1, 1, 2, 5, 15, 52, 203]


@given(st.integers(0, 6))
def test_unrestricted_partition_count_is_bell(n):
    parts = list(enumerate_partitions(range(n), lambda b, k: True))
    assert len(parts) == BELL[n] and len(set(parts)) == BELL[n]


def test_restricted_partition_counts():
    # a and b share a camera: 5 partitions of {a, b, c} minus the 2 that join them
    same_cam = {"a": 0, "b": 0, "c": 1}
    ok = lambda b, k: all(same_cam[x] != same_cam[k] for x in b)
    assert len(list(enumerate_partitions("abc", ok))) == 3
    # two cameras with two tracklets each: perfect and partial matchings, 1 + 4 + 2
    cams = {"a": 0, "b": 0, "c": 1, "d": 1}
    ok = lambda b, k: all(cams[x] != cams[k] for x in b)
    assert len(list(enumerate_partitions("abcd", ok))) == 7
    # two object types never mix
    types = {"a": "p", "b": "p", "c": "v"}
    assert len(list(enumerate_partitions("abc", lambda b, k: all(types[x] == types[k] for x in b)))) == 2


def test_structure_space_respects_slots():
    ev = _tiny(2, 2)
    p = Problem(initial_view_graphs(ev), ev, SYNTH_WEIGHTS, train_prior(Workload(SceneConfig(), NoiseModel())))
    assert len(list(structure_space(p))) == 7


def test_config_round_trip():
    cfg, noise = SceneConfig(n_cameras=2, speed=(0.5, 0.7)), NoiseModel(clutter_rate=0.25)
    assert config_from_json(json.loads(json.dumps(config_to_json(cfg, noise)))) == (cfg, noise)
