"""Synthetic workloads shared by the acceptance suite, the scripts and ``crossview bench``."""
from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import EnergyWeights
from .evidence import argmax_label
from .inference import ParseConfig, joint_parse_full
from .metrics import fuse_mean, fuse_vote, identity_f1
from .ontology import default_ontology
from .prior import estimate_prior
from .sampler import SamplerConfig
from .simulator import NoiseModel, SceneConfig, generate_scene, render_proposals, truth_hierarchy

# Ground-plane units are metres and appearance noise has unit variance, so the
# spatial term is up-weighted and the appearance term down-weighted.
SYNTH_WEIGHTS = EnergyWeights(w1=5.0, w2=0.3, w3=1.0, w4=1.0, xi=1.0)
TRAIN_SEED_BASE = 10_000
# Cheap births and deaths: single-frame clutter then gains little by attaching
# to a true entity, which otherwise traps the structure search.
SYNTH_PENALTIES = {"birth_logp": -0.5, "death_logp": -0.5}


@dataclass
class Workload:
    scene: SceneConfig
    noise: NoiseModel
    weights: EnergyWeights = SYNTH_WEIGHTS
    parse: ParseConfig = field(default_factory=lambda: ParseConfig(sampler=SamplerConfig(iterations=5000)))
    n_train: int = 5


IDENTITY = Workload(SceneConfig(n_cameras=3, n_frames=30, n_entities=5, appearance_margin=3.0),
                    NoiseModel(miss_prob=0.1, clutter_rate=0.5))
ACTION = Workload(SceneConfig(n_cameras=4, n_frames=30, n_entities=5),
                  NoiseModel(action_flip=0.3, miss_prob=0.1, clutter_rate=0.5))
BREAKDOWN = Workload(SceneConfig(n_cameras=3, n_frames=30, n_entities=5),
                     NoiseModel(action_flip=0.3, miss_prob=0.4, clutter_rate=0.5))
BENCH = Workload(SceneConfig(n_cameras=4, n_frames=180, n_entities=15),
                 NoiseModel(miss_prob=0.1, clutter_rate=0.5),
                 parse=ParseConfig(sampler=SamplerConfig(iterations=5000), rounds=3))


def train_prior(wl: Workload, ontology=None, **penalties):
    """Prior estimated from ground-truth scripts of held-out seeds."""
    ont = ontology or default_ontology()
    train = [truth_hierarchy(generate_scene(wl.scene, TRAIN_SEED_BASE + i, ont)) for i in range(wl.n_train)]
    return estimate_prior(train, ontology=ont, **{**SYNTH_PENALTIES, **penalties})


@dataclass
class SceneRun:
    rendering: object
    evidence: object
    result: object
    seconds: float


def parse_scene(wl: Workload, seed: int, prior, ontology=None) -> SceneRun:
    ont = ontology or default_ontology()
    script = generate_scene(wl.scene, seed, ont)
    r = render_proposals(script, wl.noise, seed, ont)
    ev = r.evidence(ont)
    pcfg = replace(wl.parse, sampler=replace(wl.parse.sampler, seed=seed))
    t0 = time.perf_counter()
    res = joint_parse_full(ev, wl.weights, prior, pcfg)
    return SceneRun(r, ev, res, time.perf_counter() - t0)


def identity_scores(run: SceneRun) -> tuple[float, float, float]:
    return identity_f1(run.result.hierarchy.assignment, run.rendering.correspondence)


@dataclass
class ActionScores:
    """Per-detection action predictions of each strategy against the truth."""

    truth: list = field(default_factory=list)
    scene: list = field(default_factory=list)
    view: list = field(default_factory=list)
    vote: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    n_views: list = field(default_factory=list)   # detections of the entity at that frame

    def extend(self, other: "ActionScores"):
        for k in self.__dataclass_fields__:
            getattr(self, k).extend(getattr(other, k))

    def accuracy(self, which: str, mask=None) -> float:
        pred = np.array(getattr(self, which), dtype=object)
        truth = np.array(self.truth, dtype=object)
        if mask is not None:
            pred, truth = pred[mask], truth[mask]
        return float((pred == truth).mean()) if truth.size else float("nan")


def action_scores(run: SceneRun) -> ActionScores:
    """Score every kept detection of a true entity.

    Scene-centric: the inferred action of the scene entity the detection is
    linked to. View-centric: the detection's own argmax. Vote and mean fuse the
    detections linked to the same scene entity in that frame.
    """
    h = run.result.hierarchy
    values = run.result.values
    corr = run.rendering.correspondence
    truth = {(r["scene_id"], r["t"]): r["action"] for r in run.rendering.truth}
    members = defaultdict(list)
    for sid, cam, vid, t in h.phi.links:
        members[(sid, t)].append(run.evidence.record(cam, t, vid))
    observed = defaultdict(int)
    for (cam, vid), ent in corr.items():
        if ent is None:
            continue
        for t in range(run.evidence.T):
            if run.evidence.record(cam, t, vid) is not None:
                observed[(ent, t)] += 1
    out = ActionScores()
    for sid, cam, vid, t in sorted(h.phi.links, key=lambda l: (l[3], l[1], l[2])):
        ent = corr.get((cam, vid))
        if ent is None:
            continue
        rec = run.evidence.record(cam, t, vid)
        group = members[(sid, t)]
        out.truth.append(truth[(ent, t)])
        out.scene.append(values[sid].actions[t])
        out.view.append(argmax_label(rec.actions))
        out.vote.append(fuse_vote(argmax_label(r.actions) for r in group))
        out.mean.append(fuse_mean(r.actions for r in group))
        out.n_views.append(observed[(ent, t)])
    return out


def bench(wl: Workload = BENCH, seed: int = 0, ontology=None) -> dict:
    """Frames per second of the full parse on one synthetic scene."""
    prior = train_prior(wl, ontology)
    run = parse_scene(wl, seed, prior, ontology)
    _, _, f1 = identity_scores(run)
    return {"frames": wl.scene.n_frames, "cameras": wl.scene.n_cameras, "entities": wl.scene.n_entities,
            "proposals": len(run.rendering.records), "seconds": run.seconds,
            "fps": wl.scene.n_frames / run.seconds if run.seconds > 0 else float("inf"),
            "identity_f1": f1, "logp": run.result.logp}


# -- tiny instances for the exhaustive oracle ------------------------------------

TINY = Workload(SceneConfig(n_cameras=2, n_frames=6, n_entities=3),
                NoiseModel(miss_prob=0.2, clutter_rate=0.3))


def tiny_instances(n: int, limit: int = 8, wl: Workload = TINY, ontology=None):
    """``n`` deterministic small problems with at most ``limit`` tracklets.

    Instance k draws 2 or 3 entities; seeds producing too many tracklets are
    skipped, so the sequence depends only on ``n`` and the workload.
    """
    from .evidence import initial_view_graphs
    from .scoring import Problem

    ont = ontology or default_ontology()
    prior = train_prior(wl, ont)
    out, seed = [], 0
    while len(out) < n:
        cfg = replace(wl.scene, n_entities=2 + len(out) % 2)
        r = render_proposals(generate_scene(cfg, seed, ont), wl.noise, seed, ont)
        seed += 1
        ev = r.evidence(ont)
        views = initial_view_graphs(ev)
        p = Problem(views, ev, wl.weights, prior)
        if 1 <= len(p.tracklets) <= limit:
            out.append(p)
    return out


# A 2-camera, 2-entity instance whose structure posterior is spread over several
# partitions: short, weakly weighted, attribute-free objects moving close together.
STATIONARY_WEIGHTS = EnergyWeights(w1=0.5, w2=0.1, w3=0.2, w4=0.2)


def stationary_instance(ontology=None):
    from .evidence import initial_view_graphs
    from .scoring import Problem

    ont = ontology or default_ontology()
    wl = Workload(SceneConfig(n_cameras=2, n_frames=2, n_entities=2, arena=3.0, appearance_margin=1.0,
                              object_type="bicycle"),
                  NoiseModel(miss_prob=0.0, clutter_rate=0.0, bbox_sigma=4.0), weights=STATIONARY_WEIGHTS)
    prior = train_prior(wl, ont, presence_logp=-0.5)
    r = render_proposals(generate_scene(wl.scene, 3, ont), wl.noise, 3, ont)
    ev = r.evidence(ont)
    return Problem(initial_view_graphs(ev), ev, wl.weights, prior)
