"""Synthetic multi-camera scenes, noisy view proposals and an exhaustive MAP oracle."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .evidence import ProposalRecord, initial_view_graphs, make_evidence, write_proposals
from .geometry import CameraModel, Homography, dump_calibration, project_to_image
from .graphs import (Hierarchy, IdentityMapping, SceneEntityNode, SceneParseGraph,
                     assignment_from_partition, build_hierarchy, write_records)
from .ontology import default_ontology
from .scoring import EntityScorer, Problem


class InvalidConfig(ValueError):
    pass


class TooLarge(ValueError):
    pass


@dataclass
class SceneConfig:
    n_cameras: int = 3
    n_frames: int = 30
    n_entities: int = 5
    arena: float = 20.0                  # side of the square ground region, world units
    feature_dim: int = 8
    appearance_margin: float = 3.0       # min distance between entity mean features (unit-variance noise scale)
    speed: tuple[float, float] = (0.3, 1.0)
    action_dwell: float = 8.0            # mean frames between action changes
    object_type: str = "person"
    image_size: tuple[int, int] = (640, 480)

    def validate(self):
        if self.n_cameras < 1 or self.n_frames < 0 or self.n_entities < 0:
            raise InvalidConfig("need >= 1 camera and nonnegative frame/entity counts")
        if self.arena <= 0 or self.feature_dim < 1 or self.appearance_margin < 0:
            raise InvalidConfig("arena, feature_dim must be positive and margin nonnegative")
        if not 0 < self.speed[0] <= self.speed[1]:
            raise InvalidConfig("speed range must be positive and ordered")
        if self.action_dwell < 1:
            raise InvalidConfig("action_dwell must be at least one frame")


@dataclass
class NoiseModel:
    bbox_sigma: float = 2.0
    appearance_sigma: float = 1.0
    action_flip: float = 0.1
    attr_flip: float = 0.1
    miss_prob: float = 0.05
    det_beta: tuple[float, float] = (8.0, 2.0)
    clutter_rate: float = 0.0            # expected false positives per camera per frame
    clutter_det_beta: tuple[float, float] = (2.0, 5.0)
    action_smoothing: float = 0.1        # score table = 0.9 one-hot + 0.1 uniform

    def validate(self):
        for name in ("action_flip", "attr_flip", "miss_prob", "action_smoothing"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InvalidConfig(f"{name} must lie in [0, 1]")
        if self.bbox_sigma < 0 or self.appearance_sigma < 0 or self.clutter_rate < 0:
            raise InvalidConfig("noise scales and clutter rate must be nonnegative")


@dataclass
class ScriptEntity:
    entity_id: str
    object_type: str
    trajectory: np.ndarray        # (T, 2) ground points
    actions: list[str]
    attributes: dict[str, bool]
    appearance: np.ndarray


@dataclass
class SceneScript:
    entities: list[ScriptEntity]
    cameras: list[CameraModel]
    T: int
    config: SceneConfig = field(default_factory=SceneConfig)

    @property
    def M(self) -> int:
        return len(self.cameras)


def _solve_homography(src, dst) -> np.ndarray:
    """3x3 H with H @ (src, 1) ~ (dst, 1) from four correspondences."""
    a, b = [], []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y]); b.append(u)
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y]); b.append(v)
    h = np.linalg.solve(np.array(a, float), np.array(b, float))
    return np.append(h, 1.0).reshape(3, 3)


def random_camera(camera_id: int, cfg: SceneConfig, rng: np.random.Generator) -> CameraModel:
    """A camera looking over the whole arena from one side, oblique view."""
    W, H = cfg.image_size
    A = cfg.arena
    for _ in range(100):
        side = rng.integers(4)
        corners = np.array([[0, 0], [A, 0], [A, A], [0, A]], float)
        corners = np.roll(corners, -side, axis=0)   # first two = near edge
        margin = rng.uniform(0.05, 0.12) * W
        half_far = rng.uniform(0.18, 0.32) * W
        top = rng.uniform(0.12, 0.3) * H
        bottom = H - rng.uniform(0.02, 0.08) * H
        cx = W / 2 + rng.uniform(-0.05, 0.05) * W
        img = np.array([[margin, bottom], [W - margin, bottom],
                        [cx + half_far, top], [cx - half_far, top]])
        img += rng.normal(0, 4.0, img.shape)
        g2i = _solve_homography(corners, img)
        i2g = np.linalg.inv(g2i)
        i2g = i2g / np.abs(i2g).max()
        cam = CameraModel(camera_id, W, H, Homography(i2g))
        if normalized_condition(cam, A) <= MAX_CONDITION:
            return cam
    raise InvalidConfig("could not draw a well-conditioned camera")


MAX_CONDITION = 1e3


def normalized_condition(cam: CameraModel, arena: float) -> float:
    """Condition number of the image-to-ground map with image and arena scaled to [-1, 1]."""
    n_img = np.array([[2 / cam.width, 0, -1], [0, 2 / cam.height, -1], [0, 0, 1]])
    n_gnd = np.array([[2 / arena, 0, -1], [0, 2 / arena, -1], [0, 0, 1]])
    m = n_gnd @ cam.homography.matrix @ np.linalg.inv(n_img)
    return float(np.linalg.cond(m))


def _trajectory(cfg: SceneConfig, rng) -> np.ndarray:
    lo, hi = 0.05 * cfg.arena, 0.95 * cfg.arena
    pos = rng.uniform(lo, hi, 2)
    goal = rng.uniform(lo, hi, 2)
    speed = rng.uniform(*cfg.speed)
    out = np.empty((cfg.n_frames, 2))
    for t in range(cfg.n_frames):
        out[t] = pos
        d = goal - pos
        dist = np.hypot(*d)
        if dist <= speed:
            pos = goal
            goal = rng.uniform(lo, hi, 2)
            speed = rng.uniform(*cfg.speed)
        else:
            pos = pos + d / dist * speed
    return out


def _actions(acts, T, dwell, rng) -> list[str]:
    if not acts:
        return [None] * T
    seq = []
    cur = acts[rng.integers(len(acts))]
    for _ in range(T):
        seq.append(cur)
        if len(acts) > 1 and rng.random() < 1.0 / dwell:
            others = [a for a in acts if a != cur]
            cur = others[rng.integers(len(others))]
    return seq


def _appearance_means(n, cfg: SceneConfig, rng) -> np.ndarray:
    min_sep = cfg.appearance_margin
    scale = max(min_sep, 1e-9)
    for _ in range(1000):
        means = rng.normal(0, scale, (n, cfg.feature_dim))
        if n < 2:
            return means
        d = np.linalg.norm(means[:, None] - means[None], axis=-1)
        if d[np.triu_indices(n, 1)].min() >= min_sep:
            return means
    raise InvalidConfig("could not separate entity appearances; lower the margin")


def generate_scene(cfg: SceneConfig | None = None, seed: int = 0, ontology=None) -> SceneScript:
    cfg = cfg or SceneConfig()
    cfg.validate()
    ont = ontology or default_ontology()
    rng = np.random.default_rng(seed)
    cams = [random_camera(i + 1, cfg, rng) for i in range(cfg.n_cameras)]
    acts = ont.actions_for(cfg.object_type)
    attrs = ont.attributes_for(cfg.object_type)
    means = _appearance_means(cfg.n_entities, cfg, rng)
    ents = []
    for k in range(cfg.n_entities):
        ents.append(ScriptEntity(
            entity_id=f"E{k}", object_type=cfg.object_type,
            trajectory=_trajectory(cfg, rng),
            actions=_actions(acts, cfg.n_frames, cfg.action_dwell, rng),
            attributes={a: bool(rng.random() < 0.5) for a in attrs},
            appearance=means[k],
        ))
    return SceneScript(ents, cams, cfg.n_frames, cfg)


def _pixels_per_unit(h: Homography, q) -> float:
    g2i = h.inverse
    x, y = q
    w = g2i[2, 0] * x + g2i[2, 1] * y + g2i[2, 2]
    u = (g2i[0, 0] * x + g2i[0, 1] * y + g2i[0, 2]) / w
    v = (g2i[1, 0] * x + g2i[1, 1] * y + g2i[1, 2]) / w
    jac = np.array([[g2i[0, 0] - u * g2i[2, 0], g2i[0, 1] - u * g2i[2, 1]],
                    [g2i[1, 0] - v * g2i[2, 0], g2i[1, 1] - v * g2i[2, 1]]]) / w
    return float(np.sqrt(abs(np.linalg.det(jac))))


BOX_SIZE = {"person": (0.6, 1.7), "vehicle": (4.0, 1.6), "bicycle": (1.7, 1.1)}


def true_box(cam: CameraModel, q, object_type: str):
    u, v = project_to_image(cam.homography, q)
    ppu = _pixels_per_unit(cam.homography, q)
    bw, bh = BOX_SIZE.get(object_type, (1.0, 1.0))
    bw, bh = bw * ppu, bh * ppu
    return (u - bw / 2, v - bh, u + bw / 2, v)


@dataclass
class Rendering:
    records: list[ProposalRecord]
    cameras: list[CameraModel]
    truth: list[dict]                        # hierarchy-style ground-truth records
    correspondence: dict                     # (camera, tracklet) -> entity id or None (clutter)
    T: int

    def evidence(self, ontology=None):
        return make_evidence(self.records, self.cameras, T=self.T, ontology=ontology)


def _score_table(labels, observed, smoothing):
    k = len(labels)
    return {a: (1 - smoothing) * (a == observed) + smoothing / k for a in labels}


def render_proposals(script: SceneScript, noise: NoiseModel | None = None, seed: int = 0,
                     ontology=None) -> Rendering:
    noise = noise or NoiseModel()
    noise.validate()
    ont = ontology or default_ontology()
    rng = np.random.default_rng(seed)
    records, truth, corr = [], [], {}
    D = script.config.feature_dim
    for cam in script.cameras:
        order = rng.permutation(len(script.entities))
        tids = {e.entity_id: f"c{cam.camera_id}t{order[i]}" for i, e in enumerate(script.entities)}
        for e in script.entities:
            corr[(cam.camera_id, tids[e.entity_id])] = e.entity_id
        next_clutter = len(script.entities)
        for t in range(script.T):
            for e in script.entities:
                acts = ont.actions_for(e.object_type)
                q = e.trajectory[t]
                box = true_box(cam, q, e.object_type)
                truth.append({
                    "scene_id": e.entity_id, "camera": cam.camera_id, "view_id": tids[e.entity_id],
                    "t": t, "action": e.actions[t], "attributes": dict(sorted(e.attributes.items())),
                    "world_xy": [float(q[0]), float(q[1])], "bbox": [float(v) for v in box],
                    "projected": False,
                })
                if rng.random() < noise.miss_prob:
                    continue
                jit = np.array(box) + rng.normal(0, noise.bbox_sigma, 4)
                bbox = (min(jit[0], jit[2]), min(jit[1], jit[3]), max(jit[0], jit[2]), max(jit[1], jit[3]))
                obs_action = e.actions[t]
                if acts and rng.random() < noise.action_flip and len(acts) > 1:
                    others = [a for a in acts if a != obs_action]
                    obs_action = others[rng.integers(len(others))]
                attrs = {}
                for a, val in sorted(e.attributes.items()):
                    obs = val != (rng.random() < noise.attr_flip)
                    attrs[a] = 0.9 * obs + 0.05
                cx, h = (bbox[0] + bbox[2]) / 2, bbox[3] - bbox[1]
                records.append(ProposalRecord(
                    camera=cam.camera_id, t=t, tracklet=tids[e.entity_id], object_type=e.object_type,
                    bbox=bbox, det=float(rng.beta(*noise.det_beta)),
                    feat=e.appearance + rng.normal(0, noise.appearance_sigma, D),
                    actions=_score_table(acts, obs_action, noise.action_smoothing) if acts else {},
                    attrs=attrs,
                    parts={"head": (cx, bbox[1] + 0.1 * h), "torso": (cx, bbox[1] + 0.4 * h),
                           "leg": (cx, bbox[1] + 0.8 * h)},
                ))
            for _ in range(rng.poisson(noise.clutter_rate)):
                ty = script.config.object_type
                acts = ont.actions_for(ty)
                q = rng.uniform(0, script.config.arena, 2)
                box = true_box(cam, q, ty)
                tid = f"c{cam.camera_id}t{next_clutter}"
                next_clutter += 1
                corr[(cam.camera_id, tid)] = None
                scale = script.config.appearance_margin
                records.append(ProposalRecord(
                    camera=cam.camera_id, t=t, tracklet=tid, object_type=ty, bbox=box,
                    det=float(rng.beta(*noise.clutter_det_beta)),
                    feat=rng.normal(0, max(scale, 1e-9), D) + rng.normal(0, noise.appearance_sigma, D),
                    actions=_score_table(acts, acts[rng.integers(len(acts))], noise.action_smoothing) if acts else {},
                    attrs={a: 0.9 * (rng.random() < 0.5) + 0.05 for a in ont.attributes_for(ty)},
                ))
    return Rendering(records, list(script.cameras), truth, corr, script.T)


def truth_hierarchy(script: SceneScript) -> Hierarchy:
    """Scene-only hierarchy carrying the true values (training data for the prior)."""
    scene = [SceneParseGraph(t, []) for t in range(script.T)]
    for e in script.entities:
        for t in range(script.T):
            scene[t].entities.append(SceneEntityNode(
                e.entity_id, e.object_type, (float(e.trajectory[t][0]), float(e.trajectory[t][1])),
                e.appearance.copy(), e.actions[t], dict(e.attributes)))
    return Hierarchy(IdentityMapping(frozenset()), scene, {}, {c.camera_id: c for c in script.cameras}, {})


def write_scene_files(rendering: Rendering, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"proposals": out / "proposals.jsonl", "calibration": out / "calibration.jsonl",
             "truth": out / "truth.jsonl"}
    write_proposals(rendering.records, paths["proposals"])
    dump_calibration(rendering.cameras, paths["calibration"])
    write_records(rendering.truth, paths["truth"])
    return paths


# -- exhaustive oracle -----------------------------------------------------------

def enumerate_partitions(keys, compatible):
    """Yield every set partition of ``keys`` whose blocks satisfy ``compatible``.

    ``compatible(block, key)`` decides whether ``key`` may join ``block``
    (a tuple). Each partition is produced exactly once.
    """
    keys = list(keys)

    def rec(i, blocks):
        if i == len(keys):
            yield frozenset(frozenset(b) for b in blocks)
            return
        k = keys[i]
        for j, b in enumerate(blocks):
            if compatible(b, k):
                blocks[j] = b + (k,)
                yield from rec(i + 1, blocks)
                blocks[j] = b
        blocks.append((k,))
        yield from rec(i + 1, blocks)
        blocks.pop()

    yield from rec(0, [])


def structure_space(problem: Problem):
    """All type-consistent, slot-exclusive partitions of the problem's tracklets."""
    meta = {k: (tr.object_type, tr.occupancy) for k, tr in problem.tracklets.items()}

    def ok(block, k):
        ty, occ = meta[k]
        return all(meta[b][0] == ty and not (meta[b][1] & occ) for b in block)

    return enumerate_partitions(problem.keys(), ok)


def brute_force_map(ev, w, prior, limit: int = 8, det_threshold: float = 0.5, views=None,
                    problem: Problem | None = None):
    """Exact MAP hierarchy by scoring every admissible structure.

    Returns (hierarchy with inferred values, log posterior).
    """
    from .inference import with_values

    if problem is None:
        views = views if views is not None else initial_view_graphs(ev, det_threshold)
        problem = Problem(views, ev, w, prior)
    if len(problem.tracklets) > limit:
        raise TooLarge(f"{len(problem.tracklets)} tracklets exceed the enumeration limit {limit}")
    scorer = EntityScorer(problem)
    best, best_lp = None, -np.inf
    for part in structure_space(problem):
        lp = scorer.total(sorted(part, key=min))
        if lp > best_lp:
            best, best_lp = part, lp
    h = build_hierarchy(problem.views, ev.cameras, ev.T, assignment_from_partition(best))
    h, _ = with_values(h, ev, w, prior)
    return h, best_lp


def config_to_json(scene: SceneConfig, noise: NoiseModel) -> dict:
    return {"scene": asdict(scene), "noise": asdict(noise)}


def config_from_json(doc: dict) -> tuple[SceneConfig, NoiseModel]:
    scene = dict(doc.get("scene", {}))
    noise = dict(doc.get("noise", {}))
    for k in ("speed", "image_size"):
        if k in scene:
            scene[k] = tuple(scene[k])
    for k in ("det_beta", "clutter_det_beta"):
        if k in noise:
            noise[k] = tuple(noise[k])
    try:
        return SceneConfig(**scene), NoiseModel(**noise)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc


def load_sim_config(path) -> tuple[SceneConfig, NoiseModel]:
    return config_from_json(json.loads(Path(path).read_text()))
