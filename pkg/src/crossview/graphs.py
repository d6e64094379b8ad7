"""Parse graphs and the scene/view hierarchy linked by an identity mapping."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CameraModel, Homography, foot_point, project_to_ground

TrackletKey = tuple[int, str]  # (camera id, view entity id)


class EmptyInput(ValueError):
    pass


class TypeMismatch(ValueError):
    pass


class UnknownEntity(KeyError):
    pass


class MappingError(ValueError):
    """Identity mapping violates the function/exclusivity constraints."""


def as_feature(values, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise ValueError("appearance feature has non-finite entries")
    if dim is not None and arr.size != dim:
        raise ValueError(f"appearance feature has dimension {arr.size}, expected {dim}")
    return arr


@dataclass
class ViewEntityNode:
    entity_id: str
    object_type: str
    bbox: tuple[float, float, float, float]
    appearance: np.ndarray
    action: str | None = None
    attributes: dict[str, bool] = field(default_factory=dict)
    det_score: float = 1.0
    parts: dict[str, tuple[float, float]] | None = None
    projected: bool = False

    def __post_init__(self):
        x0, y0, x1, y1 = (float(v) for v in self.bbox)
        if x0 > x1 or y0 > y1:
            raise ValueError(f"view entity {self.entity_id}: malformed bbox {self.bbox}")
        self.bbox = (x0, y0, x1, y1)
        self.appearance = as_feature(self.appearance)

    @property
    def location(self) -> tuple[float, float]:
        return foot_point(self.bbox)


@dataclass
class ViewParseGraph:
    camera: int
    t: int
    entities: list[ViewEntityNode] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.entity_id for e in self.entities]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate view entity ids in camera {self.camera} t={self.t}")

    def get(self, entity_id: str) -> ViewEntityNode | None:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        return None


@dataclass
class SceneEntityNode:
    entity_id: str
    object_type: str
    location: tuple[float, float]
    appearance: np.ndarray
    action: str | None = None
    attributes: dict[str, bool] = field(default_factory=dict)


@dataclass
class SceneParseGraph:
    t: int
    entities: list[SceneEntityNode] = field(default_factory=list)

    def get(self, entity_id: str) -> SceneEntityNode | None:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        return None


def aggregate_scene_node(views, entity_id: str = "") -> SceneEntityNode:
    """Pool linked view entities into one scene entity.

    ``views`` is a non-empty sequence of (ViewEntityNode, Homography). The
    appearance is the mean of the view features, the world location the
    centroid of the ground projections of their foot points. Action and
    attributes are left for value inference.
    """
    views = list(views)
    if not views:
        raise EmptyInput("aggregate_scene_node needs at least one view entity")
    types = {v.object_type for v, _ in views}
    if len(types) != 1:
        raise TypeMismatch(f"cannot pool view entities of different types {sorted(types)}")
    feats = np.stack([v.appearance for v, _ in views])
    ground = np.array([project_to_ground(h, v.location) for v, h in views])
    loc = ground.mean(axis=0)
    return SceneEntityNode(entity_id, types.pop(), (float(loc[0]), float(loc[1])), feats.mean(axis=0))


def scene_id_for(tracklets) -> str:
    """Canonical scene id: derived from the smallest member tracklet."""
    cam, vid = min(tracklets)
    return f"S{cam}:{vid}"


@dataclass(frozen=True)
class IdentityMapping:
    """Links (scene id, camera, view id, t)."""

    links: frozenset

    def __post_init__(self):
        owner = {}
        per_cam_t = set()
        for sid, cam, vid, t in self.links:
            key = (cam, vid, t)
            if key in owner and owner[key] != sid:
                raise MappingError(f"view entity {key} linked to both {owner[key]} and {sid}")
            owner[key] = sid
        for sid, cam, vid, t in self.links:
            k = (sid, cam, t)
            if k in per_cam_t:
                raise MappingError(f"scene entity {sid} has two view entities in camera {cam} at t={t}")
            per_cam_t.add(k)
        object.__setattr__(self, "_owner", owner)

    def scene_of(self, camera: int, view_id: str, t: int) -> str | None:
        return self._owner.get((camera, view_id, t))

    def at(self, t: int, camera: int | None = None) -> list[tuple[str, str]]:
        """(scene id, view id) pairs at frame t (optionally one camera)."""
        return sorted((sid, vid) for sid, cam, vid, tt in self.links
                      if tt == t and (camera is None or cam == camera))

    def scene_ids(self) -> set[str]:
        return {l[0] for l in self.links}


@dataclass
class EntityValues:
    """Inferred per-frame values of one scene entity."""

    actions: dict[int, str] = field(default_factory=dict)
    attributes: dict[int, dict[str, bool]] = field(default_factory=dict)
    attribute_probs: dict[int, dict[str, float]] = field(default_factory=dict)


@dataclass
class Hierarchy:
    phi: IdentityMapping
    scene: list[SceneParseGraph]
    views: dict[tuple[int, int], ViewParseGraph]
    cameras: dict[int, CameraModel]
    assignment: dict[TrackletKey, str]

    @property
    def T(self) -> int:
        return len(self.scene)

    def view_graph(self, camera: int, t: int) -> ViewParseGraph:
        return self.views.get((camera, t)) or ViewParseGraph(camera, t, [])

    def scene_entity_ids(self) -> list[str]:
        return sorted(set(self.assignment.values()))

    def partition(self) -> frozenset:
        groups = defaultdict(set)
        for k, sid in self.assignment.items():
            groups[sid].add(k)
        return frozenset(frozenset(g) for g in groups.values())

    def tracklets(self) -> dict[TrackletKey, list[tuple[int, ViewEntityNode]]]:
        return view_tracklets(self.views)


def view_tracklets(views) -> dict[TrackletKey, list[tuple[int, ViewEntityNode]]]:
    out = defaultdict(list)
    for (cam, t), vg in sorted(views.items()):
        for e in vg.entities:
            out[(cam, e.entity_id)].append((t, e))
    return dict(out)


def singleton_assignment(views) -> dict[TrackletKey, str]:
    """One scene entity per view tracklet."""
    return {k: scene_id_for([k]) for k in view_tracklets(views)}


def assignment_from_partition(partition) -> dict[TrackletKey, str]:
    out = {}
    for group in partition:
        sid = scene_id_for(group)
        for k in group:
            out[k] = sid
    return out


def build_hierarchy(views, cameras, T: int, assignment=None, values=None) -> Hierarchy:
    """Assemble G from view graphs, a tracklet->scene assignment and values.

    Scene nodes exist on every frame between an entity's first and last
    linked observation; frames with no linked view get a linearly
    interpolated location and appearance.
    """
    tracks = view_tracklets(views)
    if assignment is None:
        assignment = singleton_assignment(views)
    missing = set(tracks) - set(assignment)
    if missing:
        raise MappingError(f"tracklets without a scene entity: {sorted(missing)[:5]}")
    values = values or {}

    links = set()
    members: dict[str, dict[int, list]] = defaultdict(lambda: defaultdict(list))
    for key, obs in tracks.items():
        sid = assignment[key]
        cam = key[0]
        for t, node in obs:
            links.add((sid, cam, node.entity_id, t))
            members[sid][t].append((node, cameras[cam].homography))
    phi = IdentityMapping(frozenset(links))

    scene = [SceneParseGraph(t, []) for t in range(T)]
    for sid in sorted(members):
        per_t = members[sid]
        observed = sorted(per_t)
        nodes = {t: aggregate_scene_node(per_t[t], sid) for t in observed}
        val = values.get(sid)
        for t in range(observed[0], observed[-1] + 1):
            if t in nodes:
                node = nodes[t]
            else:
                prev = max(s for s in observed if s < t)
                nxt = min(s for s in observed if s > t)
                a = (t - prev) / (nxt - prev)
                p, n = nodes[prev], nodes[nxt]
                loc = (1 - a) * np.asarray(p.location) + a * np.asarray(n.location)
                node = SceneEntityNode(sid, p.object_type, (float(loc[0]), float(loc[1])),
                                       (1 - a) * p.appearance + a * n.appearance)
            if val is not None:
                node.action = val.actions.get(t)
                node.attributes = dict(val.attributes.get(t, {}))
            scene[t].entities.append(node)
    return Hierarchy(phi, scene, dict(views), dict(cameras), dict(assignment))


def entity_track(h: Hierarchy, scene_id: str) -> dict[int, list[tuple[int, tuple]]]:
    """Per-camera, time-ordered (t, bbox) lists for one scene entity (empty lists if unlinked)."""
    out = {cam: [] for cam in sorted(h.cameras)}
    for sid, cam, vid, t in h.phi.links:
        if sid != scene_id:
            continue
        node = h.view_graph(cam, t).get(vid)
        out.setdefault(cam, []).append((t, node.bbox))
    for cam in out:
        out[cam].sort(key=lambda x: x[0])
    return out


# -- result files -----------------------------------------------------------

RESULT_FIELDS = ("scene_id", "camera", "view_id", "t", "action", "attributes", "world_xy")


def hierarchy_records(h: Hierarchy, values=None, extra_views=None) -> list[dict]:
    """Flatten a hierarchy into one record per link (plus projected boxes)."""
    values = values or {}
    recs = []
    for sid, cam, vid, t in sorted(h.phi.links, key=lambda l: (l[3], l[1], l[2])):
        node = h.scene[t].get(sid)
        view = h.view_graph(cam, t).get(vid)
        rec = {
            "scene_id": sid, "camera": cam, "view_id": vid, "t": t,
            "action": node.action,
            "attributes": dict(sorted(node.attributes.items())),
            "world_xy": [float(node.location[0]), float(node.location[1])],
            "bbox": [float(v) for v in view.bbox],
            "projected": False,
        }
        probs = values.get(sid).attribute_probs.get(t) if sid in values else None
        if probs:
            rec["attr_probs"] = {k: float(v) for k, v in sorted(probs.items())}
        recs.append(rec)
    for (cam, t), vg in sorted((extra_views or {}).items()):
        for e in vg.entities:
            if not e.projected:
                continue
            sid = e.entity_id.split("@", 1)[0]
            node = h.scene[t].get(sid)
            recs.append({
                "scene_id": sid, "camera": cam, "view_id": e.entity_id, "t": t,
                "action": node.action if node else None,
                "attributes": dict(sorted(node.attributes.items())) if node else {},
                "world_xy": [float(node.location[0]), float(node.location[1])] if node else None,
                "bbox": [float(v) for v in e.bbox],
                "projected": True,
            })
    return recs


def write_records(records, path) -> None:
    Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def read_records(path) -> list[dict]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
        missing = [f for f in RESULT_FIELDS if f not in rec]
        if missing:
            raise ValueError(f"{path}:{lineno}: missing fields {missing}")
        out.append(rec)
    return out
