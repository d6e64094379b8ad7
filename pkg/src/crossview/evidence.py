"""View-centric proposal ingestion (detections, appearance, action/attribute scores)."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CameraModel, load_calibration
from .graphs import ViewEntityNode, ViewParseGraph

DEFAULT_DET_THRESHOLD = 0.5


class MalformedRecord(ValueError):
    pass


class UnknownCamera(ValueError):
    pass


class ScoreOutOfRange(ValueError):
    pass


@dataclass
class ProposalRecord:
    camera: int
    t: int
    tracklet: str
    object_type: str
    bbox: tuple[float, float, float, float]
    det: float
    feat: np.ndarray
    actions: dict[str, float] = field(default_factory=dict)
    attrs: dict[str, float] = field(default_factory=dict)
    parts: dict[str, tuple[float, float]] | None = None

    def to_json(self) -> dict:
        rec = {
            "camera": self.camera, "t": self.t, "tracklet": self.tracklet, "type": self.object_type,
            "bbox": [float(v) for v in self.bbox], "det": float(self.det),
            "feat": [float(v) for v in self.feat],
            "actions": {k: float(v) for k, v in sorted(self.actions.items())},
            "attrs": {k: float(v) for k, v in sorted(self.attrs.items())},
        }
        if self.parts is not None:
            rec["parts"] = {k: [float(x), float(y)] for k, (x, y) in sorted(self.parts.items())}
        return rec

    def __eq__(self, other):
        if not isinstance(other, ProposalRecord):
            return NotImplemented
        return self.to_json() == other.to_json()


@dataclass
class Evidence:
    proposals: dict[tuple[int, int], list[ProposalRecord]]
    cameras: dict[int, CameraModel]
    T: int

    def __post_init__(self):
        self._index = {}
        for (cam, t), recs in self.proposals.items():
            if cam not in self.cameras or not 0 <= t < self.T:
                raise UnknownCamera(f"record grid cell ({cam}, {t}) is out of range")
            for r in recs:
                self._index[(cam, t, r.tracklet)] = r

    @property
    def M(self) -> int:
        return len(self.cameras)

    def records(self, camera: int, t: int) -> list[ProposalRecord]:
        return self.proposals.get((camera, t), [])

    def record(self, camera: int, t: int, tracklet: str) -> ProposalRecord | None:
        return self._index.get((camera, t, tracklet))

    def all_records(self) -> list[ProposalRecord]:
        return [r for key in sorted(self.proposals) for r in self.proposals[key]]

    @property
    def feature_dim(self) -> int | None:
        for recs in self.proposals.values():
            for r in recs:
                return r.feat.size
        return None


def _check_score(v, what, lineno):
    v = float(v)
    if not 0.0 <= v <= 1.0:
        raise ScoreOutOfRange(f"line {lineno}: {what} score {v} outside [0, 1]")
    return v


def parse_record(rec: dict, lineno: int = 0, fallback_id: str | None = None) -> ProposalRecord:
    try:
        bbox = tuple(float(v) for v in rec["bbox"])
        if len(bbox) != 4:
            raise ValueError("bbox needs 4 reals")
        tracklet = rec.get("tracklet")
        if tracklet is None:
            tracklet = fallback_id
        parts = rec.get("parts")
        if parts is not None:
            parts = {k: (float(p[0]), float(p[1])) for k, p in parts.items()}
        feat = np.asarray(rec["feat"], dtype=float)
        if feat.ndim != 1 or not np.all(np.isfinite(feat)):
            raise ValueError("feat must be a finite vector")
        out = ProposalRecord(
            camera=int(rec["camera"]), t=int(rec["t"]), tracklet=str(tracklet),
            object_type=str(rec["type"]), bbox=bbox,
            det=_check_score(rec["det"], "detection", lineno),
            feat=feat,
            actions={str(k): _check_score(v, f"action {k}", lineno) for k, v in rec.get("actions", {}).items()},
            attrs={str(k): _check_score(v, f"attribute {k}", lineno) for k, v in rec.get("attrs", {}).items()},
            parts=parts,
        )
    except ScoreOutOfRange:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise MalformedRecord(f"line {lineno}: {exc!r}") from exc
    if bbox[0] > bbox[2] or bbox[1] > bbox[3]:
        raise MalformedRecord(f"line {lineno}: bbox {bbox} has min > max")
    if out.t < 0:
        raise MalformedRecord(f"line {lineno}: negative frame index")
    return out


def make_evidence(records, cameras, T: int | None = None, ontology=None) -> Evidence:
    """Group records by (camera, t) and validate them."""
    cams = {c.camera_id: c for c in cameras} if not isinstance(cameras, dict) else dict(cameras)
    grid = defaultdict(list)
    dim = None
    for i, r in enumerate(records):
        if r.camera not in cams:
            raise UnknownCamera(f"record {i}: camera {r.camera} not in calibration")
        if dim is None:
            dim = r.feat.size
        elif r.feat.size != dim:
            raise MalformedRecord(f"record {i}: feature dimension {r.feat.size} != {dim}")
        if ontology is not None:
            legal = set(ontology.actions_for(r.object_type))
            if set(r.actions) != legal:
                raise MalformedRecord(
                    f"record {i}: action scores {sorted(r.actions)} do not match legal actions {sorted(legal)}")
        grid[(r.camera, r.t)].append(r)
    for key, recs in grid.items():
        ids = [r.tracklet for r in recs]
        if len(set(ids)) != len(ids):
            raise MalformedRecord(f"duplicate tracklet id in camera {key[0]} t={key[1]}")
    if T is None:
        T = 1 + max((r.t for r in records), default=-1)
    return Evidence(dict(grid), cams, T)


def load_evidence(proposal_path, calibration_path, ontology=None, T: int | None = None) -> Evidence:
    cams = load_calibration(calibration_path)
    records = []
    for lineno, line in enumerate(Path(proposal_path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"line {lineno}: {exc}") from exc
        if not isinstance(rec, dict):
            raise MalformedRecord(f"line {lineno}: expected an object")
        records.append(parse_record(rec, lineno, fallback_id=f"_d{lineno}"))
    return make_evidence(records, cams, T=T, ontology=ontology)


def write_proposals(records, path) -> None:
    Path(path).write_text("".join(json.dumps(r.to_json()) + "\n" for r in records))


def argmax_label(scores: dict[str, float]) -> str | None:
    """Highest-scoring label; ties go to the lowest id."""
    if not scores:
        return None
    best = max(scores.values())
    return min(k for k, v in scores.items() if v == best)


def view_node(rec: ProposalRecord) -> ViewEntityNode:
    return ViewEntityNode(
        entity_id=rec.tracklet, object_type=rec.object_type, bbox=rec.bbox, appearance=rec.feat,
        action=argmax_label(rec.actions),
        attributes={k: v >= 0.5 for k, v in sorted(rec.attrs.items())},
        det_score=rec.det, parts=rec.parts,
    )


def initial_view_graphs(ev: Evidence, det_threshold: float = DEFAULT_DET_THRESHOLD):
    """View-centric proposals as parse graphs, one per (camera, t)."""
    if not 0.0 <= det_threshold <= 1.0:
        raise ValueError("detection threshold must lie in [0, 1]")
    out = {}
    for cam in sorted(ev.cameras):
        for t in range(ev.T):
            ents = [view_node(r) for r in ev.records(cam, t) if r.det >= det_threshold]
            out[(cam, t)] = ViewParseGraph(cam, t, ents)
    return out
