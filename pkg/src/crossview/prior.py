"""Structural prior p(g_1) and the temporal transition model p(g_{t+1} | g_t).

The transition factors over scene entities: persisting entities pay the log
probability of their action transition and of keeping/flipping each
attribute; entities that appear or vanish pay a birth/death log-penalty.
Every scene entity additionally pays ``presence_logp`` per frame, a
count prior that keeps the structure from fragmenting into one entity per
view tracklet.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BIRTH_LOGP = -2.0
DEATH_LOGP = -2.0
PRESENCE_LOGP = -4.0


class EmptyTrainingSet(ValueError):
    pass


def _normalize_log(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    return np.log(counts) - np.log(counts.sum(axis=-1, keepdims=True))


@dataclass
class PriorModel:
    actions: dict[str, tuple[str, ...]]
    action_init: dict[str, np.ndarray]
    action_trans: dict[str, np.ndarray]
    attributes: tuple[str, ...]
    attr_init: dict[str, np.ndarray]
    attr_flip: dict[str, float]
    alpha: float = 1.0
    birth_logp: float = BIRTH_LOGP
    death_logp: float = DEATH_LOGP
    presence_logp: float = PRESENCE_LOGP

    # -- lookups ------------------------------------------------------------

    def action_index(self, object_type: str) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.actions.get(object_type, ()))}

    def attr_trans(self, attr: str) -> np.ndarray:
        """2x2 log table indexed [previous value, next value]."""
        p = self.attr_flip.get(attr, 0.5)
        keep, flip = np.log1p(-p), np.log(p)
        return np.array([[keep, flip], [flip, keep]])

    def attr_init_log(self, attr: str) -> np.ndarray:
        return self.attr_init.get(attr, np.log([0.5, 0.5]))

    def init_logprob(self, node) -> float:
        """Log prior of a newly appearing scene node's values."""
        lp = 0.0
        if node.action is not None:
            idx = self.action_index(node.object_type)
            lp += float(self.action_init[node.object_type][idx[node.action]])
        for attr, val in node.attributes.items():
            lp += float(self.attr_init_log(attr)[int(bool(val))])
        return lp

    def step_logprob(self, prev, nxt) -> float:
        lp = 0.0
        if prev.action is not None and nxt.action is not None:
            idx = self.action_index(nxt.object_type)
            lp += float(self.action_trans[nxt.object_type][idx[prev.action], idx[nxt.action]])
        for attr, val in nxt.attributes.items():
            if attr in prev.attributes:
                lp += float(self.attr_trans(attr)[int(bool(prev.attributes[attr])), int(bool(val))])
        return lp

    # -- construction ---------------------------------------------------------

    @classmethod
    def uniform(cls, ontology, **penalties) -> "PriorModel":
        types = ontology.object_types()
        actions = {ty: tuple(ontology.actions_for(ty)) for ty in types}
        attrs = tuple(sorted({a for ty in types for a in ontology.attributes_for(ty)}))
        return cls(
            actions=actions,
            action_init={ty: _normalize_log(np.ones(len(a))) for ty, a in actions.items() if a},
            action_trans={ty: _normalize_log(np.ones((len(a), len(a)))) for ty, a in actions.items() if a},
            attributes=attrs,
            attr_init={a: np.log([0.5, 0.5]) for a in attrs},
            attr_flip={a: 0.5 for a in attrs},
            alpha=float("inf"),
            **penalties,
        )

    def to_json(self) -> dict:
        return {
            "actions": {k: list(v) for k, v in self.actions.items()},
            "action_init": {k: v.tolist() for k, v in self.action_init.items()},
            "action_trans": {k: v.tolist() for k, v in self.action_trans.items()},
            "attributes": list(self.attributes),
            "attr_init": {k: v.tolist() for k, v in self.attr_init.items()},
            "attr_flip": dict(self.attr_flip),
            "alpha": self.alpha if np.isfinite(self.alpha) else "inf",
            "birth_logp": self.birth_logp,
            "death_logp": self.death_logp,
            "presence_logp": self.presence_logp,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PriorModel":
        return cls(
            actions={k: tuple(v) for k, v in doc["actions"].items()},
            action_init={k: np.array(v, dtype=float) for k, v in doc["action_init"].items()},
            action_trans={k: np.array(v, dtype=float) for k, v in doc["action_trans"].items()},
            attributes=tuple(doc["attributes"]),
            attr_init={k: np.array(v, dtype=float) for k, v in doc["attr_init"].items()},
            attr_flip={k: float(v) for k, v in doc["attr_flip"].items()},
            alpha=float(doc["alpha"]),
            birth_logp=float(doc["birth_logp"]),
            death_logp=float(doc["death_logp"]),
            presence_logp=float(doc["presence_logp"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "PriorModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _entity_sequences(h):
    """scene id -> list of (t, SceneEntityNode) over consecutive frames."""
    seqs = defaultdict(list)
    for sg in h.scene:
        for node in sg.entities:
            seqs[node.entity_id].append((sg.t, node))
    return seqs


def estimate_prior(training, alpha: float = 1.0, ontology=None, **penalties) -> PriorModel:
    """Additively smoothed relative frequencies from training hierarchies.

    Counts initial action/attribute values of each entity, action
    transitions between consecutive frames and attribute flips. The action
    domain per object type comes from ``ontology`` when given, otherwise
    from the labels seen in training.
    """
    training = list(training)
    if not training:
        raise EmptyTrainingSet("estimate_prior needs at least one training hierarchy")
    if not alpha > 0:
        raise ValueError("smoothing alpha must be positive")

    seen_actions = defaultdict(set)
    seen_attrs = set()
    for h in training:
        for sg in h.scene:
            for n in sg.entities:
                if n.action is not None:
                    seen_actions[n.object_type].add(n.action)
                seen_attrs.update(n.attributes)
    if ontology is not None:
        actions = {ty: tuple(ontology.actions_for(ty)) for ty in ontology.object_types()}
        attrs = tuple(sorted({a for ty in ontology.object_types() for a in ontology.attributes_for(ty)} | seen_attrs))
    else:
        actions = {ty: tuple(sorted(a)) for ty, a in seen_actions.items()}
        attrs = tuple(sorted(seen_attrs))

    init_c = {ty: np.zeros(len(a)) for ty, a in actions.items() if a}
    trans_c = {ty: np.zeros((len(a), len(a))) for ty, a in actions.items() if a}
    attr_init_c = {a: np.zeros(2) for a in attrs}
    flip_c = {a: np.zeros(2) for a in attrs}  # [kept, flipped]
    index = {ty: {a: i for i, a in enumerate(acts)} for ty, acts in actions.items()}

    for h in training:
        for sid, seq in _entity_sequences(h).items():
            _, first = seq[0]
            if first.action is not None:
                init_c[first.object_type][index[first.object_type][first.action]] += 1
            for attr, val in first.attributes.items():
                attr_init_c[attr][int(bool(val))] += 1
            for (t0, a), (t1, b) in zip(seq, seq[1:]):
                if t1 != t0 + 1:
                    continue
                if a.action is not None and b.action is not None:
                    idx = index[b.object_type]
                    trans_c[b.object_type][idx[a.action], idx[b.action]] += 1
                for attr, val in b.attributes.items():
                    if attr in a.attributes:
                        flip_c[attr][int(bool(val) != bool(a.attributes[attr]))] += 1

    return PriorModel(
        actions=actions,
        action_init={ty: _normalize_log(c + alpha) for ty, c in init_c.items()},
        action_trans={ty: _normalize_log(c + alpha) for ty, c in trans_c.items()},
        attributes=attrs,
        attr_init={a: _normalize_log(c + alpha) for a, c in attr_init_c.items()},
        attr_flip={a: float((c[1] + alpha) / (c.sum() + 2 * alpha)) for a, c in flip_c.items()},
        alpha=float(alpha),
        **penalties,
    )


def initial_logprob(pm: PriorModel, g1) -> float:
    """log p(g_1): per-entity presence plus the prior of its initial values."""
    return sum(pm.presence_logp + pm.init_logprob(n) for n in g1.entities)


def transition_logprob(pm: PriorModel, g_t, g_next, phi=None) -> float:
    """log p(g_{t+1} | g_t), factored over scene entities matched by id."""
    prev = {n.entity_id: n for n in g_t.entities}
    lp = 0.0
    for n in g_next.entities:
        lp += pm.presence_logp
        p = prev.pop(n.entity_id, None)
        if p is None:
            lp += pm.birth_logp + pm.init_logprob(n)
        else:
            lp += pm.step_logprob(p, n)
    lp += pm.death_logp * len(prev)
    return lp
