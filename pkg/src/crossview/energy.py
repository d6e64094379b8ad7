"""Node likelihood, cross-view compatibility energies and the log-posterior."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import project_to_ground
from .prior import initial_logprob, transition_logprob

EPS_PROB = 1e-6


class MissingRecord(KeyError):
    pass


class DimensionMismatch(ValueError):
    pass


class UnknownActionLabel(KeyError):
    pass


@dataclass(frozen=True)
class EnergyWeights:
    """w1..w4 weight the spatial, appearance, action and attribute terms.

    The spatial term is measured in ground-plane units, so ``w1`` has to be
    rescaled together with the calibration.
    """

    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0
    w4: float = 1.0
    xi: float = 1.0
    eps_prob: float = EPS_PROB

    def __post_init__(self):
        for name in ("w1", "w2", "w3", "w4", "xi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 < self.eps_prob < 1:
            raise ValueError("eps_prob must lie in (0, 1)")


def _safe_log(p: float, eps: float) -> float:
    return math.log(max(p, eps))


def node_loglik(rec, node, eps: float = EPS_PROB) -> float:
    """Log-likelihood of one grounded view entity and its action/attribute nodes."""
    lp = _safe_log(rec.det, eps)
    if node.action is not None:
        lp += _safe_log(rec.actions.get(node.action, 0.0), eps)
    for attr, val in node.attributes.items():
        if attr in rec.attrs:
            s = rec.attrs[attr]
            lp += _safe_log(s if val else 1.0 - s, eps)
    return lp


def log_likelihood(views, ev, eps: float = EPS_PROB) -> float:
    total = 0.0
    for (cam, t), vg in sorted(views.items()):
        for node in vg.entities:
            if node.projected:
                continue
            rec = ev.record(cam, t, node.entity_id)
            if rec is None:
                raise MissingRecord(f"no proposal for camera {cam} t={t} entity {node.entity_id}")
            total += node_loglik(rec, node, eps)
    return total


def _pairs(g, gv, links):
    for sid, vid in links:
        o, ov = g.get(sid), gv.get(vid)
        if o is None or ov is None:
            continue
        yield o, ov


def appearance_energy(g, gv, links) -> float:
    total = 0.0
    for o, ov in _pairs(g, gv, links):
        if o.appearance.shape != ov.appearance.shape:
            raise DimensionMismatch(f"{o.entity_id}: {o.appearance.shape} vs {ov.appearance.shape}")
        total += float(np.linalg.norm(o.appearance - ov.appearance))
    return total


def spatial_energy(g, gv, links, cam) -> float:
    total = 0.0
    for o, ov in _pairs(g, gv, links):
        gx, gy = project_to_ground(cam.homography, ov.location)
        total += math.hypot(o.location[0] - gx, o.location[1] - gy)
    return total


def action_energy(g, gv, links, ev, eps: float = EPS_PROB) -> float:
    total = 0.0
    for o, ov in _pairs(g, gv, links):
        if o.action is None:
            continue
        rec = ev.record(gv.camera, gv.t, ov.entity_id)
        if rec is None:
            raise MissingRecord(f"no proposal for camera {gv.camera} t={gv.t} entity {ov.entity_id}")
        if o.action not in rec.actions:
            raise UnknownActionLabel(f"{o.action!r} has no score for {ov.entity_id}")
        total += -_safe_log(rec.actions[o.action], eps)
    return total


def attribute_energy(g, gv, links, xi: float = 1.0) -> float:
    mismatches = 0
    for o, ov in _pairs(g, gv, links):
        for attr, val in o.attributes.items():
            if attr in ov.attributes and bool(ov.attributes[attr]) != bool(val):
                mismatches += 1
    return xi * mismatches


def compatibility_energy(g, gv, links, cam, ev, w: EnergyWeights) -> float:
    links = list(links)
    return (w.w1 * spatial_energy(g, gv, links, cam)
            + w.w2 * appearance_energy(g, gv, links)
            + w.w3 * action_energy(g, gv, links, ev, w.eps_prob)
            + w.w4 * attribute_energy(g, gv, links, w.xi))


def log_prior(h, ev, w: EnergyWeights, prior) -> float:
    """log p(G) without the Gibbs normaliser."""
    if h.T == 0:
        return 0.0
    lp = initial_logprob(prior, h.scene[0])
    for t in range(h.T - 1):
        lp += transition_logprob(prior, h.scene[t], h.scene[t + 1], h.phi)
    for t in range(h.T):
        for cam_id in sorted(h.cameras):
            links = h.phi.at(t, cam_id)
            if links:
                lp -= compatibility_energy(h.scene[t], h.view_graph(cam_id, t), links,
                                           h.cameras[cam_id], ev, w)
    return lp


def log_posterior(h, ev, w: EnergyWeights, prior) -> float:
    """Unnormalised log p(G | I) = log p(I | G) + log p(G)."""
    return log_likelihood(h.views, ev, w.eps_prob) + log_prior(h, ev, w, prior)
