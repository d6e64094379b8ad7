"""Value inference for a fixed identity mapping, and the alternating parse loop.

For a fixed structure every scene entity owns a tree: per frame, its action
and attribute variables collect unary evidence from all linked views (the
star), and consecutive frames are tied by the transition model (the chain).
Views enter only through unary factors because their data is observed.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .bp import FactorGraph, max_product, sum_product
from .energy import EnergyWeights, log_posterior
from .evidence import DEFAULT_DET_THRESHOLD, initial_view_graphs
from .geometry import AtInfinity, project_to_image
from .graphs import (EntityValues, ViewEntityNode, ViewParseGraph, assignment_from_partition,
                     build_hierarchy, singleton_assignment)
from .scoring import attribute_domains

log = logging.getLogger(__name__)


def _spans(h) -> dict[str, tuple[str, list[int]]]:
    out = {}
    for sg in h.scene:
        for n in sg.entities:
            ty, ts = out.setdefault(n.entity_id, (n.object_type, []))
            ts.append(sg.t)
    return out


def build_factor_graph(h, ev, w: EnergyWeights, prior) -> FactorGraph:
    """Forest of per-entity trees over action and attribute variables.

    Variables are named (scene id, "action", t) and (scene id, "attr", name, t).
    Unary log-potentials are -(w3 E_Act) and -(w4 E_Attr) contributions plus
    the initial-value prior at the entity's first frame; pairwise factors are
    the temporal transitions.
    """
    fg = FactorGraph()
    attr_dom = attribute_domains(h.views)
    by_slot = defaultdict(list)  # (sid, t) -> [(camera, view id)]
    for sid, cam, vid, t in h.phi.links:
        by_slot[(sid, t)].append((cam, vid))
    for sid, (ty, ts) in sorted(_spans(h).items()):
        acts = prior.actions.get(ty, ())
        attrs = attr_dom.get(ty, ())
        for i, t in enumerate(ts):
            views = sorted(by_slot.get((sid, t), []))
            if acts:
                un = np.zeros(len(acts))
                for cam, vid in views:
                    rec = ev.record(cam, t, vid)
                    un += w.w3 * np.log(np.maximum([rec.actions.get(a, 0.0) for a in acts], w.eps_prob))
                if i == 0:
                    un = un + prior.action_init[ty]
                fg.add_variable((sid, "action", t), acts, un)
                if i > 0:
                    fg.add_pairwise((sid, "action", ts[i - 1]), (sid, "action", t), prior.action_trans[ty])
            for a in attrs:
                un = np.zeros(2)
                for cam, vid in views:
                    node = h.view_graph(cam, t).get(vid)
                    if a in node.attributes:
                        # value v is penalised when the view says the opposite
                        un[1 - int(bool(node.attributes[a]))] -= w.w4 * w.xi
                if i == 0:
                    un = un + prior.attr_init_log(a)
                fg.add_variable((sid, "attr", a, t), (False, True), un)
                if i > 0:
                    fg.add_pairwise((sid, "attr", a, ts[i - 1]), (sid, "attr", a, t), prior.attr_trans(a))
    return fg


def infer_values(h, ev, w: EnergyWeights, prior, marginals: bool = True) -> dict[str, EntityValues]:
    """MAP actions/attributes per scene entity; attribute marginals optional."""
    fg = build_factor_graph(h, ev, w, prior)
    values: dict[str, EntityValues] = defaultdict(EntityValues)
    for sid, _ in _spans(h).items():
        values[sid]
    if len(fg) == 0:
        return dict(values)
    assignment, _ = max_product(fg)
    for var, label in assignment.items():
        sid, what = var[0], var[1]
        if what == "action":
            values[sid].actions[var[2]] = label
        else:
            values[sid].attributes.setdefault(var[3], {})[var[2]] = bool(label)
    if marginals:
        for var, p in sum_product(fg).items():
            if var[1] == "attr":
                values[var[0]].attribute_probs.setdefault(var[3], {})[var[2]] = float(p[1])
    return dict(values)


def with_values(h, ev, w, prior, marginals: bool = True):
    values = infer_values(h, ev, w, prior, marginals)
    return build_hierarchy(h.views, h.cameras, h.T, h.assignment, values), values


@dataclass
class ParseConfig:
    sampler: "SamplerConfig" = None
    rounds: int = 10
    conv_eps: float = 1e-6
    det_threshold: float = DEFAULT_DET_THRESHOLD
    chains: int = 1

    def __post_init__(self):
        if self.sampler is None:
            from .sampler import SamplerConfig
            self.sampler = SamplerConfig()


@dataclass
class ParseResult:
    hierarchy: object
    values: dict
    logp: float
    history: list = field(default_factory=list)
    problem: object = None
    trace: list = field(default_factory=list)   # sampler trace rows of all rounds, tagged by round


def joint_parse_full(ev, w: EnergyWeights, prior, cfg: ParseConfig | None = None, views=None) -> ParseResult:
    """Alternate structure sampling and value inference until the score settles."""
    from .sampler import SamplerConfig, run_chains
    from .scoring import EntityScorer, Problem

    cfg = cfg or ParseConfig()
    views = views if views is not None else initial_view_graphs(ev, cfg.det_threshold)
    problem = Problem(views, ev, w, prior)
    partition = frozenset(frozenset([k]) for k in problem.keys())
    # the starting structure is the baseline the first round has to beat; its
    # profile score equals the log posterior under MAP values
    h0 = build_hierarchy(views, ev.cameras, ev.T, assignment_from_partition(partition))
    best = ParseResult(h0, {}, EntityScorer(problem).total(partition), [], problem)
    history = []
    trace = []
    for rnd in range(cfg.rounds):
        scfg = SamplerConfig(**{**cfg.sampler.__dict__, "seed": cfg.sampler.seed + 7919 * rnd})
        res = run_chains(problem, partition, scfg, cfg.chains)
        trace.extend({"round": rnd, **row} for row in res.trace)
        h = build_hierarchy(views, ev.cameras, ev.T, assignment_from_partition(res.best_partition))
        h, values = with_values(h, ev, w, prior, marginals=False)
        lp = log_posterior(h, ev, w, prior)
        history.append({"round": rnd, "logp": lp, "sampler_logp": res.best_logp,
                        "accepted": res.accepted, "iterations": res.iterations})
        log.debug("round %d: logp %.6f (%d/%d accepted)", rnd, lp, res.accepted, res.iterations)
        gain = lp - best.logp
        if gain > 0:
            best = ParseResult(h, values, lp, history, problem)
        partition = best.hierarchy.partition()
        if gain < cfg.conv_eps:
            break
    best.hierarchy, best.values = with_values(best.hierarchy, ev, w, prior)
    best.history = history
    best.trace = trace
    return best


def joint_parse(ev, w: EnergyWeights, prior, cfg: ParseConfig | None = None):
    """Best parse-graph hierarchy found by the alternating procedure."""
    return joint_parse_full(ev, w, prior, cfg).hierarchy


def project_missing(h, ev=None):
    """Back-project scene entities into views where they were not detected.

    For every frame of an entity's span and every camera without a linked
    view entity, a box of the entity's median linked size (taken from that
    camera when the entity has links there, else from all cameras) is placed with its
    foot point on the projected scene location (so foot_point of the box is
    the projection). Projections outside the image are not added; points at
    infinity are skipped and counted.

    Returns (augmented view graphs, number of skipped projections).
    """
    sizes = defaultdict(list)
    cam_sizes = defaultdict(list)
    linked = set()
    for sid, cam, vid, t in h.phi.links:
        box = h.view_graph(cam, t).get(vid).bbox
        sizes[sid].append((box[2] - box[0], box[3] - box[1]))
        cam_sizes[(sid, cam)].append(sizes[sid][-1])
        linked.add((sid, cam, t))
    out = {k: ViewParseGraph(vg.camera, vg.t, list(vg.entities)) for k, vg in h.views.items()}
    skipped = 0
    for sg in h.scene:
        for node in sg.entities:
            if not sizes[node.entity_id]:
                continue
            for cam_id, cam in sorted(h.cameras.items()):
                if (node.entity_id, cam_id, sg.t) in linked:
                    continue
                pool = cam_sizes.get((node.entity_id, cam_id)) or sizes[node.entity_id]
                bw, bh = np.median(np.array(pool), axis=0)
                try:
                    u, v = project_to_image(cam.homography, node.location)
                except AtInfinity:
                    skipped += 1
                    continue
                if not (0 <= u <= cam.width and 0 <= v <= cam.height):
                    continue
                vg = out.setdefault((cam_id, sg.t), ViewParseGraph(cam_id, sg.t, []))
                vg.entities.append(ViewEntityNode(
                    entity_id=f"{node.entity_id}@{cam_id}", object_type=node.object_type,
                    bbox=(u - bw / 2, v - bh, u + bw / 2, v), appearance=node.appearance,
                    action=node.action, attributes=dict(node.attributes), det_score=0.0,
                    projected=True))
    if skipped:
        log.warning("project_missing: %d projections at infinity skipped", skipped)
    return out, skipped
