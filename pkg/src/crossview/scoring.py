"""Per-entity decomposition of the log-posterior.

Given the view graphs, the structure-dependent part of log p(G | I) is a sum
over scene entities, each one a function of its set of view tracklets only.
``EntityScorer`` evaluates that per-entity term with values (actions,
attributes) maximised out by chain Viterbi, and caches it by tracklet set.
This is what the structure sampler and the exhaustive oracle both score.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyWeights, log_likelihood
from .geometry import project_many
from .graphs import view_tracklets


def attribute_domains(views) -> dict[str, tuple[str, ...]]:
    """object type -> sorted attribute ids seen on view entities of that type."""
    out: dict[str, set] = {}
    for vg in views.values():
        for e in vg.entities:
            out.setdefault(e.object_type, set()).update(e.attributes)
    return {ty: tuple(sorted(a)) for ty, a in out.items()}


@dataclass
class Tracklet:
    key: tuple[int, str]
    object_type: str
    ts: np.ndarray
    feats: np.ndarray
    ground: np.ndarray
    act_log: np.ndarray      # (n, K) log max(score, eps) over the type's action domain
    attr_val: np.ndarray     # (n, A) view booleans
    attr_mask: np.ndarray    # (n, A) attribute observed on that view entity
    occupancy: int           # bit (camera_index * T + t) per observation


class Problem:
    """Tracklet table shared by all structures over one set of view graphs."""

    def __init__(self, views, ev, weights: EnergyWeights, prior):
        self.views = views
        self.ev = ev
        self.weights = weights
        self.prior = prior
        self.T = ev.T
        self.cameras = ev.cameras
        self.cam_index = {c: i for i, c in enumerate(sorted(ev.cameras))}
        self.attr_domains = attribute_domains(views)
        self.constant = log_likelihood(views, ev, weights.eps_prob)

        eps = weights.eps_prob
        self.tracklets: dict[tuple[int, str], Tracklet] = {}
        for key, obs in view_tracklets(views).items():
            cam = key[0]
            ty = obs[0][1].object_type
            if any(n.object_type != ty for _, n in obs):
                raise ValueError(f"tracklet {key} changes object type")
            acts = prior.actions.get(ty, ())
            attrs = self.attr_domains.get(ty, ())
            ts = np.array([t for t, _ in obs], dtype=np.int64)
            feats = np.stack([n.appearance for _, n in obs])
            feet = np.array([n.location for _, n in obs], dtype=float)
            ground = project_many(ev.cameras[cam].homography.matrix, feet)
            act_log = np.zeros((len(obs), len(acts)))
            attr_val = np.zeros((len(obs), len(attrs)), dtype=bool)
            attr_mask = np.zeros((len(obs), len(attrs)), dtype=bool)
            for i, (t, n) in enumerate(obs):
                if acts:
                    rec = ev.record(cam, t, n.entity_id)
                    if rec is None:
                        raise KeyError(f"no proposal for {key} at t={t}")
                    act_log[i] = np.log(np.maximum([rec.actions.get(a, 0.0) for a in acts], eps))
                for j, a in enumerate(attrs):
                    if a in n.attributes:
                        attr_mask[i, j] = True
                        attr_val[i, j] = bool(n.attributes[a])
            base = self.cam_index[cam] * self.T
            occ = 0
            for t in ts.tolist():
                occ |= 1 << (base + t)
            self.tracklets[key] = Tracklet(key, ty, ts, feats, ground, act_log, attr_val, attr_mask, occ)

        self._action_tables = {}
        for ty, acts in prior.actions.items():
            if acts:
                self._action_tables[ty] = (np.asarray(prior.action_init[ty], float),
                                           np.asarray(prior.action_trans[ty], float))
        self._attr_tables = {}
        for ty, attrs in self.attr_domains.items():
            init = np.array([prior.attr_init_log(a) for a in attrs]).reshape(len(attrs), 2)
            trans = np.array([prior.attr_trans(a) for a in attrs]).reshape(len(attrs), 2, 2)
            self._attr_tables[ty] = (init, trans)

    def keys(self):
        return sorted(self.tracklets)

    # -- per-entity evaluation ---------------------------------------------------

    def entity_terms(self, keys):
        """Assemble energies and value potentials for the entity made of ``keys``.

        Returns (constant, action_unary, attr_unary, tmin, tmax, object_type)
        where constant holds presence/birth/death and -(w1 E_S + w2 E_A), and
        the unaries are (n_span, K) and (n_span, A, 2) log tables.
        """
        w, pm = self.weights, self.prior
        trs = [self.tracklets[k] for k in keys]
        ty = trs[0].object_type
        if len(trs) == 1:
            tr = trs[0]
            ts, act_log, av, am = tr.ts, tr.act_log, tr.attr_val, tr.attr_mask
            e_geo = 0.0
        else:
            ts = np.concatenate([tr.ts for tr in trs])
            order = np.argsort(ts, kind="stable")
            ts = ts[order]
            feats = np.concatenate([tr.feats for tr in trs])[order]
            ground = np.concatenate([tr.ground for tr in trs])[order]
            act_log = np.concatenate([tr.act_log for tr in trs])[order]
            av = np.concatenate([tr.attr_val for tr in trs])[order]
            am = np.concatenate([tr.attr_mask for tr in trs])[order]
            starts = np.flatnonzero(np.r_[True, ts[1:] != ts[:-1]])
            counts = np.diff(np.r_[starts, ts.size])
            rep = np.repeat(np.arange(starts.size), counts)
            fmean = np.add.reduceat(feats, starts, axis=0) / counts[:, None]
            gmean = np.add.reduceat(ground, starts, axis=0) / counts[:, None]
            e_app = float(np.sqrt(((feats - fmean[rep]) ** 2).sum(axis=1)).sum())
            e_sp = float(np.sqrt(((ground - gmean[rep]) ** 2).sum(axis=1)).sum())
            e_geo = w.w1 * e_sp + w.w2 * e_app

        tmin, tmax = int(ts[0]), int(ts[-1])
        n_span = tmax - tmin + 1
        const = pm.presence_logp * n_span - e_geo
        if tmin > 0:
            const += pm.birth_logp
        if tmax < self.T - 1:
            const += pm.death_logp

        rel = ts - tmin
        a_un = None
        if act_log.shape[1]:
            a_un = np.zeros((n_span, act_log.shape[1]))
            np.add.at(a_un, rel, w.w3 * act_log)
        t_un = None
        if av.shape[1]:
            pen = w.w4 * w.xi
            t_un = np.zeros((n_span, av.shape[1], 2))
            # choosing value v costs xi for every observed view that disagrees
            np.add.at(t_un[:, :, 1], rel, -pen * (am & ~av))
            np.add.at(t_un[:, :, 0], rel, -pen * (am & av))
        return const, a_un, t_un, tmin, tmax, ty

    def entity_score(self, keys) -> float:
        const, a_un, t_un, _, _, ty = self.entity_terms(keys)
        s = const
        if a_un is not None:
            init, trans = self._action_tables[ty]
            s += float(chain_max(init, trans, a_un))
        if t_un is not None:
            init, trans = self._attr_tables[ty]
            s += float(chain_max(init, trans, t_un).sum())
        return s


def _maxplus(a, b):
    return (a[..., :, :, None] + b[..., None, :, :]).max(axis=-2)


def chain_max(init, trans, unary):
    """Best path score of a homogeneous chain.

    ``unary`` is (n, ..., K) with any batch dims between, ``init`` (..., K) and
    ``trans`` (..., K, K) with trans[i, j] the log weight of moving i -> j.
    Step matrices are combined pairwise in max-plus algebra, so the work is a
    logarithmic number of array operations instead of a loop over frames.
    Returns the batch-shaped maxima.
    """
    first = init + unary[0]
    if len(unary) == 1:
        return first.max(axis=-1)
    mats = trans[None] + unary[1:, ..., None, :]
    while len(mats) > 1:
        if len(mats) % 2:
            tail = mats[-1:]
            mats = np.concatenate([_maxplus(mats[:-1:2], mats[1::2]), tail])
        else:
            mats = _maxplus(mats[0::2], mats[1::2])
    return (first[..., :, None] + mats[0]).max(axis=(-2, -1))


class EntityScorer:
    """Memoised per-entity scores keyed by frozenset of tracklet keys."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self._cache: dict[frozenset, float] = {}

    def __call__(self, entity: frozenset) -> float:
        s = self._cache.get(entity)
        if s is None:
            s = self.problem.entity_score(sorted(entity))
            self._cache[entity] = s
        return s

    def total(self, partition) -> float:
        """Full log-posterior of a partition with optimal values."""
        return self.problem.constant + sum(self(e) for e in partition)

    def __len__(self):
        return len(self._cache)
