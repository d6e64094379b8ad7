"""Metropolis-Hastings search over the identity mapping.

A structure is a partition of view tracklets into scene entities. Three
reversible operators act on it:

* merge: join two scene entities of the same object type whose tracklets never
  share a (camera, frame) slot;
* split: break one scene entity into two non-empty parts;
* swap: exchange two tracklets of the same type between two scene entities.

Merge and split are exact inverses of each other, swap is its own inverse.
The operator kind is drawn with probabilities (0.4, 0.4, 0.2) and the
concrete move uniformly among the valid moves of that kind, so the proposal
ratio is P(reverse kind)/|reverse moves| over P(kind)/|moves|.
"""
from __future__ import annotations

import math
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

from .graphs import assignment_from_partition, build_hierarchy, view_tracklets
from .scoring import EntityScorer, Problem

KINDS = ("merge", "split", "swap")
REVERSE = {"merge": "split", "split": "merge", "swap": "swap"}


class InvalidMove(ValueError):
    pass


@dataclass(frozen=True)
class Move:
    kind: str
    operands: tuple


@dataclass
class SamplerConfig:
    iterations: int = 5000
    seed: int = 0
    op_probs: tuple[float, float, float] = (0.4, 0.4, 0.2)
    conv_window: int = 0          # stop after this many consecutive rejections (0 = never)
    record_trace: bool = False
    record_states: bool = False

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if len(self.op_probs) != 3 or abs(sum(self.op_probs) - 1.0) > 1e-9 or min(self.op_probs) < 0:
            raise ValueError("operator probabilities must be three nonnegative numbers summing to 1")


@dataclass
class SamplerResult:
    best_partition: frozenset
    best_logp: float
    trace: list = field(default_factory=list)
    visits: Counter = field(default_factory=Counter)
    accepted: int = 0
    iterations: int = 0
    final_partition: frozenset | None = None


# -- structure primitives ------------------------------------------------------

def tracklet_meta(views, cameras, T):
    """tracklet key -> (object type, occupancy bitmask over camera x frame)."""
    cam_index = {c: i for i, c in enumerate(sorted(cameras))}
    meta = {}
    for key, obs in view_tracklets(views).items():
        occ = 0
        for t, _ in obs:
            occ |= 1 << (cam_index[key[0]] * T + t)
        meta[key] = (obs[0][1].object_type, occ)
    return meta


def _occ(entity, meta) -> int:
    o = 0
    for k in entity:
        o |= meta[k][1]
    return o


def _type(entity, meta) -> str:
    return meta[min(entity)][0]


def merge_ok(a, b, meta) -> bool:
    return _type(a, meta) == _type(b, meta) and not (_occ(a, meta) & _occ(b, meta))


def swap_ok(x, a, y, b, meta) -> bool:
    """Can tracklet x (in entity a) trade places with y (in entity b)?"""
    if a == b or meta[x][0] != meta[y][0]:
        return False
    if len(a) == 1 and len(b) == 1:
        return False  # swapping two singletons leaves the partition unchanged
    ox, oy = meta[x][1], meta[y][1]
    return not ((_occ(a, meta) ^ ox) & oy) and not ((_occ(b, meta) ^ oy) & ox)


def n_splits(entity) -> int:
    return (1 << (len(entity) - 1)) - 1


def _canon_pair(a, b):
    return (a, b) if min(a) <= min(b) else (b, a)


def enumerate_moves(partition, meta, kind: str) -> list[Move]:
    """All concrete moves of one kind applicable to ``partition``."""
    ents = sorted(partition, key=min)
    moves = []
    if kind == "merge":
        for a, b in combinations(ents, 2):
            if merge_ok(a, b, meta):
                moves.append(Move("merge", _canon_pair(a, b)))
    elif kind == "split":
        for e in ents:
            members = sorted(e)
            head, rest = members[0], members[1:]
            for r in range(len(rest)):
                for combo in combinations(rest, r):
                    moves.append(Move("split", (e, frozenset((head,) + combo))))
    elif kind == "swap":
        owner = {k: e for e in ents for k in e}
        keys = sorted(owner)
        for x, y in combinations(keys, 2):
            if swap_ok(x, owner[x], y, owner[y], meta):
                moves.append(Move("swap", (x, y)))
    else:
        raise ValueError(f"unknown move kind {kind!r}")
    return moves


def move_counts(partition, meta) -> dict[str, int]:
    return {k: len(enumerate_moves(partition, meta, k)) for k in KINDS}


def apply_partition_move(partition, move: Move, meta=None) -> frozenset:
    """Apply ``move`` to a partition (frozenset of frozensets)."""
    part = set(partition)
    if move.kind == "merge":
        a, b = move.operands
        if a not in part or b not in part or a == b:
            raise InvalidMove(f"merge operands are not entities of the structure")
        if meta is not None and not merge_ok(a, b, meta):
            raise InvalidMove("merge operands conflict or differ in type")
        part -= {a, b}
        part.add(a | b)
    elif move.kind == "split":
        e, s = move.operands
        if e not in part or not s or not s < e:
            raise InvalidMove("split needs a non-empty proper subset of an entity")
        part.remove(e)
        part |= {frozenset(s), e - s}
    elif move.kind == "swap":
        x, y = move.operands
        owner = {k: ent for ent in part for k in ent}
        if x not in owner or y not in owner:
            raise InvalidMove("swap operand is not a tracklet of the structure")
        a, b = owner[x], owner[y]
        if meta is not None and not swap_ok(x, a, y, b, meta):
            raise InvalidMove("swap would break type or slot exclusivity")
        if a == b:
            raise InvalidMove("swap operands share a scene entity")
        part -= {a, b}
        part |= {(a - {x}) | {y}, (b - {y}) | {x}}
    else:
        raise InvalidMove(f"unknown move kind {move.kind!r}")
    return frozenset(part)


def acceptance_ratio(delta_logp: float, kind: str, n_forward: int, n_reverse: int,
                     op_probs=(0.4, 0.4, 0.2)) -> float:
    """Metropolis-Hastings acceptance probability for one proposed move."""
    if n_forward <= 0 or n_reverse <= 0:
        return 0.0
    p = dict(zip(KINDS, op_probs))
    if p[kind] == 0 or p[REVERSE[kind]] == 0:
        return 0.0
    log_a = delta_logp + math.log(p[REVERSE[kind]] / n_reverse) - math.log(p[kind] / n_forward)
    return 1.0 if log_a >= 0 else math.exp(log_a)


# -- Hierarchy-level API ---------------------------------------------------------

def hierarchy_meta(h):
    return tracklet_meta(h.views, h.cameras, h.T)


def enumerate_hierarchy_moves(h, kind: str) -> list[Move]:
    return enumerate_moves(h.partition(), hierarchy_meta(h), kind)


def apply_move(h, move: Move):
    """New hierarchy with ``move`` applied; affected entities are re-aggregated."""
    part = apply_partition_move(h.partition(), move, hierarchy_meta(h))
    return build_hierarchy(h.views, h.cameras, h.T, assignment_from_partition(part))


# -- the chain --------------------------------------------------------------------

class Chain:
    """Single MH chain with incrementally maintained move counts."""

    def __init__(self, problem: Problem, partition, cfg: SamplerConfig, scorer: EntityScorer | None = None):
        self.problem = problem
        self.cfg = cfg
        self.scorer = scorer or EntityScorer(problem)
        self.rng = random.Random(cfg.seed)
        self.meta = {k: (tr.object_type, tr.occupancy) for k, tr in problem.tracklets.items()}
        self.keys = sorted(self.meta)
        self.ents: list[frozenset] = sorted((frozenset(e) for e in partition), key=min)
        covered = sorted(k for e in self.ents for k in e)
        if covered != self.keys:
            raise ValueError("initial structure must cover every tracklet exactly once")
        self.pos = {e: i for i, e in enumerate(self.ents)}
        self.owner = {k: e for e in self.ents for k in e}
        self._occ: dict[frozenset, int] = {}
        self._swaps: dict[tuple, int] = {}
        part = frozenset(self.ents)
        self.n_merge = len(enumerate_moves(part, self.meta, "merge"))
        self.n_swap = len(enumerate_moves(part, self.meta, "swap"))
        self.n_split = sum(n_splits(e) for e in self.ents)
        self.logp = problem.constant + sum(self.scorer(e) for e in self.ents)

    # entity helpers
    def occ(self, e) -> int:
        o = self._occ.get(e)
        if o is None:
            o = _occ(e, self.meta)
            self._occ[e] = o
        return o

    def _merge_ok(self, a, b) -> bool:
        return self.meta[min(a)][0] == self.meta[min(b)][0] and not (self.occ(a) & self.occ(b))

    def _swap_count(self, a, b) -> int:
        key = (a, b) if min(a) < min(b) else (b, a)
        n = self._swaps.get(key)
        if n is None:
            n = 0
            if self.meta[min(a)][0] == self.meta[min(b)][0] and not (len(a) == 1 and len(b) == 1):
                oa, ob = self.occ(a), self.occ(b)
                for x in a:
                    ox = self.meta[x][1]
                    rest_a = oa ^ ox
                    for y in b:
                        oy = self.meta[y][1]
                        if not (rest_a & oy) and not ((ob ^ oy) & ox):
                            n += 1
            self._swaps[key] = n
        return n

    def _delta(self, removed, added, pair_fn) -> int:
        rm = set(removed)
        d = 0
        for o in self.ents:
            if o in rm:
                continue
            for r in removed:
                d -= pair_fn(r, o)
            for a in added:
                d += pair_fn(a, o)
        for r1, r2 in combinations(removed, 2):
            d -= pair_fn(r1, r2)
        for a1, a2 in combinations(added, 2):
            d += pair_fn(a1, a2)
        return d

    # samplers for each kind
    def _pick_merge(self):
        n = len(self.ents)
        for _ in range(64):
            i = self.rng.randrange(n)
            j = self.rng.randrange(n - 1)
            if j >= i:
                j += 1
            a, b = self.ents[i], self.ents[j]
            if self._merge_ok(a, b):
                return a, b
        valid = [(a, b) for a, b in combinations(self.ents, 2) if self._merge_ok(a, b)]
        return valid[self.rng.randrange(len(valid))]

    def _pick_split(self):
        r = self.rng.randrange(self.n_split)
        for e in self.ents:
            s = n_splits(e)
            if r < s:
                break
            r -= s
        members = sorted(e)
        mask = self.rng.randrange(1, (1 << len(members)) - 1)
        part = frozenset(m for i, m in enumerate(members) if mask >> i & 1)
        return e, part

    def _swap_valid(self, x, y) -> bool:
        a, b = self.owner[x], self.owner[y]
        if a == b or self.meta[x][0] != self.meta[y][0] or (len(a) == 1 and len(b) == 1):
            return False
        ox, oy = self.meta[x][1], self.meta[y][1]
        return not ((self.occ(a) ^ ox) & oy) and not ((self.occ(b) ^ oy) & ox)

    def _pick_swap(self):
        n = len(self.keys)
        for _ in range(64):
            i = self.rng.randrange(n)
            j = self.rng.randrange(n - 1)
            if j >= i:
                j += 1
            x, y = self.keys[i], self.keys[j]
            if self._swap_valid(x, y):
                return x, y
        valid = [(x, y) for x, y in combinations(self.keys, 2) if self._swap_valid(x, y)]
        return valid[self.rng.randrange(len(valid))]

    def _replace(self, removed, added):
        for e in removed:
            i = self.pos.pop(e)
            last = self.ents.pop()
            if last is not e:
                self.ents[i] = last
                self.pos[last] = i
        for e in added:
            self.pos[e] = len(self.ents)
            self.ents.append(e)
            for k in e:
                self.owner[k] = e

    def step(self):
        """One MH iteration. Returns (kind, accepted)."""
        probs = self.cfg.op_probs
        u = self.rng.random()
        kind = "merge" if u < probs[0] else ("split" if u < probs[0] + probs[1] else "swap")
        if kind == "merge":
            if self.n_merge == 0:
                return kind, False
            a, b = self._pick_merge()
            removed, added = (a, b), (a | b,)
            n_fwd = self.n_merge
            n_rev = self.n_split - n_splits(a) - n_splits(b) + n_splits(a | b)
        elif kind == "split":
            if self.n_split == 0:
                return kind, False
            e, s = self._pick_split()
            removed, added = (e,), (s, e - s)
            n_fwd = self.n_split
            n_rev = self.n_merge + self._delta(removed, added, self._merge_ok)
        else:
            if self.n_swap == 0:
                return kind, False
            x, y = self._pick_swap()
            a, b = self.owner[x], self.owner[y]
            removed, added = (a, b), ((a - {x}) | {y}, (b - {y}) | {x})
            n_fwd = self.n_swap
            n_rev = self.n_swap + self._delta(removed, added, self._swap_count)

        delta = sum(self.scorer(e) for e in added) - sum(self.scorer(e) for e in removed)
        p_fwd = probs[KINDS.index(kind)]
        p_rev = probs[KINDS.index(REVERSE[kind])]
        if n_rev <= 0 or p_rev == 0:
            return kind, False
        log_a = delta + math.log(p_rev / n_rev) - math.log(p_fwd / n_fwd)
        if log_a < 0 and self.rng.random() >= math.exp(log_a):
            return kind, False

        # accepted: refresh every count for the new structure
        if kind == "merge":
            self.n_merge += self._delta(removed, added, self._merge_ok)
            self.n_swap += self._delta(removed, added, self._swap_count)
            self.n_split = n_rev
        elif kind == "split":
            self.n_swap += self._delta(removed, added, self._swap_count)
            self.n_split += sum(n_splits(e) for e in added) - sum(n_splits(e) for e in removed)
            self.n_merge = n_rev
        else:
            self.n_merge += self._delta(removed, added, self._merge_ok)
            self.n_split += sum(n_splits(e) for e in added) - sum(n_splits(e) for e in removed)
            self.n_swap = n_rev
        self._replace(removed, added)
        self.logp += delta
        return kind, True

    def partition(self) -> frozenset:
        return frozenset(self.ents)

    def run(self) -> SamplerResult:
        cfg = self.cfg
        best_part, best_logp = self.partition(), self.logp
        res = SamplerResult(best_part, best_logp)
        streak = 0
        for it in range(cfg.iterations):
            kind, acc = self.step()
            res.iterations = it + 1
            if acc:
                res.accepted += 1
                streak = 0
                if self.logp > best_logp:
                    best_logp, best_part = self.logp, self.partition()
            else:
                streak += 1
            if cfg.record_trace:
                res.trace.append({"iter": it, "kind": kind, "accepted": acc, "logp": self.logp})
            if cfg.record_states:
                res.visits[self.partition()] += 1
            if cfg.conv_window and streak >= cfg.conv_window:
                break
        # re-sum exactly to drop accumulated rounding
        res.best_partition = best_part
        res.best_logp = self.scorer.total(sorted(best_part, key=min))
        res.final_partition = self.partition()
        return res


def _best_hierarchy(problem, partition, values_fn=None):
    from .inference import infer_values
    h = build_hierarchy(problem.views, problem.cameras, problem.T, assignment_from_partition(partition))
    values = infer_values(h, problem.ev, problem.weights, problem.prior)
    return build_hierarchy(problem.views, problem.cameras, problem.T, h.assignment, values), values


def run_sampler(g0, ev, w, prior, cfg: SamplerConfig, problem: Problem | None = None):
    """MH structure search started from ``g0``.

    Returns (best hierarchy with inferred values, trace). Identical seeds and
    inputs give identical traces.
    """
    problem = problem or Problem(g0.views, ev, w, prior)
    res = Chain(problem, g0.partition(), cfg).run()
    best, _ = _best_hierarchy(problem, res.best_partition)
    return best, res.trace


def run_chains(problem: Problem, partition, cfg: SamplerConfig, n_chains: int = 1,
               max_workers: int | None = None) -> SamplerResult:
    """Independent chains from one start; the best-scoring chain wins.

    Chain 0 uses ``cfg.seed``; chain k uses ``cfg.seed + k``. The scorer cache
    is not shared, so chains are safe to run on threads.
    """
    cfgs = [SamplerConfig(**{**cfg.__dict__, "seed": cfg.seed + k}) for k in range(n_chains)]
    if n_chains == 1:
        return Chain(problem, partition, cfgs[0]).run()
    with ThreadPoolExecutor(max_workers=max_workers or n_chains) as pool:
        results = list(pool.map(lambda c: Chain(problem, partition, c).run(), cfgs))
    return max(results, key=lambda r: r.best_logp)
