"""Exact max-product and sum-product message passing on tree factor graphs.

Potentials are stored in log space. A factor graph here is a set of discrete
variables with unary tables and pairwise tables; it must be a forest (each
connected component a tree), which is what the per-entity star + temporal
chain models reduce to.
"""
from __future__ import annotations

from collections import deque

import numpy as np


class NotATree(ValueError):
    pass


class FactorGraph:
    def __init__(self):
        self.domains: dict = {}
        self.unary: dict = {}
        self.pairwise: list = []

    def add_variable(self, name, domain, unary=None):
        if name in self.domains:
            raise ValueError(f"variable {name!r} already exists")
        domain = tuple(domain)
        if not domain:
            raise ValueError(f"variable {name!r} has an empty domain")
        self.domains[name] = domain
        self.unary[name] = np.zeros(len(domain))
        if unary is not None:
            self.add_unary(name, unary)
        return name

    def add_unary(self, name, logpot):
        logpot = np.asarray(logpot, dtype=float)
        if logpot.shape != self.unary[name].shape:
            raise ValueError(f"unary for {name!r} has shape {logpot.shape}")
        self.unary[name] = self.unary[name] + logpot

    def add_pairwise(self, a, b, table):
        table = np.asarray(table, dtype=float)
        if table.shape != (len(self.domains[a]), len(self.domains[b])):
            raise ValueError(f"pairwise {a!r}-{b!r} has shape {table.shape}")
        self.pairwise.append((a, b, table))

    def __len__(self):
        return len(self.domains)

    def score(self, assignment: dict) -> float:
        """Total log potential of a full assignment given as labels."""
        idx = {v: self.domains[v].index(assignment[v]) for v in self.domains}
        s = sum(float(self.unary[v][i]) for v, i in idx.items())
        s += sum(float(tab[idx[a], idx[b]]) for a, b, tab in self.pairwise)
        return s


def _adjacency(fg: FactorGraph):
    parent = {v: v for v in fg.domains}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    adj = {v: [] for v in fg.domains}
    for a, b, tab in fg.pairwise:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise NotATree(f"factor {a!r}-{b!r} closes a cycle")
        parent[ra] = rb
        adj[a].append((b, tab))        # oriented [a, b]
        adj[b].append((a, tab.T))
    return adj


def _schedule(fg: FactorGraph, adj, order=None):
    """BFS trees rooted at the first variable (in ``order``) of each component.

    Returns a list of (var, parent, table[var, parent]) in BFS order.
    """
    order = list(order) if order is not None else list(fg.domains)
    seen = set()
    sched = []
    for root in order:
        if root in seen:
            continue
        seen.add(root)
        sched.append((root, None, None))
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, tab_uv in adj[u]:
                if v in seen:
                    continue
                seen.add(v)
                sched.append((v, u, tab_uv.T))
                queue.append(v)
    return sched


def logsumexp(a, axis=None):
    """log(sum(exp(a))) along ``axis``; all -inf input gives -inf."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else float(out.reshape(()))


def _upward(fg, sched, reduce):
    """Leaf-to-root pass; returns per-variable upward beliefs and messages."""
    belief = {v: fg.unary[v].copy() for v in fg.domains}
    msg_up = {}
    for v, p, tab in reversed(sched):
        if p is None:
            continue
        m = reduce(belief[v][:, None] + tab, axis=0)
        msg_up[v] = m
        belief[p] = belief[p] + m
    return belief, msg_up


def max_product(fg: FactorGraph, order=None):
    """Exact MAP assignment and its log score.

    Ties are broken towards the lowest domain index.
    """
    adj = _adjacency(fg)
    sched = _schedule(fg, adj, order)
    belief, _ = _upward(fg, sched, np.max)
    choice = {}
    for v, p, tab in sched:
        if p is None:
            choice[v] = int(np.argmax(belief[v]))
        else:
            choice[v] = int(np.argmax(belief[v] + tab[:, choice[p]]))
    assignment = {v: fg.domains[v][i] for v, i in choice.items()}
    return assignment, fg.score(assignment)


def sum_product(fg: FactorGraph, order=None) -> dict:
    """Exact per-variable marginals (probability vectors)."""
    adj = _adjacency(fg)
    sched = _schedule(fg, adj, order)
    _, msg_up = _upward(fg, sched, logsumexp)
    children = {v: [] for v in fg.domains}
    for v, p, _ in sched:
        if p is not None:
            children[p].append(v)
    down = {}
    out = {}
    for v, p, tab in sched:
        if p is not None:
            # everything the parent knows except what came from v
            ctx = fg.unary[p] + down.get(p, 0.0)
            for c in children[p]:
                if c != v:
                    ctx = ctx + msg_up[c]
            down[v] = logsumexp(ctx[None, :] + tab, axis=1)
        b = fg.unary[v] + down.get(v, 0.0)
        for c in children[v]:
            b = b + msg_up[c]
        out[v] = np.exp(b - logsumexp(b))
    return out


def log_partition(fg: FactorGraph) -> float:
    adj = _adjacency(fg)
    sched = _schedule(fg, adj)
    belief, _ = _upward(fg, sched, logsumexp)
    return float(sum(logsumexp(belief[v]) for v, p, _ in sched if p is None))
