"""Detection, tracking, action, attribute and identity metrics plus fusion baselines."""
from __future__ import annotations

import itertools
import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


class LengthMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


def iou(a, b) -> float:
    """Intersection over union of two (x0, y0, x1, y1) rectangles."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union) if union > 0 else 0.0


def iou_matrix(preds, gts) -> np.ndarray:
    m = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            m[i, j] = iou(p, g)
    return m


def greedy_match(preds, gts, thresh: float = 0.5) -> list[tuple[int, int, float]]:
    """One-to-one matching taking the highest-overlap pair first; IoU must exceed ``thresh``.

    Ties are broken by (pred index, gt index) so the result does not depend on
    anything but the boxes and their order of equal overlaps.
    """
    m = iou_matrix(preds, gts)
    cand = sorted(((-m[i, j], i, j) for i in range(len(preds)) for j in range(len(gts))
                   if m[i, j] > thresh))
    used_p, used_g, out = set(), set(), []
    for neg, i, j in cand:
        if i in used_p or j in used_g:
            continue
        used_p.add(i); used_g.add(j)
        out.append((i, j, -neg))
    return out


def detection_metrics(pred, gt, thresh: float = 0.5) -> tuple[float, float]:
    """(DA, DP) from per-frame box lists; ``pred``/``gt`` map frame -> list of boxes."""
    tp = n_gt = n_pred = 0
    for f in set(pred) | set(gt):
        p = list(pred.get(f, ())); g = list(gt.get(f, ()))
        n_gt += len(g); n_pred += len(p)
        tp += len(greedy_match(p, g, thresh))
    da = tp / n_gt if n_gt else (1.0 if n_pred == 0 else 0.0)
    dp = tp / n_pred if n_pred else 0.0
    return da, dp


@dataclass
class TrackingResult:
    TA: float
    TP: float
    IDSW: int
    FRAG: int
    misses: int
    false_positives: int
    n_gt: int


def tracking_metrics(pred, gt, thresh: float = 0.5) -> TrackingResult:
    """CLEAR-MOT accounting over frames visited in sorted key order.

    ``pred`` and ``gt`` map frame -> list of (track_id, box). A correspondence
    from the previous frame is kept while its overlap still exceeds ``thresh``;
    the remaining boxes are matched by maximum total IoU.
    """
    frames = sorted(set(pred) | set(gt))
    last_pred: dict = {}        # gt id -> pred id of its latest match
    prev_map: dict = {}         # gt id -> pred id matched in the previous frame it was present in
    status: dict = defaultdict(list)   # gt id -> matched flag per frame it is present
    misses = fps = idsw = n_gt = 0
    ious = []
    for f in frames:
        g = list(gt.get(f, ())); p = list(pred.get(f, ()))
        n_gt += len(g)
        gi = {tid: k for k, (tid, _) in enumerate(g)}
        pi = {tid: k for k, (tid, _) in enumerate(p)}
        matched = {}
        for gid, pid in prev_map.items():
            if gid in gi and pid in pi and pid not in matched.values():
                o = iou(p[pi[pid]][1], g[gi[gid]][1])
                if o > thresh:
                    matched[gid] = pid
        rest_g = [k for k, (tid, _) in enumerate(g) if tid not in matched]
        taken = set(matched.values())
        rest_p = [k for k, (tid, _) in enumerate(p) if tid not in taken]
        if rest_g and rest_p:
            m = iou_matrix([p[k][1] for k in rest_p], [g[k][1] for k in rest_g])
            cost = np.where(m > thresh, -m, 0.0)
            rows, cols = linear_sum_assignment(cost)
            for r, c in zip(rows, cols):
                if m[r, c] > thresh:
                    matched[g[rest_g[c]][0]] = p[rest_p[r]][0]
        for gid, pid in matched.items():
            if gid in last_pred and last_pred[gid] != pid:
                idsw += 1
            last_pred[gid] = pid
            ious.append(iou(p[pi[pid]][1], g[gi[gid]][1]))
        for tid, _ in g:
            status[tid].append(tid in matched)
        misses += len(g) - len(matched)
        fps += len(p) - len(matched)
        prev_map = {gid: pid for gid, pid in prev_map.items() if gid not in gi}
        prev_map.update(matched)
    frag = 0
    for flags in status.values():
        seen = False
        for a, b in zip(flags, flags[1:]):
            seen = seen or a
            if seen and not a and b:
                frag += 1
    ta = 1.0 - (misses + fps + idsw) / n_gt if n_gt else (1.0 if fps == 0 else 0.0)
    ta = min(max(ta, 0.0), 1.0)
    tp = float(np.mean(ious)) if ious else 0.0
    return TrackingResult(ta, tp, idsw, frag, misses, fps, n_gt)


@dataclass
class ActionResult:
    labels: list[str]
    per_class: dict[str, float]
    overall: float
    confusion: np.ndarray       # rows: ground truth, columns: prediction, row-normalised


def action_metrics(pred, gt, labels=None) -> ActionResult:
    pred, gt = list(pred), list(gt)
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predictions for {len(gt)} labels")
    labels = sorted(set(labels or ()) | set(gt) | set(pred))
    idx = {a: i for i, a in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)))
    for p, g in zip(pred, gt):
        counts[idx[g], idx[p]] += 1
    rows = counts.sum(axis=1, keepdims=True)
    conf = np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)
    per_class = {a: float(conf[i, i]) for i, a in enumerate(labels) if rows[i, 0] > 0}
    overall = float(np.trace(counts) / len(gt)) if gt else 0.0
    return ActionResult(labels, per_class, overall, conf)


def average_precision(scores, positives) -> float | None:
    """All-points interpolated AP; instances with equal scores form one threshold.

    Returns None when there is no positive instance.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(positives, dtype=bool)
    if s.shape != y.shape:
        raise LengthMismatch("scores and labels differ in length")
    n_pos = int(y.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    n = ends + 1
    prec = tp / n
    rec = tp / n_pos
    env = np.maximum.accumulate(prec[::-1])[::-1]
    dr = np.diff(np.r_[0.0, rec])
    return float((dr * env).sum())


def attribute_metrics(scores, truth) -> tuple[dict[str, float | None], float]:
    """``scores``/``truth``: per instance dicts attr -> score / bool. Returns (AP per attribute, mAP)."""
    scores, truth = list(scores), list(truth)
    if len(scores) != len(truth):
        raise LengthMismatch("scores and truth differ in length")
    attrs = sorted({a for d in truth for a in d})
    ap = {}
    for a in attrs:
        rows = [(s.get(a, 0.0), bool(g[a])) for s, g in zip(scores, truth) if a in g]
        ap[a] = average_precision([r[0] for r in rows], [r[1] for r in rows])
    defined = [v for v in ap.values() if v is not None]
    return ap, float(np.mean(defined)) if defined else 0.0


def fuse_vote(labels) -> str:
    labels = list(labels)
    if not labels:
        raise EmptyInput("fuse_vote needs at least one view")
    c = Counter(labels)
    top = max(c.values())
    return min(a for a, n in c.items() if n == top)


def fuse_mean(tables) -> str:
    tables = list(tables)
    if not tables:
        raise EmptyInput("fuse_mean needs at least one view")
    keys = sorted(set().union(*tables))
    means = {a: sum(t.get(a, 0.0) for t in tables) / len(tables) for a in keys}
    top = max(means.values())
    return min(a for a in keys if means[a] == top)


def identity_f1(pred, truth, cross_view_only: bool = True) -> tuple[float, float, float]:
    """Pairwise (precision, recall, F1) of tracklet identity matching.

    ``pred`` maps (camera, tracklet) -> scene id; keys it lacks count as
    unlinked. ``truth`` maps every tracklet to its true entity or None for
    clutter, which never forms a true pair. With ``cross_view_only`` only
    pairs from different cameras are scored.
    """
    tp = fp = fn = 0
    for a, b in itertools.combinations(sorted(truth), 2):
        if cross_view_only and a[0] == b[0]:
            continue
        same = truth[a] is not None and truth[a] == truth[b]
        linked = a in pred and b in pred and pred[a] == pred[b]
        tp += same and linked
        fp += linked and not same
        fn += same and not linked
    prec = tp / (tp + fp) if tp + fp else 1.0
    rec = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 1.0
    return prec, rec, f1


@dataclass
class EvalReport:
    DA: float
    DP: float
    TA: float
    TP: float
    IDSW: int
    FRAG: int
    action_per_class: dict[str, float] = field(default_factory=dict)
    action_overall: float = 0.0
    action_labels: list[str] = field(default_factory=list)
    confusion: list[list[float]] = field(default_factory=list)
    attribute_ap: dict[str, float | None] = field(default_factory=dict)
    mAP: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    def table(self) -> str:
        lines = [f"DA {self.DA:.3f}  DP {self.DP:.3f}  TA {self.TA:.3f}  TP {self.TP:.3f}  "
                 f"IDSW {self.IDSW}  FRAG {self.FRAG}",
                 f"action accuracy {self.action_overall:.3f}"]
        lines += [f"  {a:<12} {v:.3f}" for a, v in sorted(self.action_per_class.items())]
        lines.append(f"attribute mAP {self.mAP:.3f}")
        lines += [f"  {a:<12} {'n/a' if v is None else f'{v:.3f}'}" for a, v in sorted(self.attribute_ap.items())]
        return "\n".join(lines)


def _frames(records):
    out = defaultdict(list)
    for r in records:
        out[(r["t"], r["camera"])].append(r)
    return out


def evaluate(pred_records, gt_records, thresh: float = 0.5) -> EvalReport:
    """Score hierarchy records against ground-truth records (same serialisation).

    Detection and tracking use every box; actions and attributes are scored on
    the detection matches of each frame.
    """
    pf, gf = _frames(pred_records), _frames(gt_records)
    keys = set(pf) | set(gf)
    da, dp = detection_metrics({k: [r["bbox"] for r in pf.get(k, ())] for k in keys},
                               {k: [r["bbox"] for r in gf.get(k, ())] for k in keys}, thresh)
    tr = tracking_metrics({k: [(r["scene_id"], r["bbox"]) for r in pf.get(k, ())] for k in keys},
                          {k: [(r["scene_id"], r["bbox"]) for r in gf.get(k, ())] for k in keys}, thresh)
    pa, ga, ps, gs = [], [], [], []
    for k in sorted(keys):
        p, g = pf.get(k, []), gf.get(k, [])
        for i, j, _ in greedy_match([r["bbox"] for r in p], [r["bbox"] for r in g], thresh):
            if g[j].get("action") is not None and p[i].get("action") is not None:
                pa.append(p[i]["action"]); ga.append(g[j]["action"])
            if g[j].get("attributes"):
                probs = p[i].get("attr_probs") or {a: float(v) for a, v in p[i].get("attributes", {}).items()}
                ps.append(probs); gs.append(g[j]["attributes"])
    act = action_metrics(pa, ga)
    ap, m = attribute_metrics(ps, gs)
    return EvalReport(da, dp, tr.TA, tr.TP, tr.IDSW, tr.FRAG, act.per_class, act.overall,
                      act.labels, act.confusion.tolist(), ap, m)
