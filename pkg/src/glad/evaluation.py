"""Tolerance-window matching and precision/recall/F1 scoring."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NodeMatch:
    pairs: tuple  # (pred_t, true_t)
    false_pos: tuple
    false_neg: tuple

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.false_pos)

    @property
    def fn(self) -> int:
        return len(self.false_neg)


@dataclass(frozen=True)
class MatchResult:
    nodes: tuple
    tolerance: int


def match_events(pred_times, true_times, w: int) -> NodeMatch:
    """One-to-one matching of predicted and true event times within ``+-w``.

    True events are visited in time order; each takes the earliest unmatched
    prediction inside its window. Because all windows have equal width this
    greedy yields a maximum matching.
    """
    preds = sorted(int(t) for t in pred_times)
    truths = sorted(int(t) for t in true_times)
    pairs, missed = [], []
    k = 0
    used = [False] * len(preds)
    for t in truths:
        while k < len(preds) and (used[k] or preds[k] < t - w):
            k += 1
        if k < len(preds) and preds[k] <= t + w:
            used[k] = True
            pairs.append((preds[k], t))
            k += 1
        else:
            missed.append(t)
    false_pos = tuple(p for p, u in zip(preds, used) if not u)
    return NodeMatch(tuple(pairs), false_pos, tuple(missed))


def match(pred_flags, true_labels, w: int = 0) -> MatchResult:
    """Match binary flag matrices ``(n_nodes, T)`` node by node."""
    pred_flags = np.atleast_2d(np.asarray(pred_flags, dtype=bool))
    true_labels = np.atleast_2d(np.asarray(true_labels, dtype=bool))
    if pred_flags.shape != true_labels.shape:
        raise ValueError(f"shape mismatch {pred_flags.shape} vs {true_labels.shape}")
    nodes = tuple(
        match_events(np.flatnonzero(p), np.flatnonzero(t), w) for p, t in zip(pred_flags, true_labels)
    )
    return MatchResult(nodes, int(w))


def prf(tp: int, fp: int, fn: int) -> tuple:
    """Precision, recall and F1 with the vacuous case (no predictions, no truths) scored 1."""
    if tp + fp == 0 and tp + fn == 0:
        return 1.0, 1.0, 1.0
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return p, r, 2.0 * tp / (2 * tp + fp + fn)


def f1_counts(tp, fp, fn) -> float:
    return prf(tp, fp, fn)[2]


@dataclass
class ScoreTable:
    node_ids: tuple
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    degrees: np.ndarray = field(default=None)

    @property
    def micro(self) -> tuple:
        return prf(int(self.tp.sum()), int(self.fp.sum()), int(self.fn.sum()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_id", "degree", "tp", "fp", "fn", "precision", "recall", "f1"])
        for k, nid in enumerate(self.node_ids):
            deg = "" if self.degrees is None else int(self.degrees[k])
            w.writerow([nid, deg, int(self.tp[k]), int(self.fp[k]), int(self.fn[k]),
                        f"{self.precision[k]:.6f}", f"{self.recall[k]:.6f}", f"{self.f1[k]:.6f}"])
        p, r, f = self.micro
        w.writerow(["MICRO", "", int(self.tp.sum()), int(self.fp.sum()), int(self.fn.sum()),
                    f"{p:.6f}", f"{r:.6f}", f"{f:.6f}"])
        return buf.getvalue()


def score(matches: MatchResult, node_ids=None, degrees=None) -> ScoreTable:
    n = len(matches.nodes)
    node_ids = tuple(node_ids) if node_ids is not None else tuple(str(i) for i in range(n))
    tp = np.array([m.tp for m in matches.nodes], dtype=int)
    fp = np.array([m.fp for m in matches.nodes], dtype=int)
    fn = np.array([m.fn for m in matches.nodes], dtype=int)
    scores = np.array([prf(a, b, c) for a, b, c in zip(tp, fp, fn)]).reshape(n, 3)
    deg = None if degrees is None else np.asarray(degrees, dtype=int)
    return ScoreTable(node_ids, tp, fp, fn, scores[:, 0], scores[:, 1], scores[:, 2], deg)


def format_table(rows: dict, title: str = "") -> str:
    """Plain-text table with one row per model: Model | Precision | Recall | F1."""
    width = max([len("Model")] + [len(k) for k in rows])
    lines = []
    if title:
        lines.append(title)
    head = f"{'Model':<{width}}  Precision  Recall  F1"
    lines.append(head)
    lines.append("-" * len(head))
    for name, (p, r, f) in rows.items():
        lines.append(f"{name:<{width}}  {p:9.2f}  {r:6.2f}  {f:4.2f}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DegreeRecord:
    node_id: str
    degree: int
    delta_f1: float


def degree_improvement(scores_a: ScoreTable, scores_b: ScoreTable, graph) -> tuple:
    """Per-node ``F1_a - F1_b`` against node degree.

    Returns ``(records, fraction_non_negative)``.
    """
    if tuple(scores_a.node_ids) != tuple(scores_b.node_ids):
        raise ValueError("score tables cover different node sets")
    if graph.n_nodes != len(scores_a.node_ids):
        raise ValueError("graph size does not match score tables")
    degrees = graph.degrees()
    delta = scores_a.f1 - scores_b.f1
    recs = tuple(DegreeRecord(nid, int(d), float(x)) for nid, d, x in zip(scores_a.node_ids, degrees, delta))
    frac = float(np.mean(delta >= 0)) if len(recs) else float("nan")
    return recs, frac
