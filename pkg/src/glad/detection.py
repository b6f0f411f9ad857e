"""Residuals, per-node threshold sweeps and flagging."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from glad.core import ForecastSet, Panel
from glad.evaluation import match_events

TAU_MIN = 1e-6


@dataclass(frozen=True, eq=False)
class ResidualSet:
    start: int
    values: np.ndarray  # (n_nodes, T_eval), NaN-free; meaningless where ~valid
    valid: np.ndarray

    @property
    def range(self) -> range:
        return range(self.start, self.start + self.values.shape[1])

    def window(self, r: range) -> "ResidualSet":
        a, b = r.start - self.start, r.stop - self.start
        if a < 0 or b > self.values.shape[1]:
            raise ValueError(f"range {r} outside residual coverage {self.range}")
        return ResidualSet(r.start, self.values[:, a:b], self.valid[:, a:b])


@dataclass
class ThresholdMap:
    node_ids: tuple
    thresholds: np.ndarray
    val_f1: np.ndarray
    n_candidates: np.ndarray
    pooled: np.ndarray  # True where the node fell back to the pooled threshold

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_id", "threshold", "val_f1"])
            for nid, tau, f in zip(self.node_ids, self.thresholds, self.val_f1):
                w.writerow([nid, format(float(tau), ".9g"), f"{f:.6f}"])

    @classmethod
    def from_csv(cls, path) -> "ThresholdMap":
        ids, taus, f1s = [], [], []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                ids.append(row["node_id"])
                taus.append(float(row["threshold"]))
                f1s.append(float(row["val_f1"]))
        n = len(ids)
        return cls(tuple(ids), np.array(taus), np.array(f1s), np.zeros(n, dtype=int), np.zeros(n, dtype=bool))


def residuals(panel: Panel, forecasts: ForecastSet, eval_range: Optional[range] = None) -> ResidualSet:
    """Absolute one-step errors, invalid where the observation is missing."""
    r = forecasts.range if eval_range is None else eval_range
    if r != forecasts.range:
        raise ValueError(f"forecasts cover {forecasts.range}, evaluation needs {r}")
    if forecasts.values.shape[0] != panel.n_nodes:
        raise ValueError("forecast node count does not match panel")
    y = panel.values[:, r.start:r.stop]
    valid = panel.mask[:, r.start:r.stop].copy()
    e = np.where(valid, np.abs(np.nan_to_num(y) - forecasts.values), 0.0)
    return ResidualSet(r.start, e, valid)


def candidate_thresholds(values: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct values, the floor, and just above the max."""
    u = np.unique(values)
    if u.size == 0:
        return np.array([TAU_MIN])
    top = u[-1] + max(1e-9, 1e-9 * abs(u[-1]))
    cands = np.concatenate([[TAU_MIN], (u[:-1] + u[1:]) / 2, [top]])
    return np.unique(np.maximum(cands, TAU_MIN))


class _NodeCurve:
    """TP/prediction counts of one node as step functions of the threshold.

    Only residuals within ``w`` of a labeled anomaly can become true
    positives, so the matching is re-run once per distinct near-truth
    residual value rather than once per candidate threshold.
    """

    def __init__(self, times, e, truth, w):
        self.sorted_e = np.sort(e)
        self.n_truth = truth.size
        near = np.zeros(times.size, dtype=bool)
        if truth.size:
            lo = np.searchsorted(times, truth - w, side="left")
            hi = np.searchsorted(times, truth + w, side="right")
            for a, b in zip(lo, hi):
                near[a:b] = True
        nt, ne = times[near], e[near]
        self.near_values = np.unique(ne)
        levels = np.concatenate([[-np.inf], self.near_values])
        self.tp_table = np.array([match_events(nt[ne > lv], truth, w).tp for lv in levels], dtype=int)

    def counts(self, taus):
        npred = self.sorted_e.size - np.searchsorted(self.sorted_e, taus, side="right")
        tp = self.tp_table[np.searchsorted(self.near_values, taus, side="right")]
        return tp, npred


def _f1_vec(tp, npred, ntruth):
    den = npred + ntruth
    return np.where(den > 0, 2.0 * tp / np.maximum(den, 1), 1.0)


def _best_threshold(curves, cands):
    tp = np.zeros(cands.size, dtype=int)
    npred = np.zeros(cands.size, dtype=int)
    ntruth = 0
    for c in curves:
        a, b = c.counts(cands)
        tp += a
        npred += b
        ntruth += c.n_truth
    f = _f1_vec(tp, npred, ntruth)
    # ties resolve to the largest threshold
    k = int(np.flatnonzero(f == f.max())[-1])
    return float(cands[k]), float(f[k])


def sweep_thresholds(res: ResidualSet, labels: np.ndarray, w: int = 0, fallback: bool = True,
                     node_ids=None) -> ThresholdMap:
    """Per-node F1-maximizing thresholds on validation residuals.

    ``labels`` covers the same window as ``res``. Nodes without any labeled
    anomaly use a single threshold tuned on all nodes pooled when
    ``fallback`` is on; otherwise they tune on their own (which yields the
    zero-alarm threshold just above their largest residual).
    """
    labels = np.asarray(labels, dtype=bool)
    if labels.shape != res.values.shape:
        raise ValueError("labels and residuals differ in shape")
    if not res.valid.any():
        raise ValueError("no valid validation residuals")
    n = res.values.shape[0]
    curves, node_vals = [], []
    for i in range(n):
        times = np.flatnonzero(res.valid[i])
        truth = np.flatnonzero(labels[i] & res.valid[i])
        node_vals.append(res.values[i, times])
        curves.append(_NodeCurve(times, node_vals[-1], truth, w))
    taus = np.empty(n)
    f1s = np.empty(n)
    ncand = np.zeros(n, dtype=int)
    pooled = np.zeros(n, dtype=bool)
    has_truth = np.array([c.n_truth > 0 for c in curves])
    global_tau = None
    if fallback and has_truth.any() and not has_truth.all():
        global_tau, _ = _best_threshold(curves, candidate_thresholds(np.concatenate(node_vals)))
    for i in range(n):
        if global_tau is not None and not has_truth[i]:
            taus[i] = global_tau
            tp, npred = curves[i].counts(np.array([global_tau]))
            f1s[i] = _f1_vec(tp, npred, curves[i].n_truth)[0]
            pooled[i] = True
            continue
        cands = candidate_thresholds(node_vals[i])
        ncand[i] = cands.size
        taus[i], f1s[i] = _best_threshold([curves[i]], cands)
    ids = tuple(node_ids) if node_ids is not None else tuple(str(i) for i in range(n))
    return ThresholdMap(ids, taus, f1s, ncand, pooled)


def flag(res: ResidualSet, thresholds) -> np.ndarray:
    """``e > tau`` at valid positions (strict)."""
    tau = thresholds.thresholds if isinstance(thresholds, ThresholdMap) else np.asarray(thresholds, dtype=float)
    tau = np.broadcast_to(np.atleast_1d(tau), (res.values.shape[0],))
    return res.valid & (res.values > tau[:, None])


def interval_flag(panel: Panel, forecasts: ForecastSet) -> np.ndarray:
    """Flag observations outside the forecast interval ``|y - y_hat| > half_width``."""
    if forecasts.half_widths is None:
        raise ValueError("forecasts carry no interval half-widths")
    r = forecasts.range
    y = panel.values[:, r.start:r.stop]
    valid = panel.mask[:, r.start:r.stop]
    hw = np.broadcast_to(forecasts.half_widths, forecasts.values.shape)
    return valid & (np.abs(np.nan_to_num(y) - forecasts.values) > hw)
