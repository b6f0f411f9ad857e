"""Dataset I/O, anomaly injection and the synthetic graph-correlated generator.

File formats (UTF-8, comma-delimited, header row required):

* Yahoo-style series: one file per series with a ``timestamp``/``timestamps``/
  ``index`` column, a ``value`` column and an ``is_anomaly`` or ``anomaly``
  column (0/1).
* Wide panel: first column is the timestamp, one column per node id. Empty
  cells (or cells equal to ``missing_value`` when given) are unobserved. A
  label file uses the same layout with 0/1 cells.
* Edge list: ``src,dst[,weight]`` with node ids resolved against the panel.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from glad.core import Panel, SeededRng
from glad.graph import Graph, build_neighbor_table

TIMESTAMP_COLUMNS = ("timestamp", "timestamps", "index")
LABEL_COLUMNS = ("is_anomaly", "anomaly")


class FormatError(ValueError):
    pass


class InjectionError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


# -- Yahoo-style single series ----------------------------------------------------

def read_yahoo_file(path) -> Panel:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        ts_col = next((c for c in TIMESTAMP_COLUMNS if c in header), None)
        if ts_col is None:
            raise FormatError(f"{path}: missing column 'timestamp'")
        if "value" not in header:
            raise FormatError(f"{path}: missing column 'value'")
        lab_col = next((c for c in LABEL_COLUMNS if c in header), None)
        if lab_col is None:
            raise FormatError(f"{path}: missing column 'is_anomaly'")
        i_ts, i_val, i_lab = header.index(ts_col), header.index("value"), header.index(lab_col)
        ts, vals, labs = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts.append(int(float(row[i_ts])))
                vals.append(float(row[i_val]))
                labs.append(int(float(row[i_lab])) != 0)
            except (ValueError, IndexError):
                raise FormatError(f"{path}: row {row_no}: non-numeric or missing cell") from None
    values = np.array([vals])
    mask = np.isfinite(values)
    labels = np.array([labs]) & mask
    return Panel((path.stem,), np.array(ts), values, mask, labels)


def load_yahoo_csv(directory) -> list:
    """One single-node panel per ``*.csv`` file, sorted by file name."""
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise FormatError(f"{directory}: no .csv files")
    return [read_yahoo_file(f) for f in files]


def write_yahoo_file(panel: Panel, path):
    if panel.n_nodes != 1:
        raise ValueError("Yahoo-style files hold exactly one series")
    labels = panel.label_matrix()[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "value", "is_anomaly"])
        for t, v, lab in zip(panel.timestamps, panel.values[0], labels):
            w.writerow([int(t), _fmt(v), int(lab)])


def assemble_panel(panels: list) -> Panel:
    """Stack same-length single-node panels into one multi-node panel."""
    T = panels[0].T
    if any(p.T != T for p in panels):
        raise ValueError("all series must share one length")
    return Panel(
        node_ids=tuple(p.node_ids[0] for p in panels),
        timestamps=np.arange(T),
        values=np.vstack([p.values for p in panels]),
        mask=np.vstack([p.mask for p in panels]),
        labels=np.vstack([p.label_matrix() for p in panels]),
    )


# -- wide panels and edge lists -------------------------------------------------

def read_wide(path, missing_value=None):
    """Returns ``(node_ids, timestamps, values, observed)`` of a wide CSV; gaps are NaN."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if len(header) < 2:
            raise FormatError(f"{path}: need a timestamp column and at least one node column")
        node_ids = header[1:]
        ts, rows, obs = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}: row {row_no}: expected {len(header)} cells, got {len(row)}")
            try:
                ts.append(int(float(row[0])))
                vals, ok = [], []
                for cell in row[1:]:
                    cell = cell.strip()
                    if cell == "":
                        vals.append(math.nan)
                        ok.append(False)
                        continue
                    v = float(cell)
                    is_missing = not math.isfinite(v) or (missing_value is not None and v == missing_value)
                    vals.append(math.nan if is_missing else v)
                    ok.append(not is_missing)
            except ValueError:
                raise FormatError(f"{path}: row {row_no}: non-numeric cell") from None
            rows.append(vals)
            obs.append(ok)
    return node_ids, np.array(ts, dtype=np.int64), np.array(rows).T.reshape(len(node_ids), -1), \
        np.array(obs, dtype=bool).T.reshape(len(node_ids), -1)


def read_edge_list(path, node_ids, directed=False) -> Graph:
    index = {nid: k for k, nid in enumerate(node_ids)}
    edges = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["src", "dst"]:
            raise FormatError(f"{path}: header must start with 'src,dst'")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            src, dst = row[0].strip(), row[1].strip()
            for nid in (src, dst):
                if nid not in index:
                    raise FormatError(f"{path}: row {row_no}: unknown node id {nid!r}")
            if src != dst:
                edges.append((index[src], index[dst]))
    return Graph.from_edges(len(node_ids), edges, directed)


def load_wide_csv(panel_file, edge_file=None, labels_file=None, missing_value=None,
                  directed=False) -> tuple:
    """Read a wide panel, optional 0/1 label panel and optional edge list.

    ``missing_value`` (e.g. ``0.0`` for traffic speeds) marks cells as unobserved.
    Returns ``(panel, graph_or_None)``.
    """
    node_ids, ts, values, mask = read_wide(panel_file, missing_value)
    labels = None
    if labels_file is not None and os.path.exists(labels_file):
        lab_ids, lab_ts, lab_vals, _ = read_wide(labels_file)
        if lab_ids != node_ids or not np.array_equal(lab_ts, ts):
            raise FormatError(f"{labels_file}: layout does not match {panel_file}")
        labels = (np.nan_to_num(lab_vals) != 0) & mask
    panel = Panel(tuple(node_ids), ts, values, mask, labels)
    graph = read_edge_list(edge_file, node_ids, directed) if edge_file is not None else None
    return panel, graph


def write_wide_csv(panel: Panel, path, labels_path=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *panel.node_ids])
        for t in range(panel.T):
            w.writerow([int(panel.timestamps[t])] + [
                _fmt(panel.values[i, t]) if panel.mask[i, t] else "" for i in range(panel.n_nodes)
            ])
    if labels_path is not None:
        lab = panel.label_matrix()
        with open(labels_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", *panel.node_ids])
            for t in range(panel.T):
                w.writerow([int(panel.timestamps[t])] + [int(lab[i, t]) for i in range(panel.n_nodes)])


def write_edge_list(graph: Graph, node_ids, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst"])
        for s, d in graph.sorted_edges():
            w.writerow([node_ids[s], node_ids[d]])


# -- anomaly injection --------------------------------------------------------------

@dataclass
class InjectionSpec:
    """Sparse drop events.

    ``drop_mode`` is ``"multiply"`` (value *= factor) or ``"subtract"``
    (value -= magnitude * node std, std over the node's observed values).
    ``n_affected_nodes`` overrides ``affected_fraction`` when set.
    """

    n_affected_nodes: Optional[int] = None
    affected_fraction: float = 0.2
    events_per_node: int = 2
    drop_mode: str = "multiply"
    factor: float = 0.2
    magnitude: float = 4.0
    duration: int = 1
    min_separation: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.drop_mode not in ("multiply", "subtract"):
            raise ValueError(f"unknown drop_mode {self.drop_mode!r}")
        if self.drop_mode == "multiply" and not 0 <= self.factor < 1:
            raise ValueError("multiply factor must lie in [0, 1)")
        if self.duration < 1 or self.min_separation < 1 or self.events_per_node < 0:
            raise ValueError("duration and min_separation must be >= 1, events_per_node >= 0")

    def affected_count(self, n_nodes: int) -> int:
        if self.n_affected_nodes is not None:
            return min(int(self.n_affected_nodes), n_nodes)
        return min(n_nodes, int(round(self.affected_fraction * n_nodes)))


def inject_anomalies(panel: Panel, spec: InjectionSpec, target_range: range) -> Panel:
    """Apply drop events inside ``target_range`` and mark them as labels.

    Affected nodes and event starts are seeded draws; event starts on one node
    are at least ``min_separation`` apart.
    """
    n_aff = spec.affected_count(panel.n_nodes)
    e = spec.events_per_node
    if n_aff == 0 or e == 0:
        return panel
    span = len(target_range)
    slack = span - ((e - 1) * spec.min_separation + spec.duration)
    if slack < 0:
        raise InjectionError(
            f"{e} events of duration {spec.duration} with separation {spec.min_separation} "
            f"do not fit in a range of {span} steps"
        )
    rng = SeededRng(spec.seed)
    nodes = np.sort(rng.choice(panel.n_nodes, size=n_aff, replace=False))
    base = panel.filled_values()
    values = np.array(panel.values)
    mask = np.array(panel.mask)
    labels = np.array(panel.label_matrix())
    for i in nodes:
        offsets = np.sort(rng.integers(0, slack + 1, size=e)) + np.arange(e) * spec.min_separation
        obs = panel.values[i][panel.mask[i]]
        std = obs.std() if obs.size else 0.0
        for off in offsets:
            cols = target_range.start + off + np.arange(spec.duration)
            if spec.drop_mode == "multiply":
                values[i, cols] = base[i, cols] * spec.factor
            else:
                values[i, cols] = base[i, cols] - spec.magnitude * std
            mask[i, cols] = True
            labels[i, cols] = True
    return panel.with_values(values, labels=labels, mask=mask)


# -- synthetic generator ----------------------------------------------------------

@dataclass
class SynthSpec:
    """Graph-correlated synthetic panel.

    Dynamics, with ``M`` the row-normalized adjacency (zero rows for isolated
    nodes):

    * latent factors ``z`` are unit-variance AR(1) with coefficient
      ``latent_ar``; node i reads latent ``i mod n_latents`` (``None`` = one
      latent per node);
    * the latent image is mixed once per step, ``x = (1 - alpha) z + alpha M z``;
    * noise propagates over the graph with a delay of ``noise_delay`` steps,
      ``u_t = noise * eps_t + alpha M u_{t - noise_delay}``; ``noise_delay=0``
      gives plain i.i.d. noise;
    * ``y = level + x + season_amplitude sin(2 pi t / season_period) + u``.
    """

    n_nodes: int = 20
    T: int = 3000
    n_latents: Optional[int] = None
    alpha: float = 0.6
    noise: float = 0.5
    noise_delay: int = 2
    latent_ar: float = 0.9
    graph_k: int = 2
    season_period: Optional[int] = None
    season_amplitude: float = 1.0
    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if self.n_nodes < 1 or self.T < 2:
            raise ValueError("need n_nodes >= 1 and T >= 2")
        if self.noise_delay < 0:
            raise ValueError("noise_delay must be >= 0")


def random_connected_graph(n_nodes: int, k: int, rng: SeededRng, tries: int = 10) -> Graph:
    """Spatial k-nearest-neighbor graph on uniform points, redrawn until connected."""
    if n_nodes == 1:
        return Graph(1, frozenset())
    k = min(k, n_nodes - 1)
    for _ in range(tries):
        pts = rng.random((n_nodes, 2))
        d = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        np.fill_diagonal(d, np.inf)
        nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
        g = Graph.from_edges(n_nodes, [(i, int(j)) for i in range(n_nodes) for j in nearest[i]])
        if g.is_connected():
            return g
    raise RuntimeError(f"no connected {k}-NN graph on {n_nodes} nodes after {tries} tries")


def generate_synthetic(spec: SynthSpec, graph: Optional[Graph] = None) -> tuple:
    """Returns ``(panel, graph)``; a connected random graph is drawn if none is given."""
    rng = SeededRng(spec.seed)
    if graph is None:
        graph = random_connected_graph(spec.n_nodes, spec.graph_k, rng.child(0))
    elif graph.n_nodes != spec.n_nodes:
        raise ValueError("graph size does not match n_nodes")
    K = spec.n_latents or spec.n_nodes
    zr = rng.child(1)
    phi = spec.latent_ar
    innov = zr.standard_normal((K, spec.T)) * math.sqrt(1 - phi * phi)
    z = np.empty((K, spec.T))
    z[:, 0] = zr.standard_normal(K)
    for t in range(1, spec.T):
        z[:, t] = phi * z[:, t - 1] + innov[:, t]
    x = z[np.arange(spec.n_nodes) % K]
    M = build_neighbor_table(graph).mean_matrix()
    x = (1 - spec.alpha) * x + spec.alpha * (M @ x)
    t = np.arange(spec.T)
    if spec.season_period:
        x = x + spec.season_amplitude * np.sin(2 * np.pi * t / spec.season_period)
    u = spec.noise * rng.child(2).standard_normal((spec.n_nodes, spec.T))
    d = spec.noise_delay
    if d > 0 and spec.alpha > 0:
        for step in range(d, spec.T):
            u[:, step] += spec.alpha * (M @ u[:, step - d])
    y = spec.level + x + u
    node_ids = tuple(f"n{i:03d}" for i in range(spec.n_nodes))
    panel = Panel(node_ids, t, y, np.ones(y.shape, dtype=bool), np.zeros(y.shape, dtype=bool))
    return panel, graph
