"""Config-driven experiments: model comparison, node-level analysis and graph ablation.

A config is a YAML mapping with the sections ``data``, ``split``, ``models``,
``train``, ``detect``, ``ablation`` and ``output`` plus a top-level ``seed``.
Unknown keys are rejected. Every seed left unspecified is derived from the
master seed, and the fully resolved config is written next to the results.
Relative paths are resolved against the directory of the config file.
"""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from glad import __version__
from glad.baselines import PanelForecaster
from glad.core import (ForecastSet, NormalizationParams, Panel, SeededRng, derive_seed, normalize_panel,
                       split_panel)
from glad.data import (InjectionSpec, SynthSpec, assemble_panel, generate_synthetic, inject_anomalies,
                       load_wide_csv, load_yahoo_csv)
from glad.detection import ResidualSet, ThresholdMap, flag, interval_flag, residuals, sweep_thresholds
from glad.evaluation import ScoreTable, degree_improvement, format_table, match, score
from glad.graph import Graph, correlation_knn_graph, degree_preserving_rewire
from glad.seqmodel import GraphLstmModel, TrainConfig, TrainHistory, forecast_one_step, make_model, train

log = logging.getLogger(__name__)

NEURAL_MODELS = ("graph-lstm", "lstm-only")
BASELINE_MODELS = ("arima", "decomp")
KNOWN_MODELS = NEURAL_MODELS + BASELINE_MODELS
DISPLAY_NAMES = {
    "graph-lstm": "Graph-Augmented LSTM",
    "lstm-only": "LSTM-only",
    "arima": "ARIMA",
    "decomp": "Trend+Seasonal",
}


class ConfigError(ValueError):
    pass


# -- config schema ---------------------------------------------------------------

@dataclass
class DataConfig:
    source: str = "synthetic"
    synthetic: dict = field(default_factory=dict)
    panel_file: Optional[str] = None
    edge_file: Optional[str] = None
    labels_file: Optional[str] = None
    missing_value: Optional[float] = None
    directed: bool = False
    yahoo_dir: Optional[str] = None
    knn_k: int = 3
    inject: Optional[dict] = None
    inject_validation: bool = True


@dataclass
class SplitConfig:
    train_frac: float = 0.6
    val_frac: float = 0.2


@dataclass
class ModelsConfig:
    names: list = field(default_factory=lambda: list(KNOWN_MODELS))
    hidden_size: int = 32
    per_node: bool = False
    init_seed: Optional[int] = None
    periods: list = field(default_factory=list)
    fourier_order: int = 3
    arima_season: Optional[int] = None


@dataclass
class DetectConfig:
    tolerance: int = 3
    baseline_rule: str = "sweep"
    fallback: bool = True


@dataclass
class AblationConfig:
    enabled: bool = False
    swap_factor: float = 10.0
    n_random_seeds: int = 5


@dataclass
class OutputConfig:
    dir: str = "runs/latest"
    forecast_node: Optional[str] = None


@dataclass
class ExperimentConfig:
    seed: int = 0
    name: str = "experiment"
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    models: ModelsConfig = field(default_factory=ModelsConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def path(self, p) -> Optional[Path]:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


SECTIONS = {
    "data": DataConfig,
    "split": SplitConfig,
    "models": ModelsConfig,
    "train": TrainConfig,
    "detect": DetectConfig,
    "ablation": AblationConfig,
    "output": OutputConfig,
}


def _check_keys(raw: dict, allowed, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _names(cls) -> list:
    return [f.name for f in fields(cls)]


def _build(cls, raw: dict, where: str):
    _check_keys(raw, _names(cls), where)
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def resolve_config(raw: Optional[dict], seed: Optional[int] = None) -> dict:
    """Fill defaults and derived seeds; the result fully determines a run.

    ``seed`` overrides the master seed before any derived seed is computed.
    """
    raw = copy.deepcopy(raw or {})
    _check_keys(raw, ["seed", "name", *SECTIONS], "config")
    if seed is not None:
        raw["seed"] = int(seed)
    master = int(raw.get("seed", 0))
    out = {"seed": master, "name": str(raw.get("name", "experiment"))}
    for sec, cls in SECTIONS.items():
        sub = raw.get(sec) or {}
        _check_keys(sub, _names(cls), sec)
        merged = {f.name: copy.deepcopy(getattr(cls(), f.name)) for f in fields(cls)}
        merged.update(sub)
        out[sec] = merged
    data = out["data"]
    if data["source"] == "synthetic":
        _check_keys(data["synthetic"], _names(SynthSpec), "data.synthetic")
        synth = {f.name: getattr(SynthSpec(), f.name) for f in fields(SynthSpec)}
        synth["seed"] = derive_seed(master, "synthetic")
        synth.update(data["synthetic"])
        data["synthetic"] = synth
    if data["inject"] is not None:
        _check_keys(data["inject"], _names(InjectionSpec), "data.inject")
        inj = {f.name: getattr(InjectionSpec(), f.name) for f in fields(InjectionSpec)}
        inj["seed"] = derive_seed(master, "inject")
        inj.update(data["inject"])
        data["inject"] = inj
    if "seed" not in (raw.get("train") or {}):
        out["train"]["seed"] = derive_seed(master, "train")
    if out["models"]["init_seed"] is None:
        out["models"]["init_seed"] = derive_seed(master, "init")
    out["models"]["names"] = list(out["models"]["names"])
    out["models"]["periods"] = [int(p) for p in out["models"]["periods"]]
    return out


def build_config(resolved: dict, base_dir=".") -> ExperimentConfig:
    cfg = ExperimentConfig(seed=int(resolved["seed"]), name=resolved["name"], base_dir=Path(base_dir))
    for sec, cls in SECTIONS.items():
        setattr(cfg, sec, _build(cls, resolved[sec], sec))
    d = cfg.data
    if d.source not in ("synthetic", "wide_csv", "yahoo"):
        raise ConfigError(f"data.source: unknown source {d.source!r}")
    if d.source == "wide_csv" and not d.panel_file:
        raise ConfigError("data.panel_file is required for source 'wide_csv'")
    if d.source == "yahoo" and not d.yahoo_dir:
        raise ConfigError("data.yahoo_dir is required for source 'yahoo'")
    names = cfg.models.names
    if not names:
        raise ConfigError("models.names must list at least one model")
    bad = [m for m in names if m not in KNOWN_MODELS]
    if bad or len(set(names)) != len(names):
        raise ConfigError(f"models.names: unknown or repeated model(s) {bad or names}")
    if cfg.detect.baseline_rule not in ("sweep", "interval"):
        raise ConfigError(f"detect.baseline_rule: expected 'sweep' or 'interval', got {cfg.detect.baseline_rule!r}")
    if cfg.detect.tolerance < 0:
        raise ConfigError("detect.tolerance must be >= 0")
    if cfg.ablation.swap_factor < 0 or cfg.ablation.n_random_seeds < 0:
        raise ConfigError("ablation.swap_factor and ablation.n_random_seeds must be >= 0")
    return cfg


def load_config(path, seed: Optional[int] = None) -> tuple:
    """Read a YAML config; returns ``(ExperimentConfig, resolved_dict)``."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    resolved = resolve_config(raw, seed)
    return build_config(resolved, path.parent), resolved


def dump_config(resolved: dict) -> str:
    return yaml.safe_dump(resolved, sort_keys=True, default_flow_style=False)


# -- data preparation ----------------------------------------------------------------

@dataclass
class PreparedData:
    raw: Panel  # after injection, original scale
    panel: Panel  # normalized with training-range moments
    norm: NormalizationParams
    graph: Graph
    train_range: range
    val_range: range
    test_range: range

    @property
    def labels(self) -> np.ndarray:
        return self.panel.label_matrix()


def _largest_length_group(panels: list) -> list:
    by_len = {}
    for p in panels:
        by_len.setdefault(p.T, []).append(p)
    best = max(by_len, key=lambda T: (len(by_len[T]), T))
    if len(by_len) > 1:
        log.warning("using the %d series of length %d; %d series of other lengths skipped",
                    len(by_len[best]), best, len(panels) - len(by_len[best]))
    return by_len[best]


def load_panel(cfg: ExperimentConfig) -> tuple:
    """Returns ``(panel, graph_or_None)`` before injection."""
    d = cfg.data
    if d.source == "synthetic":
        return generate_synthetic(SynthSpec(**d.synthetic))
    if d.source == "wide_csv":
        return load_wide_csv(cfg.path(d.panel_file), cfg.path(d.edge_file), cfg.path(d.labels_file),
                             d.missing_value, d.directed)
    panels = load_yahoo_csv(cfg.path(d.yahoo_dir))
    return assemble_panel(_largest_length_group(panels)), None


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    panel, graph = load_panel(cfg)
    tr, va, te = split_panel(panel, cfg.split.train_frac, cfg.split.val_frac)
    if cfg.data.inject is not None:
        spec = dict(cfg.data.inject)
        base_seed = spec.pop("seed")
        if cfg.data.inject_validation:
            panel = inject_anomalies(panel, InjectionSpec(**spec, seed=derive_seed(base_seed, "val")), va)
        panel = inject_anomalies(panel, InjectionSpec(**spec, seed=derive_seed(base_seed, "test")), te)
    if graph is None:
        graph = correlation_knn_graph(panel, tr, cfg.data.knn_k)
    normed, norm = normalize_panel(panel, tr.stop)
    return PreparedData(panel, normed, norm, graph, tr, va, te)


# -- model runs --------------------------------------------------------------------

@dataclass
class ModelRun:
    name: str
    forecasts: ForecastSet  # normalized scale, over validation + test
    residuals: ResidualSet
    thresholds: Optional[ThresholdMap]
    flags: np.ndarray  # over the test range
    scores: ScoreTable
    history: Optional[TrainHistory] = None
    model: Optional[GraphLstmModel] = None


def train_neural(name: str, prep: PreparedData, cfg: ExperimentConfig, graph: Optional[Graph] = None):
    """Train one neural model; graph-lstm and lstm-only share init and data-order seeds."""
    graph = prep.graph if graph is None else graph
    model = make_model(graph, cfg.models.hidden_size, seed=cfg.models.init_seed,
                       augment=(name == "graph-lstm"), per_node=cfg.models.per_node)
    return train(model, prep.panel, prep.train_range, cfg.train, prep.val_range)


def evaluate_forecasts(name: str, forecasts: ForecastSet, prep: PreparedData, cfg: ExperimentConfig,
                       use_interval: bool = False, history=None, model=None) -> ModelRun:
    """Sweep thresholds on validation, flag and score the test range."""
    w = cfg.detect.tolerance
    va, te = prep.val_range, prep.test_range
    res = residuals(prep.panel, forecasts)
    labels = prep.labels
    ids = prep.panel.node_ids
    if use_interval:
        thresholds = None
        test_fc = ForecastSet(te.start, forecasts.values[:, te.start - forecasts.start:],
                              forecasts.half_widths[:, te.start - forecasts.start:])
        flags = interval_flag(prep.panel, test_fc)
    else:
        thresholds = sweep_thresholds(res.window(va), labels[:, va.start:va.stop], w,
                                      cfg.detect.fallback, ids)
        flags = flag(res.window(te), thresholds)
    scores = score(match(flags, labels[:, te.start:te.stop], w), ids, prep.graph.degrees())
    return ModelRun(name, forecasts, res, thresholds, flags, scores, history, model)


def run_model(name: str, prep: PreparedData, cfg: ExperimentConfig, graph: Optional[Graph] = None) -> ModelRun:
    eval_range = range(prep.val_range.start, prep.test_range.stop)
    try:
        if name in NEURAL_MODELS:
            model, hist = train_neural(name, prep, cfg, graph)
            fc = forecast_one_step(model, prep.panel, eval_range)
            return evaluate_forecasts(name, fc, prep, cfg, history=hist, model=model)
        kind = "arima" if name == "arima" else "decomp"
        fc = PanelForecaster(kind, tuple(cfg.models.periods), cfg.models.fourier_order,
                             cfg.models.arima_season).fit(prep.panel.filled_values(), prep.train_range) \
            .forecast(prep.panel.filled_values(), eval_range)
        return evaluate_forecasts(name, fc, prep, cfg, use_interval=cfg.detect.baseline_rule == "interval")
    except Exception as exc:
        raise type(exc)(f"model {name}: {exc}") from exc


# -- reports -------------------------------------------------------------------------

@dataclass
class AblationRow:
    label: str
    rewire_seed: Optional[int]
    precision: float
    recall: float
    f1: float


@dataclass
class AblationResult:
    rows: list

    @property
    def real(self) -> AblationRow:
        return self.rows[0]

    @property
    def random_rows(self) -> list:
        return [r for r in self.rows if r.label.startswith("random")]

    def mean_random_f1(self) -> float:
        rr = self.random_rows
        return float(np.mean([r.f1 for r in rr])) if rr else float("nan")

    def to_csv(self) -> str:
        lines = ["graph,rewire_seed,precision,recall,f1"]
        for r in self.rows:
            seed = "" if r.rewire_seed is None else str(r.rewire_seed)
            lines.append(f"{r.label},{seed},{r.precision:.6f},{r.recall:.6f},{r.f1:.6f}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        rows = {r.label: (r.precision, r.recall, r.f1) for r in self.rows}
        text = format_table(rows, "Graph ablation: real vs degree-preserving random graphs")
        if self.random_rows:
            text += f"mean random-graph F1: {self.mean_random_f1():.4f}\n"
        return text


@dataclass
class RunReport:
    config: dict
    prep: PreparedData
    runs: dict = field(default_factory=dict)  # fixed model order
    ablation: Optional[AblationResult] = None

    @property
    def primary(self) -> str:
        return next(iter(self.runs))

    def table_rows(self) -> dict:
        return {DISPLAY_NAMES[k]: r.scores.micro for k, r in self.runs.items()}

    def table_text(self) -> str:
        return format_table(self.table_rows(), "Anomaly detection performance (test range, micro-averaged)")

    def table_csv(self) -> str:
        lines = ["model,precision,recall,f1,tp,fp,fn"]
        for k, r in self.runs.items():
            p, rc, f = r.scores.micro
            s = r.scores
            lines.append(f"{k},{p:.6f},{rc:.6f},{f:.6f},{int(s.tp.sum())},{int(s.fp.sum())},{int(s.fn.sum())}")
        return "\n".join(lines) + "\n"


def run_comparison(cfg: ExperimentConfig, resolved: Optional[dict] = None,
                   prep: Optional[PreparedData] = None) -> RunReport:
    """Train/fit every configured model, tune thresholds on validation, score on test."""
    prep = prepare_data(cfg) if prep is None else prep
    report = RunReport(resolved or {}, prep)
    for name in cfg.models.names:
        log.info("running %s", name)
        report.runs[name] = run_model(name, prep, cfg)
    return report


def run_ablation(cfg: ExperimentConfig, prep: Optional[PreparedData] = None,
                 real_run: Optional[ModelRun] = None) -> AblationResult:
    """Real graph vs ``n_random_seeds`` degree-preserving rewirings, same initialization."""
    if "graph-lstm" not in cfg.models.names:
        raise ConfigError("ablation needs graph-lstm in models.names")
    prep = prepare_data(cfg) if prep is None else prep
    if real_run is None:
        real_run = run_model("graph-lstm", prep, cfg)
    rows = [AblationRow("real", None, *real_run.scores.micro)]
    for k in range(cfg.ablation.n_random_seeds):
        seed = derive_seed(cfg.seed, "rewire", k)
        g = degree_preserving_rewire(prep.graph, SeededRng(seed), cfg.ablation.swap_factor)
        run = run_model("graph-lstm", prep, cfg, graph=g)
        rows.append(AblationRow(f"random_{k + 1}", seed, *run.scores.micro))
    return AblationResult(rows)


def run_experiment(cfg: ExperimentConfig, resolved: dict) -> RunReport:
    report = run_comparison(cfg, resolved)
    if cfg.ablation.enabled:
        report.ablation = run_ablation(cfg, report.prep, report.runs.get("graph-lstm"))
    return report


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(str(x) for x in row) for row in rows]
    return "\n".join(lines) + "\n"


def anomaly_count_rows(report: RunReport) -> list:
    prep = report.prep
    lab = prep.labels
    flags = report.runs[report.primary].flags
    rows = []
    for i, nid in enumerate(prep.panel.node_ids):
        rows.append([nid,
                     int(lab[i, prep.train_range.start:prep.train_range.stop].sum()),
                     int(lab[i, prep.val_range.start:prep.val_range.stop].sum()),
                     int(lab[i, prep.test_range.start:prep.test_range.stop].sum()),
                     int(flags[i].sum())])
    return rows


def forecast_node(report: RunReport, cfg: Optional[ExperimentConfig] = None) -> int:
    """Node drawn in the forecast-vs-actual figure: configured, else the first with test anomalies."""
    prep = report.prep
    ids = prep.panel.node_ids
    wanted = cfg.output.forecast_node if cfg is not None else None
    if wanted is not None:
        if wanted not in ids:
            raise ConfigError(f"output.forecast_node: unknown node id {wanted!r}")
        return ids.index(wanted)
    te = prep.test_range
    hits = np.flatnonzero(prep.labels[:, te.start:te.stop].any(axis=1))
    return int(hits[0]) if hits.size else 0


def forecast_rows(report: RunReport, node: int) -> list:
    prep = report.prep
    run = report.runs[report.primary]
    te = prep.test_range
    off = te.start - run.forecasts.start
    fc = prep.norm.denormalize(run.forecasts.values)[node, off:]
    lab = prep.labels[node, te.start:te.stop]
    rows = []
    for k, t in enumerate(te):
        actual = prep.raw.values[node, t] if prep.raw.mask[node, t] else float("nan")
        a = "" if np.isnan(actual) else f"{actual:.6f}"
        rows.append([int(prep.raw.timestamps[t]), a, f"{fc[k]:.6f}", int(run.flags[node, k]), int(lab[k])])
    return rows


def fingerprint(resolved: dict) -> str:
    data = {"package": "glad", "version": __version__, "seed": resolved.get("seed"),
            "numpy": np.__version__}
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def write_config(resolved: dict, out_dir):
    out = Path(out_dir)
    _write(out / "config.resolved.yaml", dump_config(resolved))
    _write(out / "fingerprint.json", fingerprint(resolved))


def write_report(report: RunReport, out_dir, cfg: Optional[ExperimentConfig] = None) -> Path:
    """Write every table, per-node CSV and figure of a run; returns the directory."""
    from glad.plots import emit_plots

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prep = report.prep
    ids = prep.panel.node_ids
    write_config(report.config, out)
    _write(out / "table.txt", report.table_text())
    _write(out / "table.csv", report.table_csv())
    for name, run in report.runs.items():
        _write(out / "scores" / f"{name}.csv", run.scores.to_csv())
        if run.thresholds is not None:
            (out / "thresholds").mkdir(exist_ok=True)
            run.thresholds.to_csv(out / "thresholds" / f"{name}.csv")
    primary = report.runs[report.primary]
    if primary.thresholds is not None:
        primary.thresholds.to_csv(out / "thresholds.csv")
    else:
        _write(out / "thresholds.csv", "node_id,threshold,val_f1\n")
    if "graph-lstm" in report.runs and "lstm-only" in report.runs:
        recs, frac = degree_improvement(report.runs["graph-lstm"].scores, report.runs["lstm-only"].scores,
                                        prep.graph)
        rows = [[r.node_id, r.degree, f"{r.delta_f1:.6f}"] for r in recs]
    else:
        rows = [[nid, int(d), ""] for nid, d in zip(ids, prep.graph.degrees())]
    _write(out / "degree_improvement.csv", _csv_text(["node_id", "degree", "delta_f1"], rows))
    _write(out / "anomaly_counts.csv",
           _csv_text(["node_id", "train", "validation", "test", "test_flagged"], anomaly_count_rows(report)))
    node = forecast_node(report, cfg)
    rows = [[ids[node]] + r for r in forecast_rows(report, node)]
    _write(out / "forecast_example.csv",
           _csv_text(["node_id", "timestamp", "actual", "forecast", "flagged", "label"], rows))
    if report.ablation is not None:
        _write(out / "ablation.csv", report.ablation.to_csv())
        _write(out / "ablation.txt", report.ablation.to_text())
    emit_plots(out)
    return out


def output_dir(cfg: ExperimentConfig, override=None) -> Path:
    return Path(override) if override is not None else cfg.path(cfg.output.dir)
