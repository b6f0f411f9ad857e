"""Command-line entry point.

Exit codes: 0 success, 1 runtime error (one JSON line on stderr), 2 usage
error. The output directory can also be set through ``GLAD_OUT``; ``--out``
takes precedence over it.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from glad import __version__

OUT_ENV = "GLAD_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # Subcommands repeat the global flags with suppressed defaults so a flag
    # given before the subcommand is not reset by the subparser.
    def d(value):
        return argparse.SUPPRESS if suppress else value

    g = _Parser(add_help=False)
    g.add_argument("--seed", type=int, default=d(None), help="override the master seed")
    g.add_argument("--quiet", action="store_true", default=d(False), help="print only the final output path")
    g.add_argument("--out", default=d(None), help=f"output directory (overrides ${OUT_ENV} and the config)")
    return g


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="glad", description="Graph-augmented LSTM anomaly detection", parents=[_global_flags(False)])
    common = _global_flags(True)
    p.add_argument("--version", action="version", version=f"glad {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    for name, text in (("run", "train, detect and score every configured model; write the report"),
                       ("train", "train the neural models and save checkpoints"),
                       ("ablate", "real vs degree-preserving random graph ablation")):
        s = sub.add_parser(name, help=text, parents=[common])
        s.add_argument("config")
    s = sub.add_parser("detect", help="detect and score with one model", parents=[common])
    s.add_argument("config")
    s.add_argument("--model", required=True)
    s = sub.add_parser("gen-synth", help="write a synthetic panel, edge list and labels", parents=[common])
    s.add_argument("spec")
    s = sub.add_parser("inject", help="inject drop anomalies into a wide panel", parents=[common])
    s.add_argument("panel")
    s.add_argument("spec")
    s.add_argument("--range", dest="target", default=None,
                   help="START:STOP column range to inject into (default: whole panel)")
    s = sub.add_parser("score", help="score 0/1 prediction CSV against a truth CSV", parents=[common])
    s.add_argument("pred")
    s.add_argument("truth")
    s.add_argument("--tolerance", type=int, default=0)
    s = sub.add_parser("plot", help="re-render the SVG figures of a report directory", parents=[common])
    s.add_argument("report_dir")
    return p


class Output:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def info(self, msg: str):
        if not self.quiet:
            print(msg, flush=True)

    def final(self, path):
        print(str(path), flush=True)


def _out_dir(args, default=None) -> Path:
    if args.out is not None:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if default is None:
        raise UsageError("no output directory: pass --out or set " + OUT_ENV)
    return Path(default)


def _load(args, out: Output):
    from glad.experiment import load_config

    if not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    cfg, resolved = load_config(args.config, args.seed)
    out.info(f"master seed: {cfg.seed}")
    return cfg, resolved


def _read_spec(path, cls, seed=None):
    if not Path(path).is_file():
        raise UsageError(f"spec file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a mapping")
    unknown = sorted(set(raw) - {f.name for f in fields(cls)})
    if unknown:
        raise ValueError(f"{path}: unknown key(s) {', '.join(unknown)}")
    if seed is not None:
        raw["seed"] = seed
    return cls(**raw)


def cmd_run(args, out: Output):
    from glad.experiment import output_dir, run_experiment, write_report

    cfg, resolved = _load(args, out)
    report = run_experiment(cfg, resolved)
    path = write_report(report, _out_dir(args, output_dir(cfg)), cfg)
    out.info(report.table_text().rstrip())
    if report.ablation is not None:
        out.info(report.ablation.to_text().rstrip())
    out.final(path)


def cmd_train(args, out: Output):
    from glad.experiment import NEURAL_MODELS, output_dir, prepare_data, train_neural, write_config
    from glad.seqmodel import config_dict, save_checkpoint

    cfg, resolved = _load(args, out)
    dest = _out_dir(args, output_dir(cfg))
    prep = prepare_data(cfg)
    ckpt = dest / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    write_config(resolved, dest)
    for name in [m for m in cfg.models.names if m in NEURAL_MODELS]:
        model, hist = train_neural(name, prep, cfg)
        save_checkpoint(ckpt / f"{name}.npz", model, prep.norm, config_dict(cfg.train))
        best = hist.val_loss[hist.best_epoch] if hist.val_loss else float("nan")
        out.info(f"{name}: {len(hist.train_loss)} epochs, best validation MSE {best:.6f} (epoch {hist.best_epoch})")
    out.final(dest)


def cmd_detect(args, out: Output):
    from glad.experiment import (KNOWN_MODELS, NEURAL_MODELS, RunReport, evaluate_forecasts, output_dir,
                                 prepare_data, run_model, write_report)
    from glad.seqmodel import forecast_one_step, load_checkpoint

    if args.model not in KNOWN_MODELS:
        raise UsageError(f"unknown model {args.model!r}; choose from {', '.join(KNOWN_MODELS)}")
    cfg, resolved = _load(args, out)
    dest = _out_dir(args, output_dir(cfg))
    prep = prepare_data(cfg)
    ckpt = dest / "checkpoints" / f"{args.model}.npz"
    if args.model in NEURAL_MODELS and ckpt.exists():
        model, _, _ = load_checkpoint(ckpt)
        out.info(f"loaded checkpoint {ckpt}")
        fc = forecast_one_step(model, prep.panel, range(prep.val_range.start, prep.test_range.stop))
        run = evaluate_forecasts(args.model, fc, prep, cfg, model=model)
    else:
        run = run_model(args.model, prep, cfg)
    report = RunReport(resolved, prep, {args.model: run})
    path = write_report(report, dest, cfg)
    out.info(report.table_text().rstrip())
    out.final(path)


def cmd_ablate(args, out: Output):
    from glad.experiment import output_dir, run_ablation, write_config

    cfg, resolved = _load(args, out)
    dest = _out_dir(args, output_dir(cfg))
    result = run_ablation(cfg)
    dest.mkdir(parents=True, exist_ok=True)
    write_config(resolved, dest)
    (dest / "ablation.csv").write_text(result.to_csv(), encoding="utf-8")
    (dest / "ablation.txt").write_text(result.to_text(), encoding="utf-8")
    out.info(result.to_text().rstrip())
    out.final(dest)


def cmd_gen_synth(args, out: Output):
    from glad.data import SynthSpec, generate_synthetic, write_edge_list, write_wide_csv

    spec = _read_spec(args.spec, SynthSpec, args.seed)
    out.info(f"master seed: {spec.seed}")
    dest = _out_dir(args)
    dest.mkdir(parents=True, exist_ok=True)
    panel, graph = generate_synthetic(spec)
    write_wide_csv(panel, dest / "panel.csv", dest / "labels.csv")
    write_edge_list(graph, panel.node_ids, dest / "edges.csv")
    out.info(f"{panel.n_nodes} nodes x {panel.T} steps, {len(graph.edges)} edges")
    out.final(dest)


def _parse_range(text, T):
    if text is None:
        return range(0, T)
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--range expects START:STOP, got {text!r}") from None
    return range(a, b)


def cmd_inject(args, out: Output):
    from glad.data import InjectionSpec, inject_anomalies, load_wide_csv, write_wide_csv

    if not Path(args.panel).is_file():
        raise UsageError(f"panel file not found: {args.panel}")
    spec = _read_spec(args.spec, InjectionSpec, args.seed)
    out.info(f"master seed: {spec.seed}")
    panel, _ = load_wide_csv(args.panel)
    target = _parse_range(args.target, panel.T)
    injected = inject_anomalies(panel, spec, target)
    dest = _out_dir(args)
    dest.mkdir(parents=True, exist_ok=True)
    write_wide_csv(injected, dest / "panel.csv", dest / "labels.csv")
    out.info(f"injected {int(injected.label_matrix().sum() - panel.label_matrix().sum())} anomalous cells")
    out.final(dest)


def _read_flags(path):
    from glad.data import read_wide

    ids, ts, values, mask = read_wide(path)
    return ids, ts, np.nan_to_num(values) != 0


def cmd_score(args, out: Output):
    from glad.evaluation import match, score

    for p in (args.pred, args.truth):
        if not Path(p).is_file():
            raise UsageError(f"file not found: {p}")
    if args.tolerance < 0:
        raise UsageError("--tolerance must be >= 0")
    if args.seed is not None:
        out.info(f"master seed: {args.seed}")
    pid, pts, pred = _read_flags(args.pred)
    tid, tts, truth = _read_flags(args.truth)
    if pid != tid or not np.array_equal(pts, tts):
        raise ValueError(f"{args.pred} and {args.truth} differ in nodes or timestamps")
    table = score(match(pred, truth, args.tolerance), pid)
    p, r, f = table.micro
    text = table.to_csv()
    if args.out is not None or os.environ.get(OUT_ENV):
        dest = _out_dir(args)
        dest.mkdir(parents=True, exist_ok=True)
        (dest / "scores.csv").write_text(text, encoding="utf-8")
        out.info(f"micro precision={p:.4f} recall={r:.4f} f1={f:.4f}")
        out.final(dest / "scores.csv")
        return
    if args.quiet:
        print(f"{p:.4f} {r:.4f} {f:.4f}")
    else:
        print(f"micro precision={p:.4f} recall={r:.4f} f1={f:.4f}")


def cmd_plot(args, out: Output):
    from glad.plots import emit_plots

    d = Path(args.report_dir)
    if not d.is_dir():
        raise UsageError(f"report directory not found: {d}")
    for path in emit_plots(d):
        out.info(f"wrote {path}")
    out.final(d / "plots")


COMMANDS = {
    "run": cmd_run,
    "train": cmd_train,
    "detect": cmd_detect,
    "ablate": cmd_ablate,
    "gen-synth": cmd_gen_synth,
    "inject": cmd_inject,
    "score": cmd_score,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Output(args.quiet)
    try:
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        msg = str(exc)
        sys.stderr.write(msg if msg.endswith("\n") else msg + "\n")
        sys.stderr.write(parser.format_usage())
        return 2
    except Exception as exc:  # runtime errors: one machine-parsable line
        line = json.dumps({"error": type(exc).__name__, "command": args.command,
                           "message": " ".join(str(exc).split())})
        sys.stderr.write(line + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
