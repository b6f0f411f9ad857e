"""Model comparison over several master seeds of a config.

Writes one full report per seed plus a per-seed summary CSV, and prints the
mean micro-F1 per model.

    python scripts/run_comparison.py configs/reference.yaml --seeds 0 1 2 3 4 --out runs/comparison
"""
import argparse
from pathlib import Path

import numpy as np

from glad.experiment import load_config, run_comparison, write_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", default="runs/comparison")
    args = ap.parse_args()
    out = Path(args.out)
    scores = {}
    for seed in args.seeds:
        cfg, resolved = load_config(args.config, seed=seed)
        report = run_comparison(cfg, resolved)
        write_report(report, out / f"seed_{seed}", cfg)
        for name, run in report.runs.items():
            scores.setdefault(name, []).append(run.scores.micro)
        print(f"seed {seed}: " + "  ".join(f"{k} {v[-1][2]:.3f}" for k, v in scores.items()), flush=True)
    lines = ["model,seed,precision,recall,f1"]
    for name, rows in scores.items():
        for seed, (p, r, f) in zip(args.seeds, rows):
            lines.append(f"{name},{seed},{p:.6f},{r:.6f},{f:.6f}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\nmean micro-F1 over seeds")
    for name, rows in scores.items():
        f1 = np.array([r[2] for r in rows])
        print(f"  {name:<12} {f1.mean():.3f} (sd {f1.std():.3f})")


if __name__ == "__main__":
    main()
