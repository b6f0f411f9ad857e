"""Write a synthetic panel with injected drops as wide CSV files.

    python scripts/make_synthetic.py --nodes 20 --steps 3000 --seed 0 --out data/synth
"""
import argparse
from pathlib import Path

from glad.core import split_panel
from glad.data import InjectionSpec, SynthSpec, generate_synthetic, inject_anomalies, write_edge_list, write_wide_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=20)
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--alpha", type=float, default=0.6)
    ap.add_argument("--noise", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="data/synth")
    args = ap.parse_args()
    panel, graph = generate_synthetic(SynthSpec(n_nodes=args.nodes, T=args.steps, alpha=args.alpha,
                                                noise=args.noise, seed=args.seed))
    _, va, te = split_panel(panel, 0.6, 0.2)
    spec = dict(affected_fraction=0.3, drop_mode="subtract", magnitude=4.0)
    panel = inject_anomalies(panel, InjectionSpec(**spec, seed=args.seed + 1), va)
    panel = inject_anomalies(panel, InjectionSpec(**spec, seed=args.seed + 2), te)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_wide_csv(panel, out / "panel.csv", out / "labels.csv")
    write_edge_list(graph, panel.node_ids, out / "edges.csv")
    print(out)


if __name__ == "__main__":
    main()
