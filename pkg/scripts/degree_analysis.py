"""Node-level view of one report: F1 gain of the graph model grouped by degree.

    python scripts/degree_analysis.py runs/demo
"""
import argparse
import csv
from collections import defaultdict
from pathlib import Path


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("report_dir")
    args = ap.parse_args()
    by_degree = defaultdict(list)
    with open(Path(args.report_dir) / "degree_improvement.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["delta_f1"] != "":
                by_degree[int(row["degree"])].append(float(row["delta_f1"]))
    if not by_degree:
        print("report has no graph-lstm vs lstm-only comparison")
        return
    print("degree  nodes  mean dF1  share dF1>=0")
    for d in sorted(by_degree):
        xs = by_degree[d]
        share = sum(x >= 0 for x in xs) / len(xs)
        print(f"{d:>6}  {len(xs):>5}  {sum(xs) / len(xs):+8.3f}  {share:>12.2f}")
    allx = [x for xs in by_degree.values() for x in xs]
    print(f"\nnodes with dF1 >= 0: {sum(x >= 0 for x in allx)}/{len(allx)}")


if __name__ == "__main__":
    main()
