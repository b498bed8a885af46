"""Gaussian model with quantile summaries: ABC vs MLES across bandwidths.

Writes gaussian_mse.csv and manifest.json through the CLI, then prints the
MSE*n of ABC relative to MLES for each summary dimension.

    python3 scripts/gaussian_quantiles.py --seed 1 --out results/gaussian [--full]
"""

import csv
import sys
from collections import defaultdict
from pathlib import Path

from scalable_abc.cli import main


def summarize(path: Path):
    rows = list(csv.DictReader(open(path, newline="")))
    mles = {(r["d"], r["coord"]): float(r["mse_times_n"]) for r in rows if r["method"] == "mles"}
    table = defaultdict(dict)
    for r in rows:
        if r["method"] == "abc":
            key = (r["d"], r["summary_variant"], r["coord"])
            table[key][r["eps_or_rate"]] = float(r["mse_times_n"]) / mles[(r["d"], r["coord"])]
    for (d, variant, coord), by_rule in sorted(table.items(), key=lambda kv: int(kv[0][0])):
        cells = "  ".join(f"{rule.split('=')[1][:6]}:{v:6.2f}" for rule, v in by_rule.items())
        print(f"d={d:>2} {variant:8s} {coord:5s}  ABC/MLES  {cells}")


if __name__ == "__main__":
    args = ["run-gaussian"] + sys.argv[1:]
    out = Path(args[args.index("--out") + 1]) if "--out" in args else Path("results")
    code = main(args)
    if code == 0:
        summarize(out / "gaussian_mse.csv")
    sys.exit(code)
