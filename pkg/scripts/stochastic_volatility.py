"""Stochastic volatility: R-ABC against IIS-ABC (with and without the prior mixture).

    python3 scripts/stochastic_volatility.py --seed 1 --out results/sv [--full]
"""

import csv
import sys
from pathlib import Path

from scalable_abc.cli import main

if __name__ == "__main__":
    args = ["run-sv"] + sys.argv[1:]
    out = Path(args[args.index("--out") + 1]) if "--out" in args else Path("results")
    code = main(args)
    if code == 0:
        for r in csv.DictReader(open(out / "sv_mse.csv", newline="")):
            print(f"n={r['n']:>5} {r['method']:7s} {r['coord']:13s} "
                  f"MSE*n={float(r['mse_times_n']):9.4f}  ratio={float(r['ratio_vs_rabc']):.3f}")
    sys.exit(code)
