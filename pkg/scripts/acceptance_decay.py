"""Acceptance probability versus n at eps = c / sqrt(n) for prior and IIS proposals.

    python3 scripts/acceptance_decay.py --seed 1 --out results/decay
"""

import csv
import sys
from pathlib import Path

import numpy as np

from scalable_abc.cli import main
from scalable_abc.experiments import loglog_slope

if __name__ == "__main__":
    args = ["decay"] + sys.argv[1:]
    out = Path(args[args.index("--out") + 1]) if "--out" in args else Path("results")
    code = main(args)
    if code == 0:
        rows = list(csv.DictReader(open(out / "decay.csv", newline="")))
        for r in rows:
            print(f"{r['proposal']:5s} n={r['n']:>6} p_acc={float(r['p_acc_hat']):.3e} "
                  f"ess={float(r['ess']):.1f}")
        prior = [r for r in rows if r["proposal"] == "prior"]
        n = np.array([float(r["n"]) for r in prior])
        p = np.array([float(r["p_acc_hat"]) for r in prior])
        if np.all(p > 0):
            print(f"prior log-log slope {loglog_slope(n, p):.3f} (theory -1 for d = p = 2)")
    sys.exit(code)
