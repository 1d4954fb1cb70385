"""Joint versus univariate classification accuracy on paired datasets.

    python scripts/compare.py --S 30 --output runs/compare
"""
import argparse
from pathlib import Path

from pblsgmm.estimation.fit import FitConfig
from pblsgmm.io import default_workers, dumps, write_csv
from pblsgmm.simulation.design import build_condition
from pblsgmm.simulation.study import compare_joint_vs_univariate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--S", type=int, default=30)
    ap.add_argument("--separation", type=float, default=1.0)
    ap.add_argument("--rho", type=float, default=-0.3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--output", default="runs/compare")
    args = ap.parse_args()

    cond = build_condition(1, args.separation, rho=args.rho)
    rep = compare_joint_vs_univariate(cond, args.S, FitConfig(), workers=args.workers, master_seed=args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rep.table(), out / "comparison.csv")
    (out / "summary.json").write_text(dumps(rep.summary()))
    print(dumps(rep.summary()))


if __name__ == "__main__":
    main()
