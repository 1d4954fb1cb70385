"""Design calibration: Mahalanobis distances and generated class shares for every cell."""
import argparse
from dataclasses import replace

import numpy as np
import pandas as pd

from pblsgmm.simulation.design import design_grid, generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=50_000, help="individuals per allocation check")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = []
    for cond in design_grid():
        row = {"cell": cond.label, "within_y": cond.mahalanobis_within(0), "within_z": cond.mahalanobis_within(1),
               "joint": cond.mahalanobis_joint()}
        if cond.resid_var == 1.0 and cond.rho == -0.3:
            for mode in ("multinomial", "argmax"):
                ds = generate_dataset(replace(cond, n=args.n), args.seed, mode)
                row[f"share2_{mode}"] = np.mean(ds.classes == 1)
        rows.append(row)
    with pd.option_context("display.width", 200, "display.max_rows", None):
        print(pd.DataFrame(rows).round(4).to_string(index=False))


if __name__ == "__main__":
    main()
