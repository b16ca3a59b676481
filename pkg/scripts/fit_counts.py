"""Fit all five model families to a counts file and print an AIC table.

    python scripts/fit_counts.py data/fisher_shaped_counts.csv
"""

from __future__ import annotations

import sys

from occmix.cli import read_data
from occmix.errors import NonConvergence
from occmix.estimation import ModelSpec, fit


def main(path: str) -> None:
    counts = read_data(path)
    print(f"n={counts.n_sites} T={counts.n_visits} sample occupancy {counts.sample_occupancy:.4f}")
    rows = []
    for name in ("nmix", "ncmix", "zib", "zin", "zinc"):
        spec = ModelSpec.of(name)
        try:
            res = fit(spec, counts)
        except NonConvergence as exc:
            print(f"{spec.name:<6} failed: {exc}")
            continue
        est = "  ".join(f"{k}={v:.4g}" for k, v in res.estimates.items())
        rows.append((res.aic, spec.name, res.loglik, est))
    best = min(r[0] for r in rows)
    for aic, name, ll, est in sorted(rows):
        print(f"{name:<6} AIC {aic:9.3f}  dAIC {aic - best:7.3f}  loglik {ll:10.4f}  {est}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/fisher_shaped_counts.csv")
