"""Fiber log-likelihood grids for a binomial(10) sample, before and after one
observation is moved to the edge of the support."""

import os

from locmix import scenarios

from _common import out_dir, run, write_data

d = out_dir(__doc__)
xs = scenarios.fiber_sample()
for tag, sample in (("interior", xs), ("edge", scenarios.with_extreme(xs))):
    data = write_data(os.path.join(d, f"fiber_{tag}_data.csv"), sample)
    run("fiber-scan", "--family", "binomial:10", "--data", data, "--order", "3",
        "--lam2", "-1.5", "1.5", "121", "--lam3", "-1.5", "1.5", "121",
        "--annotations", os.path.join(d, f"fiber_{tag}.json"),
        "--out", os.path.join(d, f"fiber_{tag}.csv"))
