"""Overdispersed binomial data: order-6 profile fit against the plain binomial,
and the integrated likelihood over mu for a narrow and a wide mixing class."""

import os

from locmix import scenarios

from _common import out_dir, run, write_data

d = out_dir(__doc__)
xs, _ = scenarios.separated_sample()
data = write_data(os.path.join(d, "separated_data.csv"), xs)
run("fit", "--family", "binomial:12", "--data", data, "--order", "6",
    "--out", os.path.join(d, "fit_order6.json"))

ys, _ = scenarios.skewed_sample()
data = write_data(os.path.join(d, "skewed_data.csv"), ys)
for eps in ("1e-6", "5"):
    run("marginal", "--family", "binomial:20", "--data", data, "--eps", eps, "--order", "4",
        "--mu-grid", "4", "10", "61", "--n-draws", "4096",
        "--out", os.path.join(d, f"marginal_eps{eps}.csv"))
