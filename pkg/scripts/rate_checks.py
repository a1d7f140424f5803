"""Log-log slopes of the local mixture approximation error for two-point and
dispersion mixings."""

import os

from _common import out_dir, run

d = out_dir(__doc__)
run("rate-check", "--family", "normal", "--orders", "2", "3", "4",
    "--out", os.path.join(d, "rates_normal.csv"))
run("rate-check", "--family", "binomial:20", "--check", "discrete", "--orders", "2", "3", "4",
    "--out", os.path.join(d, "rates_binomial.csv"))
