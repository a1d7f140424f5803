"""Extremal points of the mixing region for binomial(10) at mu = 5, in central
moment coordinates, with the hard-boundary half-spaces at the same center."""

import os

from _common import out_dir, run

d = out_dir(__doc__)
run("region", "--family", "binomial:10", "--mu", "5", "--halfwidth", "3", "--order", "4",
    "--grid-size", "41", "--coords", "central", "--out", os.path.join(d, "region_central.csv"))
run("region", "--family", "binomial:10", "--mu", "5", "--halfwidth", "3", "--order", "3",
    "--grid-size", "41", "--out", os.path.join(d, "region_lambda.csv"))
run("boundary", "--family", "binomial:10", "--mu", "5", "--order", "3",
    "--out", os.path.join(d, "boundary.csv"))
