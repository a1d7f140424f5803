"""Helpers shared by the experiment scripts."""

import argparse
import os
import sys

import numpy as np

from locmix import cli


def out_dir(description: str) -> str:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--out-dir", default="results", help="directory for CSV/JSON outputs")
    d = ap.parse_args().out_dir
    os.makedirs(d, exist_ok=True)
    return d


def write_data(path: str, xs) -> str:
    np.savetxt(path, np.asarray(xs), fmt="%d")
    return path


def run(*argv: str) -> None:
    code = cli.run(list(argv))
    if code:
        sys.exit(code)
    out = argv[argv.index("--out") + 1]
    print(f"wrote {out}")
