"""Synthetic data sets used by the experiment scripts and the acceptance suite."""

from __future__ import annotations

import numpy as np

from . import mixing, nef
from .inference import Sample
from .mixing import DiscreteMixing


def fiber_sample(seed: int = 7, size: int = 50, p: float = 0.47) -> np.ndarray:
    """Binomial(10) sample whose minimum is 1 and maximum is 8.

    Draws are repeated from one generator until the range condition holds,
    so the result depends only on ``seed``.
    """
    rng = np.random.default_rng(seed)
    for _ in range(10_000):
        xs = rng.binomial(10, p, size)
        if xs.min() == 1 and xs.max() == 8:
            return xs
    raise RuntimeError("no draw met the range condition")


def with_extreme(xs: np.ndarray, old: int = 8, new: int = 10) -> np.ndarray:
    """Copy of ``xs`` with the first ``old`` replaced by ``new``."""
    out = np.array(xs, copy=True)
    out[np.flatnonzero(out == old)[0]] = new
    return out


def skewed_sample(seed: int = 3, size: int = 60) -> tuple[np.ndarray, DiscreteMixing]:
    """Binomial(20) draws from an 80/20 mixing on means 6 and 9."""
    Q = DiscreteMixing((6.0, 9.0), (0.8, 0.2))
    return mixing.mixture_sample(nef.binomial(20), Q, size, seed=seed), Q


def separated_sample(seed: int = 12, size: int = 400) -> tuple[np.ndarray, DiscreteMixing]:
    """Binomial(12) draws from an even mixing on means 3 and 9."""
    Q = DiscreteMixing((3.0, 9.0), (0.5, 0.5))
    return mixing.mixture_sample(nef.binomial(12), Q, size, seed=seed), Q


def as_sample(xs) -> Sample:
    return Sample(tuple(np.asarray(xs, dtype=float)))
