"""Scenario builders shared by the unit and acceptance suites."""

import numpy as np

from locmix import lmm, scenarios
from locmix.inference import FiberProblem, Sample, fiber_loglik
from locmix.nef import binomial, normal, poisson


def weighted_by_lmm(model):
    """Support points weighted by the model's pmf (Poisson truncated at 1e-14 tail)."""
    x = model.family.support_points(model.mu)
    return Sample(tuple(x.astype(float)), tuple(lmm.lmm_density(model, x)))


def fiber_scenarios():
    xs = scenarios.fiber_sample()
    rng = np.random.default_rng(31)
    pois = rng.poisson(3.0, 80)
    norm = rng.normal(0.5, 1.2, 60)
    return [
        FiberProblem(binomial(10), 3, float(xs.mean()), scenarios.as_sample(xs)),
        FiberProblem(poisson(), 4, float(pois.mean()), scenarios.as_sample(pois)),
        FiberProblem(normal(), 4, float(norm.mean()), scenarios.as_sample(norm)),
    ]


SCENARIO_IDS = ["binomial", "poisson", "normal"]


def interior_points(p, rng, count, scale=0.4):
    """Random ``lam`` with a finite fiber log-likelihood."""
    pts = []
    while len(pts) < count:
        lam = rng.normal(0, scale, p.dim) * rng.uniform(0.01, 1.0)
        if np.isfinite(fiber_loglik(p, lam)):
            pts.append(lam)
    return pts
