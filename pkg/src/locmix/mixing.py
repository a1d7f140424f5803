"""Mixing distributions, exact mixtures, and their localization.

A finite mixing distribution ``Q`` with atoms ``theta_i`` and weights
``rho_i`` gives the exact mixture ``sum rho_i f(x; theta_i)``. Its weighted
moment map is

    phi(Q) = (E_Q[(theta - mu)^2] / 2!, ..., E_Q[(theta - mu)^r] / r!),

and ``localize`` returns the local mixture ``g(x; E_Q[theta], phi(Q))``.
Continuous (proper dispersion) mixings are handled by adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, signal

from . import nef
from .errors import AccuracyError, DomainError, InfeasibleError, UnsupportedError
from .lmm import MAX_ORDER, MIN_ORDER, LocalMixtureModel
from .nef import FamilySpec

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMixing:
    """Finite mixing distribution. Zero weights are pruned and repeated atoms
    merged on construction."""

    theta: tuple[float, ...]
    rho: tuple[float, ...]

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel()
        rho = np.asarray(self.rho, dtype=float).ravel()
        if theta.shape != rho.shape or theta.size == 0:
            raise ValueError("atoms and weights must be nonempty and of equal length")
        if np.any(rho < -WEIGHT_TOL) or not np.all(np.isfinite(theta)):
            raise ValueError("weights must be nonnegative and atoms finite")
        if abs(rho.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {rho.sum()!r}, not 1")
        keep = rho > 0
        theta, rho = theta[keep], rho[keep]
        uniq, inv = np.unique(theta, return_inverse=True)
        merged = np.zeros(uniq.size)
        np.add.at(merged, inv, rho)
        object.__setattr__(self, "theta", tuple(uniq.tolist()))
        object.__setattr__(self, "rho", tuple(merged.tolist()))

    @classmethod
    def point(cls, theta: float) -> "DiscreteMixing":
        return cls((theta,), (1.0,))

    @classmethod
    def from_atoms(cls, atoms) -> "DiscreteMixing":
        atoms = np.asarray(atoms, dtype=float).reshape(-1, 2)
        return cls(tuple(atoms[:, 0]), tuple(atoms[:, 1]))

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteMixing":
        if set(d) != {"atoms"}:
            raise ValueError("mixing JSON must have exactly the key 'atoms'")
        return cls.from_atoms(d["atoms"])

    def to_dict(self) -> dict:
        return {"atoms": [[t, r] for t, r in zip(self.theta, self.rho)]}

    @property
    def atoms(self) -> np.ndarray:
        return np.column_stack([self.theta, self.rho])

    @property
    def mean(self) -> float:
        return float(np.dot(self.theta, self.rho))

    @property
    def degenerate(self) -> bool:
        return len(self.theta) == 1

    def central_moment(self, j: int, about: float | None = None) -> float:
        c = self.mean if about is None else about
        return float(np.dot(self.rho, (np.asarray(self.theta) - c) ** j))


def two_point(mu: float, mu1: float, mu2: float) -> DiscreteMixing:
    """Mean-``mu`` mixing on ``{mu1, mu2}``: ``rho*mu1 + (1-rho)*mu2 = mu``."""
    lo, hi = min(mu1, mu2), max(mu1, mu2)
    if mu < lo or mu > hi:
        raise InfeasibleError(f"mean {mu} is outside the atom range [{lo}, {hi}]")
    if mu1 == mu2:
        return DiscreteMixing.point(mu1)
    rho = (mu - mu2) / (mu1 - mu2)
    rho = min(1.0, max(0.0, rho))
    return DiscreteMixing((mu1, mu2), (rho, 1.0 - rho))


def _check_order(r):
    if not MIN_ORDER <= r <= MAX_ORDER:
        raise UnsupportedError(f"order must be in [{MIN_ORDER}, {MAX_ORDER}], got {r}")


def phi_map(Q: DiscreteMixing, mu: float, r: int) -> np.ndarray:
    """Weighted central moments ``E_Q[(theta - mu)^j] / j!`` for ``j = 2..r``."""
    _check_order(r)
    return np.array([Q.central_moment(j, mu) / math.factorial(j) for j in range(2, r + 1)])


def localize(family: FamilySpec, Q: DiscreteMixing, r: int) -> LocalMixtureModel:
    mu = Q.mean
    return LocalMixtureModel(family, r, mu, tuple(phi_map(Q, mu, r)))


def _check_atoms(family, Q):
    try:
        family.check_mean(np.asarray(Q.theta))
    except DomainError as exc:
        raise DomainError(f"mixing atom outside the mean domain: {exc}") from None


def exact_mixture_density(family: FamilySpec, Q: DiscreteMixing, x):
    """``sum_i rho_i f(x; theta_i)``."""
    _check_atoms(family, Q)
    out = sum(r * np.asarray(nef.density(family, x, t)) for t, r in zip(Q.theta, Q.rho))
    return out if np.ndim(out) else float(out)


def mixture_moments(family: FamilySpec, Q: DiscreteMixing, count: int) -> np.ndarray:
    """First ``count`` raw moments of the exact mixture."""
    return np.array([sum(r * nef.raw_moment(family, t, i) for t, r in zip(Q.theta, Q.rho))
                     for i in range(1, count + 1)])


def mixture_sample(family: FamilySpec, Q: DiscreteMixing, count: int, seed=None) -> np.ndarray:
    """Two-stage draws: an atom from ``Q``, then an observation from it."""
    _check_atoms(family, Q)
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(Q.theta), size=count, p=np.asarray(Q.rho))
    return nef._draw(family, np.asarray(Q.theta)[idx], rng)


def count_modes(xs, family: FamilySpec) -> int:
    """Number of clearly separated local modes in a discrete sample's histogram."""
    if not family.is_discrete:
        raise UnsupportedError("mode counting is for discrete samples")
    xs = np.asarray(xs, dtype=int)
    counts = np.bincount(xs).astype(float)
    padded = np.concatenate([[0.0], counts, [0.0]])
    peaks, props = signal.find_peaks(padded, prominence=0)
    prom = props["prominences"]
    base = padded[peaks] - prom
    # a peak counts when its drop to the higher saddle beats 3 Poisson sd
    keep = prom > 3.0 * np.sqrt(padded[peaks] + base + 1.0)
    return int(np.count_nonzero(keep))


# -- proper dispersion mixing ------------------------------------------------


@dataclass(frozen=True)
class Deviance:
    """Unit deviance ``d(theta; m)`` with its first two theta-derivatives."""

    name: str
    d: Callable[[float, float], float]
    dd: Callable[[float, float], float]
    d2: Callable[[float, float], float]

    def unit_variance(self, theta):
        """``2 / (d2 d / d theta^2)(theta; theta)``."""
        return 2.0 / self.d2(theta, theta)


def squared_deviance() -> Deviance:
    return Deviance("squared", lambda t, m: (t - m) ** 2, lambda t, m: 2.0 * (t - m), lambda t, m: 2.0)


DEVIANCES = {"squared": squared_deviance}

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
_EXP_CUTOFF = 80.0


@dataclass(frozen=True)
class DispersionMixing:
    """Mixing density ``a(eps) V(theta)^(-1/2) exp(-d(theta; vartheta) / (2 eps))``
    over the family's mean domain."""

    family: FamilySpec
    deviance: Deviance
    epsilon: float
    vartheta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("dispersion epsilon must be positive")
        self.family.check_mean(self.vartheta)

    @classmethod
    def from_dict(cls, family: FamilySpec, d: dict) -> "DispersionMixing":
        keys = {"deviance", "epsilon", "vartheta"}
        if set(d) != keys:
            raise ValueError(f"dispersion JSON needs exactly the keys {sorted(keys)}")
        if d["deviance"] not in DEVIANCES:
            raise ValueError(f"unknown deviance {d['deviance']!r}")
        return cls(family, DEVIANCES[d["deviance"]](), float(d["epsilon"]), float(d["vartheta"]))

    def to_dict(self) -> dict:
        return {"deviance": self.deviance.name, "epsilon": self.epsilon, "vartheta": self.vartheta}

    def kernel(self, theta):
        """Unnormalized mixing density."""
        theta = np.asarray(theta, dtype=float)
        return self.deviance.unit_variance(theta) ** -0.5 * np.exp(
            -self.deviance.d(theta, self.vartheta) / (2.0 * self.epsilon))

    @cached_property
    def window(self) -> tuple[float, float]:
        """Integration range outside which the kernel is below exp(-80)."""
        lo, hi = self.family.mean_domain
        c, step = self.vartheta, math.sqrt(self.epsilon)

        def reach(sign, limit):
            w = step
            for _ in range(200):
                t = c + sign * w
                if (t - limit) * sign >= 0:
                    return limit
                if self.deviance.d(t, c) / (2 * self.epsilon) > _EXP_CUTOFF:
                    return t
                w *= 1.5
            return c + sign * w

        return reach(-1, lo), reach(+1, hi)

    def integrate(self, func, label="integrand") -> float:
        """``int func(theta) kernel(theta) dtheta`` over the window."""
        a, b = self.window
        val, err, *_ = integrate.quad(
            lambda t: func(t) * self.kernel(t), a, b, points=[self.vartheta],
            epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=1000, full_output=1)
        if err > max(1e-10, 1e-9 * abs(val)):
            raise AccuracyError(f"quadrature of {label} did not converge (error {err:.2e})",
                                estimate=val, error=err)
        return val

    @cached_property
    def normalizer(self) -> float:
        """``a(eps)``."""
        return 1.0 / self.integrate(lambda t: 1.0, "normalizer")

    @cached_property
    def mean(self) -> float:
        return self.normalizer * self.integrate(lambda t: t, "mean")

    def central_moment(self, j: int) -> float:
        m = self.mean
        return self.normalizer * self.integrate(lambda t: (t - m) ** j, f"central moment {j}")


def continuous_mixture_density(family: FamilySpec, D: DispersionMixing, x):
    """``int f(x; theta) dQ(theta)`` by adaptive Gauss-Kronrod quadrature."""
    if D.family != family:
        raise ValueError("dispersion mixing was built for a different family")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    family.check_support(xs)
    out = np.array([D.normalizer * D.integrate(lambda t, xv=xv: nef.density(family, xv, t),
                                               f"mixture density at x={xv}") for xv in xs])
    return out if np.ndim(x) else float(out[0])


def laplace_localize(family: FamilySpec, D: DispersionMixing, r: int) -> LocalMixtureModel:
    """Local mixture centered at the mixing mean with ``lam_i`` = i-th central
    moment of the mixing density divided by ``i!``."""
    _check_order(r)
    if D.family != family:
        raise ValueError("dispersion mixing was built for a different family")
    lam = [D.central_moment(i) / math.factorial(i) for i in range(2, r + 1)]
    return LocalMixtureModel(family, r, D.mean, tuple(lam))
