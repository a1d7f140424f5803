"""Natural exponential families with quadratic variance function.

Everything is expressed in the mean parametrization. A family carries its
variance function ``V(mu) = v0 + v1*mu + v2*mu**2`` and a support handler;
the mu-derivatives of the density are obtained exactly from the score
recurrence

    h_1 = (x - mu) / V(mu),     h_{k+1} = dh_k/dmu + h_1 * h_k,

so that ``d^k f / dmu^k = h_k(x; mu) f(x; mu)``. Each ``h_k`` is held as a
bivariate polynomial ``N_k(y, mu)`` in ``y = x - mu`` and ``mu`` with exact
rational coefficients, divided by ``V(mu)**k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special, stats

from .errors import DomainError, SupportError, UnsupportedError

MAX_DERIV_ORDER = 8
MAX_MOMENT_INDEX = 16
POISSON_TAIL = 1e-14
# Tail used when summing polynomial-weighted quantities, where x**k inflates
# the neglected mass.
EXPECT_TAIL = 1e-30

_KINDS = ("binomial", "poisson", "normal")


@dataclass(frozen=True)
class FamilySpec:
    """A natural exponential family in mean parametrization.

    Use the constructors :meth:`binomial`, :meth:`poisson` and :meth:`normal`.
    The normal family has unit variance.
    """

    kind: str
    n: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind == "binomial":
            if self.n is None or int(self.n) != self.n or self.n < 1:
                raise ValueError("binomial family needs a positive integer n")
            object.__setattr__(self, "n", int(self.n))
        elif self.n is not None:
            raise ValueError(f"{self.kind} family takes no size parameter")

    @classmethod
    def binomial(cls, n: int) -> "FamilySpec":
        return cls("binomial", n)

    @classmethod
    def poisson(cls) -> "FamilySpec":
        return cls("poisson")

    @classmethod
    def normal(cls) -> "FamilySpec":
        return cls("normal")

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind is None:
            raise ValueError("family spec needs a 'kind'")
        n = d.pop("n", None)
        if d:
            raise ValueError(f"unknown family keys: {sorted(d)}")
        return cls(kind, n)

    def to_dict(self) -> dict:
        if self.kind == "binomial":
            return {"kind": "binomial", "n": self.n}
        return {"kind": self.kind}

    # -- structure ---------------------------------------------------------

    @property
    def variance_coeffs(self) -> tuple[Fraction, Fraction, Fraction]:
        if self.kind == "binomial":
            return (Fraction(0), Fraction(1), Fraction(-1, self.n))
        if self.kind == "poisson":
            return (Fraction(0), Fraction(1), Fraction(0))
        return (Fraction(1), Fraction(0), Fraction(0))

    @property
    def mean_domain(self) -> tuple[float, float]:
        """Open interval of admissible means."""
        if self.kind == "binomial":
            return (0.0, float(self.n))
        if self.kind == "poisson":
            return (0.0, math.inf)
        return (-math.inf, math.inf)

    @property
    def support_kind(self) -> str:
        """'finite', 'countable' or 'real'."""
        return {"binomial": "finite", "poisson": "countable", "normal": "real"}[self.kind]

    @property
    def is_discrete(self) -> bool:
        return self.kind != "normal"

    def variance(self, mu):
        v0, v1, v2 = (float(c) for c in self.variance_coeffs)
        mu = np.asarray(mu, dtype=float)
        return v0 + v1 * mu + v2 * mu * mu

    def check_mean(self, mu, closed: bool = False):
        lo, hi = self.mean_domain
        arr = np.asarray(mu, dtype=float)
        if closed:
            ok = np.all((arr >= lo) & (arr <= hi) & np.isfinite(arr))
        else:
            ok = np.all((arr > lo) & (arr < hi) & np.isfinite(arr))
        if not ok:
            raise DomainError(f"mean {mu!r} outside the mean domain {self.mean_domain} of {self.kind}")

    def check_support(self, x):
        arr = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise SupportError("non-finite observation")
        if self.is_discrete:
            if not np.all(arr == np.round(arr)) or np.any(arr < 0):
                raise SupportError(f"{self.kind} support is the nonnegative integers")
            if self.kind == "binomial" and np.any(arr > self.n):
                raise SupportError(f"binomial support is {{0..{self.n}}}")

    def support_points(self, mu: float | None = None, tail: float = POISSON_TAIL) -> np.ndarray:
        """Support points as an integer array.

        Finite support is returned in full. Poisson support is truncated at the
        smallest point beyond which the tail mass at ``mu`` is below ``tail``.
        The normal family has no point list.
        """
        if self.kind == "binomial":
            return np.arange(self.n + 1)
        if self.kind == "poisson":
            if mu is None:
                raise ValueError("poisson truncation needs a mean")
            upper = int(stats.poisson.isf(max(tail, POISSON_TAIL), mu))
            while stats.poisson.sf(upper, mu) >= tail:
                upper += 1
            return np.arange(upper + 1)
        raise UnsupportedError("the normal family has continuous support")


def binomial(n: int) -> FamilySpec:
    return FamilySpec.binomial(n)


def poisson() -> FamilySpec:
    return FamilySpec.poisson()


def normal() -> FamilySpec:
    return FamilySpec.normal()


# -- densities ---------------------------------------------------------------


def log_density(family: FamilySpec, x, mu: float):
    family.check_mean(mu)
    family.check_support(x)
    x = np.asarray(x, dtype=float)
    if family.kind == "binomial":
        n = family.n
        # n! mu^x (n-mu)^(n-x) / (x!(n-x)! n^n)
        return (special.gammaln(n + 1) - special.gammaln(x + 1) - special.gammaln(n - x + 1)
                + special.xlogy(x, mu) + special.xlogy(n - x, n - mu) - n * math.log(n))
    if family.kind == "poisson":
        return special.xlogy(x, mu) - mu - special.gammaln(x + 1)
    return -0.5 * (x - mu) ** 2 - 0.5 * math.log(2 * math.pi)


def density(family: FamilySpec, x, mu: float):
    """pmf/pdf ``f(x; mu)``; vectorized over ``x``."""
    out = np.exp(log_density(family, x, mu))
    return out if np.ndim(out) else float(out)


# -- bivariate polynomial helpers (object arrays of Fractions) --------------
#
# A polynomial P(y, mu) is an object array ``P[a, b]`` = coefficient of
# y**a * mu**b.


def _zeros(shape):
    out = np.empty(shape, dtype=object)
    out.fill(Fraction(0))
    return out


def _pad(P, shape):
    out = _zeros(shape)
    out[: P.shape[0], : P.shape[1]] = P
    return out


def _add(P, Q):
    shape = (max(P.shape[0], Q.shape[0]), max(P.shape[1], Q.shape[1]))
    return _pad(P, shape) + _pad(Q, shape)


def _d_mu(P):
    if P.shape[1] == 1:
        return _zeros((P.shape[0], 1))
    return P[:, 1:] * np.arange(1, P.shape[1])


def _d_y(P):
    if P.shape[0] == 1:
        return _zeros((1, P.shape[1]))
    return P[1:, :] * np.arange(1, P.shape[0])[:, None]


def _times_y(P):
    out = _zeros((P.shape[0] + 1, P.shape[1]))
    out[1:, :] = P
    return out


def _times_mu_poly(P, coeffs):
    out = _zeros((P.shape[0], P.shape[1] + len(coeffs) - 1))
    for j, c in enumerate(coeffs):
        if c != 0:
            out[:, j : j + P.shape[1]] += P * c
    return out


def _trim(P):
    rows = [a for a in range(P.shape[0]) if any(c != 0 for c in P[a])]
    cols = [b for b in range(P.shape[1]) if any(c != 0 for c in P[:, b])]
    return P[: (max(rows) + 1 if rows else 1), : (max(cols) + 1 if cols else 1)]


@lru_cache(maxsize=None)
def _derivative_numerators(family: FamilySpec) -> tuple:
    """Exact numerators N_1..N_8 with h_k = N_k(x - mu, mu) / V(mu)**k."""
    v = family.variance_coeffs
    dv = (v[1], 2 * v[2])
    N = _zeros((2, 1))
    N[1, 0] = Fraction(1)
    out = [N]
    for k in range(1, MAX_DERIV_ORDER):
        # d/dmu at fixed x acts on P(x - mu, mu) as (d_mu - d_y).
        nxt = _times_mu_poly(_add(_d_mu(N), -_d_y(N)), v)
        nxt = _add(nxt, -_times_mu_poly(N, dv) * k)
        nxt = _add(nxt, _times_y(N))
        N = _trim(nxt)
        out.append(N)
    return tuple(out)


@lru_cache(maxsize=4096)
def _exact_centered(family: FamilySpec, mu: float, kmax: int) -> np.ndarray:
    # Numerators evaluated in rational arithmetic and rounded once: float
    # evaluation near the ends of the mean domain cancels badly.
    nums = _derivative_numerators(family)
    m = Fraction(mu)
    v0, v1, v2 = family.variance_coeffs
    V = v0 + v1 * m + v2 * m * m
    C = np.zeros((kmax, kmax + 1))
    for k in range(1, kmax + 1):
        Vk = V**k
        for a, row in enumerate(nums[k - 1]):
            acc = Fraction(0)
            for c in reversed(row):
                acc = acc * m + c
            C[k - 1, a] = float(acc / Vk)
    C.setflags(write=False)
    return C


@dataclass(frozen=True)
class DerivPoly:
    """``h_k(x; mu)`` with ``f^(k) = h_k f``.

    ``numerator[a, b]`` is the exact coefficient of ``(x-mu)**a mu**b`` in
    ``V(mu)**k h_k``; ``coeffs`` are the numeric coefficients of powers of
    ``x - mu`` at the evaluation mean.
    """

    family: FamilySpec
    order: int
    mu: float
    numerator: np.ndarray
    coeffs: np.ndarray

    def __call__(self, x):
        y = np.asarray(x, dtype=float) - self.mu
        return np.polynomial.polynomial.polyval(y, self.coeffs)

    @property
    def morris(self) -> np.ndarray:
        """Coefficients (in powers of ``x - mu``) of ``V(mu)**k h_k``."""
        return self.coeffs * float(self.family.variance(self.mu)) ** self.order

    def x_coeffs(self) -> np.ndarray:
        """Coefficients in increasing powers of ``x``."""
        shift = np.polynomial.Polynomial([-self.mu, 1.0])
        return np.polynomial.Polynomial(self.coeffs)(shift).coef


def _check_order(kmax):
    if kmax < 1 or kmax > MAX_DERIV_ORDER:
        raise UnsupportedError(f"derivative order must be in [1, {MAX_DERIV_ORDER}], got {kmax}")


def centered_coeffs(family: FamilySpec, mu: float, kmax: int) -> np.ndarray:
    """Float array C[k-1, a]: coefficient of (x-mu)**a in h_k at ``mu``."""
    return _exact_centered(family, float(mu), kmax).copy()


def derivative_polys(family: FamilySpec, mu: float, kmax: int) -> list[DerivPoly]:
    """``h_1 .. h_kmax`` evaluated at ``mu``."""
    _check_order(kmax)
    family.check_mean(mu)
    nums = _derivative_numerators(family)
    C = centered_coeffs(family, mu, kmax)
    return [DerivPoly(family, k, float(mu), nums[k - 1], C[k - 1, : k + 1].copy())
            for k in range(1, kmax + 1)]


def _leibniz_factors(family: FamilySpec, mu: float, y: np.ndarray, kmax: int, absolute: bool):
    """Factor sequences ``A_j, B_i`` with ``h_k = sum_j C(k, j) A_j B_(k-j)``.

    Binomial: ``f`` is proportional to ``mu^x (n - mu)^(n - x)``, so
    ``A_j = (x)_j / mu^j`` and ``B_i = (-1)^i (n - x)_i / (n - mu)^i`` with
    falling factorials. Poisson: the same ``A_j`` and ``B_i = (-1)^i``.
    """
    x = y + mu
    s = -1.0 if not absolute else 1.0
    A = [np.ones_like(x)]
    B = [np.ones_like(x)]
    for j in range(1, kmax + 1):
        A.append(A[-1] * (x - (j - 1)) / mu)
        if family.kind == "binomial":
            n = family.n
            B.append(B[-1] * (s * (n - x - (j - 1))) / (n - mu))
        else:
            B.append(B[-1] * s)
    if absolute:
        A, B = [np.abs(a) for a in A], [np.abs(b) for b in B]
    return A, B


def _stable_values(family: FamilySpec, mu: float, x, kmax: int, absolute: bool) -> np.ndarray:
    # Direct product forms avoid the cancellation of the centered monomial
    # coefficients, which grow like V^(-k) near the ends of the mean domain.
    _check_order(kmax)
    family.check_mean(mu)
    y = np.atleast_1d(np.asarray(x, dtype=float)) - mu
    out = np.empty((kmax, y.size))
    if family.kind == "normal":
        # probabilists' Hermite recurrence; the |.| version bounds its rounding
        prev, cur = np.ones_like(y), np.abs(y) if absolute else y
        out[0] = cur
        for k in range(1, kmax):
            nxt = (np.abs(y) * cur + k * prev) if absolute else (y * cur - k * prev)
            prev, cur = cur, nxt
            out[k] = cur
        return out
    A, B = _leibniz_factors(family, float(mu), y, kmax, absolute)
    for k in range(1, kmax + 1):
        out[k - 1] = sum(math.comb(k, j) * A[j] * B[k - j] for j in range(k + 1))
    return out


def deriv_values(family: FamilySpec, mu: float, x, kmax: int) -> np.ndarray:
    """Matrix ``H[k-1, j] = h_k(x_j; mu)`` for ``k = 1..kmax``."""
    return _stable_values(family, mu, x, kmax, absolute=False)


def deriv_magnitudes(family: FamilySpec, mu: float, x, kmax: int) -> np.ndarray:
    """Upper bounds on the terms summed when evaluating ``h_k(x; mu)``.

    Same layout as :func:`deriv_values`, with every term replaced by its
    absolute value, so the rounding error in ``h_k`` is at most a small
    multiple of machine epsilon times this bound.
    """
    return _stable_values(family, mu, x, kmax, absolute=True)


def density_derivative(family: FamilySpec, x, mu: float, k: int):
    """``d^k f(x; mu) / dmu^k``."""
    if k == 0:
        return density(family, x, mu)
    H = deriv_values(family, mu, x, k)[k - 1]
    out = H * np.atleast_1d(density(family, x, mu))
    return out if np.ndim(x) else float(out[0])


# -- raw moments -------------------------------------------------------------


@lru_cache(maxsize=None)
def _raw_moment_polys(family: FamilySpec) -> tuple:
    """Exact coefficient lists of m_i(mu), i = 0..MAX_MOMENT_INDEX."""
    v = family.variance_coeffs
    polys = [np.array([Fraction(1)], dtype=object)]
    for _ in range(MAX_MOMENT_INDEX):
        m = polys[-1]
        dm = m[1:] * np.arange(1, len(m)) if len(m) > 1 else np.array([Fraction(0)], dtype=object)
        a = _zeros(len(m) + 1)
        a[1:] += m
        b = _zeros(len(dm) + 2)
        for j, c in enumerate(v):
            b[j : j + len(dm)] += dm * c
        size = max(len(a), len(b))
        nxt = _zeros(size)
        nxt[: len(a)] += a
        nxt[: len(b)] += b
        while len(nxt) > 1 and nxt[-1] == 0:
            nxt = nxt[:-1]
        polys.append(nxt)
    return tuple(polys)


def _check_moment_index(i, k=0):
    if i < 0 or k < 0 or i + k > MAX_MOMENT_INDEX:
        raise UnsupportedError(f"moment index plus derivative order must be <= {MAX_MOMENT_INDEX}")


def raw_moment_poly(family: FamilySpec, i: int, k: int = 0) -> np.ndarray:
    """Float coefficients (increasing powers of mu) of the k-th mu-derivative of m_i."""
    _check_moment_index(i, k)
    p = np.asarray(_raw_moment_polys(family)[i], dtype=float)
    return np.polynomial.polynomial.polyder(p, k) if k else p


def raw_moment(family: FamilySpec, mu, i: int):
    """``E(X**i)`` under ``f(.; mu)``."""
    return raw_moment_deriv(family, mu, i, 0)


def raw_moment_deriv(family: FamilySpec, mu, i: int, k: int):
    """k-th mu-derivative of ``E(X**i)``."""
    _check_moment_index(i, k)
    family.check_mean(mu, closed=True)
    out = np.polynomial.polynomial.polyval(mu, raw_moment_poly(family, i, k))
    return out if np.ndim(out) else float(out)


# -- sampling ----------------------------------------------------------------


def sample(family: FamilySpec, mu: float, count: int, seed=None) -> np.ndarray:
    """``count`` i.i.d. draws from ``f(.; mu)``."""
    family.check_mean(mu)
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng(seed)
    return _draw(family, np.full(count, float(mu)), rng)


def _draw(family: FamilySpec, means: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if family.kind == "binomial":
        return rng.binomial(family.n, np.clip(means / family.n, 0.0, 1.0))
    if family.kind == "poisson":
        return rng.poisson(means)
    return rng.normal(means, 1.0)


def gauss_hermite(nodes: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite rule normalized to the standard normal."""
    t, w = np.polynomial.hermite_e.hermegauss(nodes)
    return t, w / math.sqrt(2 * math.pi)


def expect(family: FamilySpec, mu: float, func, tail: float = EXPECT_TAIL, nodes: int = 40):
    """``E_f[func(X)]`` by exact summation (finite), truncated summation
    (countable) or Gauss-Hermite quadrature (normal).

    ``func`` receives an array of support points and returns values,
    optionally with leading axes.
    """
    if family.kind == "normal":
        t, w = gauss_hermite(nodes)
        return np.asarray(func(mu + t)) @ w
    xs = family.support_points(mu, tail)
    return np.asarray(func(xs)) @ np.asarray(density(family, xs, mu))


def as_family(spec) -> FamilySpec:
    if isinstance(spec, FamilySpec):
        return spec
    if isinstance(spec, dict):
        return FamilySpec.from_dict(spec)
    raise TypeError(f"cannot interpret {spec!r} as a family")


__all__: Sequence[str] = [
    "FamilySpec", "DerivPoly", "binomial", "poisson", "normal", "density", "log_density",
    "derivative_polys", "deriv_values", "density_derivative", "raw_moment", "raw_moment_deriv",
    "raw_moment_poly", "sample", "expect", "gauss_hermite", "as_family",
]
