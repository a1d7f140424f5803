"""Order-r local mixture models and their hard boundary.

The model is

    g(x; mu, lam) = f(x; mu) * (1 + sum_{i=2}^r lam_i h_i(x; mu)),

where ``h_i f`` is the i-th mean derivative of ``f``. There is no ``lam_1``.
The factor in parentheses is a polynomial in ``x`` and is called the
constraint polynomial below; the model is a density exactly when it is
nonnegative on the support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nef
from .errors import PositivityError, UnsupportedError
from .nef import FamilySpec
from .simplex import solve_lp

MIN_ORDER, MAX_ORDER = 2, nef.MAX_DERIV_ORDER
BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class LocalMixtureModel:
    family: FamilySpec
    order: int
    mu: float
    lam: tuple[float, ...]

    def __post_init__(self):
        if not MIN_ORDER <= self.order <= MAX_ORDER:
            raise UnsupportedError(f"order must be in [{MIN_ORDER}, {MAX_ORDER}], got {self.order}")
        lam = tuple(float(v) for v in np.ravel(self.lam))
        if len(lam) != self.order - 1:
            raise ValueError(f"order {self.order} needs {self.order - 1} lambda values, got {len(lam)}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", float(self.mu))
        self.family.check_mean(self.mu)

    @classmethod
    def unmixed(cls, family: FamilySpec, order: int, mu: float) -> "LocalMixtureModel":
        return cls(family, order, mu, (0.0,) * (order - 1))

    @classmethod
    def from_dict(cls, d: dict) -> "LocalMixtureModel":
        d = dict(d)
        keys = {"family", "order", "mu", "lambda"}
        if set(d) - keys:
            raise ValueError(f"unknown model keys: {sorted(set(d) - keys)}")
        return cls(nef.as_family(d["family"]), int(d["order"]), float(d["mu"]), tuple(d["lambda"]))

    def to_dict(self) -> dict:
        return {"family": self.family.to_dict(), "order": self.order, "mu": self.mu,
                "lambda": list(self.lam)}

    @property
    def lam_array(self) -> np.ndarray:
        return np.asarray(self.lam)

    def with_lam(self, lam) -> "LocalMixtureModel":
        return LocalMixtureModel(self.family, self.order, self.mu, tuple(lam))


def constraint_coeffs(model: LocalMixtureModel) -> np.ndarray:
    """Coefficients, in powers of ``y = x - mu``, of ``1 + sum lam_i h_i``.

    Trailing terms whose lambda is zero are dropped, so the last entry is the
    true leading coefficient.
    """
    lam = model.lam_array
    nz = np.flatnonzero(lam)
    if nz.size == 0:
        return np.array([1.0])
    top = nz[-1] + 2  # highest order with nonzero lambda
    C = nef.centered_coeffs(model.family, model.mu, top)
    p = lam[: top - 1] @ C[1:top, : top + 1]
    p[0] += 1.0
    return p


def constraint_values(model: LocalMixtureModel, x) -> np.ndarray:
    y = np.asarray(x, dtype=float) - model.mu
    return np.polynomial.polynomial.polyval(y, constraint_coeffs(model))


def lmm_density(model: LocalMixtureModel, x):
    """``g(x; mu, lam)``. Signed: negative values mean the model is outside the
    hard boundary at ``x``."""
    out = np.asarray(nef.density(model.family, x, model.mu)) * constraint_values(model, x)
    return out if np.ndim(out) else float(out)


# -- positivity --------------------------------------------------------------


@dataclass(frozen=True)
class Positivity:
    status: str  # "interior", "boundary" or "outside"
    witness: float | None
    min_value: float  # minimum of the constraint polynomial (-inf if unbounded)

    @property
    def interior(self) -> bool:
        return self.status == "interior"


def _classify(vmin, witness):
    if vmin > BOUNDARY_TOL:
        return Positivity("interior", witness, vmin)
    if vmin >= -BOUNDARY_TOL:
        return Positivity("boundary", witness, vmin)
    return Positivity("outside", witness, vmin)


def _polish_roots(coeffs, roots, iters=8):
    d = np.polynomial.polynomial.polyder(coeffs)
    for _ in range(iters):
        fv = np.polynomial.polynomial.polyval(roots, coeffs)
        dv = np.polynomial.polynomial.polyval(roots, d)
        step = np.where(dv != 0, fv / np.where(dv != 0, dv, 1.0), 0.0)
        roots = roots - step
        if np.all(np.abs(fv) <= 1e-10):
            break
    return roots


def real_roots(coeffs, imag_tol=1e-7) -> np.ndarray:
    """Real roots of a polynomial (increasing-power coefficients), via the
    companion matrix and Newton polishing."""
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if coeffs.size <= 1:
        return np.zeros(0)
    r = np.polynomial.polynomial.polyroots(coeffs)
    scale = np.maximum(1.0, np.abs(r))
    r = np.sort(r[np.abs(r.imag) <= imag_tol * scale].real)
    return _polish_roots(coeffs, r)


def _cauchy_bound(coeffs) -> float:
    return 1.0 + float(np.max(np.abs(coeffs[:-1] / coeffs[-1])))


def _escape_witness(p, side):
    """Point beyond the outermost real root of ``p`` on ``side`` (+1/-1),
    at the first whole-unit offset from the center where ``p < 0``."""
    roots = real_roots(p)
    outer = (roots.max() if side > 0 else -roots.min()) if roots.size else 0.0
    return side * (math.floor(max(outer, 0.0)) + 1.0)


def positivity_check(model: LocalMixtureModel) -> Positivity:
    """Locate the minimum of the constraint polynomial over the support."""
    fam = model.family
    p = constraint_coeffs(model)
    mu = model.mu
    if fam.support_kind == "finite":
        xs = fam.support_points()
        v = np.polynomial.polynomial.polyval(xs - mu, p)
        j = int(np.argmin(v))
        return _classify(float(v[j]), float(xs[j]))

    deg = p.size - 1
    lead = p[-1] if deg else 1.0
    if fam.support_kind == "countable":
        if deg and lead < 0:
            y = _escape_witness(p, +1)
            x = max(0.0, math.floor(mu + y))
            while np.polynomial.polynomial.polyval(x - mu, p) >= 0:
                x += 1.0
            return Positivity("outside", x, -math.inf)
        cands = {0.0}
        if deg >= 2:
            for c in real_roots(np.polynomial.polynomial.polyder(p)) + mu:
                if c > -1:
                    cands.update((max(0.0, math.floor(c)), max(0.0, math.ceil(c))))
        if deg:
            bound = mu + _cauchy_bound(p)
            if bound <= 1e4:
                cands.update(float(x) for x in range(int(bound) + 2))
        xs = np.array(sorted(cands))
        v = np.polynomial.polynomial.polyval(xs - mu, p)
        j = int(np.argmin(v))
        return _classify(float(v[j]), float(xs[j]))

    # continuous support
    if deg == 0:
        return _classify(float(p[0]), mu)
    if deg % 2 == 1 or lead < 0:
        side = -1 if (deg % 2 == 1 and lead > 0) else 1
        return Positivity("outside", mu + _escape_witness(p, side), -math.inf)
    crit = real_roots(np.polynomial.polynomial.polyder(p))
    v = np.polynomial.polynomial.polyval(crit, p)
    j = int(np.argmin(v))
    return _classify(float(v[j]), float(crit[j] + mu))


# -- hard boundary -----------------------------------------------------------


@dataclass
class HalfSpaceSystem:
    """Constraints ``coeffs[j] @ (1, lam_2, ..., lam_r) > 0``, one per support point."""

    family: FamilySpec
    mu: float
    order: int
    x: np.ndarray
    coeffs: np.ndarray  # columns c0 (= 1), c2..cr
    redundant: np.ndarray | None = None
    window: tuple | None = None

    def values(self, lam) -> np.ndarray:
        return self.coeffs @ np.concatenate([[1.0], np.ravel(lam)])

    def contains(self, lam) -> bool:
        return bool(np.all(self.values(lam) > 0))

    def facets(self) -> np.ndarray:
        """Support points whose constraints are not implied by the others."""
        if self.redundant is None:
            raise ValueError("redundancy was not computed")
        return self.x[~self.redundant]


@dataclass
class ConstraintGenerator:
    """Continuous-support hard boundary: one constraint per real ``x``."""

    family: FamilySpec
    mu: float
    order: int

    def __call__(self, x) -> np.ndarray:
        return _constraint_rows(self.family, self.mu, self.order, np.atleast_1d(x))


def _constraint_rows(family, mu, order, xs):
    H = nef.deriv_values(family, mu, xs, order)[1:order]
    return np.column_stack([np.ones(len(xs)), H.T])


def redundancy(coeffs: np.ndarray, window=None, tol=1e-10) -> np.ndarray:
    """Mark constraints implied by the others (optionally inside a box window
    ``[(lo_2, hi_2), ...]``) using one LP per constraint."""
    m, k = coeffs.shape
    d = k - 1
    out = np.zeros(m, dtype=bool)
    # lam = p - q with p, q >= 0; constraint i: -a_i @ (p - q) <= c0_i
    for j in range(m):
        rows = [i for i in range(m) if i != j]
        A_ub = [np.concatenate([-coeffs[i, 1:], coeffs[i, 1:]]) for i in rows]
        b_ub = [coeffs[i, 0] for i in rows]
        if window is not None:
            for t, (lo, hi) in enumerate(window):
                e = np.zeros(2 * d)
                e[t], e[d + t] = 1.0, -1.0
                A_ub += [e, -e]
                b_ub += [hi, -lo]
        c = np.concatenate([coeffs[j, 1:], -coeffs[j, 1:]])
        res = solve_lp(c, A_ub=np.array(A_ub), b_ub=np.array(b_ub))
        if res.status == "optimal":
            out[j] = coeffs[j, 0] + res.fun >= -tol
    return out


def hard_boundary(family: FamilySpec, mu: float, order: int, window=None,
                  with_redundancy: bool = True):
    """Half-space description of the fiber's positivity region at ``mu``.

    Finite support gives one constraint per point; Poisson support is
    truncated at tail mass 1e-14. Continuous support returns a
    :class:`ConstraintGenerator` instead.
    """
    family.check_mean(mu)
    if family.support_kind == "real":
        return ConstraintGenerator(family, float(mu), order)
    xs = family.support_points(mu)
    coeffs = _constraint_rows(family, mu, order, xs)
    red = redundancy(coeffs, window) if with_redundancy else None
    return HalfSpaceSystem(family, float(mu), order, xs, coeffs, red,
                           None if window is None else tuple(map(tuple, window)))


# -- moments and sampling ----------------------------------------------------


def moment_vector(model: LocalMixtureModel, count: int) -> np.ndarray:
    """First ``count`` raw moments of ``g``: ``m_i(mu) + sum_k lam_k m_i^(k)(mu)``."""
    if count + model.order > nef.MAX_MOMENT_INDEX:
        raise UnsupportedError("moment index plus order must be <= 16")
    fam, mu = model.family, model.mu
    out = np.empty(count)
    for i in range(1, count + 1):
        out[i - 1] = nef.raw_moment(fam, mu, i) + sum(
            lk * nef.raw_moment_deriv(fam, mu, i, k) for k, lk in enumerate(model.lam, start=2))
    return out


def pmf_table(model: LocalMixtureModel) -> tuple[np.ndarray, np.ndarray]:
    if model.family.support_kind != "finite":
        raise UnsupportedError("pmf tables need finite support")
    xs = model.family.support_points()
    return xs, np.asarray(lmm_density(model, xs))


def lmm_sample(model: LocalMixtureModel, count: int, seed=None) -> np.ndarray:
    """Draws from an interior finite-support model."""
    if model.family.support_kind != "finite":
        raise UnsupportedError("sampling local mixtures needs finite support")
    pos = positivity_check(model)
    if not pos.interior:
        raise PositivityError(f"model is {pos.status} (witness x={pos.witness})")
    xs, p = pmf_table(model)
    if count == 0:
        return np.zeros(0, dtype=xs.dtype)
    rng = np.random.default_rng(seed)
    return rng.choice(xs, size=count, p=p / p.sum())
