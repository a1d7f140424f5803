"""True local mixtures: moment curves, hull membership and the Lambda region.

An order-``r`` local mixture is a true local mixture over ``M`` when its first
``r`` raw moments lie in the convex hull of the moment curve
``{(m_1(m), ..., m_r(m)) : m in M}``. Membership is decided by a feasibility
LP with column generation over the curve; a positive answer comes with at
most ``r + 1`` atoms, a negative one with a separating functional.

Internally moments are replaced by scaled central moments about the model
center, ``E_m[(X - mu)^i] / s^i``, with the curve parametrized by
``t = (m - mu) / s``. The change of coordinates is affine and invertible so
hull membership is unchanged, but the LP becomes well conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial import polynomial as P

from . import nef
from .errors import DomainError, InfeasibleError
from .lmm import LocalMixtureModel, moment_vector
from .mixing import DiscreteMixing
from .nef import FamilySpec
from .simplex import phase_one

DEFAULT_TOL = 1e-7
DEFAULT_GRID = 201
_PRICE_TOL = 1e-13
_MAX_ROUNDS = 200


def membership_mode(family: FamilySpec) -> str:
    """Binomial families have an exact characterization; others only a
    sufficient condition."""
    return "iff" if family.kind == "binomial" else "sufficient-condition"


@dataclass(frozen=True)
class MomentCurve:
    """``m -> (m_1(m), ..., m_r(m))`` on a compact interval ``[lo, hi]``."""

    family: FamilySpec
    lo: float
    hi: float
    order: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("moment curve interval needs lo < hi")
        self.family.check_mean(np.array([self.lo, self.hi]), closed=True)
        if not 1 <= self.order <= nef.MAX_MOMENT_INDEX:
            raise ValueError(f"curve order must be in [1, {nef.MAX_MOMENT_INDEX}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, m) -> bool:
        return bool(np.all((np.asarray(m) >= self.lo) & (np.asarray(m) <= self.hi)))


def moment_curve_point(curve: MomentCurve, m) -> np.ndarray:
    """Raw moments ``(m_1, ..., m_r)`` at ``m``; a matrix for array ``m``."""
    if not curve.contains(m):
        raise DomainError(f"{m} is outside the curve interval [{curve.lo}, {curve.hi}]")
    rows = [nef.raw_moment(curve.family, m, i) for i in range(1, curve.order + 1)]
    return np.array(rows) if np.ndim(m) == 0 else np.stack(rows, axis=-1)


# -- scaled central coordinates ----------------------------------------------


def _central_coeffs(family: FamilySpec, mu: float, r: int, s: float) -> np.ndarray:
    """Row ``i`` holds the coefficients in ``t`` of ``E_{mu+s t}[(X-mu)^i] / s^i``.

    Built exactly in rationals from the raw-moment polynomials, then rounded.
    """
    raw = nef._raw_moment_polys(family)
    fmu, fs = Fraction(mu), Fraction(s)
    powers = [np.array([Fraction(1)], dtype=object)]
    for _ in range(r):
        powers.append(P.polymul(powers[-1], np.array([fmu, fs], dtype=object)))
    out = np.zeros((r + 1, r + 1))
    for i in range(r + 1):
        acc = np.array([Fraction(0)], dtype=object)
        for k in range(i + 1):
            # m_k(mu + s t) expanded over exact powers of (mu + s t)
            comp = np.array([Fraction(0)], dtype=object)
            for p, c in enumerate(raw[k]):
                comp = P.polyadd(comp, c * powers[p])
            acc = P.polyadd(acc, math.comb(i, k) * (-fmu) ** (i - k) * comp)
        acc = acc / fs**i
        coeffs = np.array([float(c) for c in acc])
        out[i, : min(coeffs.size, r + 1)] = coeffs[: r + 1]
    return out


def _raw_to_central(mu: float, s: float, raw) -> np.ndarray:
    """Affine map from raw moments ``(m_1..m_r)`` to scaled central ``(1, c_1..c_r)``."""
    v = np.concatenate([[1.0], np.asarray(raw, dtype=float)])
    return _transform(mu, s, v.size - 1) @ v


def _transform(mu, s, r):
    B = np.zeros((r + 1, r + 1))
    for i in range(r + 1):
        for k in range(i + 1):
            B[i, k] = math.comb(i, k) * (-mu) ** (i - k) / s**i
    return B


@dataclass
class _Curve:
    """A moment curve in scaled central coordinates about ``mu``."""

    family: FamilySpec
    mu: float
    r: int
    lo: float
    hi: float
    s: float = field(init=False)
    C: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        half = 0.5 * (self.hi - self.lo)
        self.s = math.sqrt(float(self.family.variance(self.mu)) + half**2)
        self.C = _central_coeffs(self.family, self.mu, self.r, self.s)
        self.dC = np.zeros_like(self.C)
        self.dC[:, :-1] = self.C[:, 1:] * np.arange(1, self.r + 1)

    @property
    def t_range(self):
        return (self.lo - self.mu) / self.s, (self.hi - self.mu) / self.s

    def cols(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([P.polyval(t, row) for row in self.C])

    def dcols(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([P.polyval(t, row) for row in self.dC])

    def target(self, lam) -> np.ndarray:
        """Scaled central moments of ``f + sum lam_k f^(k)`` at the center."""
        out = self.C[:, 0].copy()
        for k, lk in enumerate(lam, start=2):
            if k <= self.r:
                out += lk * math.factorial(k) * self.C[:, k] / self.s**k
        return out

    def to_theta(self, t):
        return self.mu + self.s * np.asarray(t)

    def price_max(self, y):
        """Maximize ``y @ cols(t)`` over the curve interval."""
        a, b = self.t_range
        poly = y @ self.C
        cand = [a, b]
        if poly.size > 2:
            roots = P.polyroots(P.polyder(poly))
            real = roots[np.abs(roots.imag) <= 1e-9 * (1 + np.abs(roots))].real
            cand.extend(real[(real > a) & (real < b)])
        cand = np.asarray(cand)
        vals = P.polyval(cand, poly)
        order = np.argsort(vals)[::-1]
        return cand[order], vals[order]


# -- hull membership ---------------------------------------------------------


@dataclass
class HullVerdict:
    """Outcome of a hull-membership test.

    ``certificate`` (for non-members) is ``z`` with
    ``z[0] + z[1:] @ M_r(m) <= 0`` for every ``m`` in the interval while
    ``z[0] + z[1:] @ target > 0``, expressed against raw moments.
    """

    member: bool
    atoms: DiscreteMixing | None
    certificate: np.ndarray | None
    residual: float  # raw-moment infinity-norm mismatch of the best fit
    mode: str
    rounds: int = 0

    def __bool__(self):
        return self.member

    def to_dict(self) -> dict:
        if self.member:
            return {"member": True, "atoms": self.atoms.to_dict()["atoms"], "mode": self.mode}
        return {"member": False, "certificate": [float(v) for v in self.certificate],
                "mode": self.mode}


def _solve_hull(curve: _Curve, target_c: np.ndarray, grid_size: int, extra_t=()):
    """Column generation. Returns active atoms ``t``, their weights, the last LP
    result and the number of LP rounds."""
    a, b = curve.t_range
    ts = np.unique(np.concatenate([np.linspace(a, b, grid_size), np.asarray(extra_t, dtype=float)]))
    ts = ts[(ts >= a) & (ts <= b)]
    A = curve.cols(ts)
    rounds = 0
    while True:
        res = phase_one(A, target_c, tol=1e-13)
        rounds += 1
        if res.objective <= 1e-14 or rounds >= _MAX_ROUNDS:
            break
        cand, vals = curve.price_max(res.duals)
        if vals[0] <= _PRICE_TOL * max(1.0, np.abs(res.duals).max()):
            break
        new = cand[vals > _PRICE_TOL][:4]
        new = new[np.min(np.abs(new[:, None] - ts[None, :]), axis=1) > 1e-15]
        if new.size == 0:
            break
        ts = np.concatenate([ts, new])
        A = np.hstack([A, curve.cols(new)])
    keep = res.w > 0
    return ts[keep], res.w[keep], res, rounds


def _polish(curve: _Curve, t, w, target_c, iters=60):
    """Gauss-Newton on atom locations and weights, kept inside the interval."""
    a, b = curve.t_range
    t, w = t.copy(), w.copy()

    def resid(t, w):
        return curve.cols(t) @ w - target_c

    f = resid(t, w)
    for _ in range(iters):
        if np.abs(f).max() <= 1e-15:
            break
        J = np.hstack([curve.cols(t), curve.dcols(t) * w])
        step = np.linalg.lstsq(J, -f, rcond=None)[0]
        k = t.size
        alpha, improved = 1.0, False
        for _ in range(30):
            t_new = np.clip(t + alpha * step[k:], a, b)
            w_new = np.maximum(w + alpha * step[:k], 0.0)
            f_new = resid(t_new, w_new)
            if np.abs(f_new).max() < np.abs(f).max():
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        t, w, f = t_new, w_new, f_new
        live = w > 0
        t, w = t[live], w[live]
        f = resid(t, w)
    return t, w


def _atoms_from(curve: _Curve, t, w) -> DiscreteMixing:
    w = np.asarray(w, dtype=float)
    theta = np.clip(curve.to_theta(t), curve.lo, curve.hi)
    return DiscreteMixing(tuple(theta), tuple(w / w.sum()))


def _raw_residual(family, Q: DiscreteMixing, target_raw) -> float:
    r = len(target_raw)
    got = np.array([sum(p * nef.raw_moment(family, th, i) for th, p in zip(Q.theta, Q.rho))
                    for i in range(1, r + 1)])
    return float(np.max(np.abs(got - target_raw)))


def _simplify(t, w, gap=1e-6, floor=1e-9):
    """Drop negligible weights and merge atoms closer than ``gap``."""
    keep = w > floor * w.sum()
    t, w = t[keep], w[keep]
    order = np.argsort(t)
    t, w = t[order], w[order]
    groups = np.concatenate([[0], np.cumsum(np.diff(t) > gap)])
    wt = np.bincount(groups, weights=w)
    return np.bincount(groups, weights=w * t) / wt, wt


def _hull_test(curve: _Curve, target_raw, target_c, tol, grid_size, extra_t=()) -> HullVerdict:
    t, w, lp, rounds = _solve_hull(curve, target_c, grid_size, extra_t)
    fits = []
    if w.size and w.sum() > 0:
        fits.append((t, w))
        fits.append(_polish(curve, t, w, target_c))
        ts, ws = _simplify(t, w)
        if ts.size < t.size:
            fits.append(_polish(curve, ts, ws, target_c))
    best, best_res = None, np.inf
    for tf, wf in fits:
        if not (wf.size and wf.sum() > 0):
            continue
        cand = _atoms_from(curve, tf, wf)
        cres = _raw_residual(curve.family, cand, target_raw)
        # prefer fewer atoms among fits that already meet the tolerance
        better = (cres <= tol and (best_res > tol or len(cand.theta) < len(best.theta))) \
            or (best_res > tol and cres < best_res)
        if better:
            best, best_res = cand, cres
    mode = membership_mode(curve.family)
    if best_res <= tol:
        return HullVerdict(True, best, None, best_res, mode, rounds)
    cert = _transform(curve.mu, curve.s, curve.r).T @ lp.duals
    return HullVerdict(False, None, cert, best_res, mode, rounds)


def is_true_local_mixture(model: LocalMixtureModel, M, tol: float = DEFAULT_TOL,
                          grid_size: int = DEFAULT_GRID) -> HullVerdict:
    """Is ``model`` a true local mixture with mixing support in ``M``?

    Parameters
    ----------
    model : LocalMixtureModel
    M : (float, float)
        Compact interval inside the closed mean domain.
    tol : float
        Allowed infinity-norm mismatch of the first ``r`` raw moments.
    grid_size : int
        Initial grid of candidate atoms; column generation adds more.
    """
    lo, hi = map(float, M)
    MomentCurve(model.family, lo, hi, model.order)
    curve = _Curve(model.family, model.mu, model.order, lo, hi)
    target_raw = moment_vector(model, model.order)
    extra = [0.0] if lo <= model.mu <= hi else []
    return _hull_test(curve, target_raw, curve.target(model.lam), tol, grid_size, extra)


def caratheodory_atoms(target, curve: MomentCurve, tol: float = DEFAULT_TOL,
                       grid_size: int = DEFAULT_GRID, grid=None) -> DiscreteMixing:
    """At most ``r + 1`` atoms on ``curve`` whose raw moments match ``target``.

    ``grid`` adds specific candidate atoms (in mean units) to the initial grid.
    """
    target = np.asarray(target, dtype=float)
    if target.size != curve.order:
        raise ValueError(f"target has {target.size} moments, curve order is {curve.order}")
    center = float(np.clip(target[0], curve.lo, curve.hi))
    c = _Curve(curve.family, center, curve.order, curve.lo, curve.hi)
    extra = [] if grid is None else list((np.asarray(grid, dtype=float) - center) / c.s)
    verdict = _hull_test(c, target, _raw_to_central(center, c.s, target), tol, grid_size, extra)
    if not verdict.member:
        raise InfeasibleError(f"target is outside the hull (residual {verdict.residual:.3e})")
    return verdict.atoms


# -- the Lambda region ---------------------------------------------------------


@dataclass(frozen=True)
class Extremals:
    """Two-point generators of a Lambda region. The last row is the zero vector."""

    mu1: np.ndarray
    mu2: np.ndarray
    rho: np.ndarray  # weight on mu1
    lam: np.ndarray  # rows (lambda_2, ..., lambda_r)

    def __len__(self):
        return self.lam.shape[0]

    def central(self) -> np.ndarray:
        """Rows of central moments ``E(M - mu)^j`` (lambda_j times j!)."""
        scale = np.array([math.factorial(j) for j in range(2, self.lam.shape[1] + 2)])
        return self.lam * scale


@dataclass(frozen=True)
class LambdaRegion:
    """Phi-images of mean-``mu`` mixings supported on ``[lo, hi]``."""

    family: FamilySpec
    mu: float
    lo: float
    hi: float
    order: int

    def __post_init__(self):
        if not (self.lo <= self.mu <= self.hi and self.lo < self.hi):
            raise ValueError("region interval must satisfy lo <= mu <= hi and lo < hi")
        self.family.check_mean(np.array([self.lo, self.hi]), closed=True)
        if not 2 <= self.order <= 8:
            raise ValueError("region order must be in [2, 8]")

    @property
    def mode(self) -> str:
        return membership_mode(self.family)

    def extremal_points(self, grid_size: int = 101) -> Extremals:
        """Phi of every two-point mixing on grid pairs ``mu1 <= mu <= mu2``,
        ``mu1 != mu2``, followed by the zero vector."""
        if grid_size < 2:
            raise ValueError("grid_size must be at least 2")
        grid = np.linspace(self.lo, self.hi, grid_size)
        left, right = grid[grid <= self.mu], grid[grid >= self.mu]
        m1, m2 = (a.ravel() for a in np.meshgrid(left, right, indexing="ij"))
        ok = m1 != m2
        m1, m2 = m1[ok], m2[ok]
        rho = (m2 - self.mu) / (m2 - m1)
        d1, d2 = m1 - self.mu, m2 - self.mu
        lam = np.stack([(rho * d1**j + (1 - rho) * d2**j) / math.factorial(j)
                        for j in range(2, self.order + 1)], axis=1)
        return Extremals(
            np.append(m1, self.mu), np.append(m2, self.mu), np.append(rho, 1.0),
            np.vstack([lam, np.zeros((1, self.order - 1))]))


def region_membership(region: LambdaRegion, lam, tol: float = DEFAULT_TOL,
                      grid_size: int = 101, extremals: Extremals | None = None) -> bool:
    """Is ``lam`` in the convex hull of the region's extremal generators?"""
    lam = np.asarray(lam, dtype=float)
    if lam.size != region.order - 1:
        raise ValueError(f"expected {region.order - 1} coefficients")
    ext = region.extremal_points(grid_size) if extremals is None else extremals
    s = max(region.hi - region.mu, region.mu - region.lo)
    scale = np.array([math.factorial(j) / s**j for j in range(2, region.order + 1)])
    A = np.vstack([np.ones(len(ext)), (ext.lam * scale).T])
    b = np.concatenate([[1.0], lam * scale])
    res = phase_one(A, b, tol=1e-13)
    fit = ext.lam.T @ res.w
    return bool(abs(res.w.sum() - 1) <= tol and np.max(np.abs(fit - lam), initial=0.0) <= tol)
