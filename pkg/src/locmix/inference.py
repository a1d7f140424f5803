"""Likelihood inference for local mixture models.

Covers the fiber log-likelihood at a fixed center (concave in ``lam``),
its Newton maximizer, profile fitting over the center, singularity lines,
the integrated likelihood over a Lambda region, and empirical checks of the
approximation rates for discrete and dispersion mixings.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import lmm, mixing, nef
from .errors import FitFailure, IterationLimitError, SingularityError, UnsupportedError
from .lmm import LocalMixtureModel
from .nef import FamilySpec
from .region import LambdaRegion
from .simplex import solve_lp

GRAD_TOL = 1e-8
MAX_NEWTON = 500
ARMIJO_C = 1e-4
BACKTRACK = 0.5
TO_BOUNDARY = 0.95
MIN_STEP = 1e-12
DECREMENT_TOL = 1e-10
C_MIN = 1e-12
FACET_TOL = 1e-10
COND_LIMIT = 1e8


def n_workers(workers: int | None = None) -> int:
    """Worker count: explicit value, else ``LOCMIX_THREADS``, else 1."""
    if workers is None:
        workers = int(os.environ.get("LOCMIX_THREADS", "1") or 1)
    return max(1, int(workers))


def _pmap(func, items, workers):
    items = list(items)
    w = n_workers(workers)
    if w == 1 or len(items) < 2:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(func, items))


# -- data --------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    """Observations with optional nonnegative weights (default 1).

    Zero-weight observations are dropped; they carry no likelihood.
    """

    x: tuple
    weights: tuple | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("empty sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("observations must be finite")
        w = np.ones_like(x) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.shape != x.shape:
            raise ValueError("weights and observations differ in length")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        keep = w > 0
        if not np.any(keep):
            raise ValueError("empty sample")
        object.__setattr__(self, "x", tuple(x[keep].tolist()))
        object.__setattr__(self, "weights", tuple(w[keep].tolist()))

    @property
    def xs(self) -> np.ndarray:
        return np.asarray(self.x)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)

    def __len__(self):
        return len(self.x)

    def aggregated(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct values (sorted) and their total weights."""
        u, inv = np.unique(self.xs, return_inverse=True)
        return u, np.bincount(inv, weights=self.w)

    def mean(self) -> float:
        return float(np.average(self.xs, weights=self.w))

    def sd(self) -> float:
        return float(math.sqrt(np.average((self.xs - self.mean()) ** 2, weights=self.w)))


def unmixed_fit(family: FamilySpec, data: Sample) -> tuple[float, float]:
    """MLE of the plain family (the weighted mean) and its log-likelihood."""
    family.check_support(data.xs)
    lo, hi = family.mean_domain
    mu = float(np.clip(data.mean(), np.nextafter(lo, hi), np.nextafter(hi, lo)))
    u, w = data.aggregated()
    return mu, float(w @ nef.log_density(family, u, mu))


# -- fibers --------------------------------------------------------------------


@dataclass
class FiberProblem:
    """Log-likelihood in ``lam`` at a fixed center ``mu0``."""

    family: FamilySpec
    order: int
    mu0: float
    data: Sample
    u: np.ndarray = field(init=False, repr=False)
    wts: np.ndarray = field(init=False, repr=False)
    H: np.ndarray = field(init=False, repr=False)
    H_mag: np.ndarray = field(init=False, repr=False)
    base: float = field(init=False)

    def __post_init__(self):
        if not lmm.MIN_ORDER <= self.order <= lmm.MAX_ORDER:
            raise UnsupportedError(f"order must be in [{lmm.MIN_ORDER}, {lmm.MAX_ORDER}]")
        self.family.check_mean(self.mu0)
        self.family.check_support(self.data.xs)
        self.u, self.wts = self.data.aggregated()
        # rows: observed points, columns: h_2 .. h_r
        self.H = nef.deriv_values(self.family, self.mu0, self.u, self.order)[1:].T
        self.H_mag = nef.deriv_magnitudes(self.family, self.mu0, self.u, self.order)[1:].T
        self.base = float(self.wts @ nef.log_density(self.family, self.u, self.mu0))

    @property
    def dim(self) -> int:
        return self.order - 1

    def constraints(self, lam) -> np.ndarray:
        return 1.0 + self.H @ np.asarray(lam, dtype=float)

    def model(self, lam) -> LocalMixtureModel:
        return LocalMixtureModel(self.family, self.order, self.mu0, tuple(np.asarray(lam, dtype=float)))


def fiber_loglik(p: FiberProblem, lam) -> float:
    """``sum w_i log g(x_i; mu0, lam)``; ``-inf`` when some observed ``g <= 0``."""
    c = p.constraints(lam)
    if np.any(c <= 0):
        return -math.inf
    return p.base + float(p.wts @ np.log(c))


def is_singular(p: FiberProblem, lam) -> bool:
    return bool(np.any(p.constraints(lam) <= 0))


def fiber_grad_hess(p: FiberProblem, lam) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient and Hessian of :func:`fiber_loglik`."""
    c = p.constraints(lam)
    if np.any(c <= 0):
        raise SingularityError("lambda is outside the fiber's likelihood domain")
    a = p.H / c[:, None]
    g = a.T @ p.wts
    Hs = -(a * p.wts[:, None]).T @ a
    return g, 0.5 * (Hs + Hs.T)


@dataclass
class FiberFit:
    """Outcome of :func:`fiber_mle`.

    ``status`` is ``"stationary"`` (``lam`` is the maximizer) or
    ``"boundary-divergent"`` (the likelihood increases without bound along
    ``direction`` and no maximizer exists).
    """

    status: str
    lam: np.ndarray
    loglik: float
    direction: np.ndarray | None = None
    iterations: int = 0
    grad_norm: float = math.nan
    condition: float = 1.0

    @property
    def stationary(self) -> bool:
        return self.status == "stationary"


def recession_direction(p: FiberProblem, tol: float = 1e-9) -> np.ndarray | None:
    """Direction ``d`` with ``H d >= 0`` and ``w @ H d > 0``, if one exists.

    Along such a direction every observed constraint stays positive while the
    log-likelihood grows without bound.
    """
    # d = d+ - d-, |d_i| <= 1; maximize w @ H d subject to -H d <= 0
    k = p.dim
    Hx = np.hstack([p.H, -p.H])
    A_ub = np.vstack([-Hx, np.eye(2 * k)])
    b_ub = np.concatenate([np.zeros(len(p.u)), np.ones(2 * k)])
    res = solve_lp(-(p.wts @ Hx), A_ub=A_ub, b_ub=b_ub)
    scale = float(p.wts @ np.abs(p.H).sum(axis=1))
    if res.status == "optimal" and -res.fun > tol * max(scale, 1.0):
        d = res.x[:k] - res.x[k:]
        return d / np.linalg.norm(d)
    return None


def _newton_direction(g, Hs):
    try:
        d = np.linalg.solve(-Hs, g)
        if np.all(np.isfinite(d)) and g @ d > 0:
            return d
    except np.linalg.LinAlgError:
        pass
    d = np.linalg.lstsq(-Hs, g, rcond=1e-12)[0]
    return d if g @ d > 0 else g


def constraint_condition(p: FiberProblem, lam) -> float:
    """Rounding-error amplification of the observed constraint values:
    ``max_j (1 + sum_i |lam_i| hbar_i(x_j)) / (1 + sum_i lam_i h_i(x_j))``,
    where ``hbar`` bounds the terms summed in evaluating ``h``."""
    lam = np.asarray(lam, dtype=float)
    return float(np.max((1.0 + p.H_mag @ np.abs(lam)) / p.constraints(lam)))


def _finish(p, lam, ll, it, gn):
    cond = constraint_condition(p, lam)
    status = "stationary" if cond <= COND_LIMIT else "ill-conditioned"
    return FiberFit(status, lam, ll, None, it, gn, cond)


def fiber_mle(p: FiberProblem, lam0=None, max_iter: int = MAX_NEWTON) -> FiberFit:
    """Maximize the fiber log-likelihood by damped Newton.

    Steps are capped at 95% of the distance to the nearest observed-point
    facet, then halved until the Armijo condition holds. An unbounded
    likelihood is detected up front by an LP for a recession direction.
    Maximizers whose constraint values carry rounding errors above
    ``1 / COND_LIMIT`` relative are flagged ``"ill-conditioned"``.
    """
    lam = np.zeros(p.dim) if lam0 is None else np.asarray(lam0, dtype=float).copy()
    ll = fiber_loglik(p, lam)
    if not np.isfinite(ll):
        raise SingularityError("starting point is outside the likelihood domain")
    d_rec = recession_direction(p)
    if d_rec is not None:
        return FiberFit("boundary-divergent", lam, ll, d_rec)
    gn = math.nan
    for it in range(max_iter):
        g, Hs = fiber_grad_hess(p, lam)
        gn = float(np.abs(g).max())
        if gn <= GRAD_TOL:
            return _finish(p, lam, ll, it, gn)
        d = _newton_direction(g, Hs)
        c, hd = p.constraints(lam), p.H @ d
        neg = hd < 0
        alpha = min(1.0, TO_BOUNDARY * float(np.min(-c[neg] / hd[neg]))) if np.any(neg) else 1.0
        slope = float(g @ d)
        if slope <= DECREMENT_TOL * max(1.0, abs(ll)):
            # inside the quadratic region the increase is below the rounding
            # level of ll, so line-search comparisons are meaningless
            trial = lam + alpha * d
            ll_new = fiber_loglik(p, trial)
            if not np.isfinite(ll_new):
                break
        else:
            while alpha >= MIN_STEP:
                trial = lam + alpha * d
                ll_new = fiber_loglik(p, trial)
                if ll_new >= ll + ARMIJO_C * alpha * slope:
                    break
                alpha *= BACKTRACK
            else:
                if c.min() < 1e-8:
                    return FiberFit("boundary-divergent", lam, ll, d / np.linalg.norm(d), it, gn)
                break
        lam, ll = trial, ll_new
    best = FiberFit("iteration-limit", lam, ll, None, max_iter, gn, constraint_condition(p, lam))
    raise IterationLimitError(f"fiber Newton stopped without convergence (|grad| = {gn:.2e})",
                              best=best)


# -- profile fitting -----------------------------------------------------------


@dataclass
class ProfilePoint:
    mu: float
    status: str
    loglik: float
    lam: np.ndarray


@dataclass
class ProfileFit:
    mu: float
    lam: np.ndarray
    loglik: float
    profile: list[ProfilePoint]
    bracket: tuple[float, float]

    def to_model(self, family, order) -> LocalMixtureModel:
        return LocalMixtureModel(family, order, self.mu, tuple(self.lam))


def default_bracket(family: FamilySpec, data: Sample, margin: float = 1e-3) -> tuple[float, float]:
    """Sample mean plus or minus 4 sample sd, clipped inside the mean domain."""
    lo, hi = family.mean_domain
    m, s = data.mean(), max(data.sd(), 1e-3)
    return max(lo + margin, m - 4 * s), min(hi - margin, m + 4 * s)


def _profile_point(family, data, r, mu) -> ProfilePoint:
    try:
        fit = fiber_mle(FiberProblem(family, r, float(mu), data))
    except IterationLimitError as exc:
        return ProfilePoint(float(mu), "iteration-limit", exc.best.loglik, exc.best.lam)
    # a divergent fiber has an unbounded likelihood
    ll = math.inf if fit.status == "boundary-divergent" else fit.loglik
    return ProfilePoint(float(mu), fit.status, ll, fit.lam)


def profile_fit(family: FamilySpec, data: Sample, r: int, bracket=None, grid: int = 101,
                xtol: float = 1e-6, workers: int | None = None) -> ProfileFit:
    """Maximize the profile likelihood ``max_lam l(mu, lam)`` over ``mu``.

    A coarse grid over the bracket locates the best stationary point; a
    bounded Brent search (golden-section with parabolic steps) refines it.
    Grid points whose fiber is boundary-divergent are reported and skipped.
    """
    family.check_support(data.xs)
    lo, hi = default_bracket(family, data) if bracket is None else map(float, bracket)
    mus = np.linspace(lo, hi, grid)
    prof = _pmap(lambda m: _profile_point(family, data, r, m), mus, workers)
    good = [i for i, pt in enumerate(prof) if pt.status == "stationary"]
    if not good:
        raise FitFailure("no stationary fiber maximizer on the profile grid")
    k = max(good, key=lambda i: prof[i].loglik)
    a, b = mus[max(k - 1, 0)], mus[min(k + 1, grid - 1)]

    cache = {}
    _PENALTY = np.finfo(float).max / 4

    def neg(m):
        pt = _profile_point(family, data, r, m)
        cache[m] = pt
        return -pt.loglik if pt.status == "stationary" else _PENALTY

    best = prof[k]
    if b > a:
        res = optimize.minimize_scalar(neg, bounds=(a, b), method="bounded",
                                       options={"xatol": xtol, "maxiter": 500})
        cand = cache.get(res.x) or _profile_point(family, data, r, res.x)
        if cand.status == "stationary" and cand.loglik >= best.loglik:
            best = cand
    return ProfileFit(best.mu, best.lam, best.loglik, prof, (lo, hi))


def fisher_information(model: LocalMixtureModel) -> np.ndarray:
    """Fisher information of ``(mu, lam_2..lam_r)`` at ``model``.

    Uses ``d g / d mu = f (h_1 + sum lam_i h_{i+1})`` and
    ``d g / d lam_i = f h_i``; requires order at most 7.
    """
    fam, mu, r = model.family, model.mu, model.order
    if r + 1 > nef.MAX_DERIV_ORDER:
        raise UnsupportedError("Fisher information needs order <= 7")
    lam = model.lam_array

    def integrand(x):
        H = nef.deriv_values(fam, mu, x, r + 1)
        c = 1.0 + lam @ H[1:r]
        dmu = H[0] + lam @ H[2 : r + 1]
        A = np.vstack([dmu, H[1:r]])
        return A[:, None, :] * A[None, :, :] / c

    return nef.expect(fam, mu, integrand)


# -- singularity lines -------------------------------------------------------


@dataclass
class SingularityLine:
    """``coeffs @ (1, lam_2, ..., lam_r) = 0``: the observed density at ``x`` vanishes.

    ``clearance`` is the minimum of the constraint over the hard-boundary
    polytope: positive when the line stays clear of it, zero when it touches.
    """

    x: float
    coeffs: np.ndarray
    on_facet: bool | None
    clearance: float | None

    @property
    def clear_of_boundary(self) -> bool | None:
        return None if self.clearance is None else self.clearance > FACET_TOL

    def to_dict(self) -> dict:
        return {"x": self.x, "coeffs": [float(c) for c in self.coeffs], "on_facet": self.on_facet,
                "clearance": self.clearance}


def _normalized(rows):
    rows = np.atleast_2d(rows)
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def singularity_lines(p: FiberProblem, boundary=None) -> list[SingularityLine]:
    """Lines for the distinct observed minimum and maximum.

    For finite support the lines are compared with the hard boundary at
    ``mu0``: ``on_facet`` when the normalized coefficients are within 1e-10
    of a non-redundant facet row.
    """
    ext = sorted({float(p.u.min()), float(p.u.max())})
    rows = {x: np.concatenate([[1.0], p.H[np.searchsorted(p.u, x)]]) for x in ext}
    out = []
    if p.family.support_kind != "finite":
        return [SingularityLine(x, rows[x], None, None) for x in ext]
    hb = lmm.hard_boundary(p.family, p.mu0, p.order) if boundary is None else boundary
    facets = _normalized(hb.coeffs[~hb.redundant])
    k = p.dim
    A = hb.coeffs[:, 1:]
    A_ub = -np.hstack([A, -A])
    b_ub = hb.coeffs[:, 0]
    for x in ext:
        row = rows[x]
        dist = np.min(np.abs(facets - _normalized(row)).max(axis=1))
        lp = solve_lp(np.concatenate([row[1:], -row[1:]]), A_ub=A_ub, b_ub=b_ub)
        clearance = float(row[0] + lp.fun) if lp.status == "optimal" else -math.inf
        out.append(SingularityLine(x, row, bool(dist <= FACET_TOL), max(clearance, 0.0)))
    return out


# -- integrated likelihood -----------------------------------------------------


PRIOR_NOTE = ("lambda ~ Dirichlet(1,...,1) combination of K=min(64, #generators) randomly "
              "chosen two-point extremals of Lambda(M(mu)); one instantiation of the prior")


@dataclass
class MarginalCurve:
    mu: np.ndarray
    log_integrated: np.ndarray
    mc_se: np.ndarray
    log_unmixed: np.ndarray
    discard_frac: np.ndarray
    n_draws: int
    meta: dict

    def rows(self):
        return zip(self.mu, self.log_integrated, self.mc_se, self.log_unmixed, self.discard_frac)


def _log_mean_jackknife(L: np.ndarray) -> tuple[float, float]:
    n = L.size
    M = L.max()
    e = np.exp(L - M)
    S = e.sum()
    est = M + math.log(S) - math.log(n)
    if n < 2:
        return est, math.inf
    rest = np.maximum(S - e, np.finfo(float).tiny)
    loo = M + np.log(rest) - math.log(n - 1)
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return est, se


def _integrated_at(family, u, w, r, mu, eps, n_draws, grid_size, seed_seq, c_min, K):
    lo, hi = family.mean_domain
    reg = LambdaRegion(family, float(mu), max(lo, mu - eps), min(hi, mu + eps), r)
    ext = reg.extremal_points(grid_size)
    rng = np.random.default_rng(seed_seq)
    k = min(K, len(ext))
    idx = np.stack([rng.choice(len(ext), size=k, replace=False) for _ in range(n_draws)])
    dir_w = rng.dirichlet(np.ones(k), size=n_draws)
    lam = np.einsum("dk,dkj->dj", dir_w, ext.lam[idx])
    f = nef.density(family, u, mu)
    H = nef.deriv_values(family, mu, u, r)[1:]
    g = f[None, :] * (1.0 + lam @ H)
    ok = np.all(g > c_min, axis=1)
    log_unmixed = float(w @ np.log(f))
    if not np.any(ok):
        return -math.inf, math.nan, log_unmixed, 1.0
    L = np.log(g[ok]) @ w
    est, se = _log_mean_jackknife(L)
    return est, se, log_unmixed, 1.0 - ok.mean()


def integrated_likelihood(family: FamilySpec, data: Sample, r: int, mu_grid, eps: float,
                          n_draws: int = 4096, seed: int = 0, grid_size: int = 41,
                          c_min: float = C_MIN, K: int = 64,
                          workers: int | None = None) -> MarginalCurve:
    """Log of the likelihood averaged over ``lam`` in ``Lambda([mu - eps, mu + eps])``.

    Draws with ``g(x_i) <= c_min`` at some observation are discarded and
    their fraction reported. Each grid point gets its own child seed, so the
    curve does not depend on evaluation order or worker count.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    family.check_support(data.xs)
    mus = np.asarray(mu_grid, dtype=float)
    family.check_mean(mus)
    u, w = data.aggregated()
    seeds = np.random.SeedSequence(seed).spawn(mus.size)
    out = _pmap(lambda a: _integrated_at(family, u, w, r, a[0], eps, n_draws, grid_size, a[1],
                                         c_min, K), zip(mus, seeds), workers)
    est, se, un, disc = (np.array(v) for v in zip(*out))
    meta = {"prior": PRIOR_NOTE, "eps": eps, "n_draws": n_draws, "seed": seed,
            "grid_size": grid_size, "c_min": c_min, "K": K}
    return MarginalCurve(mus, est, se, un, disc, n_draws, meta)


# -- rate checks -----------------------------------------------------------------


@dataclass
class RateResult:
    slope: float
    expected: float
    eps: np.ndarray
    errors: np.ndarray
    usable: np.ndarray
    inconclusive: bool

    def within(self, tol: float) -> bool:
        return not self.inconclusive and abs(self.slope - self.expected) <= tol


ERROR_FLOOR = 1e-13


def _fit_slope(eps, errs, expected) -> RateResult:
    eps, errs = np.asarray(eps, dtype=float), np.asarray(errs, dtype=float)
    usable = errs > ERROR_FLOOR
    if usable.sum() < 3:
        return RateResult(math.nan, expected, eps, errs, usable, True)
    slope = float(np.polyfit(np.log(eps[usable]), np.log(errs[usable]), 1)[0])
    return RateResult(slope, expected, eps, errs, usable, False)


def _sup_grid(family, mu, spread):
    if family.support_kind == "real":
        return np.linspace(mu - 12 - spread, mu + 12 + spread, 4001)
    return family.support_points(mu)


def _check_schedule(eps):
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("eps schedule must be positive and strictly decreasing")
    return eps


def rate_check_discrete(family: FamilySpec, mu: float, r: int, eps_schedule, seed=None,
                        a: float = 2.0, b: float = 1.0, symmetric: bool = False) -> RateResult:
    """Slope of ``log sup_x |mixture - localized|`` against ``log eps``.

    The mixing has atoms ``mu + a sqrt(eps V(mu))`` and ``mu - b sqrt(eps V(mu))``
    with mean ``mu``. A seed draws the asymmetry ratio ``a / b`` from
    ``[1.5, 3]`` instead of using the defaults.
    """
    eps = _check_schedule(eps_schedule)
    if symmetric:
        a = b = 1.0
    elif seed is not None:
        a, b = float(np.random.default_rng(seed).uniform(1.5, 3.0)), 1.0
    sigma = math.sqrt(float(family.variance(mu)))
    errs = []
    for e in eps:
        d = math.sqrt(e) * sigma
        Q = mixing.two_point(mu, mu + a * d, mu - b * d)
        x = _sup_grid(family, mu, (a + b) * d)
        model = mixing.localize(family, Q, r)
        errs.append(float(np.max(np.abs(mixing.exact_mixture_density(family, Q, x)
                                        - lmm.lmm_density(model, x)))))
    return _fit_slope(eps, errs, (r + 1) / 2)


def rate_check_laplace(family: FamilySpec, deviance, vartheta: float, r: int, eps_schedule,
                       oracle=None, points: int = 161) -> RateResult:
    """Slope for the Laplace-type localization of a dispersion mixing.

    ``oracle(x, eps)`` replaces the quadrature mixture density when given.
    """
    eps = _check_schedule(eps_schedule)
    errs = []
    for e in eps:
        D = mixing.DispersionMixing(family, deviance, float(e), vartheta)
        model = mixing.laplace_localize(family, D, r)
        if family.support_kind == "real":
            x = np.linspace(vartheta - 8, vartheta + 8, points)
        else:
            x = family.support_points(vartheta)
        exact = (oracle(x, e) if oracle is not None
                 else mixing.continuous_mixture_density(family, D, x))
        errs.append(float(np.max(np.abs(exact - lmm.lmm_density(model, x)))))
    return _fit_slope(eps, errs, r // 2 + 1)
