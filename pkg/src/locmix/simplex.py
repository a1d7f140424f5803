"""Dense two-phase simplex with Bland's rule.

Small LPs only (a handful of rows, a few hundred columns). Problems are

    minimize  c @ x   subject to  A_eq @ x = b_eq,  A_ub @ x <= b_ub,  x >= 0.

Phase one returns a Farkas certificate when the constraints are infeasible,
which the convex-hull routines use as a separating functional.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None
    fun: float
    basis: np.ndarray
    #: Equality-form duals y (rows of A_eq, then A_ub). At an optimum the
    #: reduced costs c - A^T y are >= 0.
    duals: np.ndarray | None = None
    #: For infeasible problems: y with A^T y <= 0 (and y <= 0 on the
    #: inequality rows) and b^T y > 0.
    farkas: np.ndarray | None = None
    residual: float = 0.0
    iterations: int = 0
    ray: np.ndarray | None = field(default=None, repr=False)


class _Tableau:
    def __init__(self, A, b, tol):
        m, n = A.shape
        self.m, self.n, self.tol = m, n, tol
        self.flip = np.where(b < 0, -1.0, 1.0)
        T = np.zeros((m + 1, n + m + 1))
        T[:m, :n] = A * self.flip[:, None]
        T[:m, n : n + m] = np.eye(m)
        T[:m, -1] = b * self.flip
        self.T = T
        self.basis = np.arange(n, n + m)
        self.iterations = 0

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.iterations += 1

    def run(self, allowed, max_iter):
        """Iterate to optimality over ``allowed`` columns. Returns status and
        the entering column when unbounded."""
        T, tol = self.T, self.tol
        while self.iterations < max_iter:
            cbar = T[-1, :-1]
            cand = np.flatnonzero((cbar < -tol) & allowed)
            if cand.size == 0:
                return "optimal", None
            j = cand[0]
            colj = T[:-1, j]
            pos = colj > tol
            if not np.any(pos):
                return "unbounded", j
            ratios = np.full(self.m, np.inf)
            ratios[pos] = T[:-1, -1][pos] / colj[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
            r = ties[np.argmin(self.basis[ties])]
            self.pivot(r, j)
        raise RuntimeError("simplex iteration limit reached")

    def primal(self):
        x = np.zeros(self.n + self.m)
        x[self.basis] = self.T[:-1, -1]
        return x

    def binv(self):
        return self.T[:-1, self.n : self.n + self.m]


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, tol=1e-10, feas_tol=1e-9,
             max_iter=20000) -> LPResult:
    c = np.asarray(c, dtype=float)
    nvar = c.size
    blocks, rhs = [], []
    n_ub = 0
    if A_eq is not None and len(A_eq):
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        blocks.append(np.hstack([A_eq, np.zeros((A_eq.shape[0], 0))]))
        rhs.append(np.asarray(b_eq, dtype=float))
    if A_ub is not None and len(A_ub):
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
        n_ub = A_ub.shape[0]
        rhs.append(np.asarray(b_ub, dtype=float))
    n_eq = sum(b.shape[0] for b in blocks)
    m = n_eq + n_ub
    ntot = nvar + n_ub
    A = np.zeros((m, ntot))
    if n_eq:
        A[:n_eq, :nvar] = blocks[0]
    if n_ub:
        A[n_eq:, :nvar] = A_ub
        A[n_eq:, nvar:] = np.eye(n_ub)
    b = np.concatenate(rhs) if rhs else np.zeros(0)

    tab = _Tableau(A, b, tol)
    T = tab.T
    # phase one: minimize the sum of artificials
    T[-1, :ntot] = -T[:m, :ntot].sum(axis=0)
    T[-1, -1] = -T[:m, -1].sum()
    allowed = np.zeros(ntot + m, dtype=bool)
    allowed[:ntot] = True
    tab.run(allowed, max_iter)
    residual = -T[-1, -1]
    y1 = (1.0 - T[-1, ntot : ntot + m]) * tab.flip
    if residual > feas_tol:
        return LPResult("infeasible", None, np.nan, tab.basis.copy(), farkas=y1,
                        residual=residual, iterations=tab.iterations)

    # drive zero-level artificials out of the basis where possible
    for r in range(m):
        if tab.basis[r] >= ntot:
            nz = np.flatnonzero(np.abs(T[r, :ntot]) > tol)
            if nz.size:
                tab.pivot(r, nz[0])

    cost = np.concatenate([c, np.zeros(n_ub + m)])
    cb = cost[tab.basis]
    T[-1, :-1] = cost - cb @ T[:m, :-1]
    T[-1, -1] = -cb @ T[:m, -1]
    status, enter = tab.run(allowed, max_iter)
    full = tab.primal()
    x = full[:nvar]
    if status == "unbounded":
        ray = np.zeros(ntot + m)
        ray[enter] = 1.0
        ray[tab.basis] = -T[:m, enter]
        return LPResult("unbounded", x, -np.inf, tab.basis.copy(), residual=residual,
                        iterations=tab.iterations, ray=ray[:nvar])
    y = (cost[tab.basis] @ tab.binv()) * tab.flip
    return LPResult("optimal", x, float(c @ x), tab.basis.copy(), duals=y,
                    residual=residual, iterations=tab.iterations)


@dataclass
class PhaseOne:
    """Result of the minimum-residual feasibility problem ``A w = b, w >= 0``."""

    w: np.ndarray
    residual: np.ndarray  # signed A w - b
    objective: float  # sum of artificials (L1 residual)
    duals: np.ndarray  # y with objective = b @ y and A^T y <= 0 at optimum
    basis: np.ndarray


def phase_one(A, b, tol=1e-12, max_iter=20000) -> PhaseOne:
    """Minimize the L1 infeasibility of ``A w = b`` over ``w >= 0``.

    At the optimum the duals satisfy ``A.T @ y <= tol``; when the objective is
    positive, ``y`` is a Farkas certificate (``b @ y > 0``).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    tab = _Tableau(A, b, tol)
    T = tab.T
    T[-1, :n] = -T[:m, :n].sum(axis=0)
    T[-1, -1] = -T[:m, -1].sum()
    allowed = np.zeros(n + m, dtype=bool)
    allowed[:n] = True
    tab.run(allowed, max_iter)
    full = tab.primal()
    w = full[:n]
    y = (1.0 - T[-1, n : n + m]) * tab.flip
    return PhaseOne(w=w, residual=A @ w - b, objective=float(-T[-1, -1]), duals=y,
                    basis=tab.basis.copy())
