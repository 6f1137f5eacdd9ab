"""Long-only minimization of ``a * w'mu + T * sqrt(w' Sigma w)``.

Feasible set: the unit simplex, with some weights pinned to zero and an
optional linear carbon cap ``c'w <= cap``. The objective is convex for
``T > 0`` and ``Sigma`` positive definite, so any KKT point is the global
minimum; :func:`kkt_residual` measures how far a point is from one.

The solver runs a feasible-start log-barrier Newton method to locate the
optimal face, then polishes with a primal active-set Newton method so that
zero weights are exactly zero and active constraints hold to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, InfeasibleProblem

VOL_FLOOR = 1e-16


class Status(str, Enum):
    CONVERGED = "converged"
    ITERATION_LIMIT = "iteration_limit"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class Tolerances:
    kkt_tol: float = 1e-6
    constraint_tol: float = 1e-8
    max_iterations: int = 500


@dataclass(frozen=True, eq=False)
class PortfolioProblem:
    """Objective data plus constraints.

    ``mean_sign`` is -1 for the loss convention and +1 for the literal form;
    ``multiplier`` is the VaR or ES volatility multiplier and must be positive.
    ``pinned`` lists asset indices forced to zero. ``carbon``/``cap`` add the
    constraint ``carbon @ w <= cap``.
    """

    mu: np.ndarray
    sigma: np.ndarray
    multiplier: float
    mean_sign: float = -1.0
    pinned: frozenset = field(default_factory=frozenset)
    carbon: np.ndarray | None = None
    cap: float | None = None

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        n = mu.shape[0]
        if mu.ndim != 1 or sigma.shape != (n, n):
            raise DimensionMismatch(f"mean {mu.shape} and covariance {sigma.shape} disagree")
        if not self.multiplier > 0:
            raise ValueError("volatility multiplier must be positive for a convex problem "
                             "(VaR needs p > 0.5)")
        if self.mean_sign not in (-1.0, 1.0, -1, 1):
            raise ValueError("mean_sign must be -1 or +1")
        pinned = frozenset(int(i) for i in self.pinned)
        if any(i < 0 or i >= n for i in pinned):
            raise ValueError("pinned index out of range")
        if len(pinned) > n - 1:
            raise ValueError(f"at least one of {n} weights must stay unpinned")
        carbon = None
        if (self.carbon is None) != (self.cap is None):
            raise ValueError("carbon and cap must be given together")
        if self.carbon is not None:
            carbon = np.asarray(self.carbon, dtype=float)
            if carbon.shape != (n,):
                raise DimensionMismatch(f"carbon vector {carbon.shape} for {n} assets")
            if np.any(carbon < 0):
                raise ValueError("carbon values must be non-negative")
            if not self.cap > 0:
                raise ValueError("carbon cap must be positive")
            free = np.array(sorted(set(range(n)) - pinned))
            if carbon[free].min() > self.cap:
                raise InfeasibleProblem(
                    f"carbon cap infeasible: cap {self.cap:.6g} is below the smallest "
                    f"unpinned footprint {carbon[free].min():.6g}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "multiplier", float(self.multiplier))
        object.__setattr__(self, "mean_sign", float(self.mean_sign))
        object.__setattr__(self, "pinned", pinned)
        object.__setattr__(self, "carbon", carbon)
        object.__setattr__(self, "cap", None if self.cap is None else float(self.cap))

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def free(self) -> np.ndarray:
        return np.array([i for i in range(self.n) if i not in self.pinned], dtype=int)

    @property
    def has_cap(self) -> bool:
        return self.carbon is not None

    def objective(self, w) -> float:
        w = np.asarray(w, dtype=float)
        vol = math.sqrt(max(float(w @ self.sigma @ w), 0.0))
        return self.mean_sign * float(w @ self.mu) + self.multiplier * vol

    def gradient(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        sw = self.sigma @ w
        vol = max(math.sqrt(max(float(w @ sw), 0.0)), VOL_FLOOR)
        return self.mean_sign * self.mu + self.multiplier * sw / vol


@dataclass(frozen=True)
class Solution:
    weights: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    status: Status


# ----------------------------------------------------------------- projection

def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-and-threshold)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _project_simplex_cap(y: np.ndarray, c: np.ndarray, cap: float) -> np.ndarray:
    """Projection onto the simplex intersected with ``c @ x <= cap``.

    ``c @ proj_simplex(y - eta * c)`` is continuous and nonincreasing in
    ``eta``; the multiplier is bracketed, bisected, then solved exactly on the
    identified support.
    """
    x = _project_simplex(y)
    if c @ x <= cap:
        return x
    lo, hi = 0.0, 1.0 / max(np.abs(c).max(), 1e-300)
    for _ in range(2000):
        if c @ _project_simplex(y - hi * c) <= cap:
            break
        lo, hi = hi, 2.0 * hi
    else:  # pragma: no cover - unreachable when min(c) <= cap
        raise InfeasibleProblem("carbon cap infeasible")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if c @ _project_simplex(y - mid * c) <= cap:
            hi = mid
        else:
            lo = mid
    best = _project_simplex(y - hi * c)
    # exact solve of the two equalities on the support
    for support_from in (best, _project_simplex(y - lo * c)):
        S = support_from > 0
        m = S.sum()
        if m < 2:
            continue
        sc, sy, scc, scy = c[S].sum(), y[S].sum(), c[S] @ c[S], c[S] @ y[S]
        det = sc * sc - m * scc
        if abs(det) < 1e-300:
            continue
        eta = (sc * (sy - 1.0) - m * (scy - cap)) / det
        nu = (sy - 1.0 - eta * sc) / m
        cand = np.maximum(y - eta * c - nu, 0.0)
        if (eta >= 0 and np.array_equal(cand > 0, S) and abs(cand.sum() - 1.0) <= 1e-13
                and c @ cand <= cap * (1 + 1e-14)):
            return cand
    return best


def _is_feasible(w: np.ndarray, problem: PortfolioProblem, tol: float) -> bool:
    if w.shape != (problem.n,) or not np.all(np.isfinite(w)):
        return False
    if w.min() < 0 or abs(w.sum() - 1.0) > tol:
        return False
    if problem.pinned and np.any(w[list(problem.pinned)] != 0):
        return False
    if problem.has_cap and problem.carbon @ w > problem.cap + tol:
        return False
    return True


def project_feasible(w0, problem: PortfolioProblem) -> np.ndarray:
    """Euclidean projection of ``w0`` onto the problem's feasible set."""
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (problem.n,):
        raise DimensionMismatch(f"start vector {w0.shape} for {problem.n} assets")
    if _is_feasible(w0, problem, 1e-12):
        return w0.copy()
    free = problem.free
    y = np.nan_to_num(w0[free])
    if problem.has_cap:
        x = _project_simplex_cap(y, problem.carbon[free], problem.cap)
    else:
        x = _project_simplex(y)
    out = np.zeros(problem.n)
    out[free] = x
    return out


def kkt_residual(w, problem: PortfolioProblem) -> float:
    """Norm of the projected-gradient step ``w - P(w - grad f(w))``.

    It vanishes exactly at points where the gradient is balanced by the
    equality multiplier and nonnegative multipliers of the active bound and
    cap constraints.
    """
    w = np.asarray(w, dtype=float)
    g = problem.gradient(w)
    return float(np.linalg.norm(w - project_feasible(w - g, problem)))


# --------------------------------------------------------------------- solver

class _Reduced:
    """The problem restricted to unpinned assets, carbon rescaled so cap == 1."""

    def __init__(self, problem: PortfolioProblem, idx: np.ndarray):
        self.idx = idx
        self.mu = problem.mu[idx]
        self.sigma = problem.sigma[np.ix_(idx, idx)]
        self.T = problem.multiplier
        self.a = problem.mean_sign
        self.c = None
        if problem.has_cap:
            c = problem.carbon[idx] / problem.cap
            if c.max() > 1.0:
                self.c = c
        self.n = len(idx)

    def f(self, x):
        return self.a * (x @ self.mu) + self.T * math.sqrt(max(x @ self.sigma @ x, 0.0))

    def grad_hess(self, x):
        v = self.sigma @ x
        s = max(math.sqrt(max(x @ v, 0.0)), VOL_FLOOR)
        g = self.a * self.mu + self.T * v / s
        H = (self.T / s) * (self.sigma - np.outer(v, v) / (s * s))
        return g, H


def _interior_start(red: _Reduced, x0: np.ndarray) -> np.ndarray:
    n = red.n
    center = np.full(n, 1.0 / n)
    if red.c is not None and red.c @ center >= 1.0:
        i = int(np.argmin(red.c))
        cmin, cbar = red.c[i], red.c @ center
        theta = (1.0 - cmin) / (2.0 * (cbar - cmin))
        center = theta * center
        center[i] += 1.0 - theta
    return 0.5 * x0 + 0.5 * center


def _barrier(red: _Reduced, x: np.ndarray, budget: int, gap_rel: float = 1e-10):
    """Log-barrier path following; returns (x, t, iterations)."""
    n = red.n
    m = n + (red.c is not None)
    g0, _ = red.grad_hess(x)
    gscale = max(np.abs(g0).max(), 1e-300)
    t = n / gscale
    iters = 0

    def phi(z, t):
        val = t * red.f(z) - np.log(z).sum()
        if red.c is not None:
            val -= math.log(1.0 - red.c @ z)
        return val

    while iters < budget:
        for _ in range(100):
            if iters >= budget:
                break
            g, H = red.grad_hess(x)
            grad = t * g - 1.0 / x
            # scaled system in z = dx / x keeps the barrier Hessian at identity
            M = t * (x[:, None] * H * x[None, :])
            M[np.diag_indices(n)] += 1.0
            if red.c is not None:
                slack = 1.0 - red.c @ x
                grad = grad + red.c / slack
                dc = x * red.c / slack
                M += np.outer(dc, dc)
            b = x * grad
            try:
                L = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                M[np.diag_indices(n)] += 1e-12 * np.abs(M).max()
                L = np.linalg.cholesky(M)
            rhs = np.column_stack([b, x])
            sol = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
            nu = -(x @ sol[:, 0]) / (x @ sol[:, 1])
            dz = -sol[:, 0] - nu * sol[:, 1]
            dx = x * dz
            dx -= dx.sum() / n  # keep sum(x) == 1 against rounding drift
            iters += 1
            dec2 = -(grad @ dx)
            if dec2 <= 2e-12:
                break
            step = 1.0
            neg = dx < 0
            if neg.any():
                step = min(1.0, 0.99 * np.min(-x[neg] / dx[neg]))
            if red.c is not None:
                cd = red.c @ dx
                if cd > 0:
                    step = min(step, 0.99 * (1.0 - red.c @ x) / cd)
            base = phi(x, t)
            slope = grad @ dx
            for _ in range(60):
                trial = x + step * dx
                if phi(trial, t) <= base + 0.25 * step * slope:
                    break
                step *= 0.5
            else:
                break
            x = trial
        if m / t <= gap_rel * gscale:
            break
        t *= 20.0
    return x, t, iters


def _face_newton(red: _Reduced, x: np.ndarray, F: np.ndarray, cap_on: bool):
    """Newton direction on the face given by free mask ``F`` and equality rows."""
    g, H = red.grad_hess(x)
    idx = np.flatnonzero(F)
    rows = [np.ones(len(idx))]
    if cap_on:
        rows.append(red.c[idx])
    E = np.array(rows)
    k = len(idx)
    K = np.zeros((k + len(rows), k + len(rows)))
    K[:k, :k] = H[np.ix_(idx, idx)]
    K[:k, k:] = E.T
    K[k:, :k] = E
    rhs = np.concatenate([-g[idx], np.zeros(len(rows))])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    d = np.zeros(red.n)
    d[idx] = sol[:k]
    return d, g


def _multipliers(red: _Reduced, g: np.ndarray, F: np.ndarray, cap_on: bool):
    """Equality/cap multipliers from the free block, bound multipliers elsewhere."""
    idx = np.flatnonzero(F)
    cols = [np.ones(len(idx))]
    if cap_on:
        cols.append(red.c[idx])
    A = np.column_stack(cols)
    lam = np.linalg.lstsq(A, -g[idx], rcond=None)[0]
    nu = lam[0]
    eta = lam[1] if cap_on else 0.0
    z = g + nu + (eta * red.c if red.c is not None else 0.0)
    z[F] = 0.0
    return z, eta


def _polish(red: _Reduced, x: np.ndarray, t: float, budget: int):
    """Active-set Newton refinement starting from a barrier iterate."""
    n = red.n
    g, _ = red.grad_hess(x)
    gscale = max(np.abs(g).max(), 1e-300)
    active = x * x * t * gscale < 1.0
    if active.all():
        active[np.argmax(x)] = False
    cap_on = False
    if red.c is not None:
        slack = 1.0 - red.c @ x
        cap_on = slack * slack * t * gscale < 1.0

    # move onto the predicted face
    x = np.where(active, 0.0, x)
    x = x / x.sum()
    if cap_on:
        x = _restore_cap(red, x, ~active)
        if x is None:
            return None, 0
    elif red.c is not None and red.c @ x > 1.0:
        cap_on = True
        x = _restore_cap(red, x, ~active)
        if x is None:
            return None, 0

    iters = 0
    tol_mult = 1e-10 * gscale
    while iters < budget:
        F = ~active
        d, g = _face_newton(red, x, F, cap_on)
        iters += 1
        if np.abs(d).max() <= 1e-13:
            z, eta = _multipliers(red, g, F, cap_on)
            worst = int(np.argmin(z))
            if cap_on and eta < -tol_mult and eta <= z[worst]:
                cap_on = False
                continue
            if z[worst] < -tol_mult:
                active[worst] = False
                continue
            return x, iters
        # largest step keeping bounds and the (inactive) cap feasible
        step_max, block, block_cap = np.inf, -1, False
        neg = F & (d < 0)
        if neg.any():
            ratios = -x[neg] / d[neg]
            j = int(np.argmin(ratios))
            step_max, block = ratios[j], int(np.flatnonzero(neg)[j])
        if red.c is not None and not cap_on:
            cd = red.c @ d
            if cd > 0:
                r = (1.0 - red.c @ x) / cd
                if r < step_max:
                    step_max, block, block_cap = r, -1, True
        step = min(1.0, step_max)
        base, slope = red.f(x), g @ d
        for _ in range(60):
            if red.f(x + step * d) <= base + 1e-4 * step * slope or step * np.abs(d).max() < 1e-15:
                break
            step *= 0.5
        x = x + step * d
        if step == step_max:
            if block_cap:
                cap_on = True
            elif block >= 0:
                active[block] = True
                x[block] = 0.0
        x = np.maximum(x, 0.0)
        x[active] = 0.0
        x /= x.sum()
    return x, iters


def _restore_cap(red: _Reduced, x: np.ndarray, F: np.ndarray):
    """Minimal-norm shift of the free weights onto sum == 1 and c @ x == 1."""
    idx = np.flatnonzero(F)
    E = np.vstack([np.ones(len(idx)), red.c[idx]])
    r = np.array([1.0 - x[idx].sum(), 1.0 - red.c[idx] @ x[idx]])
    try:
        shift = E.T @ np.linalg.solve(E @ E.T, r)
    except np.linalg.LinAlgError:
        return None
    y = x.copy()
    y[idx] += shift
    if y.min() < 0:
        return None
    return y


def solve(problem: PortfolioProblem, tolerances: Tolerances = Tolerances(), start=None) -> Solution:
    """Minimize the problem's objective over its feasible set.

    ``start`` (default: equal weights) is projected onto the feasible set
    first. Returns a :class:`Solution` whose status is ``CONVERGED`` when the
    KKT residual is within ``tolerances.kkt_tol``; when the iteration budget
    runs out the best feasible iterate is returned with ``ITERATION_LIMIT``.
    """
    n = problem.n
    free = problem.free
    if start is None:
        start = np.zeros(n)
        start[free] = 1.0 / len(free)
    x0_full = project_feasible(start, problem)

    idx = free
    if problem.has_cap:
        c = problem.carbon[free]
        # cap equal to the smallest footprint: only the cleanest assets can be held
        if c.min() >= problem.cap * (1.0 - 1e-12):
            idx = free[c <= problem.cap * (1.0 + 1e-12)]
    red = _Reduced(problem, idx)
    budget = tolerances.max_iterations

    if red.n == 1:
        x = np.ones(1)
        iters = 0
    else:
        x_start = x0_full[idx]
        s = x_start.sum()
        x_start = x_start / s if s > 0 else np.full(red.n, 1.0 / red.n)
        x_int = _interior_start(red, x_start)
        x_ipm, t, iters = _barrier(red, x_int, budget)
        x = x_ipm
        if iters < budget:
            polished, extra = _polish(red, x_ipm, t, budget - iters)
            iters += extra
            if polished is not None:
                cand = _expand(polished, idx, n)
                base = _expand(x_ipm, idx, n)
                if (_is_feasible(cand, problem, tolerances.constraint_tol)
                        and kkt_residual(cand, problem) <= kkt_residual(base, problem)):
                    x = polished

    w = _expand(x, idx, n)
    res = kkt_residual(w, problem)
    feasible = _is_feasible(w, problem, tolerances.constraint_tol)
    if res <= tolerances.kkt_tol and feasible:
        status = Status.CONVERGED
    else:
        status = Status.ITERATION_LIMIT
    return Solution(w, problem.objective(w), res, iters, status)


def _expand(x: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    w = np.zeros(n)
    w[idx] = np.maximum(x, 0.0)
    return w
