"""Equality-constrained SQP solver with box constraints.

Solves ``min f(x)  s.t.  c(x) = 0,  lower <= x <= upper`` for smooth dense
problems. The search direction comes from a convex QP subproblem built with
a damped-BFGS Hessian approximation; bounds are handled by a primal
working-set method on the QP; globalization uses an l1 merit line search.

The solver is fully deterministic: identical problems and options produce
bit-identical iterates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, NumericalError


@dataclass
class NlpProblem:
    """Smooth NLP with equality and box constraints.

    ``objective``/``gradient`` map an ``(n,)`` vector to a scalar / an
    ``(n,)`` vector. ``constraints``/``jacobian`` map it to an ``(me,)``
    residual vector (target 0) and its ``(me, n)`` Jacobian; both may be
    ``None`` for unconstrained problems. ``hess_diag`` (positive diagonal)
    or ``hess_init`` (full symmetric positive-definite matrix) optionally
    seed the BFGS approximation with the problem's known curvature
    structure; identity when omitted. ``hess_init`` may also be a callable
    ``x -> matrix``: the approximation is then rebuilt at every accepted
    iterate (structured Gauss-Newton mode) instead of BFGS-updated.
    """

    dim: int
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    constraints: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    hess_diag: Optional[np.ndarray] = None
    hess_init: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if self.x0.shape != (self.dim,):
            raise DimensionError(
                f"initial guess has shape {self.x0.shape}, expected ({self.dim},)"
            )
        self.lower = _as_bound(self.lower, self.dim, -np.inf)
        self.upper = _as_bound(self.upper, self.dim, np.inf)
        if np.any(self.lower > self.upper):
            raise DimensionError("box constraints violate lower <= upper")
        if (self.constraints is None) != (self.jacobian is None):
            raise DimensionError("constraints and jacobian must be supplied together")
        if self.hess_diag is not None:
            self.hess_diag = np.asarray(self.hess_diag, dtype=float)
            if self.hess_diag.shape != (self.dim,) or np.any(self.hess_diag <= 0):
                raise DimensionError("hess_diag must be a positive (dim,) vector")
        if self.hess_init is not None and not callable(self.hess_init):
            self.hess_init = np.asarray(self.hess_init, dtype=float)
            if self.hess_init.shape != (self.dim, self.dim):
                raise DimensionError("hess_init must be a (dim, dim) matrix")


@dataclass
class SolverOptions:
    feasibility_tol: float = 1e-8
    optimality_tol: float = 1e-6
    max_iterations: int = 200
    step_tol: float = 1e-14
    max_line_search: int = 30
    armijo: float = 1e-4


@dataclass
class NlpSolution:
    x: np.ndarray
    objective: float
    constraint_violation: float
    iterations: int
    converged: bool
    solve_seconds: float
    kkt_residual: float = np.inf
    message: str = ""


def _as_bound(b, n, fill):
    if b is None:
        return np.full(n, fill)
    b = np.asarray(b, dtype=float)
    if b.ndim == 0:
        return np.full(n, float(b))
    if b.shape != (n,):
        raise DimensionError(f"bound has shape {b.shape}, expected ({n},)")
    return b.copy()


def _eval_objective(problem, x):
    f = float(problem.objective(x))
    return f


def _eval_constraints(problem, x):
    if problem.constraints is None:
        return np.zeros(0)
    c = np.atleast_1d(np.asarray(problem.constraints(x), dtype=float))
    return c


def _solve_qp(bmat, grad, jac, cvec, dlo, dhi, work, fixed_equal):
    """Box + equality QP: min 1/2 d'Bd + g'd  s.t. Jd = -c, dlo <= d <= dhi.

    ``work`` is the warm-started working set (-1 at lower, +1 at upper,
    0 free) and is updated in place. Returns (d, mu, ok).
    """
    n = grad.size
    me = cvec.size
    max_changes = 10 + 2 * int(np.sum(np.isfinite(dlo) | np.isfinite(dhi)))
    feas_pad = 1e-10

    for _ in range(max_changes):
        fixed = work != 0
        d = np.zeros(n)
        d[fixed] = np.where(work[fixed] < 0, dlo[fixed], dhi[fixed])
        free = ~fixed
        nf = int(np.sum(free))

        rhs_top = -(grad[free] + bmat[np.ix_(free, fixed)] @ d[fixed])
        if me:
            kkt = np.zeros((nf + me, nf + me))
            kkt[:nf, :nf] = bmat[np.ix_(free, free)]
            kkt[:nf, nf:] = jac[:, free].T
            kkt[nf:, :nf] = jac[:, free]
            rhs = np.concatenate([rhs_top, -cvec - jac[:, fixed] @ d[fixed]])
        else:
            kkt = bmat[np.ix_(free, free)]
            rhs = rhs_top

        sol, ok = _robust_solve(kkt, rhs)
        if not ok:
            return d, np.zeros(me), False
        d[free] = sol[:nf]
        mu = sol[nf:] if me else np.zeros(0)

        # most violated bound among free coordinates enters the working set
        lo_viol = np.where(free, dlo - d, -np.inf)
        hi_viol = np.where(free, d - dhi, -np.inf)
        worst_lo = int(np.argmax(lo_viol))
        worst_hi = int(np.argmax(hi_viol))
        if max(lo_viol[worst_lo], hi_viol[worst_hi]) > feas_pad:
            if lo_viol[worst_lo] >= hi_viol[worst_hi]:
                work[worst_lo] = -1
            else:
                work[worst_hi] = 1
            continue

        # wrong-signed multiplier on a working bound leaves the set
        if np.any(fixed):
            r = bmat @ d + grad
            if me:
                r = r + jac.T @ mu
            droppable = fixed & ~fixed_equal
            score = np.where(droppable & (work < 0), -r, -np.inf)
            score = np.maximum(score, np.where(droppable & (work > 0), r, -np.inf))
            worst = int(np.argmax(score))
            if score[worst] > 1e-9 * (1.0 + np.max(np.abs(grad))):
                work[worst] = 0
                continue
        return d, mu, True

    # working-set cap: clip into the box and report best effort
    d = np.clip(d, dlo, dhi)
    return d, mu if me else np.zeros(0), True


def _robust_solve(a, b):
    if b.size == 0:
        return np.zeros(0), True
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        x = np.linalg.lstsq(a, b, rcond=None)[0]
        return x, bool(np.all(np.isfinite(x)))
    if not np.all(np.isfinite(x)):
        return x, False
    scale = 1.0 + np.max(np.abs(b))
    if np.max(np.abs(a @ x - b)) > 1e-6 * scale:
        x = np.linalg.lstsq(a, b, rcond=None)[0]
    return x, bool(np.all(np.isfinite(x)))


def _kkt_residual(grad, jac, mu, x, lower, upper, bound_tol=1e-9):
    """Stationarity residual of the Lagrangian with box multiplier signs."""
    r = grad.copy()
    if mu.size:
        r = r + jac.T @ mu
    at_lo = x <= lower + bound_tol
    at_hi = x >= upper - bound_tol
    res = np.abs(r)
    # at a lower bound the reduced gradient may point upward (r >= 0), at an
    # upper bound downward (r <= 0); only the infeasible sign counts
    res[at_lo] = np.maximum(-r[at_lo], 0.0)
    res[at_hi] = np.maximum(r[at_hi], 0.0)
    res[at_lo & at_hi] = 0.0
    return float(np.max(res)) if res.size else 0.0


def _stationarity(grad, jac, mu, x, lower, upper, threshold=0.0):
    """First-order optimality measure, refined with least-squares multipliers.

    The QP multipliers inherit error from the BFGS model; when they miss the
    test, multipliers fitted directly to the gradient give the sharper
    measure (the scheme production SQP codes use for their stopping test).
    """
    res = _kkt_residual(grad, jac, mu, x, lower, upper)
    if res <= threshold or jac.shape[0] == 0:
        return res
    free = (x > lower + 1e-9) & (x < upper - 1e-9)
    if not np.any(free):
        return res
    mu_ls = np.linalg.lstsq(jac[:, free].T, -grad[free], rcond=None)[0]
    return min(res, _kkt_residual(grad, jac, mu_ls, x, lower, upper))


def solve_nlp(problem: NlpProblem, options: SolverOptions | None = None) -> NlpSolution:
    """Run the SQP iteration and return a KKT point or the best iterate.

    Hitting the iteration cap is reported through ``converged=False`` rather
    than an exception so receding-horizon callers can keep running; a
    non-finite objective or constraint at the incumbent iterate raises
    :class:`NumericalError`.
    """
    t_start = time.perf_counter()
    opts = options or SolverOptions()
    n = problem.dim
    lower, upper = problem.lower, problem.upper

    x = np.clip(problem.x0, lower, upper)
    f = _eval_objective(problem, x)
    c = _eval_constraints(problem, x)
    if not np.isfinite(f) or not np.all(np.isfinite(c)):
        raise NumericalError("objective or constraints non-finite at the initial point")
    g = np.asarray(problem.gradient(x), dtype=float)
    jac = (
        np.atleast_2d(np.asarray(problem.jacobian(x), dtype=float))
        if problem.constraints is not None
        else np.zeros((0, n))
    )
    me = c.size

    structured = problem.hess_init is not None and callable(problem.hess_init)
    if structured:
        h0 = np.asarray(problem.hess_init(x), dtype=float)
        bmat = 0.5 * (h0 + h0.T)
    elif problem.hess_init is not None:
        bmat = 0.5 * (problem.hess_init + problem.hess_init.T)
    elif problem.hess_diag is not None:
        bmat = np.diag(problem.hess_diag)
    else:
        bmat = np.eye(n)
    work = np.zeros(n, dtype=np.int8)
    fixed_equal = lower == upper
    work[fixed_equal] = -1

    rho = 1.0
    converged = False
    kkt_res = np.inf
    message = "max iterations reached"
    iterations = 0

    for iterations in range(1, opts.max_iterations + 1):
        d, mu, qp_ok = _solve_qp(bmat, g, jac, c, lower - x, upper - x, work, fixed_equal)
        if not qp_ok:
            message = "QP subproblem failed"
            break

        viol = float(np.max(np.abs(c))) if me else 0.0
        # optimality is judged relative to the gradient scale, with an
        # absolute floor of optimality_tol for well-scaled problems
        opt_threshold = opts.optimality_tol * max(1.0, float(np.max(np.abs(g))))
        kkt_res = _stationarity(g, jac, mu, x, lower, upper, opt_threshold)
        if viol <= opts.feasibility_tol and kkt_res <= opt_threshold:
            converged = True
            message = "KKT point found"
            break

        if mu.size:
            rho = max(rho, 2.0 * float(np.max(np.abs(mu))) + 1e-3)
        merit0 = f + rho * np.sum(np.abs(c))
        descent = float(g @ d) - rho * np.sum(np.abs(c))

        def acceptable(f_try, c_try, alpha_try):
            if not (np.isfinite(f_try) and np.all(np.isfinite(c_try))):
                return False
            merit_try = f_try + rho * np.sum(np.abs(c_try))
            return merit_try <= merit0 + opts.armijo * alpha_try * min(descent, 0.0)

        alpha = 1.0
        accepted = False
        f_new, c_new, x_new = f, c, x
        for trial in range(opts.max_line_search):
            x_try = x + alpha * d
            f_try = _eval_objective(problem, x_try)
            c_try = _eval_constraints(problem, x_try)
            if acceptable(f_try, c_try, alpha):
                x_new, f_new, c_new = x_try, f_try, c_try
                accepted = True
                break
            if trial == 0 and me and np.all(np.isfinite(c_try)):
                # second-order correction: cancel the curvature-induced
                # constraint violation that blocks the full step
                jjt = jac @ jac.T
                z, ok = _robust_solve(jjt, c_try)
                if ok:
                    x_soc = np.clip(x_try - jac.T @ z, lower, upper)
                    f_soc = _eval_objective(problem, x_soc)
                    c_soc = _eval_constraints(problem, x_soc)
                    if acceptable(f_soc, c_soc, alpha):
                        x_new, f_new, c_new = x_soc, f_soc, c_soc
                        accepted = True
                        break
            alpha *= 0.5
        if not accepted:
            # typically a sign that the iterate is numerically optimal:
            # re-test first-order conditions before giving up
            viol = float(np.max(np.abs(c))) if me else 0.0
            opt_threshold = opts.optimality_tol * max(1.0, float(np.max(np.abs(g))))
            kkt_res = _stationarity(g, jac, mu, x, lower, upper, opt_threshold)
            if viol <= opts.feasibility_tol and kkt_res <= opt_threshold:
                converged = True
                message = "KKT point found (line search floor)"
            else:
                message = "line search failed"
            break

        g_new = np.asarray(problem.gradient(x_new), dtype=float)
        jac_new = (
            np.atleast_2d(np.asarray(problem.jacobian(x_new), dtype=float))
            if problem.constraints is not None
            else jac
        )

        s = x_new - x
        step = float(np.max(np.abs(s))) if s.size else 0.0
        if structured:
            h0 = np.asarray(problem.hess_init(x_new), dtype=float)
            bmat = 0.5 * (h0 + h0.T)
        else:
            grad_l_new = g_new + (jac_new.T @ mu if mu.size else 0.0)
            grad_l_old = g + (jac.T @ mu if mu.size else 0.0)
            yvec = grad_l_new - grad_l_old
            bs = bmat @ s
            sbs = float(s @ bs)
            sy = float(s @ yvec)
            if sbs > 1e-16:
                if sy < 0.2 * sbs:
                    theta = 0.8 * sbs / (sbs - sy)
                    yvec = theta * yvec + (1.0 - theta) * bs
                    sy = float(s @ yvec)
                if sy > 1e-12 * sbs:
                    bmat += np.outer(yvec, yvec) / sy - np.outer(bs, bs) / sbs

        x, f, c, g, jac = x_new, f_new, c_new, g_new, jac_new

        if step < opts.step_tol:
            viol = float(np.max(np.abs(c))) if me else 0.0
            opt_threshold = opts.optimality_tol * max(1.0, float(np.max(np.abs(g))))
            kkt_res = _stationarity(g, jac, mu, x, lower, upper, opt_threshold)
            if viol <= opts.feasibility_tol and kkt_res <= opt_threshold:
                converged = True
                message = "KKT point found (step floor)"
            else:
                message = "step size below tolerance"
            break

    # on non-convergence the last iterate is the best estimate: the merit
    # line search only ever accepted improvements
    return NlpSolution(
        x=x,
        objective=f,
        constraint_violation=float(np.max(np.abs(c))) if me else 0.0,
        iterations=iterations,
        converged=converged,
        solve_seconds=time.perf_counter() - t_start,
        kkt_residual=kkt_res,
        message=message,
    )
