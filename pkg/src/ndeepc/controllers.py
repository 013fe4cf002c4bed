"""Receding-horizon controllers built on the interpolation algebra.

Three formulations of the same tracking problem are provided, differing in
how the data-consistency constraints and the regularizer are written:

* ``p1`` keeps the full stacked equality (features, one-padding, future
  outputs) with interpolation variables in R^T and penalizes the deviation
  of those variables from the minimum-norm coefficients.
* ``p2`` constrains a null-space deviation variable in R^T to the data null
  space and penalizes its plain squared norm.
* ``p3`` maps the deviation into the predicted-output space R^(p*N)
  (requires the future-output data matrix to have full row rank); slack
  variables relax its null-space condition, with their own penalty.

``linear`` runs the ``p1`` structure on an identity-feature context, which
reproduces classical (affine-augmented) data-enabled predictive control.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .hankel import HankelSet
from .mlp import hidden_features_and_jacobian, identity_network, refit_output_layer
from .predictors import DeepcContext, prepare_context
from .sqp import NlpProblem, NlpSolution, SolverOptions, solve_nlp

FORMULATIONS = ("p1", "p2", "p3", "p3-no-slack", "linear")


def _weight_matrix(w, dim: int, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        mat = float(w) * np.eye(dim)
    elif w.ndim == 1:
        if w.size != dim:
            raise ConfigError(f"{name} diagonal has {w.size} entries, expected {dim}")
        mat = np.diag(w)
    else:
        if w.shape != (dim, dim):
            raise ConfigError(f"{name} must be ({dim},{dim}), got {w.shape}")
        mat = 0.5 * (w + w.T)
    return mat


@dataclass
class ControlConfig:
    horizon: int = 10
    q_weight: object = 200.0
    r_weight: object = 0.5
    reg_weight: float = 1e4
    slack_weight: float = 1e4
    u_min: float = -4.0
    u_max: float = 4.0
    y_min: float = -np.pi
    y_max: float = np.pi
    formulation: str = "p3"
    eliminate_y: bool = True
    warm_start: bool = True
    solver: SolverOptions = field(default_factory=SolverOptions)

    def validate(self, m: int, p: int):
        if self.formulation not in FORMULATIONS:
            raise ConfigError(f"formulation must be one of {FORMULATIONS}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.reg_weight <= 0 or self.slack_weight <= 0:
            raise ConfigError("regularization and slack weights must be positive")
        if not (self.u_min < self.u_max) or not (self.y_min < self.y_max):
            raise ConfigError("constraint boxes must be nonempty")
        q = _weight_matrix(self.q_weight, p, "q_weight")
        r = _weight_matrix(self.r_weight, m, "r_weight")
        if np.min(np.linalg.eigvalsh(q)) < -1e-12:
            raise ConfigError("q_weight must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(r)) <= 0:
            raise ConfigError("r_weight must be positive definite")
        return q, r


@dataclass
class ControlStepResult:
    u_applied: np.ndarray      # (m,)
    u_sequence: np.ndarray     # (m*N,)
    y_sequence: np.ndarray     # (p*N,)
    aux: np.ndarray            # interpolation/deviation variables at optimum
    objective: float
    iterations: int
    converged: bool
    solve_seconds: float
    constraint_violation: float
    formulation: str
    fallback_used: bool = False


class _FeatureMap:
    """Per-step feature evaluations with a single-point cache.

    Freezes the past windows; evaluating at a future-input plan returns the
    features, their Jacobian w.r.t. the plan, the minimum-norm coefficients
    and the coefficient Jacobian.
    """

    def __init__(self, ctx: DeepcContext, u_ini: np.ndarray, y_ini: np.ndarray):
        self.ctx = ctx
        self.prefix = np.concatenate([u_ini, y_ini])
        self._u = None
        self._value = None

    def at(self, u: np.ndarray):
        if self._u is not None and np.array_equal(u, self._u):
            return self._value
        ctx = self.ctx
        u_nn = np.concatenate([self.prefix, u])
        phi, jac_full = hidden_features_and_jacobian(ctx.net, u_nn)
        jac_u = jac_full[:, self.prefix.size:]
        gnls = ctx.pinv_augmented @ np.concatenate([phi, [1.0]])
        dg_du = ctx.pinv_augmented[:, :ctx.feature_dim] @ jac_u
        self._u = u.copy()
        self._value = (phi, jac_u, gnls, dg_du)
        return self._value


class NeuralDeepcController:
    """One controller instance per closed loop; holds warm-start state."""

    def __init__(self, ctx: DeepcContext, config: ControlConfig):
        if config.horizon != ctx.horizon:
            raise ConfigError(
                f"config horizon {config.horizon} != context horizon {ctx.horizon}"
            )
        q, r = config.validate(ctx.m, ctx.p)
        if config.formulation == "linear" and not ctx.linear_mode:
            raise ConfigError("formulation 'linear' requires a linear-mode context")
        if config.formulation in ("p3", "p3-no-slack"):
            ctx.require_output_full_row_rank()
        self.ctx = ctx
        self.config = config
        n, pdim, mdim = ctx.horizon, ctx.p, ctx.m
        self.pn = pdim * n
        self.mn = mdim * n
        self.qn = np.kron(np.eye(n), q)
        self.rn = np.kron(np.eye(n), r)
        self.u_lo = np.full(self.mn, config.u_min)
        self.u_hi = np.full(self.mn, config.u_max)
        self.y_lo = np.full(self.pn, config.y_min)
        self.y_hi = np.full(self.pn, config.y_max)
        yf = ctx.y_future
        self._qyf = self.qn @ yf
        lam = config.reg_weight
        if config.formulation == "p2":
            # constant Gauss-Newton block of the deviation variables
            self._aux_gn = 2.0 * yf.T @ self._qyf + 2.0 * lam * np.eye(ctx.columns)
        else:
            self._aux_gn = 2.0 * self.qn + 2.0 * lam * np.eye(self.pn)
        if ctx.y_future_pinv is not None:
            self._null_map = ctx.augmented @ ctx.y_future_pinv  # (L+1, pN)
        else:
            self._null_map = None
        self._last_u = None

    def reset(self):
        self._last_u = None

    # ------------------------------------------------------------------
    def step(self, u_ini, y_ini, y_ref, u_ref) -> ControlStepResult:
        ctx = self.ctx
        u_ini = _window(u_ini, ctx.m * ctx.t_ini, "u_ini")
        y_ini = _window(y_ini, ctx.p * ctx.t_ini, "y_ini")
        y_ref = _window(y_ref, self.pn, "y_ref")
        u_ref = _window(u_ref, self.mn, "u_ref")

        fm = _FeatureMap(ctx, u_ini, y_ini)
        u_warm = self._warm_u(u_ref)
        form = self.config.formulation

        if form in ("p1", "linear"):
            result = self._solve_p1(fm, u_warm, y_ref, u_ref)
        elif form == "p2":
            result = self._solve_p23(fm, u_warm, y_ref, u_ref, mode="p2")
        else:
            result = self._solve_p23(fm, u_warm, y_ref, u_ref, mode=form)

        if self.config.warm_start:
            self._last_u = result.u_sequence.copy()
        return result

    # ------------------------------------------------------------------
    def _warm_u(self, u_ref: np.ndarray) -> np.ndarray:
        m = self.ctx.m
        if self._last_u is None or not self.config.warm_start:
            u0 = u_ref.copy()
        else:
            u0 = np.concatenate([self._last_u[m:], self._last_u[-m:]])
        return np.clip(u0, self.u_lo, self.u_hi)

    def _stage_terms(self, y, u, y_ref, u_ref):
        ey = y - y_ref
        eu = u - u_ref
        return ey, eu, float(ey @ self.qn @ ey + eu @ self.rn @ eu)

    def _result(self, sol: NlpSolution, u_seq, y_seq, aux, fallback=False):
        u_seq = np.clip(u_seq, self.u_lo, self.u_hi)
        return ControlStepResult(
            u_applied=u_seq[: self.ctx.m].copy(),
            u_sequence=u_seq,
            y_sequence=y_seq,
            aux=aux,
            objective=sol.objective,
            iterations=sol.iterations,
            converged=sol.converged,
            solve_seconds=sol.solve_seconds,
            constraint_violation=sol.constraint_violation,
            formulation=self.config.formulation,
            fallback_used=fallback,
        )

    # ------------------------------------------------------------------
    def _solve_p1(self, fm: _FeatureMap, u_warm, y_ref, u_ref) -> ControlStepResult:
        ctx = self.ctx
        pn, mn, t = self.pn, self.mn, ctx.columns
        lp1 = ctx.feature_dim + 1
        lam = self.config.reg_weight
        aug, yf = ctx.augmented, ctx.y_future
        sy, su, sg = slice(0, pn), slice(pn, pn + mn), slice(pn + mn, pn + mn + t)

        def objective(x):
            _, _, gnls, _ = fm.at(x[su])
            ey, eu, stage = self._stage_terms(x[sy], x[su], y_ref, u_ref)
            eg = x[sg] - gnls
            return stage + lam * float(eg @ eg)

        def gradient(x):
            _, _, gnls, dg_du = fm.at(x[su])
            ey = x[sy] - y_ref
            eu = x[su] - u_ref
            eg = x[sg] - gnls
            grad = np.empty(pn + mn + t)
            grad[sy] = 2.0 * (self.qn @ ey)
            grad[su] = 2.0 * (self.rn @ eu) - 2.0 * lam * (dg_du.T @ eg)
            grad[sg] = 2.0 * lam * eg
            return grad

        def constraints(x):
            phi, _, _, _ = fm.at(x[su])
            top = aug @ x[sg] - np.concatenate([phi, [1.0]])
            bottom = yf @ x[sg] - x[sy]
            return np.concatenate([top, bottom])

        def jacobian(x):
            _, jac_u, _, _ = fm.at(x[su])
            jac = np.zeros((lp1 + pn, pn + mn + t))
            jac[:lp1, sg] = aug
            jac[: lp1 - 1, su] = -jac_u
            jac[lp1:, sg] = yf
            jac[lp1:, sy] = -np.eye(pn)
            return jac

        n = pn + mn + t

        def gauss_newton(x):
            # curvature of the regularizer at the current plan; the u-g
            # cross blocks are essential once the penalty dominates
            _, _, _, dg = fm.at(x[su])
            hess = np.zeros((n, n))
            hess[sy, sy] = 2.0 * self.qn
            hess[su, su] = 2.0 * self.rn + 2.0 * lam * dg.T @ dg
            hess[su, sg] = -2.0 * lam * dg.T
            hess[sg, su] = -2.0 * lam * dg
            np.fill_diagonal(hess[sg, sg], 2.0 * lam)
            return hess

        _, _, g_warm, _ = fm.at(u_warm)
        y_warm = np.clip(yf @ g_warm, self.y_lo, self.y_hi)
        problem = NlpProblem(
            dim=n,
            objective=objective,
            gradient=gradient,
            x0=np.concatenate([y_warm, u_warm, g_warm]),
            constraints=constraints,
            jacobian=jacobian,
            lower=np.concatenate([self.y_lo, self.u_lo, np.full(t, -np.inf)]),
            upper=np.concatenate([self.y_hi, self.u_hi, np.full(t, np.inf)]),
            hess_init=gauss_newton,
        )
        sol = solve_nlp(problem, self.config.solver)
        return self._result(sol, sol.x[su], sol.x[sy].copy(), sol.x[sg].copy())

    # ------------------------------------------------------------------
    def _solve_p23(self, fm: _FeatureMap, u_warm, y_ref, u_ref, mode: str) -> ControlStepResult:
        if self.config.eliminate_y:
            result = self._solve_p23_eliminated(fm, u_warm, y_ref, u_ref, mode)
            pad = 1e-6
            if (np.all(result.y_sequence >= self.y_lo - pad)
                    and np.all(result.y_sequence <= self.y_hi + pad)):
                return result
            # predicted outputs left the box: redo with explicit outputs
            return self._solve_p23_explicit(fm, u_warm, y_ref, u_ref, mode, fallback=True)
        return self._solve_p23_explicit(fm, u_warm, y_ref, u_ref, mode)

    def _p23_pieces(self, mode: str):
        """Shared data for the null-deviation formulations."""
        ctx = self.ctx
        yf = ctx.y_future
        null_rows = ctx.feature_dim + 1
        if mode == "p2":
            aux_dim = ctx.columns
            aux_map = yf                      # y = yf gnls + aux_map @ aux
            null_mat = ctx.augmented          # null_mat @ aux = 0
        else:
            aux_dim = self.pn
            aux_map = np.eye(self.pn)
            null_mat = self._null_map
        return yf, aux_dim, null_rows, aux_map, null_mat

    def _solve_p23_eliminated(self, fm, u_warm, y_ref, u_ref, mode):
        ctx = self.ctx
        mn = self.mn
        lam = self.config.reg_weight
        mu_s = self.config.slack_weight
        yf, aux_dim, null_rows, aux_map, null_mat = self._p23_pieces(mode)
        slack = mode == "p3"
        ns = null_rows if slack else 0
        n = mn + aux_dim + ns
        su = slice(0, mn)
        sa = slice(mn, mn + aux_dim)
        ss = slice(mn + aux_dim, n)

        def predicted(x):
            _, _, gnls, _ = fm.at(x[su])
            return yf @ gnls + aux_map @ x[sa]

        def objective(x):
            y = predicted(x)
            _, _, stage = self._stage_terms(y, x[su], y_ref, u_ref)
            val = stage + lam * float(x[sa] @ x[sa])
            if slack:
                val += mu_s * float(x[ss] @ x[ss])
            return val

        def gradient(x):
            _, _, gnls, dg_du = fm.at(x[su])
            y = yf @ gnls + aux_map @ x[sa]
            ey = y - y_ref
            eu = x[su] - u_ref
            qy = 2.0 * (self.qn @ ey)
            grad = np.empty(n)
            grad[su] = 2.0 * (self.rn @ eu) + (yf @ dg_du).T @ qy
            grad[sa] = aux_map.T @ qy + 2.0 * lam * x[sa]
            if slack:
                grad[ss] = 2.0 * mu_s * x[ss]
            return grad

        def constraints(x):
            res = null_mat @ x[sa]
            if slack:
                res = res - x[ss]
            return res

        def jacobian(x):
            jac = np.zeros((null_rows, n))
            jac[:, sa] = null_mat
            if slack:
                jac[:, ss] = -np.eye(null_rows)
            return jac

        q_aux = self._qyf if mode == "p2" else self.qn

        def gauss_newton(x):
            # exact curvature apart from the feature-map tensor: the tracking
            # cost is quadratic in (u, aux) through y = yf gnls(u) + aux
            _, _, _, dg = fm.at(x[su])
            dy_du = yf @ dg
            cross = 2.0 * dy_du.T @ q_aux
            hess = np.zeros((n, n))
            hess[su, su] = 2.0 * self.rn + 2.0 * dy_du.T @ (self.qn @ dy_du)
            hess[su, sa] = cross
            hess[sa, su] = cross.T
            hess[sa, sa] = self._aux_gn
            if slack:
                np.fill_diagonal(hess[ss, ss], 2.0 * mu_s)
            return hess

        problem = NlpProblem(
            dim=n,
            objective=objective,
            gradient=gradient,
            x0=np.concatenate([u_warm, np.zeros(aux_dim + ns)]),
            constraints=constraints,
            jacobian=jacobian,
            lower=np.concatenate([self.u_lo, np.full(aux_dim + ns, -np.inf)]),
            upper=np.concatenate([self.u_hi, np.full(aux_dim + ns, np.inf)]),
            hess_init=gauss_newton,
        )
        sol = solve_nlp(problem, self.config.solver)
        y_seq = predicted(sol.x)
        return self._result(sol, sol.x[su], y_seq, sol.x[sa].copy())

    def _solve_p23_explicit(self, fm, u_warm, y_ref, u_ref, mode, fallback=False):
        ctx = self.ctx
        pn, mn = self.pn, self.mn
        lam = self.config.reg_weight
        mu_s = self.config.slack_weight
        yf, aux_dim, null_rows, aux_map, null_mat = self._p23_pieces(mode)
        slack = mode == "p3"
        ns = null_rows if slack else 0
        n = pn + mn + aux_dim + ns
        sy = slice(0, pn)
        su = slice(pn, pn + mn)
        sa = slice(pn + mn, pn + mn + aux_dim)
        ss = slice(pn + mn + aux_dim, n)

        def objective(x):
            _, _, stage = self._stage_terms(x[sy], x[su], y_ref, u_ref)
            val = stage + lam * float(x[sa] @ x[sa])
            if slack:
                val += mu_s * float(x[ss] @ x[ss])
            return val

        def gradient(x):
            grad = np.empty(n)
            grad[sy] = 2.0 * (self.qn @ (x[sy] - y_ref))
            grad[su] = 2.0 * (self.rn @ (x[su] - u_ref))
            grad[sa] = 2.0 * lam * x[sa]
            if slack:
                grad[ss] = 2.0 * mu_s * x[ss]
            return grad

        def constraints(x):
            _, _, gnls, _ = fm.at(x[su])
            pred = yf @ gnls + aux_map @ x[sa] - x[sy]
            res = null_mat @ x[sa]
            if slack:
                res = res - x[ss]
            return np.concatenate([res, pred])

        def jacobian(x):
            _, _, _, dg_du = fm.at(x[su])
            jac = np.zeros((null_rows + pn, n))
            jac[:null_rows, sa] = null_mat
            if slack:
                jac[:null_rows, ss] = -np.eye(null_rows)
            jac[null_rows:, sy] = -np.eye(pn)
            jac[null_rows:, su] = yf @ dg_du
            jac[null_rows:, sa] = aux_map
            return jac

        _, _, g_warm, _ = fm.at(u_warm)
        y_warm = np.clip(yf @ g_warm, self.y_lo, self.y_hi)
        hess = np.concatenate([
            2.0 * np.diag(self.qn),
            2.0 * np.diag(self.rn),
            np.full(aux_dim, 2.0 * lam),
            np.full(ns, 2.0 * mu_s),
        ])
        problem = NlpProblem(
            dim=n,
            objective=objective,
            gradient=gradient,
            x0=np.concatenate([y_warm, u_warm, np.zeros(aux_dim + ns)]),
            constraints=constraints,
            jacobian=jacobian,
            lower=np.concatenate([self.y_lo, self.u_lo, np.full(aux_dim + ns, -np.inf)]),
            upper=np.concatenate([self.y_hi, self.u_hi, np.full(aux_dim + ns, np.inf)]),
            hess_diag=hess,
        )
        sol = solve_nlp(problem, self.config.solver)
        return self._result(sol, sol.x[su], sol.x[sy].copy(), sol.x[sa].copy(),
                            fallback=fallback)


def _window(vec, size: int, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float).reshape(-1)
    if vec.size != size:
        raise DimensionError(f"{name} has {vec.size} entries, expected {size}")
    return vec


def make_linear_mode(hankel: HankelSet, sv_cutoff: float = 1e-10) -> DeepcContext:
    """Context whose feature map is the identity, so the feature data matrix
    equals the stacked regressor matrix and the controllers reduce to
    classical affine data-enabled predictive control."""
    h = hankel.regressor
    net = identity_network(h.shape[0], hankel.y_future.shape[0])
    net, _, _ = refit_output_layer(net, h, hankel.y_future, sv_cutoff)
    return prepare_context(net, hankel, sv_cutoff=sv_cutoff, linear_mode=True)
