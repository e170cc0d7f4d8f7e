"""Proximal alternating linearized minimization over an image and deformation parameters.

Minimizes ``H(u, phi) + alpha * dTV(u; v) (+ nonnegativity)`` with
``H(u, phi) = D(A (u o P(phi)); f)``: a backtracked forward-backward step in
``u`` followed by a backtracked gradient step in ``phi`` using the updated ``u``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dtv import DtvContext, dtv_prox, dtv_value
from .errors import BacktrackExhausted, ParamError
from .fidelity import Fidelity
from .grid import Grid, inner
from .operators import LinearOperator
from .warp import AffineParametrization, Sampler, spline_coefficients, spline_coefficients_adjoint

log = logging.getLogger(__name__)


@dataclass
class PalmConfig:
    iterations: int = 500
    sigma0: float = 1.0
    tau0: float = 1.0
    grow: float = 2.0
    shrink: float = 0.5
    max_halvings: int = 30
    prox_iters: int = 100
    prox_tol: float = 1e-6
    update_phi: bool = True


@dataclass
class Problem:
    operator: LinearOperator
    fidelity: Fidelity
    ctx: DtvContext
    param: object = field(default_factory=AffineParametrization)

    @property
    def grid(self) -> Grid:
        return self.operator.grid


@dataclass
class PalmState:
    u: np.ndarray
    phi: np.ndarray
    sigma: float = 1.0
    tau: float = 1.0
    history: list = field(default_factory=list)
    dual: np.ndarray | None = None
    dual_sigma: float = 1.0  # prox step the stored dual was computed with


class _Point:
    """Cached evaluation of ``H`` at ``(u, phi)``."""

    def __init__(self, problem: Problem, u, phi, sampler=None, coef=None):
        self.problem = problem
        self.u = u
        self.phi = phi
        self.sampler = sampler if sampler is not None else problem_sampler(problem, phi)
        self.coef = coef if coef is not None else spline_coefficients(u)
        self.warped = self.sampler.evaluate(self.coef)
        self.z = problem.operator.apply(self.warped)
        self.H = problem.fidelity.safe_value(self.z)
        self._back = None

    @property
    def back(self) -> np.ndarray:
        """``A^* dD(z)`` on the image grid."""
        if self._back is None:
            self._back = self.problem.operator.adjoint(self.problem.fidelity.gradient(self.z))
        return self._back

    def grad_u(self) -> np.ndarray:
        g = spline_coefficients_adjoint(self.sampler.scatter(self.back))
        return g if np.iscomplexobj(self.u) else np.real(g)

    def grad_phi(self) -> np.ndarray:
        dj = self.sampler.evaluate_gradient(self.coef)
        pix = np.real(np.conj(self.back)[None] * dj)
        return self.problem.param.jacobian_adjoint(self.phi, pix, self.problem.grid)


def problem_sampler(problem: Problem, phi) -> Sampler:
    return Sampler(problem.grid, problem.param.points(phi, problem.grid))


def smooth_value(u, phi, problem: Problem) -> float:
    return _Point(problem, np.asarray(u), np.asarray(phi, dtype=np.float64)).H


def objective(u, phi, problem: Problem) -> float:
    return smooth_value(u, phi, problem) + problem.ctx.alpha * dtv_value(u, problem.ctx)


def grad_u_H(u, phi, problem: Problem) -> np.ndarray:
    return _Point(problem, np.asarray(u), np.asarray(phi, dtype=np.float64)).grad_u()


def grad_phi_H(u, phi, problem: Problem) -> np.ndarray:
    return _Point(problem, np.asarray(u), np.asarray(phi, dtype=np.float64)).grad_phi()


def _slack(h):
    return 1e-12 * (1.0 + abs(h))


def palm_run(state: PalmState, problem: Problem, config: PalmConfig | None = None,
             iterations: int | None = None, stage: int = 0) -> PalmState:
    """Run outer PALM iterations, mutating and returning ``state``.

    Each half-step halves its step size until the descent-lemma surrogate
    holds and doubles it after acceptance. A step is kept only if the full
    objective does not increase, which also guards against an inexact prox.
    """
    cfg = config or PalmConfig()
    K = cfg.iterations if iterations is None else iterations
    if K < 1:
        raise ParamError("PALM needs at least one iteration")
    ctx = problem.ctx
    alpha = ctx.alpha
    pt = _Point(problem, state.u, np.asarray(state.phi, dtype=np.float64))
    if not np.isfinite(pt.H):
        raise ParamError("initial point is outside the fidelity domain")
    reg = alpha * dtv_value(pt.u, ctx)
    F = pt.H + reg
    dual = state.dual
    dual_t = state.dual_sigma

    for k in range(K):
        # --- u half-step
        gu = pt.grad_u()
        sigma = state.sigma
        prox_gap, prox_its = 0.0, 0
        for _ in range(cfg.max_halvings + 1):
            # the dual scales with the ball radius, so rescale the warm start
            warm = None if dual is None else dual * (sigma / dual_t)
            res = dtv_prox(pt.u - sigma * gu, sigma, ctx, cfg.prox_iters, cfg.prox_tol, warm)
            cand = _Point(problem, res.y, pt.phi, sampler=pt.sampler)
            delta = cand.u - pt.u
            bound = pt.H + inner(gu, delta) + inner(delta, delta) / (2.0 * sigma)
            if cand.H <= bound + _slack(pt.H):
                break
            sigma *= cfg.shrink
        else:
            raise BacktrackExhausted(f"u-step: no admissible step after {cfg.max_halvings} halvings")
        cand_reg = alpha * dtv_value(cand.u, ctx)
        if cand.H + cand_reg > F:
            # inexact prox: tighten it once from its own dual before giving up
            res = dtv_prox(pt.u - sigma * gu, sigma, ctx, 10 * cfg.prox_iters, 1e-3 * cfg.prox_tol, res.dual)
            cand = _Point(problem, res.y, pt.phi, sampler=pt.sampler)
            cand_reg = alpha * dtv_value(cand.u, ctx)
        if cand.H + cand_reg <= F:
            pt, reg, F = cand, cand_reg, cand.H + cand_reg
            dual, dual_t = res.dual, sigma
        prox_gap, prox_its = res.gap, res.iterations
        state.sigma = sigma * cfg.grow

        # --- phi half-step (prox of S = 0 is the identity)
        if cfg.update_phi:
            gphi = pt.grad_phi()
            gg = float(gphi @ gphi)
            tau = state.tau
            for _ in range(cfg.max_halvings + 1):
                cand = _Point(problem, pt.u, pt.phi - tau * gphi, coef=pt.coef)
                if cand.H <= pt.H - 0.5 * tau * gg + _slack(pt.H):
                    break
                tau *= cfg.shrink
            else:
                raise BacktrackExhausted(f"phi-step: no admissible step after {cfg.max_halvings} halvings")
            if cand.H <= pt.H:
                pt, F = cand, cand.H + reg
            state.tau = tau * cfg.grow

        record = {
            "stage": stage,
            "iteration": len(state.history),
            "objective": F,
            "fidelity": pt.H,
            "regularizer": reg,
            "sigma": sigma,
            "tau": state.tau / cfg.grow if cfg.update_phi else state.tau,
            "phi": pt.phi.tolist(),
            "prox_gap": prox_gap,
            "prox_iterations": prox_its,
        }
        state.history.append(record)
        log.debug("stage %d it %d obj %.10g sigma %.3g tau %.3g", stage, k, F, sigma, record["tau"])

    state.u = pt.u
    state.phi = pt.phi
    state.dual = dual
    state.dual_sigma = dual_t
    return state
