"""FAL for basis pursuit denoising, ``min ||x||_1  s.t.  ||A x - b||_gamma <= delta``.

A slack ``s = b - A x`` turns the constraint into ``A x + s = b`` with
``||s||_gamma <= delta``. Each outer iteration runs APG on the joint
vector ``z = [x; s]`` for

    lam * ||x||_1 + 0.5 * ||A x + s - b - lam * theta||^2

over ``{||x||_1 <= eta_k} x {||s||_gamma <= delta}``. The proximal steps
split by block: constrained shrinkage for x and a norm-ball projection
for s.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .apg import Gradient
from .fal import AdaptiveSchedule, FalConfig, FalState, _run
from .linops import LinearOperator
from .probgen import ProblemInstance, evaluate
from .prox import ball_norm, constrained_shrink, min_norm_subgradient, normalize_gamma, project_ball

# Relative-change tolerance of the default stop. Tying it to the noise
# level stops after a handful of outer iterations, long before the l1
# part of the objective has converged.
DEFAULT_REL_TOL = 1e-6


def ball_scale(gamma, m: int) -> float:
    """Factor bounding ``||s||_2`` by ``factor * ||s||_gamma`` (1 for gamma in {1, 2}, sqrt(m) for inf)."""
    return math.sqrt(m) if normalize_gamma(gamma) == np.inf else 1.0


def projected_gradient_residual(s: np.ndarray, grad_s: np.ndarray, L: float,
                                delta: float, gamma) -> float:
    """``L * ||s - P(s - grad_s / L)||_2``, zero exactly at minimizers over the ball."""
    if not L > 0:
        raise ValueError(f"L must be positive, got {L}")
    return L * float(np.linalg.norm(s - project_ball(s - grad_s / L, delta, gamma)))


class SlackProblem:
    """APG subproblem on ``z = [x; s]``; duck-types ``ApgProblem``."""

    def __init__(self, lam: float, operator: LinearOperator, shifted_rhs: np.ndarray,
                 eta: float, L: float, anchor: np.ndarray, delta: float, gamma):
        if not L > 0:
            raise ValueError(f"L must be positive, got {L}")
        if not eta > 0:
            raise ValueError(f"eta must be positive, got {eta}")
        self.lam = lam
        self.operator = operator
        self.shifted_rhs = shifted_rhs
        self.eta = eta
        self.L = L
        self.anchor = anchor
        self.delta = delta
        self.gamma = normalize_gamma(gamma)
        self.n = operator.n_cols

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return z[:self.n], z[self.n:]

    def gradient(self, z: np.ndarray, image: Optional[np.ndarray] = None) -> Gradient:
        x, s = self.split(z)
        if image is None:
            image = self.operator.apply(x)
        r = (image + s) - self.shifted_rhs
        return Gradient(z, image, r, np.concatenate([self.operator.apply_adjoint(r), r]))

    def _prox(self, y: np.ndarray, weight: float) -> np.ndarray:
        yx, ys = self.split(y)
        x = constrained_shrink(yx, weight * self.lam / self.L, self.eta).x
        return np.concatenate([x, project_ball(ys, self.delta, self.gamma)])

    def u_step(self, v: np.ndarray, g: Gradient) -> np.ndarray:
        return self._prox(v - g.grad / self.L, 1.0)

    def w_step(self, grad_acc: np.ndarray, weight_acc: float) -> np.ndarray:
        return self._prox(self.anchor - grad_acc / self.L, weight_acc)

    def objective(self, z: np.ndarray, image: Optional[np.ndarray] = None) -> float:
        x, s = self.split(z)
        if image is None:
            image = self.operator.apply(x)
        r = (image + s) - self.shifted_rhs
        return self.lam * float(np.abs(x).sum()) + 0.5 * float(r @ r)

    def subgradient_norm(self, g: Gradient) -> float:
        x, _ = self.split(g.point)
        gx, _ = self.split(g.grad)
        return min_norm_subgradient(x, gx, self.lam).norm

    def slack_residual(self, g: Gradient) -> float:
        _, s = self.split(g.point)
        _, gs = self.split(g.grad)
        return projected_gradient_residual(s, gs, self.L, self.delta, self.gamma)

    def model(self, z: np.ndarray, v: np.ndarray, g: Gradient) -> float:
        x, _ = self.split(z)
        d = z - v
        return self.lam * float(np.abs(x).sum()) + float(g.grad @ z) + 0.5 * self.L * float(d @ d)

    def in_domain(self, z: np.ndarray, tol: float = 1e-9) -> bool:
        x, s = self.split(z)
        return (float(np.abs(x).sum()) <= self.eta * (1 + tol) + tol
                and ball_norm(s, self.gamma) <= self.delta * (1 + tol) + 1e-12)


class SlackModel:
    """Vector layout ``z = [x; s]`` for the outer loop."""

    def __init__(self, operator: LinearOperator, b: np.ndarray, delta: float, gamma,
                 squared: bool = False):
        if delta < 0:
            raise ValueError(f"delta must be nonnegative, got {delta}")
        self.op = operator
        self.b = b
        self.delta = float(delta)
        self.gamma = normalize_gamma(gamma)
        self.eta0 = None
        self.squared = squared
        self.n = operator.n_cols
        # the joint gradient has Lipschitz constant sigma^2 + 1 once s can move
        self.sigma_sq = operator.sigma_max_sq + (1.0 if delta > 0 else 0.0)
        self.sigma = operator.sigma_max if delta == 0 else math.sqrt(self.sigma_sq)
        self.upsilon = ball_scale(self.gamma, operator.n_rows)

    def lift(self, x0: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(x0, dtype=np.float64), np.zeros(self.op.n_rows)])

    def x_part(self, z: np.ndarray) -> np.ndarray:
        return z[:self.n]

    def s_part(self, z: np.ndarray) -> np.ndarray:
        return z[self.n:]

    def image(self, z: np.ndarray) -> np.ndarray:
        return self.op.apply(z[:self.n])

    def constraint_residual(self, z: np.ndarray, image: np.ndarray) -> np.ndarray:
        return (image + z[self.n:]) - self.b

    def problem(self, state: FalState, anchor: np.ndarray) -> SlackProblem:
        return SlackProblem(state.lam, self.op, self.b + state.lam * state.theta,
                            state.eta_k, state.L_k, anchor, self.delta, self.gamma)

    def ell_max(self, state: FalState, anchor: np.ndarray) -> int:
        mu_x = state.eta_k + float(np.linalg.norm(anchor[:self.n]))
        mu_s = self.upsilon * self.delta + float(np.linalg.norm(anchor[self.n:]))
        # 2 sqrt(L) mu / sqrt(eps) with mu^2 = (mu_x^2 + mu_s^2) / 2
        return math.ceil(self.sigma * math.sqrt(mu_x * mu_x + mu_s * mu_s)
                         * math.sqrt(2.0 / state.eps))

    def x_subgradient_norm(self, problem: SlackProblem, g: Gradient) -> float:
        return problem.subgradient_norm(g)

    def inner_residual(self, problem: SlackProblem, g: Gradient) -> float:
        r = max(problem.subgradient_norm(g), problem.slack_residual(g))
        return r * r if self.squared else r


def denoise_solve(instance: ProblemInstance, delta: Optional[float] = None, gamma=2,
                  config: Optional[FalConfig] = None, *, x0: Optional[np.ndarray] = None,
                  inner_callback=None):
    """Solve ``min ||x||_1  s.t.  ||A x - b||_gamma <= delta``.

    Parameters
    ----------
    instance : ProblemInstance
    delta : float, optional
        Constraint radius; defaults to ``instance.delta``.
    gamma : {1, 2, inf}
        Norm of the residual constraint.
    config : FalConfig, optional
        Defaults to the relative-change stop with tolerance
        ``DEFAULT_REL_TOL``.

    Returns
    -------
    x_sol, s_sol, report
    """
    if delta is None:
        delta = instance.delta
    if delta is None:
        raise ValueError("no delta given and the instance carries none")
    if config is None:
        config = FalConfig(gamma=DEFAULT_REL_TOL, stop_mode="noisy")
    model = SlackModel(instance.operator, np.asarray(instance.b, dtype=np.float64), delta, gamma,
                       squared=config.squared_subgradient)
    schedule = AdaptiveSchedule(config, model.sigma_sq, instance.operator.orthogonal_rows)
    state, report = _run(instance, config, model, schedule, x0=x0,
                         inner_callback=inner_callback)
    x_sol, s_sol = model.x_part(state.x).copy(), model.s_part(state.x).copy()
    report.metrics = evaluate(x_sol, instance)
    report.metrics["slack_norm"] = float(np.linalg.norm(s_sol, ord=model.gamma))
    report.extra["theta"] = state.theta
    report.extra["delta"] = float(delta)
    report.extra["gamma_norm"] = "inf" if model.gamma == np.inf else int(model.gamma)
    return x_sol, s_sol, report
