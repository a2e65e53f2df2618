"""Accelerated proximal gradient inner solver with infinite-memory w-step.

The solver minimizes ``p(x) + f(x)`` over a simple set ``F`` where
``p = lam * ||.||_1``, ``f`` is a quadratic ``0.5 * ||A x - c||^2`` and
``F`` is an l1 ball. The prox function is ``0.5 * ||x - anchor||^2``.

The weighted history sum in the w-step is carried as two running
accumulators, which is exact for this choice of ``p`` and ``h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linops import LinearOperator
from .prox import constrained_shrink, min_norm_subgradient

CAP = "iteration-cap"
SUBGRADIENT = "subgradient"
OUTER_STOP = "outer-stop"


class NumericalError(RuntimeError):
    pass


@dataclass
class Gradient:
    """Gradient of the smooth part at a point, plus the byproducts used to get it."""

    point: np.ndarray
    image: np.ndarray       # A @ point
    residual: np.ndarray    # A @ point - shifted_rhs
    grad: np.ndarray


@dataclass
class ApgProblem:
    lam: float
    operator: LinearOperator
    shifted_rhs: np.ndarray
    eta: float
    L: float
    anchor: np.ndarray

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    def gradient(self, z: np.ndarray, image: np.ndarray | None = None) -> Gradient:
        if image is None:
            image = self.operator.apply(z)
        r = image - self.shifted_rhs
        return Gradient(z, image, r, self.operator.apply_adjoint(r))

    def u_step(self, v: np.ndarray, g: Gradient) -> np.ndarray:
        return constrained_shrink(v - g.grad / self.L, self.lam / self.L, self.eta).x

    def w_step(self, grad_acc: np.ndarray, weight_acc: float) -> np.ndarray:
        return constrained_shrink(self.anchor - grad_acc / self.L,
                                  weight_acc * self.lam / self.L, self.eta).x

    def objective(self, z: np.ndarray, image: np.ndarray | None = None) -> float:
        if image is None:
            image = self.operator.apply(z)
        r = image - self.shifted_rhs
        return self.lam * float(np.abs(z).sum()) + 0.5 * float(r @ r)

    def subgradient_norm(self, g: Gradient) -> float:
        return min_norm_subgradient(g.point, g.grad, self.lam).norm

    def model(self, x: np.ndarray, v: np.ndarray, g: Gradient) -> float:
        """The linearized model H(x) minimized by the u-step."""
        d = x - v
        return self.lam * float(np.abs(x).sum()) + float(g.grad @ x) + 0.5 * self.L * float(d @ d)

    def in_domain(self, z: np.ndarray, tol: float = 1e-9) -> bool:
        return float(np.abs(z).sum()) <= self.eta * (1 + tol) + tol


def theta_next(vartheta: float) -> float:
    """Next acceleration weight, the positive root of t**2 = (1 - t) * vartheta**2."""
    if not 0 < vartheta <= 1:
        raise ValueError(f"vartheta must lie in (0, 1], got {vartheta}")
    t2 = vartheta * vartheta
    # 2*t2 / (sqrt(t2**2 + 4*t2) + t2) is the cancellation-free form of the root
    return 2.0 * t2 / (math.sqrt(t2 * t2 + 4.0 * t2) + t2)


@dataclass
class ApgState:
    ell: int
    u: np.ndarray
    w: np.ndarray
    vartheta: float
    grad_acc: np.ndarray
    weight_acc: float
    ell_max: int
    v: Optional[np.ndarray] = None

    @classmethod
    def start(cls, problem, ell_max: int) -> "ApgState":
        x0 = problem.anchor.copy()
        return cls(0, x0, x0.copy(), 1.0, np.zeros_like(x0), 0.0, int(ell_max))

    def mix(self) -> np.ndarray:
        if self.vartheta == 1.0:
            return self.w.copy()
        return (1.0 - self.vartheta) * self.u + self.vartheta * self.w


@dataclass
class ApgOutcome:
    x: np.ndarray
    iterations: int
    exit_reason: str
    returned_iterate_kind: str
    image: Optional[np.ndarray] = None          # A @ x when it came for free
    last_gradient: Optional[Gradient] = None
    subgradient_norm: Optional[float] = None
    monotone_violations: int = 0
    diagnostics: dict = field(default_factory=dict)


def apg_step(problem, state: ApgState, g: Gradient | None = None,
             check_monotone: bool = False) -> tuple[ApgState, Optional[bool]]:
    """Advance one iteration; returns the new state and, if requested,
    whether ``H(u+) <= H(u_hat)`` held for this step."""
    v = state.v if state.v is not None else state.mix()
    if g is None:
        g = problem.gradient(v)
    if not np.all(np.isfinite(g.grad)):
        raise NumericalError(f"non-finite gradient at APG iteration {state.ell}")
    inv = 1.0 / state.vartheta
    grad_acc = state.grad_acc + inv * g.grad
    weight_acc = state.weight_acc + inv
    w_new = problem.w_step(grad_acc, weight_acc)
    u_new = problem.u_step(v, g)
    ok = None
    if check_monotone:
        u_hat = (1.0 - state.vartheta) * state.u + state.vartheta * w_new
        h_new, h_hat = problem.model(u_new, v, g), problem.model(u_hat, v, g)
        ok = h_new <= h_hat + 1e-12 * max(1.0, abs(h_hat))
    new = ApgState(state.ell + 1, u_new, w_new, theta_next(state.vartheta),
                   grad_acc, weight_acc, state.ell_max)
    return new, ok


def apg_solve(problem, ell_max: int, *,
              inner_stop: Callable[[int, Gradient], object] | None = None,
              outer_stop: Callable[[np.ndarray, np.ndarray], bool] | None = None,
              first_gradient: Gradient | None = None,
              callback: Callable[[ApgState], None] | None = None,
              check_monotone: bool = False) -> ApgOutcome:
    """Run APG from ``problem.anchor`` until a stopping rule fires.

    Stopping rules are checked in this order each iteration: the
    iteration cap ``ell >= ell_max`` (returns u), then ``inner_stop`` on
    the gradient at v (returns v), then after the update ``outer_stop``
    on the new and previous u (returns the new u).

    ``first_gradient`` may carry the gradient at the anchor, which is
    where v starts; it is then not recomputed. ``inner_stop`` may return
    a string, which is then reported as the exit reason.
    """
    state = ApgState.start(problem, ell_max)
    violations = 0
    g = None
    while True:
        if state.ell >= state.ell_max:
            return ApgOutcome(state.u, state.ell, CAP, "u", last_gradient=g,
                              monotone_violations=violations)
        v = state.mix()
        if state.ell == 0 and first_gradient is not None:
            g = first_gradient
        else:
            g = problem.gradient(v)
        if not np.all(np.isfinite(g.grad)):
            raise NumericalError(f"non-finite gradient at APG iteration {state.ell}")
        hit = inner_stop(state.ell, g) if inner_stop is not None else False
        if hit:
            reason = hit if isinstance(hit, str) else SUBGRADIENT
            return ApgOutcome(v, state.ell, reason, "v", image=g.image,
                              last_gradient=g, monotone_violations=violations)
        state.v = v
        prev_u = state.u
        state, ok = apg_step(problem, state, g, check_monotone)
        if ok is False:
            violations += 1
        if callback is not None:
            callback(state)
        if outer_stop is not None and outer_stop(state.u, prev_u):
            return ApgOutcome(state.u, state.ell, OUTER_STOP, "u", last_gradient=g,
                              monotone_violations=violations)


def optimality_iterations(L: float, h_at_opt: float, eps: float, c: float = 1.0) -> int:
    """Smallest index ``j`` such that ``u^(j)`` is guaranteed ``eps``-optimal."""
    return max(1, math.ceil(math.sqrt(4.0 * L * h_at_opt / (c * eps))))
