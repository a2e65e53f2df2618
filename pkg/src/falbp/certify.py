"""Optimality certificates and brute-force reference oracles.

Everything here is independent of the solver internals: certificates
take a primal point and a candidate dual vector and check weak duality
or the optimality conditions directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .linops import LinearOperator
from .probgen import CALTECH_LIKE, ProblemInstance, caltech_like
from .prox import min_norm_subgradient, shrink


@dataclass
class Certificate:
    """Weak-duality bound for ``min ||x||_1  s.t.  A x = b``.

    ``dual_value = b^T w`` with ``||A^T w||_inf <= 1`` is a lower bound on
    the optimal value, so ``gap`` bounds the suboptimality of any
    feasible ``x``.
    """

    dual_point: np.ndarray
    dual_value: float
    primal_value: float
    gap: float
    dual_feasibility: float
    residual: float

    def to_dict(self, include_dual: bool = False) -> dict:
        d = {"dual_value": self.dual_value, "primal_value": self.primal_value, "gap": self.gap,
             "dual_feasibility": self.dual_feasibility, "residual": self.residual}
        if include_dual:
            d["dual_point"] = self.dual_point.tolist()
        return d


def duality_gap_certificate(x: np.ndarray, theta: np.ndarray,
                            instance: ProblemInstance) -> Certificate:
    """Rescale ``theta`` into the dual feasible set and report the gap.

    Uses ``w = theta / max(1, ||A^T theta||_inf)``. Operator applications
    are uncounted.
    """
    op = instance.operator
    theta = np.asarray(theta, dtype=np.float64)
    feas = float(np.max(np.abs(op._adjoint(theta)))) if theta.size else 0.0
    w = theta / max(1.0, feas)
    dual = float(instance.b @ w)
    primal = float(np.abs(x).sum())
    resid = float(np.linalg.norm(op._forward(x) - instance.b))
    return Certificate(w, dual, primal, primal - dual, feas / max(1.0, feas), resid)


@dataclass
class GradientAudit:
    passed: bool
    grad_inf: float
    bound_inf: float
    residual_l2: float
    bound_l2: float


def gradient_norm_audit(x: np.ndarray, lam: float, theta: np.ndarray, eps: float,
                        instance: ProblemInstance, sigma_min: float | None = None) -> GradientAudit:
    """Check the gradient bounds implied by eps-optimality for the subproblem.

    An eps-optimal point of ``lam*||x||_1 + 0.5*||r||^2`` with
    ``r = A x - b - lam*theta`` satisfies
    ``||A^T r||_inf <= sqrt(2 eps) sigma_max + lam``, and hence
    ``||r||_2 <= sqrt(n) / sigma_min`` times the same bound. Never raises
    on failure; the result says which values were compared.
    """
    op = instance.operator
    r = op._forward(x) - instance.b - lam * np.asarray(theta, dtype=np.float64)
    g = op._adjoint(r)
    base = math.sqrt(2.0 * eps) * op.sigma_max + lam
    smin = op.sigma_min if sigma_min is None else sigma_min
    bound_l2 = math.sqrt(op.n_cols) / smin * base
    g_inf, r_l2 = float(np.max(np.abs(g))), float(np.linalg.norm(r))
    return GradientAudit(g_inf <= base and r_l2 <= bound_l2, g_inf, base, r_l2, bound_l2)


def kkt_residual(x: np.ndarray, theta: np.ndarray, operator: LinearOperator) -> float:
    """``min ||q - A^T theta||_2`` over ``q`` in the subdifferential of ``||x||_1``."""
    q = operator._adjoint(np.asarray(theta, dtype=np.float64))
    return min_norm_subgradient(x, -q, 1.0).norm


def l1_projection_oracle(y: np.ndarray, lam: float, eta: float, tol: float = 1e-12) -> np.ndarray:
    """Reference for constrained shrinkage by bisection on the multiplier.

    Finds ``alpha`` with ``||shrink(y, lam + alpha)||_1 = eta``; the left
    side is continuous and strictly decreasing while positive.
    Requires ``||shrink(y, lam)||_1 > eta``.
    """
    return shrink(y, lam + l1_projection_multiplier(y, lam, eta, tol))


def l1_projection_multiplier(y: np.ndarray, lam: float, eta: float, tol: float = 1e-12) -> float:
    y = np.asarray(y, dtype=np.float64)
    assert eta > 0 and np.abs(shrink(y, lam)).sum() > eta, "constraint must be active"
    lo, hi = 0.0, float(np.max(np.abs(y)))
    assert np.abs(shrink(y, lam + hi)).sum() <= eta, "bisection bracket failed"
    for _ in range(400):
        if hi - lo <= tol * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if np.abs(shrink(y, lam + mid)).sum() > eta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class UniquenessCertificate:
    """Whether ``x`` is the unique basis pursuit solution for ``b = A x``.

    ``margin = 1 - min ||A_off^T w||_inf`` over duals with
    ``A_S^T w = sign(x_S)``; uniqueness holds when ``A_S`` has full column
    rank and the margin is positive.
    """

    unique: bool
    margin: float
    full_rank: bool


def unique_solution_certificate(operator: LinearOperator, x: np.ndarray,
                                min_margin: float = 1e-9) -> UniquenessCertificate:
    """Exact dual certificate that ``x`` is the unique l1 minimizer on its affine set.

    Builds the explicit matrix, so it is meant for small instances
    (validating generated ground truth, not solver output).
    """
    A = operator.to_dense()
    on = np.flatnonzero(x)
    off = np.flatnonzero(x == 0)
    AS, Aoff = A[:, on], A[:, off]
    full_rank = np.linalg.matrix_rank(AS) == on.size
    m = A.shape[0]
    # variables (w, t): minimize t with -t <= Aoff^T w <= t
    c = np.zeros(m + 1)
    c[-1] = 1.0
    ones = np.ones((off.size, 1))
    A_ub = np.vstack([np.hstack([Aoff.T, -ones]), np.hstack([-Aoff.T, -ones])])
    A_eq = np.hstack([AS.T, np.zeros((on.size, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(2 * off.size), A_eq=A_eq,
                  b_eq=np.sign(x[on]), bounds=[(None, None)] * m + [(0, None)], method="highs")
    if res.status != 0:
        return UniquenessCertificate(False, -math.inf, bool(full_rank))
    margin = 1.0 - float(res.x[-1])
    return UniquenessCertificate(bool(full_rank) and margin > min_margin, margin, bool(full_rank))


def certified_caltech_like(name: str, seed: int = 0, max_tries: int = 64):
    """First hard instance at or after ``seed`` whose true signal is the unique l1 minimizer.

    Random supports at these sparsity levels are near the recovery
    threshold, so some draws have a different basis pursuit solution.

    Returns
    -------
    instance, seed_used, certificate
    """
    if name not in CALTECH_LIKE:
        raise ValueError(f"unknown hard instance {name!r}; choose from {sorted(CALTECH_LIKE)}")
    for s in range(seed, seed + max_tries):
        inst = caltech_like(name, s)
        cert = unique_solution_certificate(inst.operator, inst.x_true)
        if cert.unique:
            return inst, s, cert
    raise RuntimeError(f"no certified {name} instance in seeds {seed}..{seed + max_tries - 1}")
