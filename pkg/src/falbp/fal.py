"""First-order augmented Lagrangian (FAL) solver for basis pursuit.

Each outer iteration approximately minimizes

    P(x) = lam * ||x||_1 + 0.5 * ||A x - b - lam * theta||^2

over ``||x||_1 <= eta_k`` with the APG inner solver, warm started at the
previous iterate, then updates the multiplier
``theta <- theta - (A x - b) / lam``. Two parameter schedules are
provided: an adaptive one keyed on the sparsity of the current iterate,
and a geometric one with worst-case iteration guarantees.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .apg import CAP, OUTER_STOP, ApgProblem, Gradient, NumericalError, apg_solve
from .linops import LinearOperator, ScaledOperator
from .probgen import ProblemInstance, evaluate

logger = logging.getLogger(__name__)

STOP_MODES = ("noiseless", "oracle", "noisy")
DUAL_GAP = "dual-gap"


class ZeroMeasurementError(ValueError):
    pass


class CapExceeded(RuntimeError):
    pass


@dataclass
class FalConfig:
    """Solver settings.

    ``c_lambda_init``, ``c_tau_init`` and ``t_init`` drive the first
    outer iteration, where the iterate is not yet sparse enough for the
    adaptive rules to be meaningful. Use 0.4/0.4/2 for random tests and
    0.8/0.8/1.9 for hard instances.

    ``squared_subgradient`` compares the squared norm of the min-norm
    subgradient with tau in the inner stop, the tuned practical rule;
    with False the plain norm is compared, as the convergence theory
    assumes.

    ``long_steps`` scales the APG step by the sparsity-keyed factor
    ``t > 1``. ``None`` enables it only for operators with orthonormal
    rows; on dense Gaussian operators the long steps can diverge.
    """

    gamma: float = 1.0
    stop_mode: str = "noiseless"
    c_lambda_init: float = 0.4
    c_tau_init: float = 0.4
    t_init: float = 2.0
    c_hat_tau: float = 0.9
    max_outer: int = 200
    max_apg_total: int = 1_000_000
    adaptive: bool = True
    long_steps: Optional[bool] = None
    alpha: float = 0.5
    squared_subgradient: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.stop_mode not in STOP_MODES:
            raise ValueError(f"stop_mode must be one of {STOP_MODES}, got {self.stop_mode!r}")
        for name in ("c_lambda_init", "c_tau_init", "c_hat_tau", "alpha"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not self.t_init > 0:
            raise ValueError(f"t_init must be positive, got {self.t_init}")
        if self.max_outer < 1 or self.max_apg_total < 1:
            raise ValueError("iteration caps must be positive")

    @classmethod
    def hard(cls, **kw) -> "FalConfig":
        return cls(**{"c_lambda_init": 0.8, "c_tau_init": 0.8, "t_init": 1.9, **kw})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FalState:
    k: int
    lam: float
    eps: float
    tau: float
    theta: np.ndarray
    eta0: float
    eta_k: float
    x: np.ndarray
    xi: Optional[float]
    L_k: float
    n_apg_total: int = 0
    n_mat_total: int = 0

    def refresh_eta(self) -> None:
        self.eta_k = self.eta0 + 0.5 * self.lam * float(self.theta @ self.theta)


@dataclass
class SolveReport:
    trace: list
    n_fal: int
    n_apg: int
    n_mat: int
    stop_reason: str
    metrics: dict = field(default_factory=dict)
    cap_exceeded: bool = False
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# -- schedules ----------------------------------------------------------------

_XI_BRACKETS = (0.9, 0.6, 0.25, 0.1)
_C_LAMBDA = (0.9, 0.85, 0.8, 0.6, 0.4)
_T_STEP = (1.8, 1.85, 1.9, 2.0, 3.0)


def _bracket(xi: float) -> int:
    if xi < 0:
        raise ValueError(f"sparsity ratio must be nonnegative, got {xi}")
    for i, lo in enumerate(_XI_BRACKETS):
        if xi >= lo:
            return i
    return len(_XI_BRACKETS)


def schedule_c_lambda(xi: float) -> float:
    """Decay factor for lam as a function of the sparsity ratio ``xi``."""
    return _C_LAMBDA[_bracket(xi)]


def schedule_t(xi: float) -> float:
    """Long-step factor for the APG step ``t / L``."""
    return _T_STEP[_bracket(xi)]


def eta_bound(instance: ProblemInstance, atb: Optional[np.ndarray] = None) -> float:
    """l1 radius that contains the basis pursuit solution.

    With orthonormal rows the least-norm solution is ``A^T b``, so its
    l1 norm bounds ``||x*||_1``. Otherwise ``A`` is taken to be standard
    Gaussian and ``||b||_2 / (1 - sqrt(m/n))`` is used.
    """
    op = instance.operator
    if op.orthogonal_rows:
        if atb is None:
            atb = op._adjoint(instance.b)
        return float(np.abs(atb).sum())
    m, n = op.shape
    if m >= n:
        raise ValueError(f"Gaussian l1 bound needs m < n, got m={m}, n={n}")
    return float(np.linalg.norm(instance.b)) / (1.0 - math.sqrt(m / n))


def dual_update(theta: np.ndarray, residual: np.ndarray, lam: float) -> np.ndarray:
    """``theta - (A x - b) / lam`` given the constraint residual ``A x - b``."""
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    return theta - residual / lam


class AdaptiveSchedule:
    """Sparsity-keyed decay of (lam, eps, tau) with long steps."""

    def __init__(self, config: FalConfig, sigma_sq: float, orthogonal_rows: bool = True):
        self.cfg = config
        self.sigma_sq = sigma_sq
        self.long_steps = orthogonal_rows if config.long_steps is None else config.long_steps
        self._tau_factor = config.c_tau_init

    def initial_lambda(self, x0: np.ndarray) -> float:
        return 0.99 * float(np.max(np.abs(x0)))

    def initial_L(self) -> float:
        t = self.cfg.t_init if self.long_steps else 1.0
        return self.sigma_sq / t

    def start(self, state: FalState, p0: float, g0: float) -> None:
        state.eps = 0.99 * p0
        state.tau = self.cfg.c_hat_tau * g0

    def advance(self, state: FalState, xi: float) -> None:
        # leaving the first iteration uses the configured initial coefficients
        if state.k == 2:
            c_lam, self._tau_factor = self.cfg.c_lambda_init, self.cfg.c_tau_init
        else:
            c_lam = schedule_c_lambda(xi)
            self._tau_factor = c_lam - 0.01
        state.lam *= c_lam
        state.eps *= c_lam * c_lam
        state.L_k = self.sigma_sq / (schedule_t(xi) if self.long_steps else 1.0)

    def set_tau(self, state: FalState, g0: float) -> None:
        state.tau = min(self._tau_factor * state.tau, self.cfg.c_hat_tau * g0)


class GeometricSchedule:
    """lam_k = alpha**(k-1), eps_k = 2 * alpha**(2(k-1)) on the operator scaled to sigma_max = 1."""

    def __init__(self, alpha: float, n: int, kappa: float, eta: float):
        self.alpha = alpha
        self.tau_div = 2.0 * max(1.0, eta + 4.5 * n * kappa * kappa)

    def initial_lambda(self, x0: np.ndarray) -> float:
        return 1.0

    def initial_L(self) -> float:
        return 1.0

    def start(self, state: FalState, p0: float, g0: float) -> None:
        state.eps = 2.0
        state.tau = state.eps / self.tau_div

    def advance(self, state: FalState, xi: float) -> None:
        state.lam *= self.alpha
        state.eps *= self.alpha * self.alpha
        state.L_k = 1.0

    def set_tau(self, state: FalState, g0: float) -> None:
        state.tau = state.eps / self.tau_div


# -- subproblem models ---------------------------------------------------------

class BasisPursuitModel:
    """Vector layout and subproblem factory for plain basis pursuit, z = x."""

    def __init__(self, operator: LinearOperator, b: np.ndarray, eta0: Optional[float] = None,
                 squared: bool = False):
        self.op = operator
        self.b = b
        self.eta0 = eta0
        self.squared = squared
        self.sigma_sq = operator.sigma_max_sq

    def lift(self, x0: np.ndarray) -> np.ndarray:
        return np.array(x0, dtype=np.float64)

    def x_part(self, z: np.ndarray) -> np.ndarray:
        return z

    def image(self, z: np.ndarray) -> np.ndarray:
        return self.op.apply(z)

    def constraint_residual(self, z: np.ndarray, image: np.ndarray) -> np.ndarray:
        return image - self.b

    def problem(self, state: FalState, anchor: np.ndarray):
        return ApgProblem(state.lam, self.op, self.b + state.lam * state.theta,
                          state.eta_k, state.L_k, anchor)

    def ell_max(self, state: FalState, anchor: np.ndarray) -> int:
        radius = state.eta_k + float(np.linalg.norm(anchor))
        return math.ceil(self.op.sigma_max * radius * math.sqrt(2.0 / state.eps))

    def x_subgradient_norm(self, problem, g: Gradient) -> float:
        return problem.subgradient_norm(g)

    def inner_residual(self, problem, g: Gradient) -> float:
        r = problem.subgradient_norm(g)
        return r * r if self.squared else r


# -- outer loop -------------------------------------------------------------------

def _outer_stop(config: FalConfig, x_true: Optional[np.ndarray], x_part):
    gamma = config.gamma
    if config.stop_mode == "noiseless":
        return lambda new, old: float(np.max(np.abs(x_part(new) - x_part(old)))) <= gamma
    if config.stop_mode == "noisy":
        def rel_change(new, old):
            xn, xo = x_part(new), x_part(old)
            return float(np.linalg.norm(xn - xo)) <= gamma * float(np.linalg.norm(xo))
        return rel_change
    if x_true is None:
        raise ValueError("oracle stopping needs the true signal")
    return lambda new, old: float(np.max(np.abs(x_part(new) - x_true))) <= gamma


def dual_gap(problem, g: Gradient) -> float:
    """Duality gap of the subproblem at ``g.point`` for the dual point ``s * r``.

    ``r = A v - c`` and ``s = min(1, lam / ||A^T r||_inf)`` make the dual
    point feasible. Substituting ``c = A v - r`` gives the gap
    ``lam*||v||_1 + s * v^T A^T r + 0.5 * (1 - s)**2 * ||r||^2``, which
    avoids cancellation against large ``||c||``.
    """
    r = g.residual
    gmax = float(np.max(np.abs(g.grad)))
    s = 1.0 if gmax <= problem.lam else problem.lam / gmax
    return (problem.lam * float(np.abs(g.point).sum()) + s * float(g.point @ g.grad)
            + 0.5 * (1.0 - s) ** 2 * float(r @ r))


def _run(instance: ProblemInstance, config: FalConfig, model, schedule, *,
         x0: Optional[np.ndarray] = None,
         inner_callback: Optional[Callable] = None,
         dual_gap_route: bool = False,
         after_iteration: Optional[Callable[[FalState, dict], bool]] = None):
    op = model.op
    b = model.b
    if not np.any(b):
        raise ZeroMeasurementError("zero measurement: b = 0 gives the trivial solution x = 0")
    count0 = op.multiply_count
    atb = op.apply_adjoint(b)
    eta = model.eta0 if model.eta0 is not None else eta_bound(instance, atb)
    x_start = atb if x0 is None else np.asarray(x0, dtype=np.float64)
    if not np.any(x_start):
        raise ZeroMeasurementError("zero measurement: initial iterate is zero")
    z = model.lift(x_start)
    image = model.image(z)

    lam1 = schedule.initial_lambda(model.x_part(z))
    state = FalState(1, lam1, 0.0, 0.0, np.zeros(op.n_rows), eta, eta, z, None,
                     schedule.initial_L())
    stop = _outer_stop(config, instance.x_true, model.x_part)
    trace: list[dict] = []
    stop_reason = None
    cap_exceeded = False

    while True:
        if state.k > 1:
            xi = np.count_nonzero(model.x_part(state.x)) / op.n_rows
            state.xi = float(xi)
            schedule.advance(state, xi)
        state.refresh_eta()
        if config.stop_mode == "oracle" and stop(state.x, state.x):
            stop_reason = "fal-stop"
            break
        anchor = state.x
        problem = model.problem(state, anchor)
        g = problem.gradient(anchor, image=image)
        g0 = model.x_subgradient_norm(problem, g)
        if state.k == 1:
            schedule.start(state, problem.objective(anchor, image=image), g0)
        else:
            schedule.set_tau(state, g0)

        ell_max = model.ell_max(state, anchor)
        budget = config.max_apg_total - state.n_apg_total
        tau, eps = state.tau, state.eps

        def inner_stop(ell, grad, problem=problem, tau=tau, eps=eps):
            if model.inner_residual(problem, grad) <= tau:
                return True
            if dual_gap_route and dual_gap(problem, grad) <= eps:
                return DUAL_GAP
            return False

        cb = None
        if inner_callback is not None:
            k_now, base = state.k, state.n_apg_total
            cb = lambda st: inner_callback(k_now, base + st.ell, model.x_part(st.u))  # noqa: E731
        out = apg_solve(problem, min(ell_max, budget), inner_stop=inner_stop,
                        outer_stop=stop, first_gradient=g, callback=cb)
        state.n_apg_total += out.iterations
        entry = {
            "k": state.k, "lam": state.lam, "eps": state.eps, "tau": state.tau,
            "theta_norm": float(np.linalg.norm(state.theta)), "eta_k": state.eta_k,
            "L": state.L_k, "xi": state.xi, "ell_max": ell_max, "n_inner": out.iterations,
            "exit": out.exit_reason, "returned": out.returned_iterate_kind,
        }
        state.x = out.x
        if out.exit_reason == OUTER_STOP:
            entry["nnz"] = int(np.count_nonzero(model.x_part(out.x)))
            trace.append(entry)
            stop_reason = "fal-stop"
            break
        if out.exit_reason == CAP and ell_max > budget:
            trace.append(entry)
            stop_reason, cap_exceeded = "apg-budget", True
            break
        image = out.image if out.image is not None else model.image(out.x)
        resid = model.constraint_residual(out.x, image)
        state.theta = dual_update(state.theta, resid, state.lam)
        if not np.all(np.isfinite(state.theta)):
            raise NumericalError(f"non-finite multiplier at outer iteration {state.k}")
        entry["nnz"] = int(np.count_nonzero(model.x_part(out.x)))
        entry["residual"] = float(np.linalg.norm(resid))
        trace.append(entry)
        if after_iteration is not None and after_iteration(state, entry):
            stop_reason = "certified"
            break
        if state.k >= config.max_outer:
            stop_reason, cap_exceeded = "max-outer", True
            break
        state.k += 1

    if cap_exceeded:
        logger.warning("FAL stopped on a safeguard cap (%s) after %d outer iterations",
                       stop_reason, state.k)
    state.n_mat_total = op.multiply_count - count0
    report = SolveReport(trace, len(trace), state.n_apg_total, state.n_mat_total,
                         stop_reason, cap_exceeded=cap_exceeded, config=config.to_dict())
    return state, report


def fal_solve(instance: ProblemInstance, config: Optional[FalConfig] = None, *,
              x0: Optional[np.ndarray] = None,
              inner_callback: Optional[Callable[[int, int, np.ndarray], None]] = None):
    """Solve ``min ||x||_1  s.t.  A x = b`` with the adaptive schedule.

    Parameters
    ----------
    instance : ProblemInstance
        Operator, measurements and optionally the true signal (needed
        for oracle stopping and for the error metrics).
    config : FalConfig, optional
        Defaults to ``FalConfig()``.
    x0 : ndarray, optional
        Initial iterate; defaults to ``A^T b``.
    inner_callback : callable, optional
        Called as ``(k, cumulative_apg_iterations, u)`` after every APG step.

    Returns
    -------
    x_sol : ndarray
    report : SolveReport
        ``n_mat`` is the change in the operator's multiply counter.
    """
    config = config or FalConfig()
    if not config.adaptive:
        return fal_solve_theoretical(instance, config.alpha, None, config=config)[:2]
    model = BasisPursuitModel(instance.operator, np.asarray(instance.b, dtype=np.float64),
                              squared=config.squared_subgradient)
    schedule = AdaptiveSchedule(config, model.sigma_sq, instance.operator.orthogonal_rows)
    state, report = _run(instance, config, model, schedule, x0=x0,
                         inner_callback=inner_callback)
    x_sol = state.x
    report.metrics = evaluate(x_sol, instance)
    report.extra["theta"] = state.theta
    return x_sol, report


# -- geometric schedule with bound audit ------------------------------------------

@dataclass
class BoundConstants:
    n: int
    sigma_min: float
    kappa: float
    eta: float
    B1: float
    B2: float
    B_theta: float
    B_x: float
    c: float
    opt_const: float

    @classmethod
    def compute(cls, n: int, kappa: float, eta: float, alpha: float) -> "BoundConstants":
        # scaled operator: sigma_max = 1, sigma_min = 1 / kappa
        sigma_min = 1.0 / kappa
        div = 2.0 * max(1.0, eta + 4.5 * n * kappa * kappa)
        B1 = 2.0                     # eps_k / lam_k**2 is constant
        B2 = 2.0 / div               # tau_k / lam_k is largest at k = 1
        c = 1.0 / div                # tau_k = c * eps_k
        B_theta = math.sqrt(n) / sigma_min * (max(math.sqrt(2.0 * B1), B2) + 1.0)
        B_x = eta + 0.5 * B_theta**2
        opt = max(0.5 * B_theta**2 + B1 * max(1.0, 2.0 * c * B_x),
                  0.5 * (math.sqrt(n) / sigma_min + B_theta) ** 2)
        return cls(n, sigma_min, kappa, eta, B1, B2, B_theta, B_x, c, opt)


def outer_iteration_bound(n: int, kappa: float, eps: float, alpha: float) -> int:
    """``ceil(log_{1/alpha}(8 n kappa**2 / eps)) + 1`` outer iterations."""
    return math.ceil(math.log(8.0 * n * kappa * kappa / eps) / math.log(1.0 / alpha)) + 1


def fal_solve_theoretical(instance: ProblemInstance, alpha: float = 0.5,
                          eps_target: Optional[float] = 1e-3, *,
                          config: Optional[FalConfig] = None):
    """FAL with the geometric schedule and a per-iteration audit of its error bounds.

    The operator and data are scaled by ``1/sigma_max``. The run stops
    once ``||A x - b||_2 <= eps_target`` (scaled) and the optimality bound
    ``opt_const * lam_k`` is at most ``eps_target``; with
    ``eps_target=None`` the configured FALstop applies instead.

    Besides the iteration cap and the subgradient test, an inner iterate
    is accepted when a dual feasible point certifies that it is
    eps_k-optimal for the subproblem, which is the property the cap
    exists to guarantee.

    Returns
    -------
    x_sol, report, audit
        ``audit`` holds the constants and one pass/fail record per outer
        iteration.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    config = config or FalConfig(alpha=alpha, max_outer=500)
    op = instance.operator
    sigma = op.sigma_max
    kappa = op.condition_number
    eta = eta_bound(instance)
    scaled = ScaledOperator(op, 1.0 / sigma)
    b_bar = np.asarray(instance.b, dtype=np.float64) / sigma
    model = BasisPursuitModel(scaled, b_bar, eta0=eta)
    n = op.n_cols
    consts = BoundConstants.compute(n, kappa, eta, alpha)
    schedule = GeometricSchedule(alpha, n, kappa, eta)
    x_true = instance.x_true
    true_l1 = float(np.abs(x_true).sum()) if x_true is not None else None
    records: list[dict] = []

    def audit(state: FalState, entry: dict) -> bool:
        lam = state.lam
        feas_bound = 2.0 * consts.B_theta * lam
        rec = {"k": state.k, "lam": lam, "residual": entry["residual"],
               "feasibility_bound": feas_bound,
               "feasibility_ok": entry["residual"] <= feas_bound,
               "theta_norm": entry["theta_norm"],
               "theta_ok": entry["theta_norm"] <= consts.B_theta,
               "certified_by": entry["exit"]}
        opt_bound = consts.opt_const * lam
        rec["optimality_bound"] = opt_bound
        if true_l1 is not None:
            err = abs(float(np.abs(state.x).sum()) - true_l1)
            rec["optimality_error"] = err
            rec["optimality_ok"] = err <= opt_bound
            rec["optimality_loose"] = err > 0 and opt_bound / err > 1e3
        records.append(rec)
        if eps_target is None:
            return False
        return entry["residual"] <= eps_target and opt_bound <= eps_target

    inst_scaled = ProblemInstance(scaled, b_bar, x_true, spec=instance.spec)
    if eps_target is not None:
        config = FalConfig(**{**config.to_dict(), "stop_mode": "noiseless", "gamma": 1e-300})
    state, report = _run(inst_scaled, config, model, schedule, dual_gap_route=True,
                         after_iteration=audit)
    # the counter of the caller's operator saw every application
    x_sol = state.x
    report.metrics = evaluate(x_sol, instance)
    report.extra["theta"] = state.theta
    all_pass = all(r["feasibility_ok"] and r.get("optimality_ok", True) for r in records)
    bound = outer_iteration_bound(n, kappa, eps_target, alpha) if eps_target else None
    audit_out = {
        "constants": asdict(consts),
        "records": records,
        "all_pass": all_pass,
        "n_fal": report.n_fal,
        "n_fal_bound": bound,
        "n_fal_ok": bound is None or report.n_fal <= bound,
    }
    report.extra["bound_audit"] = audit_out
    return x_sol, report, audit_out
