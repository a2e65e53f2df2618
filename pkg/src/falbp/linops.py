"""Matrix-free measurement operators.

Every operator exposes ``apply`` (``A @ x``) and ``apply_adjoint``
(``A.T @ y``) and counts each full application in ``multiply_count``;
that counter is the ``nMat`` cost reported by the solvers.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

logger = logging.getLogger(__name__)

POWER_TOL = 1e-8
POWER_MAXITER = 500


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class SigmaEstimate:
    value: float
    iterations: int
    converged: bool


class LinearOperator:
    """Base class for an ``m x n`` real operator with full row rank.

    Subclasses implement ``_forward`` and ``_adjoint``. Those are never
    counted; the public ``apply``/``apply_adjoint`` validate, count, and
    dispatch.
    """

    kind = "abstract"
    orthogonal_rows = False

    def __init__(self, n_rows: int, n_cols: int):
        if n_rows < 1 or n_cols < 1:
            raise DimensionError("operator dimensions must be positive")
        if n_rows > n_cols:
            raise DimensionError(f"need m <= n, got m={n_rows}, n={n_cols}")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self._count = 0
        self._lock = threading.Lock()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def multiply_count(self) -> int:
        return self._count

    def reset_count(self) -> None:
        with self._lock:
            self._count = 0

    def _tick(self) -> None:
        with self._lock:
            self._count += 1

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = _checked(x, self.n_cols, "x")
        self._tick()
        return self._forward(x)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        y = _checked(y, self.n_rows, "y")
        self._tick()
        return self._adjoint(y)

    def _forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- spectral metadata ------------------------------------------------

    @cached_property
    def sigma_max_estimate(self) -> SigmaEstimate:
        return estimate_sigma_max(self)

    @property
    def sigma_max(self) -> float:
        """Largest singular value of A."""
        return self.sigma_max_estimate.value

    @property
    def sigma_max_sq(self) -> float:
        """sigma_max(A A^T) = sigma_max(A)**2, the gradient Lipschitz constant."""
        if self.orthogonal_rows:
            return 1.0
        return self.sigma_max**2

    @property
    def sigma_min(self) -> float:
        """Smallest singular value of A (A has full row rank)."""
        raise NotImplementedError

    @property
    def condition_number(self) -> float:
        return self.sigma_max / self.sigma_min

    def to_spec(self) -> dict:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        """Explicit matrix, built column by column (uncounted; tests only)."""
        eye = np.eye(self.n_cols)
        return np.column_stack([self._forward(eye[:, j]) for j in range(self.n_cols)])


def _checked(v, size: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != size:
        raise DimensionError(f"{name} must be a vector of length {size}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


class PartialDCT(LinearOperator):
    """Selected rows of the n-point orthonormal DCT-II.

    The rows of the orthonormal DCT form an orthonormal basis, so
    ``A A^T = I`` exactly and sigma_max = sigma_min = 1.
    """

    kind = "partial-dct"
    orthogonal_rows = True

    def __init__(self, n: int, rows):
        rows = np.asarray(rows, dtype=np.int64)
        if rows.ndim != 1 or rows.size == 0:
            raise DimensionError("rows must be a non-empty 1-D index list")
        if np.any(np.diff(rows) <= 0):
            raise ValueError("rows must be strictly increasing")
        if rows[0] < 0 or rows[-1] >= n:
            raise ValueError(f"row indices must lie in [0, {n})")
        super().__init__(rows.size, n)
        self.rows = rows

    def _forward(self, x):
        return scipy.fft.dct(x, type=2, norm="ortho")[self.rows]

    def _adjoint(self, y):
        full = np.zeros(self.n_cols)
        full[self.rows] = y
        return scipy.fft.idct(full, type=2, norm="ortho")

    @cached_property
    def sigma_max_estimate(self) -> SigmaEstimate:
        return SigmaEstimate(1.0, 0, True)

    @property
    def sigma_min(self) -> float:
        return 1.0

    def to_spec(self) -> dict:
        return {"kind": self.kind, "n": self.n_cols, "m": self.n_rows, "rows": self.rows.tolist()}


class DenseOperator(LinearOperator):
    """Explicit dense matrix. ``seed`` records how it was generated, if at all."""

    kind = "dense"

    def __init__(self, matrix, seed: int | None = None, stream: str | None = None):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DimensionError("matrix must be 2-D")
        super().__init__(*matrix.shape)
        self.matrix = matrix
        self.seed = seed
        self.stream = stream

    def _forward(self, x):
        return self.matrix @ x

    def _adjoint(self, y):
        return self.matrix.T @ y

    @cached_property
    def singular_values(self) -> np.ndarray:
        # eigenvalues of the m x m Gram matrix; exact reference, not used by solvers
        ev = np.linalg.eigvalsh(self.matrix @ self.matrix.T)
        return np.sqrt(np.clip(ev[::-1], 0.0, None))

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1])

    def to_spec(self) -> dict:
        spec = {"kind": self.kind, "n": self.n_cols, "m": self.n_rows}
        if self.seed is not None:
            spec["seed"] = self.seed
            spec["stream"] = self.stream
        return spec


class ScaledOperator(LinearOperator):
    """``scale * A``; applications are counted on this wrapper and on ``base``."""

    def __init__(self, base: LinearOperator, scale: float):
        super().__init__(base.n_rows, base.n_cols)
        self.base = base
        self.scale = float(scale)
        self.kind = base.kind
        self.orthogonal_rows = base.orthogonal_rows and self.scale == 1.0

    def apply(self, x):
        self._tick()
        return self.scale * self.base.apply(x)

    def apply_adjoint(self, y):
        self._tick()
        return self.scale * self.base.apply_adjoint(y)

    def _forward(self, x):
        return self.scale * self.base._forward(x)

    def _adjoint(self, y):
        return self.scale * self.base._adjoint(y)

    @cached_property
    def sigma_max_estimate(self) -> SigmaEstimate:
        est = self.base.sigma_max_estimate
        return SigmaEstimate(abs(self.scale) * est.value, est.iterations, est.converged)

    @property
    def sigma_min(self) -> float:
        return abs(self.scale) * self.base.sigma_min


def estimate_sigma_max(op: LinearOperator, tol: float = POWER_TOL,
                       maxiter: int = POWER_MAXITER, seed: int = 0) -> SigmaEstimate:
    """Largest singular value by power iteration on ``A^T A``.

    Returns exactly 1 for operators with orthonormal rows. Applications
    made here are not counted against ``multiply_count``. If the
    relative change never drops below ``tol`` the best estimate is
    returned with ``converged=False``.
    """
    if op.orthogonal_rows:
        return SigmaEstimate(1.0, 0, True)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.n_cols)
    x /= np.linalg.norm(x)
    lam = 0.0
    for it in range(1, maxiter + 1):
        y = op._adjoint(op._forward(x))
        lam_new = float(np.linalg.norm(y))
        if lam_new == 0.0:
            raise ValueError("operator annihilated the power-iteration vector")
        x = y / lam_new
        if abs(lam_new - lam) <= tol * lam_new:
            return SigmaEstimate(float(np.sqrt(lam_new)), it, True)
        lam = lam_new
    logger.warning("power iteration hit %d iterations without converging", maxiter)
    return SigmaEstimate(float(np.sqrt(lam)), maxiter, False)


def estimate_sigma_min_gaussian(m: int, n: int) -> float:
    """Asymptotic smallest singular value of an m x n standard Gaussian matrix."""
    if m >= n:
        raise ValueError(f"need m < n, got m={m}, n={n}")
    return (1.0 - np.sqrt(m / n)) * np.sqrt(n)


def operator_from_spec(spec: dict, matrix: np.ndarray | None = None) -> LinearOperator:
    """Rebuild an operator from its JSON spec.

    Dense operators are regenerated from their seed unless an explicit
    ``matrix`` is supplied.
    """
    kind = spec.get("kind")
    if kind == "partial-dct":
        return PartialDCT(spec["n"], spec["rows"])
    if kind == "dense":
        if matrix is None:
            if "seed" not in spec:
                raise ValueError("dense operator spec has no seed and no matrix was given")
            from .probgen import gaussian_matrix
            return gaussian_matrix(spec["m"], spec["n"], spec["seed"], spec["stream"])
        if matrix.shape != (spec["m"], spec["n"]):
            raise DimensionError(f"matrix shape {matrix.shape} does not match spec")
        return DenseOperator(matrix)
    raise ValueError(f"unknown operator kind {kind!r}")
