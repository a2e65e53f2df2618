"""Seeded generators for the three experiment families, and the metric row.

Randomness comes from numpy's Philox4x64 counter-based generator. Each
instance draws from independent named substreams (support, signs,
magnitudes, rows, matrix, noise) keyed by the seed plus a CRC32 hash of
the shape parameters ``(family, n, m, s[, plan])``. The SNR is left out
of the hash on purpose, so the same seed at different SNRs shares A,
x* and the noise direction and differs only in the noise scale.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .linops import DenseOperator, LinearOperator, PartialDCT

FAMILIES = ("dct-100db", "gaussian-noisy", "hard-magnitude")

_STREAMS = {"support": 1, "signs": 2, "magnitudes": 3, "rows": 4, "matrix": 5, "noise": 6}


@dataclass
class SignalSpec:
    family: str
    n: int
    m: int
    s: int
    seed: int = 0
    snr_db: Optional[float] = None
    magnitude_plan: Optional[list] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if min(self.n, self.m, self.s) < 1:
            raise ValueError("n, m and s must be positive")
        if not self.s <= self.m <= self.n:
            raise ValueError(f"need s <= m <= n, got s={self.s}, m={self.m}, n={self.n}")
        if self.magnitude_plan is not None:
            self.magnitude_plan = [(float(mag), int(cnt)) for mag, cnt in self.magnitude_plan]

    def shape_key(self) -> str:
        key = {"family": self.family, "n": self.n, "m": self.m, "s": self.s}
        if self.magnitude_plan is not None:
            key["plan"] = [[repr(mag), cnt] for mag, cnt in self.magnitude_plan]
        return json.dumps(key, sort_keys=True)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["magnitude_plan"] is not None:
            d["magnitude_plan"] = [list(p) for p in d["magnitude_plan"]]
        return d


@dataclass
class ProblemInstance:
    operator: LinearOperator
    b: np.ndarray
    x_true: Optional[np.ndarray] = None
    noise_std: float = 0.0
    delta: Optional[float] = None
    spec: Optional[SignalSpec] = None
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.operator.n_rows

    @property
    def n(self) -> int:
        return self.operator.n_cols


def stream(seed: int, key: str, name: str) -> np.random.Generator:
    """Independent generator for substream ``name`` of instance ``(seed, key)``."""
    ss = np.random.SeedSequence(entropy=[int(seed) & (2**64 - 1), zlib.crc32(key.encode())],
                                spawn_key=(_STREAMS[name],))
    return np.random.Generator(np.random.Philox(ss))


def gaussian_matrix(m: int, n: int, seed: int, key: str) -> DenseOperator:
    rng = stream(seed, key, "matrix")
    return DenseOperator(rng.standard_normal((m, n)), seed=seed, stream=key)


def _support(spec: SignalSpec, key: str) -> np.ndarray:
    return np.sort(stream(spec.seed, key, "support").choice(spec.n, spec.s, replace=False))


def _signs(spec: SignalSpec, key: str) -> np.ndarray:
    return np.where(stream(spec.seed, key, "signs").random(spec.s) < 0.5, -1.0, 1.0)


def _dct_rows(spec: SignalSpec, key: str) -> np.ndarray:
    return np.sort(stream(spec.seed, key, "rows").choice(spec.n, spec.m, replace=False))


def gen_noiseless(spec: SignalSpec) -> ProblemInstance:
    """100 dB dynamic-range signal measured by a random partial DCT.

    Magnitudes are ``10**(5*t)`` with ``t`` uniform on [0, 1] then
    affinely rescaled to span exactly [0, 1], so the smallest nonzero
    magnitude is 1 and the largest is 1e5.
    """
    if spec.family != "dct-100db":
        raise ValueError("gen_noiseless needs family 'dct-100db'")
    if spec.s < 2:
        raise ValueError("the 100 dB family needs s >= 2 to rescale magnitudes")
    key = spec.shape_key()
    idx = _support(spec, key)
    t = stream(spec.seed, key, "magnitudes").random(spec.s)
    t = (t - t.min()) / (t.max() - t.min())
    x = np.zeros(spec.n)
    x[idx] = _signs(spec, key) * 10.0 ** (5.0 * t)
    op = PartialDCT(spec.n, _dct_rows(spec, key))
    return ProblemInstance(op, op._forward(x), x, 0.0, spec=spec)


def noise_std_for_snr(s: int, snr_db: float) -> float:
    if math.isinf(snr_db):
        return 0.0
    return math.sqrt(s * 10.0 ** (-snr_db / 10.0))


def default_delta(m: int, noise_std: float) -> float:
    """Radius sqrt(m + 2*sqrt(2m)) * sigma for the constrained denoising model."""
    return math.sqrt(m + 2.0 * math.sqrt(2.0 * m)) * noise_std


def gen_noisy(spec: SignalSpec) -> ProblemInstance:
    """Gaussian spikes, dense standard Gaussian A, additive white noise at ``snr_db``."""
    if spec.family != "gaussian-noisy":
        raise ValueError("gen_noisy needs family 'gaussian-noisy'")
    if spec.snr_db is None:
        raise ValueError("gen_noisy needs snr_db (use inf for no noise)")
    key = spec.shape_key()
    idx = _support(spec, key)
    x = np.zeros(spec.n)
    x[idx] = stream(spec.seed, key, "magnitudes").standard_normal(spec.s)
    op = gaussian_matrix(spec.m, spec.n, spec.seed, key)
    sigma = noise_std_for_snr(spec.s, spec.snr_db)
    noise = sigma * stream(spec.seed, key, "noise").standard_normal(spec.m)
    b = op._forward(x) + noise
    return ProblemInstance(op, b, x, sigma, delta=default_delta(spec.m, sigma), spec=spec)


def parse_plan(text: str) -> list[tuple[float, int]]:
    """Parse ``"1e5:33,1:5"`` into ``[(1e5, 33), (1.0, 5)]``."""
    plan = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        mag, _, cnt = part.partition(":")
        if not cnt:
            raise ValueError(f"bad plan entry {part!r}; expected magnitude:count")
        plan.append((float(mag), int(cnt)))
    return plan


CALTECH_LIKE = {
    "caltech1": dict(n=512, m=128, plan=[(1e5, 33), (1.0, 5)]),
    "caltech2": dict(n=512, m=128, plan=[(1e5, 32), (1.0, 5)]),
    "caltech3": dict(n=512, m=128, plan=[(1e-1, 31), (1e-6, 1)]),
    "caltech4": dict(n=512, m=102, plan=[(1e4, 13), (1.0, 12), (1e-2, 1)]),
}


def gen_hard(spec: SignalSpec) -> ProblemInstance:
    """Signal with prescribed magnitude groups measured by a partial DCT (noiseless)."""
    if spec.family != "hard-magnitude":
        raise ValueError("gen_hard needs family 'hard-magnitude'")
    plan = spec.magnitude_plan
    if not plan:
        raise ValueError("hard-magnitude family needs a non-empty magnitude plan")
    if any(mag <= 0 or cnt < 1 for mag, cnt in plan):
        raise ValueError("plan magnitudes and counts must be positive")
    if sum(cnt for _, cnt in plan) != spec.s:
        raise ValueError(f"plan counts sum to {sum(c for _, c in plan)}, expected s={spec.s}")
    key = spec.shape_key()
    idx = _support(spec, key)
    mags = np.concatenate([np.full(cnt, mag) for mag, cnt in plan])
    mags = stream(spec.seed, key, "magnitudes").permutation(mags)
    x = np.zeros(spec.n)
    x[idx] = _signs(spec, key) * mags
    op = PartialDCT(spec.n, _dct_rows(spec, key))
    return ProblemInstance(op, op._forward(x), x, 0.0, spec=spec)


def generate(spec: SignalSpec) -> ProblemInstance:
    return {"dct-100db": gen_noiseless, "gaussian-noisy": gen_noisy,
            "hard-magnitude": gen_hard}[spec.family](spec)


def caltech_like(name: str, seed: int = 0) -> ProblemInstance:
    cfg = CALTECH_LIKE[name]
    s = sum(c for _, c in cfg["plan"])
    return gen_hard(SignalSpec("hard-magnitude", cfg["n"], cfg["m"], s, seed,
                               magnitude_plan=cfg["plan"]))


def sparsity_for(m: int, regime: str) -> int:
    """Number of nonzeros for the ``m/100`` ("sparse") or ``m/10`` ("dense") regime."""
    div = {"sparse": 100, "dense": 10}[regime]
    return max(2, round(m / div))


def evaluate(x_sol: np.ndarray, instance: ProblemInstance) -> dict:
    """Metric row for a solution. Uses uncounted operator applications."""
    r = instance.operator._forward(x_sol) - instance.b
    row = {"residual": float(np.linalg.norm(r)), "x_sol_l1": float(np.abs(x_sol).sum())}
    xt = instance.x_true
    if xt is None:
        return row
    on = xt != 0
    xt_l1 = float(np.abs(xt).sum())
    row.update(
        x_true_l1=xt_l1,
        rel_l1_gap=abs(row["x_sol_l1"] - xt_l1) / xt_l1,
        inf_err_plus=float(np.max(np.abs(x_sol[on] - xt[on]))) if on.any() else 0.0,
        inf_err_zero=float(np.max(np.abs(x_sol[~on]))) if (~on).any() else 0.0,
        rel_l2_error=float(np.linalg.norm(x_sol - xt) / np.linalg.norm(xt)),
        nnz=int(np.count_nonzero(x_sol)),
    )
    return row
