"""Synthetic data for the five error/random-effect scenarios (a)-(e).

Every group draws from its own Philox stream keyed by
``(seed, replication, group index)``; within a group the draws are taken in
a fixed order (size, covariates, random effect, errors).  A dataset is thus
a pure function of the configuration, independent of how groups or
replications are scheduled across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import MomentSpec
from .dataset import GroupedDataset
from .errors import MomentUndefined, UsageError

__all__ = [
    "LAWS",
    "CASES",
    "GROUP_SIZE_LAWS",
    "ScenarioConfig",
    "law_moments",
    "law_spec",
    "truth_spec",
    "draw_law",
    "simulate",
    "group_rng",
]

LAWS = ("scaled_normal", "scaled_t8", "shifted_scaled_gamma")

# case -> (error law, random-effect law)
CASES = {
    "a": ("scaled_normal", "scaled_normal"),
    "b": ("scaled_normal", "scaled_t8"),
    "c": ("scaled_normal", "shifted_scaled_gamma"),
    "d": ("scaled_t8", "scaled_t8"),
    "e": ("scaled_t8", "shifted_scaled_gamma"),
}

GROUP_SIZE_LAWS = ("shifted", "truncated", "poisson", "fixed")

_T_DOF = 8


def _derangements(k: int) -> int:
    # central moments of Exp(1): D_0 = 1, D_1 = 0, D_k = (k-1)(D_{k-1} + D_{k-2})
    a, b = 1, 0
    for j in range(2, k + 1):
        a, b = b, (j - 1) * (a + b)
    return a if k == 0 else b


def law_moments(law: str, order: int, scale: float = 0.5) -> float:
    """Exact ``order``-th central moment of ``scale * X`` for the named law.

    ``scaled_normal``: X ~ N(0, 1).  ``scaled_t8``: X ~ t(8), finite only for
    orders below 8.  ``shifted_scaled_gamma``: X ~ Exp(1) - 1 (the law of
    ``0.5 * Gamma(1, 1) - 0.5`` at the default scale).
    """
    if law not in LAWS:
        raise UsageError(f"unknown law {law!r}")
    if not 1 <= order <= 8:
        raise UsageError(f"order must be 1..8, got {order}")
    s = scale**order
    if law == "scaled_normal":
        return 0.0 if order % 2 else s * math.prod(range(order - 1, 0, -2))
    if law == "scaled_t8":
        if order >= _T_DOF:
            raise MomentUndefined(law, order)
        if order % 2:
            return 0.0
        half = order // 2
        m = _T_DOF**half * math.prod((2 * j - 1) / (_T_DOF - 2 * j) for j in range(1, half + 1))
        return s * m
    return s * _derangements(order)


def law_spec(law: str, scale: float = 0.5) -> dict:
    out = {}
    for k in range(2, 9):
        try:
            out[k] = law_moments(law, k, scale)
        except MomentUndefined:
            pass
    return out


def truth_spec(case: str, scale: float = 0.5) -> MomentSpec:
    eps_law, b_law = CASES[_check_case(case)]
    return MomentSpec(law_spec(eps_law, scale), law_spec(b_law, scale))


def draw_law(rng: np.random.Generator, law: str, size, scale: float = 0.5) -> np.ndarray:
    if law == "scaled_normal":
        return scale * rng.standard_normal(size)
    if law == "scaled_t8":
        z = rng.standard_normal(size)
        return scale * z / np.sqrt(rng.chisquare(_T_DOF, size) / _T_DOF)
    if law == "shifted_scaled_gamma":
        return scale * rng.exponential(1.0, size) - scale
    raise UsageError(f"unknown law {law!r}")


def _check_case(case):
    if case not in CASES:
        raise UsageError(f"unknown case {case!r}; expected one of {', '.join(CASES)}")
    return case


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation design.

    ``group_size_law``:

    * ``"shifted"`` (default): ``l_i = min_size + Poisson(poisson_mean)``
    * ``"truncated"``: Poisson(poisson_mean) redrawn until ``l_i >= min_size``
    * ``"poisson"``: plain Poisson draws; zero draws produce no group
    * ``"fixed"``: every ``l_i = fixed_size``
    """

    case: str
    n: int
    seed: int = 0
    alpha: float = 1.0
    beta: tuple = (1.0, 2.0)
    group_size_law: str = "shifted"
    poisson_mean: float = 5.0
    min_size: int = 4
    fixed_size: int | None = None
    design_cov: tuple = ((1.0, 0.8), (0.8, 1.0))
    scale: float = 0.5

    def __post_init__(self):
        _check_case(self.case)
        if self.n < 1:
            raise UsageError("n must be >= 1")
        if self.group_size_law not in GROUP_SIZE_LAWS:
            raise UsageError(f"unknown group size law {self.group_size_law!r}")
        if self.group_size_law == "fixed" and (self.fixed_size is None or self.fixed_size < 1):
            raise UsageError("fixed group size law needs fixed_size >= 1")
        if self.group_size_law in ("shifted", "truncated") and self.min_size < 0:
            raise UsageError("min_size must be non-negative")
        p = len(self.beta)
        if p:
            cov = np.asarray(self.design_cov, dtype=float)
            if cov.shape != (p, p) or not np.allclose(cov, cov.T):
                raise UsageError("design_cov must be a symmetric p x p matrix")
            if np.linalg.eigvalsh(cov).min() <= 0:
                raise UsageError("design_cov must be positive definite")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must fit in 64 bits")

    @property
    def laws(self):
        return CASES[self.case]

    def truth(self) -> MomentSpec:
        return truth_spec(self.case, self.scale)


def group_rng(seed: int, replication: int, group: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(replication, group))
    return np.random.Generator(np.random.Philox(ss))


def _draw_size(rng, cfg):
    law = cfg.group_size_law
    if law == "fixed":
        return cfg.fixed_size
    if law == "shifted":
        return cfg.min_size + int(rng.poisson(cfg.poisson_mean))
    l = int(rng.poisson(cfg.poisson_mean))
    if law == "truncated":
        while l < cfg.min_size:
            l = int(rng.poisson(cfg.poisson_mean))
    return l


def simulate(cfg: ScenarioConfig, replication: int = 0):
    """Draw one dataset; returns ``(GroupedDataset, truth MomentSpec)``."""
    eps_law, b_law = cfg.laws
    beta = np.asarray(cfg.beta, dtype=float)
    p = beta.shape[0]
    chol = np.linalg.cholesky(np.asarray(cfg.design_cov, dtype=float)) if p else np.zeros((0, 0))
    ids, sizes, xs, ys = [], [], [], []
    for i in range(cfg.n):
        rng = group_rng(cfg.seed, replication, i)
        l = _draw_size(rng, cfg)
        if l == 0:
            continue
        x = rng.standard_normal((l, p)) @ chol.T
        b = draw_law(rng, b_law, 1, cfg.scale)[0]
        eps = draw_law(rng, eps_law, l, cfg.scale)
        ids.append(str(i + 1))
        sizes.append(l)
        xs.append(x)
        ys.append(cfg.alpha + x @ beta + b + eps)
    ds = GroupedDataset(
        ids=tuple(ids),
        sizes=np.array(sizes),
        x=np.vstack(xs) if xs else np.zeros((0, p)),
        y=np.concatenate(ys) if ys else np.zeros(0),
    )
    return ds, cfg.truth()
