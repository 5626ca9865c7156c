"""Efficient estimators of the 2nd-4th moments of errors and random effects.

Every estimator is a polynomial in the per-group power sums
``S_m(i) = sum_j e_ij^m`` (m = 1..4) of the residuals, so the whole
computation is O(N).  Within-group sums and the outer sum over groups use
``math.fsum`` (correctly rounded, hence independent of summation order).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyData, GroupTooSmall, UsageError
from .gls import FixedEffectsFit

__all__ = [
    "GroupPowerSums",
    "MomentEstimates",
    "power_sums",
    "f_mk",
    "f_54",
    "gamma_eps2",
    "gamma_b2",
    "gamma_eps3",
    "gamma_b3",
    "gamma_eps4",
    "gamma_b4",
    "estimate_moments",
    "MIN_SIZE",
]


@dataclass(frozen=True, eq=False)
class GroupPowerSums:
    """``s[i, m-1] = S_m(i)`` for m = 1..4, with group sizes ``l``."""

    s: np.ndarray
    l: np.ndarray
    ids: tuple = ()

    @property
    def n(self) -> int:
        return int(self.l.shape[0])

    @property
    def N(self) -> int:  # noqa: N802
        return int(self.l.sum())

    def S(self, m: int) -> np.ndarray:  # noqa: N802
        return self.s[:, m - 1]

    def restrict(self, min_size: int) -> "GroupPowerSums":
        keep = self.l >= min_size
        ids = tuple(g for g, k in zip(self.ids, keep) if k) if self.ids else ()
        return GroupPowerSums(self.s[keep], self.l[keep], ids)

    def undersized(self, min_size: int) -> list[tuple[str, int]]:
        ids = self.ids or tuple(str(i) for i in range(self.n))
        return [(ids[i], int(self.l[i])) for i in np.flatnonzero(self.l < min_size)]


def power_sums(fit: FixedEffectsFit) -> GroupPowerSums:
    if fit.n < 1:
        raise EmptyData("fit has no groups")
    s = np.empty((fit.n, 4))
    r = fit.resid
    for i in range(fit.n):
        e = r[fit.offsets[i]:fit.offsets[i + 1]]
        e2 = e * e
        s[i, 0] = math.fsum(e)
        s[i, 1] = math.fsum(e2)
        s[i, 2] = math.fsum(e2 * e)
        s[i, 3] = math.fsum(e2 * e2)
    s.setflags(write=False)
    return GroupPowerSums(s, np.asarray(fit.sizes, dtype=np.int64), fit.ids)


def f_mk(ps: GroupPowerSums, i: int, m: int, k: int) -> float:
    """``f_m^k(i) = S_m(i) * S_1(i)^(k-m)`` for ``1 <= m <= k <= 4``."""
    if not (2 <= k <= 4 and 1 <= m <= k):
        raise UsageError(f"f_m^k needs 1 <= m <= k and 2 <= k <= 4, got m={m}, k={k}")
    return float(ps.s[i, m - 1] * ps.s[i, 0] ** (k - m))


def f_54(ps: GroupPowerSums, i: int) -> float:
    """``f_5^4(i) = S_2(i)^2``."""
    return float(ps.s[i, 1] ** 2)


def _check(ps: GroupPowerSums, min_size: int) -> np.ndarray:
    if ps.n == 0:
        raise EmptyData("no eligible groups")
    bad = np.flatnonzero(ps.l < min_size)
    if bad.size:
        i = int(bad[0])
        gid = ps.ids[i] if ps.ids else str(i)
        raise GroupTooSmall(gid, int(ps.l[i]), min_size)
    return ps.l.astype(float)


def _sum(terms) -> float:
    return math.fsum(np.asarray(terms, dtype=float).tolist())


# -- second moments ----------------------------------------------------------


def gamma_eps2(ps: GroupPowerSums) -> float:
    l = _check(ps, 2)
    S1, S2 = ps.S(1), ps.S(2)
    return _sum((l * S2 - S1**2) / (l - 1)) / ps.N


def gamma_b2(ps: GroupPowerSums) -> float:
    l = _check(ps, 2)
    S1, S2 = ps.S(1), ps.S(2)
    return _sum((S1**2 - S2) / (l * (l - 1))) / ps.n


# -- third moments -----------------------------------------------------------


def gamma_eps3(ps: GroupPowerSums) -> float:
    l = _check(ps, 3)
    S1, S2, S3 = ps.S(1), ps.S(2), ps.S(3)
    num = 2 * S1**3 + l**2 * S3 - 3 * l * S2 * S1
    return _sum(num / ((l - 1) * (l - 2))) / ps.N


def gamma_b3(ps: GroupPowerSums) -> float:
    l = _check(ps, 3)
    S1, S2, S3 = ps.S(1), ps.S(2), ps.S(3)
    num = S1**3 - 3 * S2 * S1 + 2 * S3
    return _sum(num / (l * (l - 1) * (l - 2))) / ps.n


# -- fourth moments ----------------------------------------------------------


def gamma_eps4(ps: GroupPowerSums) -> float:
    l = _check(ps, 4)
    S1, S2, S3, S4 = ps.S(1), ps.S(2), ps.S(3), ps.S(4)
    num = (
        (l**2 - 2 * l + 3) * (l * S4 - 4 * S3 * S1)
        + 6 * l * S2 * S1**2
        - 3 * S1**4
        - 3 * (2 * l - 3) * S2**2
    )
    return _sum(num / ((l - 1) * (l - 2) * (l - 3))) / ps.N


def gamma_b4(ps: GroupPowerSums) -> float:
    l = _check(ps, 4)
    S1, S2, S3, S4 = ps.S(1), ps.S(2), ps.S(3), ps.S(4)
    num = S1**4 - 6 * S2 * S1**2 + 8 * S3 * S1 - 6 * S4 + 3 * S2**2
    return _sum(num / (l * (l - 1) * (l - 2) * (l - 3))) / ps.n


# -- bundled estimation ------------------------------------------------------

MIN_SIZE = {
    "efficient": {"eps2": 2, "b2": 2, "eps3": 3, "b3": 3, "eps4": 4, "b4": 4},
    "first_step": {
        "eps2": 2, "b2": 2,
        "eps3": 2, "b3": 2,
        "eps4": 3, "b4": 3,
        "eps4_plugin": 2, "b4_plugin": 2,
    },
}


@dataclass
class MomentEstimates:
    """Moment estimates of one variant.

    ``gamma_eps[k]`` / ``gamma_b[k]`` hold the order-``k`` estimates.  For the
    first-step variant the plug-in fourth-moment estimators go in
    ``gamma_eps_plugin`` / ``gamma_b_plugin``.  ``n_used`` / ``N_used`` are
    keyed like ``"eps3"`` and count the groups (rows) that entered each
    estimate after size filtering.
    """

    gamma_eps: dict
    gamma_b: dict
    variant: str
    n_used: dict = field(default_factory=dict)
    N_used: dict = field(default_factory=dict)
    gamma_eps_plugin: dict = field(default_factory=dict)
    gamma_b_plugin: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    dropped: dict = field(default_factory=dict)

    def items(self):
        """Yield ``(name, value)`` over every estimate, e.g. ``("eps3", 0.01)``."""
        for k in sorted(self.gamma_eps):
            yield f"eps{k}", self.gamma_eps[k]
        for k in sorted(self.gamma_b):
            yield f"b{k}", self.gamma_b[k]
        for k in sorted(self.gamma_eps_plugin):
            yield f"eps{k}_plugin", self.gamma_eps_plugin[k]
        for k in sorted(self.gamma_b_plugin):
            yield f"b{k}_plugin", self.gamma_b_plugin[k]

    def as_dict(self) -> dict:
        out = {
            "variant": self.variant,
            "gamma_eps": {str(k): v for k, v in sorted(self.gamma_eps.items())},
            "gamma_b": {str(k): v for k, v in sorted(self.gamma_b.items())},
            "n_used": dict(self.n_used),
            "N_used": dict(self.N_used),
            "warnings": list(self.warnings),
        }
        if self.gamma_eps_plugin or self.gamma_b_plugin:
            out["gamma_eps_plugin"] = {str(k): v for k, v in self.gamma_eps_plugin.items()}
            out["gamma_b_plugin"] = {str(k): v for k, v in self.gamma_b_plugin.items()}
        return out


def _eligible(ps, name, min_size, policy, est):
    small = ps.undersized(min_size)
    if small:
        if policy == "strict":
            gid, size = small[0]
            raise GroupTooSmall(gid, size, min_size)
        est.dropped[name] = small
        msg = f"{name}: dropped {len(small)} group(s) with l_i < {min_size}"
        est.warnings.append(msg)
        warnings.warn(msg, stacklevel=3)
        ps = ps.restrict(min_size)
    if ps.n == 0:
        raise EmptyData(f"{name}: no group has at least {min_size} observations")
    est.n_used[name] = ps.n
    est.N_used[name] = ps.N
    return ps


def estimate_moments(
    fit_or_ps,
    orders=(2, 3, 4),
    variant: str = "efficient",
    policy: str = "drop",
) -> MomentEstimates:
    """Compute all requested moment estimates of one variant.

    Groups too small for a given estimator are handled per ``policy``
    (``"strict"`` raises, ``"drop"`` excludes them and records a warning);
    ``n`` and ``N`` in each formula count only the included groups.
    """
    from . import firststep  # local: firststep imports this module

    if variant not in MIN_SIZE:
        raise UsageError(f"unknown variant {variant!r}")
    if policy not in ("strict", "drop"):
        raise UsageError(f"policy must be 'strict' or 'drop', got {policy!r}")
    orders = sorted(set(int(k) for k in orders))
    if not orders or any(k not in (2, 3, 4) for k in orders):
        raise UsageError(f"orders must be drawn from 2, 3, 4; got {orders}")
    ps = fit_or_ps if isinstance(fit_or_ps, GroupPowerSums) else power_sums(fit_or_ps)
    table = MIN_SIZE[variant]
    est = MomentEstimates({}, {}, variant)

    def run(name, fn):
        return fn(_eligible(ps, name, table[name], policy, est))

    if variant == "efficient":
        fns = {
            2: (gamma_eps2, gamma_b2),
            3: (gamma_eps3, gamma_b3),
            4: (gamma_eps4, gamma_b4),
        }
    else:
        fns = {
            2: (gamma_eps2, gamma_b2),
            3: (firststep.fs_gamma_eps3, firststep.fs_gamma_b3),
            4: (firststep.fs_gamma_eps4, firststep.fs_gamma_b4),
        }
    for k in orders:
        f_eps, f_b = fns[k]
        est.gamma_eps[k] = run(f"eps{k}", f_eps)
        est.gamma_b[k] = run(f"b{k}", f_b)
    if variant == "first_step" and 4 in orders:
        g_eps2 = est.gamma_eps.get(2)
        g_b2 = est.gamma_b.get(2)
        if g_eps2 is None:
            g_eps2 = run("eps2", gamma_eps2)
            g_b2 = run("b2", gamma_b2)
        sub = _eligible(ps, "eps4_plugin", table["eps4_plugin"], policy, est)
        _eligible(ps, "b4_plugin", table["b4_plugin"], policy, est)
        b4, e4 = firststep.fs_gamma_doublehat4(sub, g_b2, g_eps2)
        est.gamma_eps_plugin[4] = e4
        est.gamma_b_plugin[4] = b4
    for name, v in est.items():
        if int(name.split("_")[0][-1]) % 2 == 0 and v < 0:
            est.warnings.append(f"{name} estimate is negative ({v:.4g})")
    return est
