"""First-step estimators of third and fourth moments.

These are consistent but, for the error moments, generally less efficient
than the estimators in :mod:`lmmoments.moments`; they exist mainly so that
the two families can be compared.
"""

from __future__ import annotations

from .moments import GroupPowerSums, _check, _sum

__all__ = [
    "fs_gamma_eps3",
    "fs_gamma_b3",
    "fs_gamma_eps4",
    "fs_gamma_b4",
    "fs_gamma_doublehat4",
]


def fs_gamma_eps3(ps: GroupPowerSums) -> float:
    l = _check(ps, 2)
    S1, S2, S3 = ps.S(1), ps.S(2), ps.S(3)
    return _sum((l * S3 - S2 * S1) / (l - 1)) / ps.N


def fs_gamma_b3(ps: GroupPowerSums) -> float:
    l = _check(ps, 2)
    S1, S2, S3 = ps.S(1), ps.S(2), ps.S(3)
    return _sum((S2 * S1 - S3) / (l * (l - 1))) / ps.n


def fs_gamma_eps4(ps: GroupPowerSums) -> float:
    """Modified first-step estimator of the error fourth moment.

    Built from ``f_4^4``, ``f_3^4``, ``f_2^4`` and ``f_5^4`` so that the
    ``gamma_b^4`` and ``gamma_b^2 gamma_eps^2`` terms cancel in expectation.
    """
    l = _check(ps, 3)
    S1, S2, S3, S4 = ps.S(1), ps.S(2), ps.S(3), ps.S(4)
    num = (
        (2 * l**2 - l) * S4
        - (5 * l - 4) * S3 * S1
        + 3 * S2 * S1**2
        - 3 * S2**2
    )
    return _sum(num / (2 * (l - 1) * (l - 2))) / ps.N


def fs_gamma_b4(ps: GroupPowerSums) -> float:
    l = _check(ps, 3)
    S1, S2, S3, S4 = ps.S(1), ps.S(2), ps.S(3), ps.S(4)
    num = 3 * S2 * S1**2 - 3 * S2**2 - (l + 4) * S3 * S1 + (l + 4) * S4
    return _sum(num / (2 * l * (l - 1) * (l - 2))) / ps.n


def fs_gamma_doublehat4(ps: GroupPowerSums, g_b2: float, g_eps2: float):
    """Plug-in fourth-moment estimators, returned as ``(gamma_b4, gamma_eps4)``.

    Both subtract ``3 * g_b2 * g_eps2``; the second-moment estimates are taken
    as arguments so callers can inject exact values.
    """
    l = _check(ps, 2)
    S1, S3, S4 = ps.S(1), ps.S(3), ps.S(4)
    cross = 3.0 * g_b2 * g_eps2
    b4 = _sum((S3 * S1 - S4) / (l * (l - 1))) / ps.n - cross
    eps4 = _sum((l * S4 - S3 * S1) / (l - 1)) / ps.N - cross
    return b4, eps4
