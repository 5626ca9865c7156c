"""Brute-force reference forms of every moment estimator.

Each estimator is rewritten as a combination of within-group sums over
ordered tuples of *distinct* indices,

    U(p_1, ..., p_r) = sum_{j_1, ..., j_r distinct} prod_t e_{j_t}^{p_t},

evaluated by explicit enumeration (O(l^r) per group).  These forms share no
code with the power-sum polynomials in :mod:`lmmoments.moments`, so
agreement between the two is a real check of the algebra.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GroupTooSmall, UsageError
from .gls import FixedEffectsFit, gls_fit
from .dataset import GroupedDataset
from .moments import MomentEstimates, MIN_SIZE

__all__ = [
    "MAX_GROUP",
    "u_stat",
    "direct_fmk",
    "expand_fmk",
    "oracle_estimates",
    "relative_deviation",
    "IdentityReport",
    "run_identity_suite",
]

MAX_GROUP = 64


def u_stat(values, powers) -> float:
    """Sum over ordered distinct index tuples of ``prod values[j_t] ** powers[t]``."""
    values = [float(v) for v in values]
    powers = tuple(int(p) for p in powers)
    r, l = len(powers), len(values)
    if not 1 <= r <= 4:
        raise UsageError(f"degree must be 1..4, got {r}")
    if l > MAX_GROUP:
        raise UsageError(f"oracle is limited to groups of at most {MAX_GROUP} rows, got {l}")
    if l < r:
        raise GroupTooSmall("<oracle>", l, r)
    terms = []
    for idx in itertools.permutations(range(l), r):
        prod = 1.0
        for j, p in zip(idx, powers):
            prod *= values[j] ** p
        terms.append(prod)
    return math.fsum(terms)


def direct_fmk(e, m: int, k: int) -> float:
    """``f_m^k`` straight from its definition (``m = 5`` gives ``f_5^4``)."""
    e = [float(v) for v in e]
    if m == 5 and k == 4:
        return math.fsum(v * v for v in e) ** 2
    if not (1 <= m <= k <= 4):
        raise UsageError(f"need 1 <= m <= k <= 4, got m={m}, k={k}")
    total = 0.0
    for v in e:
        total += v**m
    s = 0.0
    for v in e:
        s += v
    return total * s ** (k - m)


def expand_fmk(eps, b: float, m: int, k: int) -> float:
    """Expand ``f_m^k`` of ``e_j = b + eps_j`` termwise in powers of ``b`` and ``eps``."""
    if not (1 <= m <= k <= 4):
        raise UsageError(f"need 1 <= m <= k <= 4, got m={m}, k={k}")
    eps = [float(v) for v in eps]
    l = len(eps)
    if l == 0:
        raise UsageError("empty group")
    sum_eps = math.fsum(eps)

    def power_sum(s):
        return float(l) if s == 0 else math.fsum(v**s for v in eps)

    terms = []
    for t in range(k + 1):
        for s in range(max(t - k + m, 0), min(t, m) + 1):
            terms.append(
                math.comb(m, s)
                * math.comb(k - m, t - s)
                * power_sum(s)
                * sum_eps ** (t - s)
                * b ** (k - t)
                * float(l) ** (k - m - t + s)
            )
    return math.fsum(terms)


lemma21_expand = expand_fmk  # alias


# -- estimators in distinct-index form ---------------------------------------


class _GroupU:
    """Lazily computed distinct-index sums of one group's residuals."""

    def __init__(self, e):
        self.e = e
        self.l = len(e)
        self._cache = {}

    def __call__(self, *powers):
        if powers not in self._cache:
            if len(powers) == 1:
                self._cache[powers] = math.fsum(v ** powers[0] for v in self.e)
            else:
                self._cache[powers] = u_stat(self.e, powers)
        return self._cache[powers]


# Per-group contributions.  "eps" entries are summed then divided by N, "b"
# entries by n.
def _eps2(U, l):
    return U(2) - U(1, 1) / (l - 1)


def _b2(U, l):
    return U(1, 1) / (l * (l - 1))


def _eps3(U, l):
    return 2 * U(1, 1, 1) / ((l - 1) * (l - 2)) - 3 * U(2, 1) / (l - 1) + U(3)


def _b3(U, l):
    return U(1, 1, 1) / (l * (l - 1) * (l - 2))


def _eps4(U, l):
    return (
        -3 * U(1, 1, 1, 1) / ((l - 1) * (l - 2) * (l - 3))
        - 4 * U(3, 1) / (l - 1)
        + 6 * U(2, 1, 1) / ((l - 1) * (l - 2))
        + U(4)
    )


def _b4(U, l):
    return U(1, 1, 1, 1) / (l * (l - 1) * (l - 2) * (l - 3))


def _fs_eps3(U, l):
    return U(3) - U(2, 1) / (l - 1)


def _fs_b3(U, l):
    return U(2, 1) / (l * (l - 1))


def _fs_eps4(U, l):
    return U(4) + 3 * U(2, 1, 1) / (2 * (l - 1) * (l - 2)) - 5 * U(3, 1) / (2 * (l - 1))


def _fs_b4(U, l):
    return 3 * U(2, 1, 1) / (2 * l * (l - 1) * (l - 2)) - U(3, 1) / (2 * l * (l - 1))


def _plug_eps4(U, l):
    return U(4) - U(3, 1) / (l - 1)


def _plug_b4(U, l):
    return U(3, 1) / (l * (l - 1))


_FORMS = {
    "efficient": {
        "eps2": _eps2, "b2": _b2, "eps3": _eps3, "b3": _b3, "eps4": _eps4, "b4": _b4,
    },
    "first_step": {
        "eps2": _eps2, "b2": _b2, "eps3": _fs_eps3, "b3": _fs_b3,
        "eps4": _fs_eps4, "b4": _fs_b4, "eps4_plugin": _plug_eps4, "b4_plugin": _plug_b4,
    },
}


def oracle_estimates(fit: FixedEffectsFit, variant: str = "efficient") -> MomentEstimates:
    """All estimates of ``variant`` from distinct-index sums.

    Groups too small for an estimator are skipped, matching the ``drop``
    policy of :func:`lmmoments.moments.estimate_moments`.
    """
    if variant not in _FORMS:
        raise UsageError(f"unknown variant {variant!r}")
    groups = [(_GroupU(list(e)), len(e)) for e in fit.residuals]
    values = {}
    counts = {}
    for name, form in _FORMS[variant].items():
        need = MIN_SIZE[variant][name]
        used = [(U, l) for U, l in groups if l >= need]
        if not used:
            continue
        total = math.fsum(form(U, l) for U, l in used)
        if name.startswith("eps"):
            values[name] = total / sum(l for _, l in used)
        else:
            values[name] = total / len(used)
        counts[name] = (len(used), sum(l for _, l in used))
    if variant == "first_step" and "eps4_plugin" in values:
        cross = 3.0 * values["b2"] * values["eps2"]
        values["eps4_plugin"] -= cross
        values["b4_plugin"] -= cross
    est = MomentEstimates({}, {}, variant)
    for name, v in values.items():
        k = int(name.split("_")[0][-1])
        target = {
            ("eps", False): est.gamma_eps, ("b", False): est.gamma_b,
            ("eps", True): est.gamma_eps_plugin, ("b", True): est.gamma_b_plugin,
        }[("eps" if name.startswith("eps") else "b", name.endswith("_plugin"))]
        target[k] = v
        est.n_used[name], est.N_used[name] = counts[name]
    return est


# -- randomized identity suite -----------------------------------------------


def relative_deviation(a: float, b: float, scale: float = 0.0) -> float:
    """``|a - b|`` relative to ``max(|a|, |b|, scale)`` (0 when both are 0)."""
    denom = max(abs(a), abs(b), scale)
    if denom == 0:
        return 0.0
    return abs(a - b) / denom


def _draw_law(rng, size, kind):
    if kind == 0:
        return 0.5 * rng.standard_normal(size)
    if kind == 1:
        return 0.5 * rng.standard_normal(size) / np.sqrt(rng.chisquare(8, size) / 8)
    if kind == 2:
        return 0.5 * rng.exponential(1.0, size) - 0.5
    return rng.uniform(-1.0, 1.0, size)


def random_instance(rng) -> GroupedDataset:
    """A small random dataset: 2-6 groups of 4-8 rows, p in {0, 1, 2}."""
    n = int(rng.integers(2, 7))
    p = int(rng.integers(0, 3))
    sizes = rng.integers(4, 9, size=n)
    N = int(sizes.sum())
    x = rng.standard_normal((N, p)) * rng.uniform(0.5, 3.0)
    b = _draw_law(rng, n, int(rng.integers(0, 4)))
    eps = _draw_law(rng, N, int(rng.integers(0, 4)))
    beta = rng.uniform(-2, 2, p)
    y = rng.uniform(-1, 1) + x @ beta + np.repeat(b, sizes) + eps
    return GroupedDataset(ids=tuple(f"g{i}" for i in range(n)), sizes=sizes, x=x, y=y)


@dataclass
class IdentityReport:
    trials: int
    expansion_trials: int
    tol: float
    max_dev: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def worst(self) -> float:
        return max(self.max_dev.values(), default=0.0)


def _record(report, key, dev, where):
    report.max_dev[key] = max(report.max_dev.get(key, 0.0), dev)
    if not dev <= report.tol:
        report.failures.append((where, key, dev))


def run_identity_suite(seed: int = 0, trials: int = 200, expansion_trials: int = 500, tol: float = 1e-10):
    """Compare polynomial and distinct-index forms on random small instances.

    Instance ``t`` is drawn from ``SeedSequence(seed, spawn_key=(0, t))`` (datasets)
    or ``(1, t)`` (expansion checks), so any failure can be replayed alone.
    Deviations for a degree-``k`` estimate are relative to
    ``max(|a|, |b|, mean(e^2)^(k/2))``; expansions are compared relative
    to the sum of absolute terms (the expansion at ``|b|``, ``|eps|``).
    """
    from . import moments as _moments  # resolved at call time so tests can patch

    if trials < 1 or expansion_trials < 0:
        raise UsageError("trials must be >= 1")
    report = IdentityReport(trials, expansion_trials, tol)
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, t)))
        fit = gls_fit(random_instance(rng))
        scale2 = float(np.mean(fit.resid**2))
        for variant in ("efficient", "first_step"):
            fast = _moments.estimate_moments(fit, variant=variant, policy="strict")
            slow = oracle_estimates(fit, variant)
            ref = dict(slow.items())
            for name, v in fast.items():
                k = int(name.split("_")[0][-1])
                dev = relative_deviation(v, ref[name], scale2 ** (k / 2))
                _record(report, f"{variant}:{name}", dev, (seed, "dataset", t))
    pairs = [(m, k) for k in (2, 3, 4) for m in range(1, k + 1)]
    for t in range(expansion_trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, t)))
        m, k = pairs[int(rng.integers(len(pairs)))]
        l = int(rng.integers(1, 9))
        eps = _draw_law(rng, l, int(rng.integers(0, 4)))
        b = float(_draw_law(rng, 1, int(rng.integers(0, 4)))[0])
        direct = direct_fmk(b + eps, m, k)
        scale = expand_fmk(np.abs(eps), abs(b), m, k)
        dev = relative_deviation(expand_fmk(eps, b, m, k), direct, scale)
        _record(report, f"expansion:f{m}^{k}", dev, (seed, "expansion", t))
    return report
