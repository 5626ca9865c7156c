"""Limit variances of the moment estimators and normal-approximation SEs.

The formulas need moments up to order 8, which the estimators do not
provide; they come from a :class:`MomentSpec` supplied by the caller
(known analytically in simulations).
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field

from .errors import MissingMoment, ParseError, UsageError
from .gls import DesignDiagnostics
from .moments import MomentEstimates

__all__ = [
    "MomentSpec",
    "FirstStepVariance",
    "VarianceReport",
    "mu_second",
    "mu_third",
    "mu_fourth",
    "mu_firststep",
    "variance_report",
    "standard_errors",
]

_KEY = re.compile(r"^(eps|b)([1-8])$")


@dataclass(frozen=True)
class MomentSpec:
    """Known moments ``gamma_eps^k`` (``eps``) and ``gamma_b^k`` (``b``), k <= 8."""

    eps: dict = field(default_factory=dict)
    b: dict = field(default_factory=dict)

    def get(self, which: str, k: int) -> float:
        table = self.eps if which == "eps" else self.b
        if k == 1:
            return table.get(1, 0.0)
        try:
            return float(table[k])
        except KeyError:
            raise MissingMoment(which, k) from None

    def validate(self) -> list[str]:
        """Return (and warn about) violated moment inequalities."""
        problems = []
        for which, table in (("eps", self.eps), ("b", self.b)):
            g2 = table.get(2)
            if g2 is not None:
                if which == "eps" and g2 <= 0:
                    problems.append("eps2 must be positive")
                if which == "b" and g2 < 0:
                    problems.append("b2 must be non-negative")
            for k in (4, 6, 8):
                if table.get(k, 0.0) < 0:
                    problems.append(f"{which}{k} must be non-negative")
            if g2 is not None and 4 in table and table[4] < g2**2:
                problems.append(f"{which}4 < ({which}2)^2")
            if g2 is not None and 4 in table and 6 in table and table[6] * g2 < table[4] ** 2:
                problems.append(f"{which}6*{which}2 < ({which}4)^2")
        for p in problems:
            warnings.warn(f"moment spec: {p}", stacklevel=2)
        return problems

    # flat key=value text -------------------------------------------------

    def to_text(self) -> str:
        lines = [f"eps{k}={self.eps[k]!r}" for k in sorted(self.eps)]
        lines += [f"b{k}={self.b[k]!r}" for k in sorted(self.b)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MomentSpec":
        eps, b = {}, {}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            m = _KEY.match(key.strip())
            if not sep or m is None:
                raise ParseError(f"expected 'eps<k>=value' or 'b<k>=value', got {raw!r}", row=line_no)
            try:
                v = float(value)
            except ValueError:
                raise ParseError(f"not a number: {value.strip()!r}", row=line_no) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite moment {value.strip()!r}", row=line_no)
            (eps if m.group(1) == "eps" else b)[int(m.group(2))] = v
        return cls(eps, b)

    @classmethod
    def load(cls, path) -> "MomentSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


# -- efficient estimators: minimal variances ---------------------------------


def _mu2(spec, w):
    return spec.get(w, 4) - spec.get(w, 2) ** 2


def _mu3(spec, w):
    g2, g3, g4, g6 = (spec.get(w, k) for k in (2, 3, 4, 6))
    return g6 - g3**2 - 6 * g2 * g4 + 9 * g2**3


def _mu4(spec, w):
    g2, g3, g4, g5, g8 = (spec.get(w, k) for k in (2, 3, 4, 5, 8))
    return g8 - g4**2 - 8 * g3 * g5 + 16 * g2 * g3**2


_MU = {2: _mu2, 3: _mu3, 4: _mu4}


def mu_second(spec: MomentSpec):
    return _mu2(spec, "eps"), _mu2(spec, "b")


def mu_third(spec: MomentSpec):
    return _mu3(spec, "eps"), _mu3(spec, "b")


def mu_fourth(spec: MomentSpec):
    return _mu4(spec, "eps"), _mu4(spec, "b")


# -- first-step estimators ---------------------------------------------------


@dataclass(frozen=True)
class FirstStepVariance:
    """Limit variances of the first-step error-moment estimators.

    ``mu_eps_star*`` is the design-dependent part; ``inflation*`` is the
    additive term proportional to ``gamma_b^2``; ``total*`` their sum.
    The random-effect first-step estimators share ``mu_b^3`` / ``mu_b^4``
    with the efficient ones.
    """

    c: float
    d: float
    x0_quad: float
    mu_eps_star3: float | None = None
    inflation3: float | None = None
    mu_eps_star4: float | None = None
    inflation4: float | None = None

    @property
    def total3(self):
        if self.mu_eps_star3 is None:
            return None
        return self.mu_eps_star3 + self.inflation3

    @property
    def total4(self):
        if self.mu_eps_star4 is None:
            return None
        return self.mu_eps_star4 + self.inflation4


def _design_inputs(diag, x0_quad):
    if isinstance(diag, DesignDiagnostics):
        c, d = diag.c_n, diag.d_n
        if x0_quad is None:
            x0_quad = diag.x0_quad
    else:
        c, d = diag
    if x0_quad is None:
        raise UsageError("x0' Sigma^-1 x0 unavailable; pass x0_quad explicitly")
    return float(c), float(d), float(x0_quad)


def mu_firststep(spec: MomentSpec, diag, x0_quad: float | None = None, orders=(3, 4)):
    """Evaluate the first-step limit variances at finite-sample ``c``, ``d``, ``x0``.

    ``diag`` is a :class:`DesignDiagnostics` or a ``(c, d)`` pair.  The
    third-order inflation uses ``4 gamma_b^2 (gamma_eps^4 - (1-d) (gamma_eps^2)^2)``.
    """
    c, d, q = _design_inputs(diag, x0_quad)
    e = lambda k: spec.get("eps", k)  # noqa: E731
    gb2 = spec.get("b", 2)
    out = {}
    if 3 in orders:
        out["mu_eps_star3"] = (
            e(6) - e(3) ** 2 - 6 * e(2) * e(4) + (4 * c + 5) * e(2) ** 3 + 4 * e(2) ** 3 * q
        )
        out["inflation3"] = 4 * gb2 * (e(4) - (1 - d) * e(2) ** 2)
    if 4 in orders:
        out["mu_eps_star4"] = (
            e(8) - e(4) ** 2 - 8 * e(3) * e(5)
            + (2.25 * c + 13.75) * e(2) * e(3) ** 2
            + 2.25 * e(2) * e(3) ** 2 * q
        )
        out["inflation4"] = 2.25 * gb2 * (
            e(6) - (1 - d) * e(3) ** 2 - 6 * e(2) * e(4) + 9 * e(2) ** 3
        )
    return FirstStepVariance(c=c, d=d, x0_quad=q, **out)


@dataclass
class VarianceReport:
    mu_eps: dict
    mu_b: dict
    mu_eps_star: dict
    inflation: dict
    inputs_used: dict
    missing: list

    def as_dict(self) -> dict:
        s = lambda d: {str(k): v for k, v in sorted(d.items())}  # noqa: E731
        return {
            "mu_eps": s(self.mu_eps),
            "mu_b": s(self.mu_b),
            "mu_eps_star": s(self.mu_eps_star),
            "inflation": s(self.inflation),
            "inputs_used": dict(self.inputs_used),
            "missing": list(self.missing),
        }


def variance_report(spec: MomentSpec, diag=None, x0_quad=None) -> VarianceReport:
    """Every limit variance computable from ``spec``; gaps are listed in ``missing``."""
    rep = VarianceReport({}, {}, {}, {}, {}, [])
    for k, fn in _MU.items():
        for w, target in (("eps", rep.mu_eps), ("b", rep.mu_b)):
            try:
                target[k] = fn(spec, w)
            except MissingMoment as exc:
                rep.missing.append(f"mu_{w}{k}: {exc}")
    if diag is not None:
        c, d, q = _design_inputs(diag, x0_quad)
        rep.inputs_used.update(c=c, d=d, x0_quad=q)
        for k in (3, 4):
            try:
                fs = mu_firststep(spec, (c, d), q, orders=(k,))
            except MissingMoment as exc:
                rep.missing.append(f"mu_eps_star{k}: {exc}")
                continue
            rep.mu_eps_star[k] = getattr(fs, f"mu_eps_star{k}")
            rep.inflation[k] = getattr(fs, f"inflation{k}")
    return rep


def standard_errors(est: MomentEstimates, spec: MomentSpec, n=None, N=None, diag=None, x0_quad=None):
    """SEs ``sqrt(mu/N)`` for error moments and ``sqrt(mu/n)`` for random effects.

    ``n`` / ``N`` default to the per-estimate counts stored in ``est``.
    First-step error moments of order 3 and 4 need ``diag``.  Entries are
    ``None`` when no limit variance exists (plug-in estimators) or the spec
    lacks an order.
    """
    if (n is not None and n <= 0) or (N is not None and N <= 0):
        raise UsageError("n and N must be positive")
    first = est.variant == "first_step"
    out = {}
    for name, _ in est.items():
        if name.endswith("_plugin"):
            out[name] = None
            continue
        w = "eps" if name.startswith("eps") else "b"
        k = int(name[-1])
        count = (N if N is not None else est.N_used.get(name)) if w == "eps" else (
            n if n is not None else est.n_used.get(name)
        )
        if not count:
            raise UsageError(f"no sample size known for {name}")
        try:
            if first and w == "eps" and k in (3, 4):
                if diag is None and x0_quad is None:
                    raise UsageError("first-step error SEs need design diagnostics")
                fs = mu_firststep(spec, diag, x0_quad, orders=(k,))
                var = getattr(fs, f"total{k}")
            else:
                var = _MU[k](spec, w)
        except MissingMoment:
            out[name] = None
            continue
        out[name] = math.sqrt(var / count) if var >= 0 else float("nan")
    return out
