"""Monte Carlo harness: replicate simulate -> fit -> estimate and summarise.

Replication ``r`` of a run with master seed ``s`` uses the data of
``simulate(cfg, replication=r)``, so any single replication can be re-run
in isolation and the report does not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import HarnessError, LMMError, UsageError
from .gls import gls_fit
from .moments import estimate_moments
from .sim import ScenarioConfig, simulate

__all__ = [
    "McRow",
    "McReport",
    "run_mc",
    "compare_variants",
    "bootstrap_variance_test",
    "worker_count",
    "VARIANTS",
]

VARIANTS = ("efficient", "first_step")
COLUMNS = ("estimand", "variant", "truth", "mean", "std", "rmse", "R", "failures")
MAX_FAILURE_RATE = 0.01


def worker_count() -> int:
    """Workers to use: ``LMM_THREADS`` if set, else 1."""
    raw = os.environ.get("LMM_THREADS", "").strip()
    if not raw:
        return 1
    try:
        k = int(raw)
    except ValueError:
        raise UsageError(f"LMM_THREADS must be an integer, got {raw!r}") from None
    if k < 1:
        raise UsageError("LMM_THREADS must be >= 1")
    return k


def _truths(cfg: ScenarioConfig) -> dict:
    spec = cfg.truth()
    out = {"alpha": cfg.alpha}
    for j, v in enumerate(cfg.beta, start=1):
        out[f"beta{j}"] = float(v)
    for k in (2, 3, 4):
        out[f"gamma_eps{k}"] = spec.get("eps", k)
        out[f"gamma_b{k}"] = spec.get("b", k)
    out["gamma_eps4_plugin"] = out["gamma_eps4"]
    out["gamma_b4_plugin"] = out["gamma_b4"]
    return out


def _one_replication(cfg: ScenarioConfig, r: int, variants):
    """Estimates of one replication as ``{(variant, estimand): value}``."""
    ds, _ = simulate(cfg, r)
    fit = gls_fit(ds)
    out = {("size", "n"): ds.n, ("size", "N"): ds.N, ("gls", "alpha"): fit.alpha_hat}
    for j, v in enumerate(fit.beta_hat, start=1):
        out[("gls", f"beta{j}")] = float(v)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for variant in variants:
            est = estimate_moments(fit, variant=variant, policy="drop")
            for name, v in est.items():
                out[(variant, f"gamma_{name}")] = v
    return out


def _run_block(args):
    cfg, reps, variants = args
    results = []
    for r in reps:
        try:
            results.append((r, _one_replication(cfg, r, variants), None))
        except LMMError as exc:
            results.append((r, None, f"{type(exc).__name__}: {exc}"))
    return results


@dataclass(frozen=True)
class McRow:
    estimand: str
    variant: str
    truth: float
    mean: float
    std: float
    rmse: float
    R: int
    failures: int

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in COLUMNS}


@dataclass
class McReport:
    rows: list
    config: dict
    draws: dict = field(repr=False, default_factory=dict)
    failed: list = field(default_factory=list)
    sizes: dict = field(repr=False, default_factory=dict)

    def row(self, estimand: str, variant: str | None = None) -> McRow:
        for row in self.rows:
            if row.estimand == estimand and (variant is None or row.variant == variant):
                return row
        raise KeyError((estimand, variant))

    def values(self, estimand: str, variant: str | None = None) -> np.ndarray:
        row = self.row(estimand, variant)
        return self.draws[(row.variant, row.estimand)]

    # output ------------------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "rows": [r.as_dict() for r in self.rows],
            "failed": [{"replication": r, "error": msg} for r, msg in self.failed],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r.estimand, r.variant, repr(r.truth), repr(r.mean), repr(r.std),
                        repr(r.rmse), r.R, r.failures])
        return buf.getvalue()

    def to_text(self) -> str:
        c = self.config
        head = (
            f"case ({c['case']})  n={c['n']}  R={c['R']}  seed={c['seed']}  "
            f"group sizes: {c['group_size_law']}"
        )
        lines = [head]
        fmt = "{:<20} {:<11} {:>9} {:>9} {:>9} {:>9} {:>6} {:>8}"
        lines.append(fmt.format(*COLUMNS))
        for r in self.rows:
            lines.append(fmt.format(
                r.estimand, r.variant, f"{r.truth:.4f}", f"{r.mean:.4f}",
                f"{r.std:.4f}", f"{r.rmse:.4f}", r.R, r.failures,
            ))
        return "\n".join(lines) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        if fmt in ("table", "text"):
            return self.to_text()
        raise UsageError(f"unknown format {fmt!r}")


def _summarise(values: np.ndarray, truth: float):
    R = values.shape[0]
    mean = math.fsum(values.tolist()) / R
    std = math.sqrt(math.fsum(((values - mean) ** 2).tolist()) / (R - 1)) if R > 1 else float("nan")
    rmse = math.sqrt(math.fsum(((values - truth) ** 2).tolist()) / R)
    return mean, std, rmse


def run_mc(
    case: str,
    n: int,
    R: int,
    seed: int = 0,
    variants=("efficient",),
    threads: int | None = None,
    **design,
) -> McReport:
    """Run ``R`` replications of scenario ``case`` with ``n`` groups.

    ``design`` is passed to :class:`~lmmoments.sim.ScenarioConfig`
    (e.g. ``group_size_law="truncated"``).  ``std`` uses divisor ``R - 1``,
    ``rmse`` divisor ``R``.  Replications raising a library error are
    excluded and counted; more than 1% failures raises :class:`HarnessError`.
    """
    if R < 2:
        raise UsageError("need at least 2 replications")
    variants = tuple(v for v in VARIANTS if v in set(variants))
    if not variants:
        raise UsageError("no known variant requested")
    cfg = ScenarioConfig(case=case, n=n, seed=seed, **design)
    threads = worker_count() if threads is None else threads
    reps = list(range(R))
    if threads > 1:
        # strided blocks; results are re-sorted by replication index
        chunks = [reps[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_run_block, [(cfg, ch, variants) for ch in chunks if ch]))
        results = sorted((res for part in parts for res in part), key=lambda t: t[0])
    else:
        results = _run_block((cfg, reps, variants))

    failed = [(r, msg) for r, out, msg in results if out is None]
    if len(failed) > MAX_FAILURE_RATE * R:
        raise HarnessError(
            f"{len(failed)} of {R} replications failed; first: replication {failed[0][0]}: {failed[0][1]}"
        )
    ok = [out for _, out, _ in results if out is not None]
    keys = list(ok[0])
    truths = _truths(cfg)
    draws, rows, sizes = {}, [], {}
    for key in keys:
        variant, estimand = key
        vals = np.array([out[key] for out in ok])
        if variant == "size":
            sizes[estimand] = vals
            continue
        draws[key] = vals
        truth = truths[estimand]
        mean, std, rmse = _summarise(vals, truth)
        rows.append(McRow(estimand, variant, truth, mean, std, rmse, len(vals), len(failed)))
    config = {
        "case": case,
        "n": n,
        "R": R,
        "seed": seed,
        "variants": list(variants),
        "group_size_law": cfg.group_size_law,
        "poisson_mean": cfg.poisson_mean,
        "min_size": cfg.min_size,
        "fixed_size": cfg.fixed_size,
    }
    return McReport(rows=rows, config=config, draws=draws, failed=failed, sizes=sizes)


# -- comparing variants ------------------------------------------------------

Z_ONE_SIDED_1PCT = 2.326347874040841


@dataclass(frozen=True)
class EfficiencyRow:
    estimand: str
    baseline: str
    candidate: str
    var_baseline: float
    var_candidate: float
    ratio: float
    z: float
    significant: bool


def _paired_variance_z(a: np.ndarray, b: np.ndarray) -> float:
    """z statistic for ``var(b) - var(a) > 0`` on paired draws (influence-function SE)."""
    psi = (b - b.mean()) ** 2 - (a - a.mean()) ** 2
    diff = np.var(b, ddof=1) - np.var(a, ddof=1)
    se = psi.std(ddof=1) / math.sqrt(len(psi))
    if se == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return float(diff / se)


def compare_variants(report_a: McReport, report_b: McReport, baseline="efficient", candidate="first_step"):
    """Variance ratio ``var(candidate) / var(baseline)`` for every shared moment estimand.

    Plug-in estimands of the candidate are paired with the baseline estimand of
    the same order.  ``significant`` flags a one-sided 1% normal-approximation
    test of ``var(candidate) > var(baseline)``.
    """
    keys = ("case", "n", "R", "seed", "group_size_law", "poisson_mean", "min_size", "fixed_size")
    if any(report_a.config.get(k) != report_b.config.get(k) for k in keys):
        raise UsageError("reports come from different Monte Carlo configurations")
    if report_a.failed != report_b.failed:
        raise UsageError("reports excluded different replications")
    base = {e: v for (var, e), v in report_a.draws.items() if var == baseline}
    out = []
    for (var, estimand), vals in report_b.draws.items():
        if var != candidate:
            continue
        ref_name = estimand[: -len("_plugin")] if estimand.endswith("_plugin") else estimand
        if ref_name not in base:
            continue
        ref = base[ref_name]
        va, vb = float(np.var(ref, ddof=1)), float(np.var(vals, ddof=1))
        ratio = vb / va if va > 0 else float("nan")
        z = _paired_variance_z(ref, vals)
        out.append(EfficiencyRow(estimand, baseline, candidate, va, vb, ratio, z, z > Z_ONE_SIDED_1PCT))
    return out


def bootstrap_variance_test(a, b, B: int = 2000, seed: int = 0) -> float:
    """One-sided paired bootstrap p-value for ``H0: var(b) <= var(a)``.

    Resamples replication indices jointly and reports the fraction of
    bootstrap differences ``var*(b) - var*(a)`` that fall at or below zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise UsageError("paired samples of equal length required")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(a), size=(B, len(a)))
    diff = np.var(b[idx], axis=1, ddof=1) - np.var(a[idx], axis=1, ddof=1)
    return float((np.count_nonzero(diff <= 0) + 1) / (B + 1))
