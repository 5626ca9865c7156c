"""``lmm-moments`` command line: fit, simulate, mc, check-oracle.

Exit codes: 0 ok, 1 verification failure, 2 usage or input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import __version__
from .asymptotics import MomentSpec, standard_errors
from .dataset import load_csv, write_csv
from .errors import HarnessError, LMMError, SingularDesign
from .gls import design_diagnostics, gls_fit
from .mc import compare_variants, run_mc
from .moments import estimate_moments
from .oracle import run_identity_suite
from .sim import CASES, GROUP_SIZE_LAWS, ScenarioConfig, simulate

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

CONVENTIONS = {
    "counts": "n and N in each estimate count only the groups large enough for it (see n_used, N_used)",
    "first_step_eps3_variance": "mu_eps_star3 + 4 gamma_b2 (gamma_eps4 - (1 - d) gamma_eps2^2)",
    "standard_errors": "sqrt(mu / N) for error moments, sqrt(mu / n) for random-effect moments; "
    "null for plug-in estimators and for orders the moment spec does not cover",
}

_VARIANT_FLAG = {
    "efficient": ("efficient",),
    "firststep": ("first_step",),
    "both": ("efficient", "first_step"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _orders(text: str):
    try:
        orders = tuple(sorted({int(t) for t in text.split(",") if t.strip()}))
    except ValueError:
        raise argparse.ArgumentTypeError(f"orders must be comma-separated integers, got {text!r}")
    if not orders or any(k not in (2, 3, 4) for k in orders):
        raise argparse.ArgumentTypeError("orders must be drawn from 2, 3, 4")
    return orders


def _positive(text: str):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed(text: str):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lmm-moments", description="Higher-moment estimation in linear mixed models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a CSV dataset and estimate moments")
    f.add_argument("data", help="CSV with header group,y,x1..xp")
    f.add_argument("--orders", type=_orders, default=(2, 3, 4))
    f.add_argument("--variant", choices=sorted(_VARIANT_FLAG), default="efficient")
    f.add_argument("--policy", choices=("strict", "drop"), default="drop")
    f.add_argument("--spec", help="moment spec file (eps2=..., b4=...) for standard errors")
    f.add_argument("--out", choices=("json", "table"), default="json")

    s = sub.add_parser("simulate", help="draw one dataset of a scenario")
    s.add_argument("--case", required=True)
    s.add_argument("--n", type=_positive, required=True)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--replication", type=int, default=0)
    s.add_argument("--out", required=True, help="CSV path; truth goes to <out>.truth")
    _design_flags(s)

    m = sub.add_parser("mc", help="Monte Carlo study of one scenario")
    m.add_argument("--case", required=True)
    m.add_argument("--n", type=_positive, required=True)
    m.add_argument("--reps", type=_positive, default=1000)
    m.add_argument("--seed", type=_seed, default=0)
    m.add_argument("--variant", choices=sorted(_VARIANT_FLAG), default="efficient")
    m.add_argument("--format", choices=("text", "json", "csv"), default="text")
    _design_flags(m)

    c = sub.add_parser("check-oracle", help="verify estimator algebra against brute force")
    c.add_argument("--seed", type=_seed, default=0)
    c.add_argument("--trials", type=int, default=200)
    c.add_argument("--expansion-trials", type=int, default=500)
    c.add_argument("--tol", type=float, default=1e-10)
    return p


def _design_flags(p):
    p.add_argument("--group-size-law", choices=GROUP_SIZE_LAWS, default="shifted")
    p.add_argument("--poisson-mean", type=float, default=5.0)
    p.add_argument("--min-size", type=int, default=4)
    p.add_argument("--fixed-size", type=int, default=None)


def _design(args) -> dict:
    return {
        "group_size_law": args.group_size_law,
        "poisson_mean": args.poisson_mean,
        "min_size": args.min_size,
        "fixed_size": args.fixed_size,
    }


def _check_case(case):
    if case not in CASES:
        raise argparse.ArgumentTypeError(f"unknown case {case!r}; expected one of {', '.join(CASES)}")


# -- fit ---------------------------------------------------------------------


def _fit_payload(args) -> dict:
    ds = load_csv(args.data)
    fit = gls_fit(ds)
    diag = design_diagnostics(ds)
    spec = MomentSpec.load(args.spec) if args.spec else None
    estimates, ses, notes = {}, {}, []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if spec is not None:
            notes += [f"moment spec: {w}" for w in spec.validate()]
        for variant in _VARIANT_FLAG[args.variant]:
            est = estimate_moments(fit, orders=args.orders, variant=variant, policy=args.policy)
            estimates[variant] = est.as_dict()
            notes += [f"{variant}: {w}" for w in est.warnings]
            if spec is not None:
                ses[variant] = standard_errors(est, spec, diag=diag)
    primary = estimates.get("efficient") or estimates["first_step"]
    payload = {
        "alpha": fit.alpha_hat,
        "beta": [float(v) for v in fit.beta_hat],
        "sigma_hat": np.asarray(fit.sigma_hat).tolist(),
        "n": ds.n,
        "N": ds.N,
        "gamma_eps": primary["gamma_eps"],
        "gamma_b": primary["gamma_b"],
        "diagnostics": diag.as_dict(),
        "estimates": estimates,
        "warnings": notes,
        "conventions": CONVENTIONS,
    }
    if spec is not None:
        payload["standard_errors"] = ses
    return payload


def _fmt(v):
    return "-" if v is None else f"{v:.6g}"


def _fit_table(payload) -> str:
    lines = [f"groups n={payload['n']}  observations N={payload['N']}"]
    lines.append(f"alpha      {payload['alpha']:.6g}")
    for j, b in enumerate(payload["beta"], start=1):
        lines.append(f"beta{j:<6} {b:.6g}")
    for row in payload["sigma_hat"]:
        lines.append("sigma_hat  " + "  ".join(f"{v:.6g}" for v in row))
    d = payload["diagnostics"]
    lines.append(f"c_n={d['c_n']:.6g}  d_n={d['d_n']:.6g}  x0'S^-1x0={_fmt(d['x0_quad'])}")
    ses = payload.get("standard_errors", {})
    for variant, est in payload["estimates"].items():
        lines.append(f"[{variant}]")
        se = ses.get(variant, {})
        for which in ("eps", "b"):
            for k, v in est[f"gamma_{which}"].items():
                lines.append(f"  gamma_{which}{k:<3} {v:>12.6g}   se {_fmt(se.get(f'{which}{k}'))}")
            for k, v in est.get(f"gamma_{which}_plugin", {}).items():
                lines.append(f"  gamma_{which}{k}~  {v:>12.6g}   (plug-in)")
    for w in payload["warnings"]:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    payload = _fit_payload(args)
    if args.out == "json":
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(_fit_table(payload))
    return EXIT_OK


# -- simulate / mc -------------------------------------------------------------


def cmd_simulate(args) -> int:
    _check_case(args.case)
    cfg = ScenarioConfig(case=args.case, n=args.n, seed=args.seed, **_design(args))
    ds, truth = simulate(cfg, args.replication)
    write_csv(ds, args.out)
    with open(f"{args.out}.truth", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(truth.to_text())
    return EXIT_OK


def cmd_mc(args) -> int:
    _check_case(args.case)
    report = run_mc(
        args.case, args.n, args.reps,
        seed=args.seed, variants=_VARIANT_FLAG[args.variant], **_design(args),
    )
    out = report.render(args.format)
    if args.format == "text" and args.variant == "both":
        rows = compare_variants(report, report)
        lines = ["", "variance ratio first_step / efficient"]
        for r in rows:
            flag = "  *" if r.significant else ""
            lines.append(f"{r.estimand:<20} {r.ratio:>8.3f}  z={r.z:>7.2f}{flag}")
        out += "\n".join(lines) + "\n"
    sys.stdout.write(out)
    return EXIT_OK


# -- check-oracle ----------------------------------------------------------------


def cmd_check_oracle(args) -> int:
    rep = run_identity_suite(seed=args.seed, trials=args.trials, expansion_trials=args.expansion_trials, tol=args.tol)
    print(f"datasets={rep.trials} expansion tuples={rep.expansion_trials} tol={rep.tol:g}")
    print(f"max relative deviation {rep.worst:.3e}")
    if rep.ok:
        print("all identities hold")
        return EXIT_OK
    for (seed, kind, t), key, dev in rep.failures:
        print(f"FAIL seed={seed} {kind}={t} {key} deviation={dev:.3e}")
    return EXIT_VERIFY


_COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "mc": cmd_mc,
    "check-oracle": cmd_check_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularDesign, HarnessError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LMMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
