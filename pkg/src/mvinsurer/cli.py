"""Command-line front end.

Exit codes: 0 success, 1 usage or config error, 2 model-domain error,
3 verification failure.  Tabular output is CSV with a header row.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from contextlib import contextmanager
from dataclasses import asdict

import numpy as np

from . import closed_form as cf
from .closed_form import StrategyKind, StrategySpec
from .model import (
    ConfigError,
    DegenerateModel,
    DomainError,
    Scenario,
    derive,
    load_scenario,
    premium_expected_value,
)
from .simulate import (
    SimulationConfig,
    auxiliary_Y,
    estimate_objectives,
    estimate_quadratic_loss,
    simulate_wealth,
)
from .verify import verification_report

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "pass" if v else "FAIL"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


@contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _write_csv(path: str | None, header: list[str], rows) -> None:
    with _output(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _grid(args) -> list[float]:
    if args.values is not None:
        return _floats(args.values)
    lo, hi, n = args.grid
    n = int(n)
    if n < 2:
        raise UsageError("grid count must be at least 2")
    return list(np.linspace(lo, hi, n))


def _scenario(args) -> Scenario:
    if args.config is None:
        raise UsageError("--config is required")
    return load_scenario(args.config)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_strategy(args) -> int:
    sc = _scenario(args)
    c = sc.coefficients()
    theta, t, x = sc.theta, args.t, args.x
    s = t if args.s is None else args.s
    wealth = x if args.wealth is None else args.wealth
    for name in ("kappa1", "kappa2", "kappa3", "kappa4"):
        _log(f"# {name} = {getattr(c, name):.12g}")
    for w in c.warnings:
        _log(f"# warning: {w}")

    rows = [("tc", *cf.tc_control(c, theta, s))]
    if t < c.T:
        rows.append(("pre", *cf.pre_control(c, theta, t, x, s, wealth)))
    try:
        rows.append(("no-investment", 0.0, cf.no_investment_control(c, theta, s)))
    except DomainError:
        pass
    rows.append(("no-insurance", cf.no_insurance_control(c, theta, s), 0.0))
    if args.m is not None:
        tgt = cf.target_controls(c, args.m, t, x, s, wealth)
        rows.append(("tc-target", *tgt.tc))
        rows.append(("pre-target", *tgt.pre))
    _write_csv(args.out, ["strategy", "pi", "L"], rows)
    return EXIT_OK


def cmd_frontier(args) -> int:
    sc = _scenario(args)
    c = sc.coefficients()
    t, x = args.t, args.x
    s = c.T if args.s is None else args.s
    base = x * math.exp(c.r * (s - t))
    if args.thetas is not None:
        means = [cf.tc_moments(c, th, t, x, s).mean for th in _floats(args.thetas)]
        means.sort()
    elif args.means is not None:
        means = _floats(args.means)
    else:
        lo, hi, n = args.mean_grid
        if int(n) < 2:
            raise UsageError("grid count must be at least 2")
        means = list(np.linspace(lo, hi, int(n)))
    if any(b <= a for a, b in zip(means, means[1:])):
        raise UsageError("mean grid must be strictly ascending")
    if means and means[0] < base:
        raise DomainError(f"mean {means[0]} below the risk-free level {base:.12g}")
    slope = cf.sml_slope(c, t, s)
    rows = [
        (m, cf.tc_frontier_variance(c, t, x, s, m), cf.pre_frontier_variance(c, t, x, s, m), slope)
        for m in means
    ]
    _write_csv(args.out, ["mean", "variance_tc", "variance_pre", "sml_slope"], rows)
    return EXIT_OK


_SWEEPABLE = {"rho": "rho", "mu": "mu", "sigma": "sigma", "alpha": "alpha", "beta": "beta",
              "lambda": "lam", "p": "p", "r": "r"}


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    if args.param not in _SWEEPABLE:
        raise UsageError(f"cannot sweep {args.param!r}; choose from {', '.join(_SWEEPABLE)}")
    if args.premium == "evp" and args.param == "p":
        raise UsageError("premium is derived under --premium evp; sweep another parameter")
    grid = _grid(args)
    if len(grid) < 2:
        raise UsageError("sweep needs at least two grid points")
    thetas = _floats(args.thetas) if args.thetas else [sc.theta]
    t = sc.params.T - 1.0 if args.t is None else args.t
    if t < 0:
        t = 0.0
    x = args.x

    header = [args.param, "p"]
    for th in thetas:
        header += [f"pi_star_theta_{th:g}", f"L_star_theta_{th:g}"]
        if args.precommit:
            header += [f"pi_pre_theta_{th:g}", f"L_pre_theta_{th:g}"]
    rows = []
    for v in grid:
        params = sc.params.replace(**{_SWEEPABLE[args.param]: float(v)})
        if args.premium == "evp":
            params = params.replace(p=premium_expected_value(params.alpha, params.lam, sc.jump.gamma_bar1, args.loading))
        c = derive(params, sc.jump)
        row = [v, params.p]
        for th in thetas:
            row += list(cf.tc_control(c, th, t))
            if args.precommit:
                row += list(cf.pre_control(c, th, t, x, t, x))
        rows.append(row)
    _write_csv(args.out, header, rows)
    return EXIT_OK


def _strategy_from_args(args, c, theta) -> StrategySpec:
    kind = StrategyKind(args.strategy)
    t, x = args.t, args.x
    if kind is StrategyKind.TIME_CONSISTENT:
        spec = StrategySpec.time_consistent(c, theta, t, x)
    elif kind is StrategyKind.PRECOMMIT:
        spec = StrategySpec.precommit(c, theta, t, x)
    elif kind in (StrategyKind.PRECOMMIT_TARGET, StrategyKind.TC_TARGET):
        if args.m is None:
            raise UsageError(f"--m is required for strategy {kind.value}")
        make = StrategySpec.precommit_target if kind is StrategyKind.PRECOMMIT_TARGET else StrategySpec.tc_target
        spec = make(c, args.m, t, x)
    elif kind is StrategyKind.AUX_QUADRATIC:
        if args.xi is None:
            raise UsageError("--xi is required for strategy aux")
        spec = StrategySpec.auxiliary(c, args.xi, t, x)
    elif kind is StrategyKind.NO_INVESTMENT:
        spec = StrategySpec.no_investment(c, theta, t, x)
    elif kind is StrategyKind.NO_INSURANCE:
        spec = StrategySpec.no_insurance(c, theta, t, x)
    else:
        spec = StrategySpec.constant(c, args.pi, args.L, t, x)
    return spec.scaled(args.scale) if args.scale != 1.0 else spec


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    c = sc.coefficients()
    theta = sc.theta
    spec = _strategy_from_args(args, c, theta)
    config = SimulationConfig(
        n_paths=args.paths, n_steps=args.steps, seed=args.seed, antithetic=args.antithetic, workers=args.workers
    )
    sample = simulate_wealth(sc.params, sc.jump, spec, config)
    if args.dump:
        sample.dump(args.dump)

    ref = spec.reference_moments()
    rows = []

    def add(name, est, reference):
        if reference is None:
            rows.append((name, est.value, est.se, "", "", ""))
        else:
            rows.append((name, est.value, est.se, reference, est.z(reference), est.within(reference, 3.0)))

    y_T = None
    if spec.deterministic:
        y_T = auxiliary_Y(sc.params, sc.jump, spec, spec.t0, spec.x0, c.T)
    est = estimate_objectives(sample, theta, y_T if y_T is not None else 0.0)
    add("mean", est.stats.mean, ref.mean if ref else None)
    add("variance", est.stats.variance, ref.variance if ref else None)
    j_ref = ref.mean - theta / 2 * ref.variance if ref else None
    add("objective_J", est.stats.objective_J, j_ref)
    if y_T is not None:
        modified_ref = cf.tc_value(c, theta, spec.t0, spec.x0, spec.x0) if (
            spec.kind is StrategyKind.TIME_CONSISTENT and spec.scale == 1.0) else None
        add("modified_objective", est.modified, modified_ref)
    if spec.kind is StrategyKind.AUX_QUADRATIC:
        loss = estimate_quadratic_loss(sample, spec.xi)
        add("quadratic_loss", loss, cf.aux_value(c, spec.xi, spec.t0, spec.x0) if spec.scale == 1.0 else None)
    rows.append(("n_effective", est.stats.n_effective, "", "", "", ""))
    _write_csv(args.out, ["statistic", "estimate", "se", "reference", "z", "within_3se"], rows)
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _scenario(args)
    c = sc.coefficients()
    theta, t, x = sc.theta, args.t, args.x
    pre, tc = cf.pre_moments(c, theta, t, x), cf.tc_moments(c, theta, t, x)
    j_pre, j_tc = cf.pre_value(c, theta, t, x), tc.mean - theta / 2 * tc.variance
    rows = [
        ("mean", pre.mean, tc.mean, pre.mean > tc.mean),
        ("variance", pre.variance, tc.variance, pre.variance > tc.variance),
        ("objective_J", j_pre, j_tc, j_pre > j_tc),
    ]
    m = cf.m_star(c, theta, t, x) if args.m is None else args.m
    tgt = cf.target_controls(c, m, t, x, t, x)
    rows += [
        ("target_m", m, m, True),
        ("target_pi_t", tgt.pre.pi, tgt.tc.pi, abs(tgt.pre.pi) > abs(tgt.tc.pi) or tgt.pre.pi == tgt.tc.pi == 0),
        ("target_L_t", tgt.pre.L, tgt.tc.L, abs(tgt.pre.L) > abs(tgt.tc.L) or tgt.pre.L == tgt.tc.L == 0),
        ("target_theta", tgt.theta_pre, tgt.theta_tc, tgt.theta_pre > tgt.theta_tc),
    ]
    _write_csv(args.out, ["quantity", "precommitment", "time_consistent", "precommitment_larger"], rows)
    return EXIT_OK


def cmd_verify(args) -> int:
    sc = _scenario(args)
    checks = verification_report(sc.params, sc.jump, sc.theta)
    failed = [ch for ch in checks if not ch.passed]
    for ch in checks:
        if ch.name == "warning":
            _log(f"# warning: {ch.observed}")
    report = {
        "scenario": {**asdict(sc.params), "theta": sc.theta, "jump": asdict(sc.jump)},
        "passed": not failed,
        "checks": [asdict(ch) for ch in checks],
    }
    with _output(args.out) as fh:
        json.dump(report, fh, indent=2, default=float)
        fh.write("\n")
    for ch in failed:
        _log(f"FAIL {ch.name}: observed {_fmt(ch.observed)}, expected {ch.tolerance}")
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS so a flag given before the subcommand is not reset by the subparser
    common.add_argument("--config", default=argparse.SUPPRESS, help="scenario file (key = value lines)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="write output here instead of stdout")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="root seed for Monte Carlo (u64)")

    state = argparse.ArgumentParser(add_help=False)
    state.add_argument("--t", type=float, default=0.0, help="start time")
    state.add_argument("--x", type=float, default=1.0, help="wealth at the start time")

    parser = argparse.ArgumentParser(
        prog="mvinsurer",
        description="Mean-variance investment and risk control for an insurer.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("strategy", parents=[common, state], help="controls of every strategy at time s")
    p.add_argument("--s", type=float, help="evaluation time (default: t)")
    p.add_argument("--wealth", type=float, help="wealth at s for wealth-dependent rules (default: x)")
    p.add_argument("--m", type=float, help="target expected terminal wealth for target strategies")
    p.set_defaults(func=cmd_strategy)

    p = sub.add_parser("frontier", parents=[common, state], help="efficient frontiers as CSV")
    p.add_argument("--s", type=float, help="evaluation time (default: T)")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--means", help="comma-separated ascending expected wealth levels")
    g.add_argument("--mean-grid", nargs=3, type=float, metavar=("MIN", "MAX", "COUNT"))
    g.add_argument("--thetas", help="comma-separated risk aversions; means taken from the time-consistent strategy")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("sweep", parents=[common], help="optimal strategies across a parameter grid")
    p.add_argument("--param", required=True, help="parameter to sweep (rho, lambda, mu, sigma, ...)")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--grid", nargs=3, type=float, metavar=("MIN", "MAX", "COUNT"))
    g.add_argument("--values", help="comma-separated explicit values")
    p.add_argument("--thetas", help="comma-separated risk aversions (default: scenario theta)")
    p.add_argument("--premium", choices=("fixed", "evp"), default="fixed",
                   help="evp recomputes p = (1 + loading)(alpha + lambda*E[gamma]) at each point")
    p.add_argument("--loading", type=float, default=0.4)
    p.add_argument("--t", type=float, help="evaluation time (default: T - 1, floored at 0)")
    p.add_argument("--x", type=float, default=1.0)
    p.add_argument("--precommit", action="store_true", help="add precommitment controls at the start time")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common, state], help="Monte Carlo check of a strategy")
    p.add_argument("--strategy", default="tc", choices=[k.value for k in StrategyKind])
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--steps", type=int, default=252, help="time steps per year")
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--m", type=float, help="target for tc-target / pre-target")
    p.add_argument("--xi", type=float, help="target level for aux")
    p.add_argument("--pi", type=float, default=0.0, help="investment for the constant strategy")
    p.add_argument("--L", type=float, default=0.0, help="liability for the constant strategy")
    p.add_argument("--scale", type=float, default=1.0, help="multiply the controls (perturbation)")
    p.add_argument("--dump", help="write terminal wealth samples, one per line")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="run the oracle suite; JSON report")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", parents=[common, state], help="precommitment vs time-consistent side by side")
    p.add_argument("--m", type=float, help="common target (default: precommitment mean at theta)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    for name, default in (("config", None), ("out", None), ("seed", 0)):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except (DegenerateModel, DomainError) as exc:
        _log(f"{type(exc).__name__}: {exc}")
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
