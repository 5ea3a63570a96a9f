"""Command-line interface.

Verbs:
  test      run the standardized trace test on a CSV dataset
  simulate  run a Monte Carlo size/power experiment from a JSON config
  diagnose  cross-check the fast implementation against dense oracles
  scenario  materialize a named design as CSV matrices plus a manifest

Exit codes: 0 success; 2 input/config error; 3 no balancing solution for
the design; 4 degenerate variance estimate (the test ran and is flagged).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .design import DesignSpec, build_projections
from .errors import ConfigError, DesignError, GroupError, NoBalancingSolution
from .io import (
    load_config,
    load_dataset,
    load_design,
    write_design,
    write_report,
    write_summary,
)
from .oracle import dense_min_norm_solve, t_by_decomposition
from .scenarios import (
    Scenario,
    growth_curve,
    one_way_manova,
    profile_parallelism,
    two_way_manova,
)
from .simulate import (
    CovarianceSpec,
    ErrorDistribution,
    _apply_factor,
    _sigma_factor,
    _substream,
    calibrate_signal_ray,
    canonical_direction,
    monte_carlo,
)
from .trace_test import MeanModel, run_test, statistic_t

SCENARIO_NAMES = ("one-way", "two-way", "profile-parallelism", "growth-curve")


def _parse_sizes(text: str, what: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"{what} must be comma-separated integers, got {text!r}") from exc
    if not sizes:
        raise ConfigError(f"{what} is empty")
    return sizes


def _build_scenario(name: str, group_sizes, p: int, *, degree=None,
                    levels=None, cell_sizes=None, effect=None) -> Scenario:
    if name == "one-way":
        return one_way_manova(group_sizes, p)
    if name == "profile-parallelism":
        return profile_parallelism(group_sizes, p)
    if name == "growth-curve":
        if degree is None:
            raise ConfigError("growth-curve scenario needs a polynomial degree")
        return growth_curve(group_sizes, p, degree)
    if name == "two-way":
        if levels is None or effect is None:
            raise ConfigError("two-way scenario needs factor levels and an effect")
        cells = cell_sizes if cell_sizes is not None else group_sizes
        if cells is None:
            raise ConfigError("two-way scenario needs cell sizes")
        return two_way_manova(levels[0], levels[1], cells, p, effect)
    raise ConfigError(f"unknown scenario {name!r}; choose from {SCENARIO_NAMES}")


def _scenario_from_config(spec: dict, p_hint: int | None = None) -> Scenario:
    name = spec["name"]
    p = spec.get("p", p_hint)
    if p is None:
        raise ConfigError("scenario needs 'p'")
    if name == "two-way":
        return _build_scenario(name, spec.get("group_sizes"), p,
                               levels=spec.get("levels"),
                               cell_sizes=spec.get("cell_sizes"),
                               effect=spec.get("effect"))
    sizes = spec.get("group_sizes")
    if sizes is None:
        raise ConfigError(f"scenario {name!r} needs 'group_sizes'")
    return _build_scenario(name, sizes, p, degree=spec.get("degree"))


def _broadcast(specs, g: int, what: str) -> list:
    items = [specs] if isinstance(specs, dict) else list(specs)
    if len(items) == 1:
        items = items * g
    if len(items) != g:
        raise ConfigError(f"{len(items)} {what} for {g} groups")
    return items


def _theta_from_config(spec: dict, design: DesignSpec, sigmas, base: Path) -> np.ndarray:
    kind = spec["kind"]
    if kind == "zero":
        return np.zeros((design.k, design.q))
    if kind == "matrix":
        if "values" in spec:
            theta = np.asarray(spec["values"], dtype=float)
        elif "path" in spec:
            try:
                theta = np.loadtxt(base / spec["path"], delimiter=",", ndmin=2)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read theta from {spec['path']}: {exc}") from exc
        else:
            raise ConfigError("theta kind 'matrix' needs 'values' or 'path'")
        if theta.shape != (design.k, design.q):
            raise ConfigError(
                f"theta has shape {theta.shape}, design needs ({design.k}, {design.q})")
        return theta
    if "snr" not in spec:
        raise ConfigError("theta kind 'signal_ray' needs 'snr'")
    direction = spec.get("direction", "canonical")
    if isinstance(direction, str):
        direction = canonical_direction(design)
    else:
        direction = np.asarray(direction, dtype=float)
        if direction.shape != (design.k, design.q):
            raise ConfigError(
                f"signal direction has shape {direction.shape}, "
                f"design needs ({design.k}, {design.q})")
    return calibrate_signal_ray(design, direction, sigmas, spec["snr"])


def build_experiment(config: dict, base: Path):
    """Turn a validated configuration into concrete experiment objects."""
    if "design" in config:
        design = load_design(base / config["design"])
    else:
        design = _scenario_from_config(config["scenario"]).design
    g, p = design.g, design.p
    dists = [ErrorDistribution(**d)
             for d in _broadcast(config.get("distributions", {"kind": "gaussian"}),
                                 g, "distributions")]
    covs = [CovarianceSpec(**c)
            for c in _broadcast(config.get("covariances", {"kind": "identity"}),
                                g, "covariances")]
    for c in covs:
        c.sqrt(p)  # positive-definiteness gate before any computation
    sigmas = tuple(c.matrix(p) for c in covs)
    theta = _theta_from_config(config.get("theta", {"kind": "zero"}),
                               design, sigmas, base)
    model = MeanModel(theta=theta, sigmas=sigmas)
    return design, model, dists, config.get("alpha", 0.05), config["reps"], config["seed"]


def cmd_test(args) -> int:
    sample = load_dataset(args.data, header=args.header)
    if args.design is not None:
        design = load_design(args.design)
        if tuple(design.group_sizes) != tuple(sample.group_sizes):
            raise ConfigError(
                f"data has group sizes {sample.group_sizes} but the design "
                f"manifest declares {design.group_sizes}")
    else:
        scenario = _build_scenario(args.scenario, sample.group_sizes, sample.p,
                                   degree=args.degree,
                                   levels=args.levels,
                                   effect=args.effect)
        design = scenario.design
    if sample.p != design.p:
        raise ConfigError(
            f"data has p={sample.p} response columns but design B has "
            f"p={design.p} rows")
    if args.scenario == "one-way" and args.design is None:
        for i, n in enumerate(sample.group_sizes):
            if n < 4:
                label = sample.labels[i] if sample.labels else str(i)
                raise ConfigError(
                    f"group {i} ({label!r}) has {n} rows; the one-way test "
                    f"needs at least 4 per group")
    report = run_test(sample, design, args.alpha, diagnostics=args.diagnostics)
    invocation = {"data": str(args.data), "design": str(args.design),
                  "scenario": args.scenario, "alpha": args.alpha,
                  "diagnostics": args.diagnostics, "header": args.header}
    if args.out:
        write_report(report, args.out, config=invocation)
    flag = " [degenerate variance]" if report.degenerate else ""
    print(f"T={report.t_stat:.6g}  z={report.z:.6g}  p={report.p_value:.6g}  "
          f"reject={report.reject}{flag}")
    return 4 if report.degenerate else 0


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    base = Path(args.config).parent
    design, model, dists, alpha, reps, seed = build_experiment(config, base)
    summary = monte_carlo(design, model, dists, alpha=alpha, reps=reps,
                          seed=seed, threads=args.threads)
    out = args.out or config.get("out")
    if out:
        write_summary(summary, out, config=config)
    print(f"reps={summary.replications}  reject_rate={summary.rejection_rate:.4f}"
          f"  (se {summary.mc_standard_error:.4f})  ks={summary.ks_distance:.4f}"
          f"  predicted={summary.predicted_power:.4f}")
    return 0


def _check(label: str, ok: bool, detail: str = "") -> bool:
    status = "PASS" if ok else "FAIL"
    suffix = f"  {detail}" if detail else ""
    print(f"{status}  {label}{suffix}")
    return ok


def cmd_diagnose(args) -> int:
    config = load_config(args.config)
    base = Path(args.config).parent
    design, model, dists, alpha, _, seed = build_experiment(config, base)
    proj = build_projections(design)
    ok = True
    ok &= _check("hat projection idempotent",
                 float(np.max(np.abs(proj.pi_a @ proj.pi_a - proj.pi_a))) <= 1e-10)
    ok &= _check("hypothesis projection rank",
                 abs(float(np.trace(proj.pi_h)) - design.ell) <= 1e-8,
                 f"trace {np.trace(proj.pi_h):.6g} vs ell={design.ell}")
    gram = proj.compressor @ proj.compressor.T
    ok &= _check("compressor gram projection",
                 float(np.max(np.abs(gram - np.eye(design.r)))) <= 1e-10)
    C = np.eye(design.N) - proj.pi_a
    d_ref, resid = dense_min_norm_solve(C * C, proj.h_diag)
    scale = float(np.linalg.norm(proj.h_diag))
    ok &= _check("balancing residual",
                 resid <= 1e-8 * max(scale, 1e-300),
                 f"relative residual {resid / scale:.3e}")
    ok &= _check("omega diagonal is zero",
                 float(np.max(np.abs(np.diag(proj.omega)))) == 0.0)

    factors = [_sigma_factor(S) for S in model.sigmas]
    mean_matrix = design.A @ model.theta @ design.B.T
    worst = 0.0
    for j in range(args.draws):
        rng = _substream(seed, j)
        X = np.empty((design.N, design.p))
        for i in range(design.g):
            Z = dists[i].sample(rng, design.group_sizes[i], design.p)
            X[design.group_slice(i)] = _apply_factor(Z, factors[i])
        X += mean_matrix
        fast = statistic_t(X, proj.compressor, proj.omega)
        slow = t_by_decomposition(X, design)
        worst = max(worst, abs(fast - slow) / max(1.0, abs(slow)))
    ok &= _check(f"statistic identity on {args.draws} draws", worst <= 1e-8,
                 f"worst relative gap {worst:.3e}")
    return 0 if ok else 2


def cmd_scenario(args) -> int:
    sizes = _parse_sizes(args.groups, "--groups")
    scenario = _build_scenario(args.name, sizes, args.p, degree=args.degree,
                               levels=args.levels, effect=args.effect)
    manifest = write_design(scenario.design, args.emit)
    print(f"{scenario.name}: {scenario.null_description}")
    print(f"wrote {manifest}")
    return 0


def _levels(text: str) -> tuple[int, int]:
    parts = _parse_sizes(text, "--levels")
    if len(parts) != 2:
        raise ConfigError(f"--levels needs exactly two integers, got {text!r}")
    return parts


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmanova",
        description="Trace test for bilateral linear hypotheses on the mean "
                    "matrix of grouped multivariate data, valid when the "
                    "dimension rivals or exceeds the group sample sizes.")
    sub = parser.add_subparsers(dest="verb", required=True)

    t = sub.add_parser("test", help="test a CSV dataset")
    t.add_argument("--data", required=True, help="grouped CSV (label, p columns)")
    t.add_argument("--scenario", default="one-way", choices=SCENARIO_NAMES)
    t.add_argument("--design", default=None, help="design manifest JSON (overrides --scenario)")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--degree", type=int, default=None, help="growth-curve degree")
    t.add_argument("--levels", type=_levels, default=None, help="two-way levels, e.g. 2,3")
    t.add_argument("--effect", default=None, choices=("main_a", "main_b", "interaction"))
    t.add_argument("--header", action="store_true", help="data file has a header row")
    t.add_argument("--diagnostics", action="store_true")
    t.add_argument("--out", default=None, help="report JSON path")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="Monte Carlo experiment from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None, help="summary JSON path (overrides config)")
    s.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: GMANOVA_THREADS, 0 = auto)")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("diagnose", help="oracle cross-checks for a config")
    d.add_argument("--config", required=True)
    d.add_argument("--draws", type=int, default=5)
    d.set_defaults(func=cmd_diagnose)

    c = sub.add_parser("scenario", help="materialize a named design")
    c.add_argument("--name", required=True, choices=SCENARIO_NAMES)
    c.add_argument("--groups", required=True, help="comma-separated group sizes")
    c.add_argument("--p", type=int, required=True)
    c.add_argument("--degree", type=int, default=None)
    c.add_argument("--levels", type=_levels, default=None)
    c.add_argument("--effect", default=None, choices=("main_a", "main_b", "interaction"))
    c.add_argument("--emit", required=True, help="output directory")
    c.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoBalancingSolution as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DesignError, GroupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
