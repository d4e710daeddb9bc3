"""Command-line interface.

Subcommands::

    expmc generate  --config cfg.json --out-theta t.csv --out-omega o.csv
    expmc solve     --config cfg.json --omega obs.csv --out theta.csv
    expmc calibrate --config cfg.json [--theta-star t.csv --omega obs.csv] [--out r.json]
    expmc verify    --config cfg.json --mode {cone,bregman,rsc,lemma4,spectral} ...
    expmc sweep     --config cfg.json --out results.csv [--plot-dir dir]
    expmc plotdata  --results results.csv --out-dir dir

Matrices are dense CSV (one row per line, 17 significant digits);
observations are one-based ``i,j,x`` triplet CSV.  Verify and calibrate
emit JSON on stdout or to ``--out``.  Exit status is zero only when
every requested cell completed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness, verify
from .calibration import build_report
from .config import load_config, family_from, regularizer_from
from .regularizers import LowRankModel
from .sampling import (
    full_indices,
    observe,
    read_observations,
    sample_indices,
    write_observations,
)
from .solver import Problem, solve


def write_matrix(M, path):
    np.savetxt(path, np.asarray(M, dtype=float), delimiter=",", fmt="%.17g")


def read_matrix(path):
    M = np.loadtxt(path, delimiter=",", ndmin=2)
    return np.asarray(M, dtype=float)


def _dims(config):
    try:
        return int(config["m"]), int(config["n"])
    except KeyError as exc:
        raise SystemExit(f"config is missing required dimension key {exc}")


def _solver_problem(config, omega):
    solver_cfg = config.get("solver", {})
    return Problem(
        family_from(config),
        regularizer_from(config),
        omega,
        lam=float(config.get("lambda", 0.0)),
        alpha_star=float(config.get("alpha_star", np.sqrt(omega.m * omega.n))),
        tol_obj=float(solver_cfg.get("tol_obj", 1e-9)),
        max_iters=int(solver_cfg.get("max_iters", 50_000)),
        dykstra_iters=int(solver_cfg.get("dykstra_iters", 30)),
    )


def cmd_generate(args):
    config = load_config(args.config)
    m, n = _dims(config)
    if m != n:
        raise SystemExit("generate currently builds square ground truth (m == n)")
    family = family_from(config)
    gen = config.get("generate", {})
    rank = int(gen.get("rank", harness.rank_rule(n)))
    max_entry = float(gen.get("max_entry", harness.default_max_entry(family)))
    seed = int(gen.get("seed", 0))
    omega_size = int(gen.get("omega_size", 2 * rank * n * max(1.0, np.log(n))))
    theta = harness.generate_ground_truth(n, rank, family, max_entry, seed)
    omega = sample_indices(m, n, omega_size, seed=seed + 1)
    omega = observe(omega, theta, family, seed=seed + 2,
                    value_mode=gen.get("value_mode", "independent"))
    write_matrix(theta, args.out_theta)
    write_observations(omega, args.out_omega)
    print(f"wrote ground truth to {args.out_theta} and "
          f"{omega.size} observations to {args.out_omega}")
    return 0


def cmd_solve(args):
    config = load_config(args.config)
    m, n = _dims(config)
    omega = read_observations(args.omega, m, n,
                              value_mode=config.get("value_mode", "independent"))
    if omega.values is None:
        raise SystemExit(f"{args.omega} has no value column; nothing to fit")
    problem = _solver_problem(config, omega)
    result = solve(problem)
    write_matrix(result.theta_hat, args.out)
    status = "converged" if result.converged else "max-iterations"
    print(f"{status} after {result.iterations} iterations; "
          f"objective {result.objective_trace[-1]:.12g}; wrote {args.out}")
    return 0 if result.converged else 2


def cmd_calibrate(args):
    config = load_config(args.config)
    m, n = _dims(config)
    cal = config.get("calibrate", {})
    theta_star = read_matrix(args.theta_star) if args.theta_star else None
    omega = None
    if args.omega:
        omega = read_observations(args.omega, m, n)
    omega_size = omega.size if omega is not None else int(
        config.get("verify", {}).get("omega_size", 2 * n * max(1.0, np.log(n)))
    )
    if theta_star is not None:
        box_radius = float(np.abs(theta_star).max())
    else:
        box_radius = float(config.get("alpha_star", np.sqrt(m * n))) / np.sqrt(m * n)
    report = build_report(
        family_from(config), regularizer_from(config), m, n, omega_size,
        box_radius=box_radius, c_beta=float(cal.get("c_beta", 1.0)),
        trials=int(cal.get("trials", 100)), seed=int(cal.get("seed", 0)),
        omega=omega, theta_star=theta_star,
    )
    _emit_json(report.to_json(), args.out)
    return 0


def cmd_verify(args):
    config = load_config(args.config)
    m, n = _dims(config)
    vcfg_raw = config.get("verify", {})
    vconfig = verify.VerificationConfig(
        c0=float(vcfg_raw.get("c0", 4.0)),
        beta=float(vcfg_raw.get("beta", 1.0)),
        trials=int(vcfg_raw.get("trials", 100)),
        tolerance=float(vcfg_raw.get("tolerance", 1e-6)),
    )
    seed = int(vcfg_raw.get("seed", 0))
    omega_size = int(vcfg_raw.get("omega_size", 2 * n * max(1.0, np.log(n))))
    cap = vcfg_raw.get("spikiness_cap")
    family = family_from(config)
    reg = regularizer_from(config)

    if args.mode in ("cone", "bregman"):
        if not (args.theta_star and args.theta_hat):
            raise SystemExit(f"mode {args.mode} needs --theta-star and --theta-hat")
        theta_star = read_matrix(args.theta_star)
        theta_hat = read_matrix(args.theta_hat)
        model = LowRankModel.from_matrix(theta_star, rank=args.rank)
        if args.mode == "cone":
            check = verify.cone_ratio(theta_hat - theta_star, model, reg,
                                      tolerance=vconfig.tolerance)
            payload = {
                "mode": "cone",
                "ratio": check.ratio,
                "complement_part": check.complement_part,
                "subspace_part": check.subspace_part,
                "passed": check.passed,
            }
        else:
            if not args.omega:
                raise SystemExit("mode bregman needs --omega")
            omega = read_observations(args.omega, m, n)
            problem = _solver_problem(config, omega)
            check = verify.sampled_divergence_bound(
                problem, theta_hat, theta_star, model, tolerance=vconfig.tolerance
            )
            payload = {
                "mode": "bregman",
                "lhs": check.lhs,
                "rhs": check.rhs,
                "passed": check.passed,
            }
        _emit_json(json.dumps(payload, indent=2), args.out)
        return 0 if payload["passed"] else 2

    if args.mode == "rsc":
        if not args.theta_star:
            raise SystemExit("mode rsc needs --theta-star")
        theta_star = read_matrix(args.theta_star)
        model = LowRankModel.from_matrix(theta_star, rank=args.rank)
        report = verify.restricted_curvature(
            theta_star, family, model, reg, omega_size, vconfig,
            seed=seed, spikiness_cap=cap,
        )
        payload = {
            "mode": "rsc",
            "min_ratio": report.min_ratio,
            "threshold": report.threshold,
            "violations": report.violations,
            "spikiness_cap": report.spikiness_cap,
            "trials": vconfig.trials,
        }
    elif args.mode == "lemma4":
        if not args.theta_star:
            raise SystemExit("mode lemma4 needs --theta-star (for the subspaces)")
        theta_star = read_matrix(args.theta_star)
        model = LowRankModel.from_matrix(theta_star, rank=args.rank)
        report = verify.sampling_identity_deviation(
            model, reg, vconfig, n, omega_size, seed=seed, spikiness_cap=cap,
            omega=full_indices(m, n) if args.full_omega else None,
        )
        payload = {
            "mode": "lemma4",
            "quantiles": report.quantiles,
            "fitted_constant": report.fitted_constant,
            "trials": len(report.deviations),
        }
    elif args.mode == "spectral":
        if not args.theta_star:
            raise SystemExit("mode spectral needs --theta-star")
        theta_star = read_matrix(args.theta_star)
        report = verify.spectral_noise_tail(
            family, theta_star, omega_size, trials=vconfig.trials, seed=seed
        )
        payload = {
            "mode": "spectral",
            "quantiles": report.quantiles,
            "rate": report.rate,
            "fitted_constant": report.fitted_constant,
            "noise_scale": report.noise_scale,
            "sub_gaussian": report.sub_gaussian,
        }
    else:
        raise SystemExit(f"unknown verify mode {args.mode}")
    _emit_json(json.dumps(payload, indent=2), args.out)
    return 0


def cmd_sweep(args):
    config = load_config(args.config)
    exp = dict(config.get("experiment", {}))
    exp.setdefault("family", config.get("family", {"kind": "gaussian"}))
    exp.setdefault("regularizer", config.get("regularizer", {"kind": "nuclear"}))
    seed = int(exp.pop("seed", 0))
    experiment = harness.ExperimentConfig.from_dict(exp)
    rows, failures = harness.run_sweep(experiment, seed=seed)
    harness.write_rows(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    if args.plot_dir:
        for path in harness.emit_plot_data(rows, args.plot_dir):
            print(f"wrote {path}")
    for n, s, trial, err in failures:
        print(f"FAILED cell n={n} size={s} trial={trial}: {err}", file=sys.stderr)
    return 1 if failures else 0


def cmd_plotdata(args):
    rows = harness.read_rows(args.results)
    for path in harness.emit_plot_data(rows, args.out_dir):
        print(f"wrote {path}")
    return 0


def _emit_json(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {out}")
    else:
        print(text)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="expmc",
        description="Matrix completion under exponential-family noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate ground truth and observations")
    p.add_argument("--config", required=True)
    p.add_argument("--out-theta", required=True)
    p.add_argument("--out-omega", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="fit the estimate from observations")
    p.add_argument("--config", required=True)
    p.add_argument("--omega", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("calibrate", help="emit the calibration report as JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--theta-star")
    p.add_argument("--omega")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("verify", help="run one empirical theory check")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", required=True,
                   choices=["cone", "bregman", "rsc", "lemma4", "spectral"])
    p.add_argument("--theta-star")
    p.add_argument("--theta-hat")
    p.add_argument("--omega")
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--full-omega", action="store_true",
                   help="lemma4 mode: use every cell once instead of sampling")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="run the error-decay experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plot-dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plotdata", help="aggregate sweep results into figure CSVs")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_plotdata)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
