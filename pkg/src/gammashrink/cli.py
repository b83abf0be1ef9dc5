"""Command-line surface: data grouping, fitting, simulation, curve export.

Subcommands
    group            aggregate individual positive durations into (y, delta, eta) rows
    fit              run the Gibbs sampler on a CSV of observations
    simulate         run the replication harness for one scenario
    prior-curve      export the marginal prior density over a lambda grid
    posterior-curve  export posterior mean/variance/shrinkage curves over a y grid

Every output carries a run manifest (JSON side-car for CSV outputs, embedded
for JSON outputs) recording the fully resolved configuration and seed, so any
output can be reproduced bit-for-bit from its manifest.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

import argparse
import csv
import json
import math
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .mcmc import ChainError, McmcConfig, run_chain, summarize
from .model_core import GL, IRB, SB, FixedValue, GammaPrior, Observation, PriorSpec
from .quad_oracle import (
    QuadConfig,
    QuadratureError,
    marginal_prior_density,
    posterior_kappa_mean,
    posterior_lambda_moments,
)
from .rand_dist import RngHandle
from .sim_harness import METHODS, ScenarioSpec, run_replications

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class DataError(Exception):
    pass


def _utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _manifest(command, config, seed):
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "started": _utc_now(),
        "finished": None,
    }


def _write_manifest(manifest, out_path):
    manifest["finished"] = _utc_now()
    path = out_path + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _env_int(name, default):
    raw = os.environ.get(name)
    return default if raw is None else int(raw)


def _parse_treatment(text):
    """Parse 'fixed:V' or 'gamma:A,B' into a global-parameter treatment."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "fixed":
            return FixedValue(float(rest))
        if kind == "gamma":
            a, b = rest.split(",")
            return GammaPrior(float(a), float(b))
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"cannot parse treatment {text!r}: {exc}") from exc
    raise argparse.ArgumentTypeError(
        f"treatment must be 'fixed:V' or 'gamma:A,B', got {text!r}"
    )


def _parse_grid(text):
    """Parse 'min:max:points' into a log-spaced grid."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must be min:max:points, got {text!r}") from exc
    if not (0 < lo < hi) or n < 1:
        raise argparse.ArgumentTypeError(f"invalid grid bounds {text!r}")
    return np.geomspace(lo, hi, n)


def _add_mcmc_flags(sub):
    sub.add_argument("--prior", choices=[SB, IRB, GL], default=SB)
    sub.add_argument("--a", type=float, default=2.0)
    sub.add_argument("--b", type=float, default=0.5)
    sub.add_argument("--beta", type=_parse_treatment, default="gamma:0.1,0.1")
    sub.add_argument("--tau", type=_parse_treatment, default="gamma:0.1,0.1")
    sub.add_argument("--burnin", type=int, default=_env_int("GAMMASHRINK_BURNIN", 2000))
    sub.add_argument("--samples", type=int, default=_env_int("GAMMASHRINK_SAMPLES", 3000))
    sub.add_argument("--thin", type=int, default=_env_int("GAMMASHRINK_THIN", 1))
    sub.add_argument("--seed", type=int, default=_env_int("GAMMASHRINK_SEED", 0))


def _resolve_treatment(value):
    if isinstance(value, str):
        value = _parse_treatment(value)
    return value


def _treatment_repr(t):
    if isinstance(t, FixedValue):
        return f"fixed:{t.value:g}"
    return f"gamma:{t.shape:g},{t.rate:g}"


def _read_csv_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise DataError(f"{path}: empty file (header row required)")
            fields = [f.strip() for f in reader.fieldnames]
            rows = [dict(zip(fields, (v.strip() for v in row.values()))) for row in reader]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return fields, rows


def cmd_group(args):
    """Aggregate individual records into per-group gamma observations.

    Each group's sample mean of n positive durations is Ga(n, n/lambda)
    distributed, so the output rows carry y = mean, delta = count, eta = 1.
    """
    manifest = _manifest("group", {"input": args.input, "output": args.output,
                                   "by": args.by, "value_column": args.value_column}, None)
    fields, rows = _read_csv_rows(args.input)
    keys = [k.strip() for k in args.by.split(",")]
    for col in keys + [args.value_column]:
        if col not in fields:
            raise DataError(f"{args.input}: missing column {col!r} (has {fields})")
    if not rows:
        raise DataError(f"{args.input}: no data rows")
    groups = {}
    for line_no, row in enumerate(rows, start=2):
        raw = row[args.value_column]
        try:
            value = float(raw)
        except ValueError as exc:
            raise DataError(f"{args.input}:{line_no}: non-numeric value {raw!r}") from exc
        if not (value > 0 and math.isfinite(value)):
            raise DataError(f"{args.input}:{line_no}: non-positive value {raw!r}")
        key = "/".join(row[k] for k in keys)
        groups.setdefault(key, []).append(value)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group_id", "y", "delta", "eta"])
        for key in sorted(groups):
            values = groups[key]
            writer.writerow([key, repr(float(np.mean(values))), len(values), 1.0])
    _write_manifest(manifest, args.output)
    print(f"wrote {len(groups)} groups to {args.output}")
    return EXIT_OK


def _read_observations(path):
    fields, rows = _read_csv_rows(path)
    for col in ("y", "delta"):
        if col not in fields:
            raise DataError(f"{path}: missing column {col!r} (has {fields})")
    if not rows:
        raise DataError(f"{path}: no data rows")
    obs = []
    for line_no, row in enumerate(rows, start=2):
        try:
            y = float(row["y"])
            delta = float(row["delta"])
            eta = float(row.get("eta", 1.0) or 1.0)
            obs.append(Observation(y=y, delta=delta, eta=eta))
        except ValueError as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
    return obs


def _prior_from_args(args):
    return PriorSpec(
        family=args.prior,
        a=args.a,
        b=args.b,
        beta=_resolve_treatment(args.beta),
        tau=_resolve_treatment(args.tau),
    )


def cmd_fit(args):
    """Fit the model by MCMC and write JSON summaries (optionally draws)."""
    prior = _prior_from_args(args)
    config = {
        "input": args.input, "output": args.output, "prior": args.prior,
        "a": args.a, "b": args.b,
        "beta": _treatment_repr(prior.beta), "tau": _treatment_repr(prior.tau),
        "burnin": args.burnin, "samples": args.samples, "thin": args.thin,
        "level": args.level, "chains": args.chains, "draws_out": args.draws_out,
    }
    manifest = _manifest("fit", config, args.seed)
    observations = _read_observations(args.input)
    base = McmcConfig(burnin=args.burnin, samples=args.samples, thin=args.thin, seed=args.seed)
    outputs = []
    for c in range(args.chains):
        seed_c = args.seed if args.chains == 1 else int(
            np.random.SeedSequence((args.seed, c)).generate_state(1, np.uint64)[0]
        )
        cfg_c = McmcConfig(burnin=base.burnin, samples=base.samples, thin=base.thin,
                           seed=seed_c, miller_tol=base.miller_tol,
                           miller_max_iter=base.miller_max_iter)
        outputs.append(run_chain(observations, prior, cfg_c))
    lam = np.concatenate([o.lam for o in outputs], axis=0)
    kappa = np.concatenate([o.kappa for o in outputs], axis=0)
    beta_d = np.concatenate([o.beta for o in outputs])
    tau_d = np.concatenate([o.tau for o in outputs])
    alpha = (1.0 - args.level) / 2.0
    lo, hi = np.quantile(lam, [alpha, 1.0 - alpha], axis=0)

    units = []
    for i in range(lam.shape[1]):
        units.append({
            "mean": float(lam[:, i].mean()),
            "variance": float(lam[:, i].var(ddof=1)),
            "lower": float(lo[i]),
            "upper": float(hi[i]),
            "kappa_mean": float(kappa[:, i].mean()),
        })
    result = {
        "manifest": manifest,
        "units": units,
        "global": {
            "beta": {"mean": float(beta_d.mean()),
                     "lower": float(np.quantile(beta_d, alpha)),
                     "upper": float(np.quantile(beta_d, 1 - alpha))},
            "tau": {"mean": float(tau_d.mean()),
                    "lower": float(np.quantile(tau_d, alpha)),
                    "upper": float(np.quantile(tau_d, 1 - alpha))},
        },
        "diagnostics": {
            "acceptance_rate": [float(a) for a in outputs[0].acceptance_rate],
            "warnings": sum((o.warnings for o in outputs), []),
        },
    }
    manifest["finished"] = _utc_now()
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.draws_out:
        with open(args.draws_out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["draw", "beta", "tau"] + [f"lambda_{i}" for i in range(lam.shape[1])])
            for d in range(lam.shape[0]):
                writer.writerow([d, repr(float(beta_d[d])), repr(float(tau_d[d]))]
                                + [repr(float(v)) for v in lam[d]])
        _write_manifest(dict(manifest), args.draws_out)
    print(f"wrote summaries for {lam.shape[1]} units to {args.output}")
    return EXIT_OK


def cmd_simulate(args):
    """Run the replication harness and write aggregate plus per-rep CSVs."""
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {m!r}")
    spec = ScenarioSpec(id=args.scenario, n=args.n, mu=args.mu, delta=args.delta,
                        seed=args.seed)
    config = {
        "scenario": args.scenario, "n": args.n, "mu": args.mu, "delta": args.delta,
        "reps": args.reps, "methods": methods, "burnin": args.burnin,
        "samples": args.samples, "thin": args.thin, "level": args.level,
        "workers": args.workers, "out_prefix": args.out_prefix,
    }
    manifest = _manifest("simulate", config, args.seed)
    cfg = McmcConfig(burnin=args.burnin, samples=args.samples, thin=args.thin, seed=args.seed)
    table = run_replications(spec, methods, args.reps, cfg, level=args.level,
                             workers=args.workers)

    agg_path = args.out_prefix + "_metrics.csv"
    with open(agg_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "reps", "mape", "mape_se", "mape_nonnull",
                         "mape_nonnull_se", "cp", "cp_se", "al", "al_se"])
        for method in methods:
            mm = table.methods.get(method)
            if mm is None:
                continue
            writer.writerow([method, mm.reps] + [repr(v) for v in
                            (mm.mape, mm.mape_se, mm.mape_nonnull, mm.mape_nonnull_se,
                             mm.cp, mm.cp_se, mm.al, mm.al_se)])
    rep_path = args.out_prefix + "_replications.csv"
    with open(rep_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "method", "mape", "mape_nonnull", "cp", "al"])
        for rep, method, m, mn, cp, al in table.per_rep:
            writer.writerow([rep, method, repr(m), repr(mn), repr(cp), repr(al)])
    _write_manifest(manifest, agg_path)
    if table.failures:
        for rep, method, msg in table.failures:
            print(f"FAILED replication {rep} method {method}: {msg}", file=sys.stderr)
        print(f"{len(table.failures)} failed replication fits", file=sys.stderr)
    print(f"wrote {agg_path} and {rep_path}")
    return EXIT_OK


def cmd_prior_curve(args):
    """Evaluate the marginal prior density of lambda over a log-spaced grid."""
    prior = PriorSpec(family=args.prior, a=args.a, b=args.b,
                      beta=FixedValue(1.0), tau=FixedValue(1.0))
    config = {"prior": args.prior, "a": args.a, "b": args.b, "grid": args.grid_text,
              "output": args.output}
    manifest = _manifest("prior-curve", config, None)
    cfg = QuadConfig()
    n_failed = 0
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "density", "status"])
        for lam in args.grid:
            try:
                dens = marginal_prior_density(float(lam), prior, cfg)
                writer.writerow([repr(float(lam)), repr(dens), "ok"])
            except QuadratureError as exc:
                writer.writerow([repr(float(lam)), "", f"failed:{exc.estimate:.2e}"])
                n_failed += 1
    _write_manifest(manifest, args.output)
    print(f"wrote {len(args.grid)} rows to {args.output}" +
          (f" ({n_failed} failed)" if n_failed else ""))
    return EXIT_OK


def cmd_posterior_curve(args):
    """Posterior mean, variance and mean shrinkage factor over a y grid."""
    prior = PriorSpec(family=args.prior, a=args.a, b=args.b,
                      beta=FixedValue(args.beta_value), tau=FixedValue(1.0))
    config = {"prior": args.prior, "a": args.a, "b": args.b, "delta": args.delta,
              "beta": args.beta_value, "grid": args.grid_text, "output": args.output}
    manifest = _manifest("posterior-curve", config, None)
    cfg = QuadConfig()
    n_failed = 0
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "post_mean", "post_var", "kappa_mean", "status"])
        for y in args.grid:
            try:
                mean, var = posterior_lambda_moments(float(y), args.delta, prior,
                                                     args.beta_value, cfg)
                if prior.family == GL:
                    kappa = 1.0 / (args.delta + 1.0)
                else:
                    kappa = posterior_kappa_mean(
                        float(y) / args.beta_value, args.delta, prior, cfg
                    )
                writer.writerow([repr(float(y)), repr(mean), repr(var), repr(kappa), "ok"])
            except QuadratureError as exc:
                writer.writerow([repr(float(y)), "", "", "", f"failed:{exc.estimate:.2e}"])
                n_failed += 1
    _write_manifest(manifest, args.output)
    print(f"wrote {len(args.grid)} rows to {args.output}" +
          (f" ({n_failed} failed)" if n_failed else ""))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gammashrink",
        description="Sparse Bayesian shrinkage estimation for gamma-distributed observations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("group", help="aggregate individual durations into observations")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--by", default="group_id", help="comma-separated grouping key columns")
    p.add_argument("--value-column", default="value")
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("fit", help="fit the model to a CSV of observations")
    p.add_argument("input")
    p.add_argument("output")
    _add_mcmc_flags(p)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--draws-out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run the replication harness")
    p.add_argument("--scenario", type=int, required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--mu", type=float, default=5.0)
    p.add_argument("--delta", type=float, default=5.0)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--methods", default="sb,gl,ml")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--burnin", type=int, default=_env_int("GAMMASHRINK_BURNIN", 1000))
    p.add_argument("--samples", type=int, default=_env_int("GAMMASHRINK_SAMPLES", 2000))
    p.add_argument("--thin", type=int, default=_env_int("GAMMASHRINK_THIN", 1))
    p.add_argument("--seed", type=int, default=_env_int("GAMMASHRINK_SEED", 0))
    p.add_argument("--out-prefix", default="simulation")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("prior-curve", help="export the marginal prior density")
    p.add_argument("output")
    p.add_argument("--prior", choices=[SB, IRB, GL], default=SB)
    p.add_argument("--a", type=float, default=2.0)
    p.add_argument("--b", type=float, default=0.5)
    p.add_argument("--grid", default="0.01:100:200", help="min:max:points, log-spaced")
    p.set_defaults(func=cmd_prior_curve)

    p = sub.add_parser("posterior-curve", help="export posterior curves over y")
    p.add_argument("output")
    p.add_argument("--prior", choices=[SB, IRB, GL], default=SB)
    p.add_argument("--a", type=float, default=2.0)
    p.add_argument("--b", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=5.0)
    p.add_argument("--beta", dest="beta_value", type=float, default=1.0)
    p.add_argument("--grid", default="0.018:54.6:100", help="min:max:points, log-spaced")
    p.set_defaults(func=cmd_posterior_curve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if hasattr(args, "grid"):
            args.grid_text = args.grid
            args.grid = _parse_grid(args.grid)
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except argparse.ArgumentTypeError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ChainError, QuadratureError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
