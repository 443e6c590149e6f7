"""Command line entry point: ``pthmm <subcommand> ...``.

Errors are printed to stderr as one JSON object per line. Exit codes:
0 success, 2 configuration error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import data_io
from .data_io import CheckpointError, ConfigError, DataError
from .diagnostics import (ModeRegion, ess_basic, interval_table, relabel_by_ordering, running_weight,
                          split_rhat, suggest_threshold, swap_summary)
from .engine import InitializationError, PtEngine
from .hmm_core import simulate
from .priors import tempered_prior_demo
from .targets import BimodalToy, GaussianToy, HMMTarget
from .tempering import TuningError, tune_ladder

EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 2, 3, 4

log = logging.getLogger("pthmm")


class CliError(Exception):
    def __init__(self, code, kind, message, field=None):
        super().__init__(message)
        self.code, self.kind, self.field = code, kind, field


def _config(args) -> data_io.RunConfig:
    if not args.config:
        raise CliError(EXIT_CONFIG, "config", "--config is required", "config")
    cfg = data_io.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    return cfg


def _out_dir(args) -> Path:
    if not args.out:
        raise CliError(EXIT_CONFIG, "config", "--out is required", "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _target(cfg: data_io.RunConfig, data_path):
    if cfg.target == "gaussian_toy":
        return GaussianToy(**cfg.toy)
    if cfg.target == "bimodal_toy":
        return BimodalToy(**cfg.toy)
    path = data_path or cfg.data
    if not path:
        raise CliError(EXIT_CONFIG, "config", "no data path: pass --data or set io.data", "io.data")
    data, _ = data_io.load_sequences(path, cfg.spec)
    return HMMTarget(cfg.spec, data, cfg.prior)


def _seed_dir(out: Path, cfg, seed) -> Path:
    d = out if len(cfg.seeds) == 1 else out / f"seed_{seed}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_simulate(args):
    cfg = _config(args)
    if cfg.spec is None or cfg.truth is None:
        raise CliError(EXIT_CONFIG, "config", "simulate needs [model] and [truth] sections", "truth")
    if not cfg.sim_lengths:
        raise CliError(EXIT_CONFIG, "config", "simulate needs [simulate] lengths", "simulate.lengths")
    out = _out_dir(args)
    rng = np.random.default_rng(cfg.seeds[0])
    covs = None
    if cfg.spec.covariate_levels:
        covs = [rng.integers(0, cfg.spec.covariate_levels + 1, size=T) for T in cfg.sim_lengths]
    data = simulate(cfg.spec, cfg.truth, cfg.sim_lengths, covariates=covs, seed=rng)
    data_io.write_sequences(data, out / "data.csv", cfg.spec.stream_names, with_covariate=bool(cfg.spec.covariate_levels))
    truth = dict(zip(cfg.spec.coordinate_names, map(float, cfg.truth.values)))
    (out / "truth.json").write_text(json.dumps(truth, indent=1) + "\n")
    print(json.dumps(truth))


def cmd_tune(args):
    cfg = _config(args)
    out = _out_dir(args)
    target = _target(cfg, args.data)
    if "floor" not in cfg.tune:
        raise CliError(EXIT_CONFIG, "config", "tune needs pt.floor", "pt.floor")
    kw = {k: v for k, v in cfg.tune.items() if k != "floor"}
    if "band" in kw:
        kw["band"] = tuple(kw["band"])
    ladder = tune_ladder(target, float(cfg.tune["floor"]), seed=cfg.seeds[0], jobs=args.jobs,
                         swap_scheme=cfg.pt.get("swap_scheme", "SEO"), **kw)
    data_io.write_ladder(ladder, out / "ladder.json")
    print(json.dumps({"betas": [float(b) for b in ladder.betas]}))


def cmd_sample(args):
    cfg = _config(args)
    out = _out_dir(args)
    target = _target(cfg, args.data)
    if args.resume and len(cfg.seeds) != 1:
        raise CliError(EXIT_CONFIG, "config", "--resume needs a single seed", "run.seeds")
    for seed in cfg.seeds:
        pt = cfg.pt_config(seed)
        d = _seed_dir(out, cfg, seed)
        eng = data_io.resume(args.resume, target, pt) if args.resume else PtEngine(target, pt)
        every = cfg.checkpoint_every
        while not eng.done:
            eng.run(every or None, jobs=args.jobs)
            if every:
                data_io.checkpoint(eng, d / "checkpoint.npz")
        res = eng.result()
        data_io.write_samples(res.samples, d / "samples.csv")
        data_io.write_trajectory(res.trajectory, d / "trajectory.npz")
        data_io.write_ladder(res.ladder, d / "ladder.json")
        print(json.dumps({"seed": seed, "draws": len(res.samples), "round_trips": res.total_round_trips,
                          "swap_rates": [None if math.isnan(r) else float(r) for r in res.ladder.swap_rates()]}))


def _parse_region(text):
    label, coord, lo, hi = text.rsplit(":", 3)
    return label, ModeRegion(coord, float(lo), float(hi))


def _write_rows(path, rows):
    with Path(path).open("w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _floats(a):
    return [None if math.isnan(v) else float(v) for v in np.asarray(a, float)]


def cmd_diagnose(args):
    if not args.samples:
        raise CliError(EXIT_CONFIG, "config", "--samples is required", "samples")
    out = _out_dir(args)
    stores = [data_io.read_samples(p) for p in args.samples]
    names = stores[0].names
    for s, p in zip(stores[1:], args.samples[1:]):
        if s.names != names:
            raise CliError(EXIT_DATA, "data", f"{p}: columns differ from {args.samples[0]}", "samples")
    try:
        regions = dict(_parse_region(r) for r in args.region)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "config", f"bad --region ({exc}); use label:coordinate:lower:upper", "region")
    report = {"relabeled": False, "constraint": None}
    if args.constraint:
        constraint = args.constraint.split(",")
        try:
            stores = [relabel_by_ordering(s, constraint) for s in stores]
        except KeyError as exc:
            raise CliError(EXIT_CONFIG, "config", str(exc.args[0]), "constraint")
        report.update(relabeled=True, constraint=constraint)
        for i, s in enumerate(stores):
            data_io.write_samples(s, out / f"samples_relabeled_{i}.csv")
    else:
        report["note"] = "no ordering constraint given; draws were not relabeled"
    b = args.burn_in
    n = min(len(s) for s in stores)
    if n - b < 8:
        raise CliError(EXIT_DATA, "data", f"only {n - b} draws after burn-in; need at least 8", "samples")
    chains = np.stack([s.values[b:n] for s in stores])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report["rhat"] = dict(zip(names, _floats(split_rhat(chains))))
        report["ess"] = dict(zip(names, _floats(ess_basic(chains))))
    if regions:
        weights = {}
        rows = []
        for label, reg in regions.items():
            if reg.coordinate not in names:
                raise CliError(EXIT_CONFIG, "config", f"unknown region coordinate {reg.coordinate!r}", "region")
            per_chain = [running_weight(s, reg, b) for s in stores]
            weights[label] = [float(w[-1]) for w in per_chain]
            for c, w in enumerate(per_chain):
                rows += [{"chain": c, "mode": label, "k": b + k, "weight": float(v)} for k, v in enumerate(w)]
        report["mode_weights"] = weights
        _write_rows(out / "running_weights.csv", rows)
    else:
        hints = {}
        for name in names:
            t = suggest_threshold(chains[..., names.index(name)].ravel())
            if t is not None:
                hints[name] = t
        report["threshold_suggestions"] = hints
    table = []
    for c, s in enumerate(stores):
        table += [dict(chain=c, **r) for r in interval_table(s, regions or None, burn_in=b)]
    _write_rows(out / "summary.csv", table)
    if args.trajectory:
        trajs = [data_io.read_trajectory(p) for p in args.trajectory]
        report["swaps"] = []
        for c, t in enumerate(trajs):
            sm = swap_summary(t)
            report["swaps"].append({"rates": _floats(sm["rates"]), "attempts": sm["attempts"].tolist(),
                                    "round_trips": sm["total_round_trips"]})
            with (out / f"lineage_traces_{c}.csv").open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["step", "lineage", "position"])
                w.writerows(sm["traces"].tolist())
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps({k: report[k] for k in ("relabeled",) if k in report} | {"out": str(out)}))


def cmd_demo_tempered_prior(args):
    out = _out_dir(args)
    try:
        betas = [float(v) for v in args.betas.split(",")]
    except ValueError:
        raise CliError(EXIT_CONFIG, "config", "--betas must be a comma separated list of numbers", "betas")
    seed = 0 if args.seed is None else args.seed
    rows = []
    for i, beta in enumerate(betas):
        try:
            r = tempered_prior_demo(beta, n_draws=args.draws, seed=[seed, i])
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, "config", str(exc), "betas")
        rows.append({k: r[k] for k in ("beta", "mean_max", "se_max", "mean_diagonal")})
    _write_rows(out / "tempered_prior.csv", rows)
    for r in rows:
        print(json.dumps(r))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pthmm", description="Parallel tempering for Bayesian hidden Markov models.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=False):
        sp.add_argument("--config")
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int, help="overrides the seed(s) in the config")
        sp.add_argument("--jobs", type=int, default=1, help="threads for replica sweeps")
        if data:
            sp.add_argument("--data", help="observation CSV; overrides io.data")

    s = sub.add_parser("simulate", help="simulate data from the [truth] parameters")
    common(s)
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("tune", help="grow an inverse-temperature ladder")
    common(s, data=True)
    s.set_defaults(func=cmd_tune)
    s = sub.add_parser("sample", help="run parallel tempering")
    common(s, data=True)
    s.add_argument("--resume", help="checkpoint file to continue from")
    s.set_defaults(func=cmd_sample)
    s = sub.add_parser("diagnose", help="relabel, mode weights, R-hat/ESS, swap summaries")
    s.add_argument("--samples", nargs="+", help="one samples.csv per chain")
    s.add_argument("--trajectory", nargs="*", default=[])
    s.add_argument("--constraint", help="comma separated coordinates that must increase, one per state")
    s.add_argument("--region", action="append", default=[], help="label:coordinate:lower:upper, repeatable")
    s.add_argument("--burn-in", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_diagnose)
    s = sub.add_parser("demo-tempered-prior", help="transition-row summaries under a tempered logit prior")
    s.add_argument("--betas", default="1,0.5,0.25")
    s.add_argument("--draws", type=int, default=100_000)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_demo_tempered_prior)
    return p


def _fail(code, kind, message, field=None):
    err = {"error": kind, "message": message}
    if field:
        err["field"] = field
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        return _fail(exc.code, exc.kind, str(exc), exc.field)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), exc.field)
    except DataError as exc:
        return _fail(EXIT_DATA, "data", str(exc))
    except (CheckpointError, InitializationError, TuningError) as exc:
        return _fail(EXIT_RUNTIME, "runtime", str(exc))
    except ValueError as exc:
        return _fail(EXIT_DATA, "data", str(exc))
    except Exception as exc:  # noqa: BLE001 - last-resort single-line report
        return _fail(EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
