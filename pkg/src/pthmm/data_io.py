"""File formats: observation CSVs, run configs, sample CSVs, trajectories and checkpoints.

Run configs are INI files whose values are JSON literals, e.g.::

    [model]
    n_states = 2
    streams = ["poisson", "gamma"]

    [pt]
    betas = [1.0, 0.5, 0.25]
    n_iters = 20000
    burn_in = 5000

    [run]
    seeds = [1, 2, 3]
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import PtConfig, PtEngine
from .hmm_core import ModelSpec, ObservationSet, ParamVector, StreamFamily
from .priors import GAMMA_MEAN_PRIOR, GAMMA_SD_PRIOR, POISSON_RATE_PRIOR, PriorConfig
from .store import ReplicaTrajectory, SampleStore
from .tempering import TemperatureLadder

CHECKPOINT_FORMAT = "pthmm-checkpoint/1"
COVARIATE_COLUMN = "covariate"


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class DataError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


# observations

def _fmt(v: float) -> str:
    if math.isnan(v):
        return ""
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def load_sequences(path, spec: ModelSpec | None = None) -> tuple[ObservationSet, list[str]]:
    """Read ``sequence_id, t, <streams...>[, covariate]`` rows into an ObservationSet.

    Rows of one sequence must be contiguous with ``t = 1, 2, ...``. Empty
    stream cells are missing values. Errors cite the file line (header is
    line 1). Returns the observations and the stream column names.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[:2] != ["sequence_id", "t"]:
            raise DataError(f"{path} line 1: header must start with sequence_id,t and name at least one stream")
        has_cov = header[-1] == COVARIATE_COLUMN
        streams = header[2:-1] if has_cov else header[2:]
        if not streams:
            raise DataError(f"{path} line 1: no stream columns")
        if spec is not None and list(streams) != list(spec.stream_names):
            raise DataError(f"{path} line 1: stream columns {streams} do not match model streams {list(spec.stream_names)}")
        seqs, covs, seen = [], [], set()
        current, rows, zs = None, [], []
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path} line {line}: expected {len(header)} fields, got {len(rec)}")
            sid = rec[0]
            if sid != current:
                if sid in seen:
                    raise DataError(f"{path} line {line}: sequence {sid!r} is not contiguous")
                if current is not None:
                    seqs.append(np.array(rows, float))
                    covs.append(np.array(zs, np.int64))
                seen.add(sid)
                current, rows, zs = sid, [], []
            try:
                t = int(rec[1])
            except ValueError:
                raise DataError(f"{path} line {line}: t must be an integer, got {rec[1]!r}") from None
            if t != len(rows) + 1:
                raise DataError(f"{path} line {line}: expected t={len(rows) + 1} for sequence {sid!r}, got {t}")
            try:
                rows.append([float(v) if v.strip() else math.nan for v in rec[2:2 + len(streams)]])
            except ValueError:
                raise DataError(f"{path} line {line}: non-numeric stream value") from None
            z = 0
            if has_cov:
                try:
                    z = int(rec[-1])
                except ValueError:
                    raise DataError(f"{path} line {line}: covariate must be an integer level, got {rec[-1]!r}") from None
                limit = spec.covariate_levels if spec is not None else math.inf
                if not 0 <= z <= limit:
                    raise DataError(f"{path} line {line}: covariate level {z} out of range")
            zs.append(z)
            if spec is not None:
                for p, fam in enumerate(spec.streams):
                    v = rows[-1][p]
                    if math.isnan(v):
                        continue
                    if fam is StreamFamily.POISSON and (v < 0 or not v.is_integer()):
                        raise DataError(f"{path} line {line}: stream {streams[p]!r} needs non-negative integer counts")
                    if fam is StreamFamily.GAMMA and v <= 0:
                        raise DataError(f"{path} line {line}: stream {streams[p]!r} needs positive values")
        if current is None:
            raise DataError(f"{path}: no data rows")
        seqs.append(np.array(rows, float))
        covs.append(np.array(zs, np.int64))
    return ObservationSet(seqs, covs), list(streams)


def write_sequences(data: ObservationSet, path, stream_names, with_covariate: bool | None = None) -> None:
    if with_covariate is None:
        with_covariate = any(np.any(z != 0) for z in data.covariates)
    header = ["sequence_id", "t", *stream_names] + ([COVARIATE_COLUMN] if with_covariate else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s, (y, z) in enumerate(zip(data.sequences, data.covariates), start=1):
            for t in range(len(y)):
                row = [s, t + 1, *(_fmt(float(v)) for v in y[t])]
                if with_covariate:
                    row.append(int(z[t]))
                w.writerow(row)


# samples

def write_samples(store: SampleStore, path) -> None:
    """One row per draw; floats use the shortest repr that parses back exactly."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", *store.names])
        for it, row in zip(store.iterations, store.values):
            w.writerow([int(it), *(repr(float(v)) for v in row)])


def read_samples(path, names=None) -> SampleStore:
    """Inverse of :func:`write_samples`. ``names`` checks the expected columns."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "iteration":
            raise DataError(f"{path}: first column must be 'iteration'")
        cols = header[1:]
        if names is not None and list(names) != cols:
            missing = [n for n in names if n not in cols]
            extra = [c for c in cols if c not in names]
            raise DataError(f"{path}: column mismatch; missing {missing}, extra {extra}"
                            + ("" if missing or extra else ", order differs"))
        its, vals = [], []
        for line, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataError(f"{path} line {line}: expected {len(header)} fields, got {len(rec)}")
            try:
                its.append(int(rec[0]))
                vals.append([float(v) for v in rec[1:]])
            except ValueError:
                raise DataError(f"{path} line {line}: unparsable value") from None
    return SampleStore(cols, np.array(its, np.int64), np.array(vals, float).reshape(len(its), len(cols)))


# binary containers with fixed timestamps, so rewriting gives identical bytes

def _write_npz(path, arrays: dict) -> None:
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for key in sorted(arrays):
            info = zipfile.ZipInfo(f"{key}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            with zf.open(info, "w") as fh:
                np.lib.format.write_array(fh, np.asarray(arrays[key]), allow_pickle=False)


def _read_npz(path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        return {k: z[k] for k in z.files}


def write_trajectory(traj: ReplicaTrajectory, path) -> None:
    _write_npz(path, {
        "positions": traj.positions,
        "attempt_iteration": traj.attempt_iteration,
        "attempt_pair": traj.attempt_pair,
        "attempt_accepted": traj.attempt_accepted,
        "levels": np.array(traj.n_levels),
    })


def read_trajectory(path) -> ReplicaTrajectory:
    try:
        a = _read_npz(path)
        return ReplicaTrajectory(a["positions"], a["attempt_iteration"], a["attempt_pair"],
                                 a["attempt_accepted"], int(a["levels"]))
    except (OSError, KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise DataError(f"{path}: not a trajectory file ({exc})") from None


def write_ladder(ladder: TemperatureLadder, path) -> None:
    doc = {
        "betas": [float(b) for b in ladder.betas],
        "swap_attempts": ladder.swap_attempts.tolist(),
        "swap_accepts": ladder.swap_accepts.tolist(),
        "pilot_log": ladder.pilot_log,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_ladder(path) -> TemperatureLadder:
    doc = json.loads(Path(path).read_text())
    return TemperatureLadder(doc["betas"], doc.get("swap_attempts"), doc.get("swap_accepts"), doc.get("pilot_log", []))


def checkpoint(engine: PtEngine, path) -> None:
    """Snapshot an engine between iterations; :func:`resume` continues it bit-identically."""
    header, arrays = engine.state_dict()
    header["format"] = CHECKPOINT_FORMAT
    arrays = dict(arrays, __header__=np.array(json.dumps(header)))
    _write_npz(path, arrays)


def resume(path, target, cfg: PtConfig) -> PtEngine:
    try:
        arrays = _read_npz(path)
        header = json.loads(str(arrays.pop("__header__")))
    except (OSError, KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: checkpoint format {header.get('format')!r}, expected {CHECKPOINT_FORMAT!r}")
    try:
        return PtEngine.from_state(target, cfg, header, arrays)
    except KeyError as exc:
        raise CheckpointError(f"{path}: checkpoint is missing {exc}") from None
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from None


# run configuration

PT_KEYS = {"n_iters", "burn_in", "n_within", "swap_scheme", "thin", "adapt", "adapt_window", "progress_every"}
TUNE_KEYS = {"floor", "pilot_iters", "band", "max_adjustments"}
TARGETS = ("hmm", "gaussian_toy", "bimodal_toy")


@dataclass
class RunConfig:
    target: str = "hmm"
    spec: ModelSpec | None = None
    prior: PriorConfig | None = None
    pt: dict = field(default_factory=dict)
    betas: list | None = None
    tune: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    data: str | None = None
    checkpoint_every: int = 0
    truth: ParamVector | None = None
    sim_lengths: list | None = None
    toy: dict = field(default_factory=dict)

    def pt_config(self, seed: int, betas=None) -> PtConfig:
        betas = betas if betas is not None else self.betas
        if betas is None:
            raise ConfigError("pt.betas", "no ladder given (run `tune` first or set pt.betas)")
        if "n_iters" not in self.pt:
            raise ConfigError("pt.n_iters", "required")
        try:
            return PtConfig(betas=betas, seed=seed, **self.pt)
        except ValueError as exc:
            raise ConfigError("pt", str(exc)) from None


def _section(cp, name) -> dict:
    if not cp.has_section(name):
        return {}
    out = {}
    for key, raw in cp.items(name):
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            raise ConfigError(f"{name}.{key}", f"value is not a JSON literal: {raw!r}") from None
    return out


def _need(sec, name, key):
    if key not in sec:
        raise ConfigError(f"{name}.{key}", "required")
    return sec[key]


def parse_config(text: str, base_dir=".") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    model, prior, pt = _section(cp, "model"), _section(cp, "prior"), _section(cp, "pt")
    run, io, truth, sim = _section(cp, "run"), _section(cp, "io"), _section(cp, "truth"), _section(cp, "simulate")
    cfg = RunConfig()
    cfg.target = model.pop("target", "hmm")
    if cfg.target not in TARGETS:
        raise ConfigError("model.target", f"must be one of {TARGETS}")
    if cfg.target == "hmm":
        try:
            streams = [StreamFamily(s) for s in _need(model, "model", "streams")]
        except ValueError:
            raise ConfigError("model.streams", "each stream must be 'poisson' or 'gamma'") from None
        n_states = _need(model, "model", "n_states")
        try:
            cfg.spec = ModelSpec(int(n_states), tuple(streams),
                                 int(model.get("covariate_levels", 0)), tuple(model.get("stream_names", ())))
        except (TypeError, ValueError) as exc:
            raise ConfigError("model", str(exc)) from None
        try:
            cfg.prior = PriorConfig.default(
                cfg.spec,
                poisson_rate=tuple(prior.get("poisson_rate", POISSON_RATE_PRIOR)),
                gamma_mean=tuple(prior.get("gamma_mean", GAMMA_MEAN_PRIOR)),
                gamma_sd=tuple(prior.get("gamma_sd", GAMMA_SD_PRIOR)),
                delta_concentration=prior.get("delta_concentration"),
            )
            cfg.prior.check(cfg.spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError("prior", str(exc)) from None
    else:
        cfg.toy = {k: float(v) for k, v in model.items()}
    unknown = set(pt) - PT_KEYS - TUNE_KEYS - {"betas"}
    if unknown:
        raise ConfigError(f"pt.{sorted(unknown)[0]}", "unknown key")
    cfg.pt = {k: v for k, v in pt.items() if k in PT_KEYS}
    cfg.tune = {k: v for k, v in pt.items() if k in TUNE_KEYS}
    if "betas" in pt:
        try:
            cfg.betas = list(TemperatureLadder(pt["betas"]).betas)
        except (TypeError, ValueError) as exc:
            raise ConfigError("pt.betas", str(exc)) from None
    if "seeds" in run:
        cfg.seeds = [int(s) for s in run["seeds"]]
    elif "seed" in run:
        cfg.seeds = [int(run["seed"])]
    if "data" in io:
        cfg.data = str(Path(base_dir) / io["data"])
    cfg.checkpoint_every = int(io.get("checkpoint_every", 0))
    if truth:
        if cfg.spec is None:
            raise ConfigError("truth", "only meaningful for the hmm target")
        cfg.truth = _parse_truth(cfg.spec, truth)
    if sim:
        cfg.sim_lengths = [int(v) for v in _need(sim, "simulate", "lengths")]
    return cfg


def _parse_truth(spec: ModelSpec, truth: dict) -> ParamVector:
    emission = [_need(truth, "truth", name) for name in spec.stream_names]
    delta, alpha0 = _need(truth, "truth", "delta"), _need(truth, "truth", "alpha0")
    try:
        theta = ParamVector.from_parts(
            spec, delta, np.asarray(alpha0, float), [np.asarray(e, float) for e in emission],
            zeta=truth.get("zeta"), alpha1=truth.get("alpha1"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("truth", str(exc)) from None
    if not theta.is_valid():
        raise ConfigError("truth", "parameters violate their constraints")
    return theta


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"{path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)
