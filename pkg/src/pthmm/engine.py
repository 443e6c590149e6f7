"""Parallel tempering over power posteriors.

Replicas never copy states on a swap: each lineage keeps its own state and
random stream, and an accepted swap exchanges the ladder positions of two
lineages. Step sizes belong to ladder positions, since the right scale
depends on the inverse temperature and not on which lineage is there.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernels import ProposalScales, ReplicaState, adapt_scales, cwmh_sweep
from .store import ReplicaTrajectory, SampleStore
from .tempering import TemperatureLadder, swap_log_ratio

log = logging.getLogger(__name__)

SEO, DEO = "SEO", "DEO"


class InitializationError(ValueError):
    pass


@dataclass
class PtConfig:
    """Run settings. ``betas`` may be a list or a :class:`TemperatureLadder`.

    ``n_within`` is the number of sweeps per replica between swap attempts.
    Step sizes adapt every ``adapt_window`` iterations during burn-in and
    are frozen afterwards.
    """

    betas: object
    n_iters: int
    burn_in: int = 0
    n_within: int = 1
    swap_scheme: str = SEO
    thin: int = 1
    seed: int = 0
    adapt: bool = True
    adapt_window: int = 250
    record_samples: bool = True
    keep_all_levels: bool = False
    progress_every: int = 0
    initial_steps: list | None = None
    ladder: TemperatureLadder = field(init=False, repr=False)

    def __post_init__(self):
        self.ladder = self.betas if isinstance(self.betas, TemperatureLadder) else TemperatureLadder(self.betas)
        self.betas = [float(b) for b in self.ladder.betas]
        self.swap_scheme = str(self.swap_scheme).upper()
        if self.swap_scheme not in (SEO, DEO):
            raise ValueError(f"swap_scheme must be SEO or DEO, got {self.swap_scheme!r}")
        if self.n_iters < 1:
            raise ValueError("n_iters must be positive")
        if not 0 <= self.burn_in < self.n_iters:
            raise ValueError("burn_in must lie in [0, n_iters)")
        if self.n_within < 1 or self.thin < 1 or self.adapt_window < 1:
            raise ValueError("n_within, thin and adapt_window must be >= 1")

    @property
    def M(self) -> int:
        return len(self.betas) - 1

    def fingerprint(self) -> dict:
        """Settings a resumed run must share with the run that wrote the checkpoint."""
        return {
            "betas": [b.hex() for b in self.betas],
            "burn_in": self.burn_in,
            "n_within": self.n_within,
            "swap_scheme": self.swap_scheme,
            "thin": self.thin,
            "seed": self.seed,
            "adapt": self.adapt,
            "adapt_window": self.adapt_window,
            "record_samples": self.record_samples,
            "keep_all_levels": self.keep_all_levels,
        }


def select_swap_pair(scheme: str, M: int, iteration: int, rng: np.random.Generator) -> list[int]:
    """Adjacent pairs ``(k, k+1)`` proposed this iteration, as a list of ``k``.

    SEO draws one pair uniformly; DEO proposes all even pairs on even
    iterations and all odd pairs on odd ones.
    """
    if M < 1:
        raise ValueError("need at least two ladder positions")
    if scheme == SEO:
        return [int(rng.integers(M))]
    if scheme == DEO:
        return list(range(iteration % 2, M, 2))
    raise ValueError(f"unknown swap scheme {scheme!r}")


def count_round_trips(trajectory: ReplicaTrajectory):
    """Completed cold-hot-cold trips per lineage, and their total.

    A leg starts when a lineage sits at position 0, counts once it has
    reached the hottest position, and completes on the next return to 0.
    """
    pos = trajectory.positions
    top = trajectory.n_levels - 1
    counts = np.zeros(pos.shape[1], dtype=np.int64)
    if top < 1:
        return counts, 0
    for r in range(pos.shape[1]):
        started = hot = False
        for p in pos[:, r]:
            if p == 0:
                if hot:
                    counts[r] += 1
                started, hot = True, False
            elif p == top and started:
                hot = True
    return counts, int(counts.sum())


@dataclass
class PtResult:
    samples: SampleStore
    trajectory: ReplicaTrajectory
    ladder: TemperatureLadder
    scales: list
    round_trips: np.ndarray
    level_samples: list | None = None

    @property
    def total_round_trips(self) -> int:
        return int(self.round_trips.sum())


class PtEngine:
    """Mutable sampler state; advance with :meth:`run`, snapshot with :meth:`state_dict`."""

    def __init__(self, target, cfg: PtConfig, init=None):
        self.target, self.cfg = target, cfg
        n = cfg.M + 1
        children = np.random.SeedSequence(cfg.seed).spawn(n + 1)
        self.rngs = [np.random.Generator(np.random.PCG64(c)) for c in children[:n]]
        self.swap_rng = np.random.Generator(np.random.PCG64(children[n]))
        self.states = []
        for r in range(n):
            values = target.initial_point(self.rngs[r]) if init is None else np.asarray(init[r], float)
            st = ReplicaState.evaluate(target, values)
            lt = st.log_target(cfg.betas[r])
            if not np.isfinite(lt):
                raise InitializationError(f"replica {r} (beta={cfg.betas[r]:g}) starts with log power posterior {lt}")
            self.states.append(st)
        self.lineage_at = np.arange(n)
        self.pos_of = np.arange(n)
        self.scales = []
        for _ in range(n):
            sc = ProposalScales.for_target(target)
            if cfg.initial_steps is not None:
                sc.steps = np.array(cfg.initial_steps, float)
            sc.frozen = not cfg.adapt or cfg.burn_in == 0
            self.scales.append(sc)
        self.iteration = 0
        self.swap_attempts = np.zeros(max(cfg.M, 0), dtype=np.int64)
        self.swap_accepts = np.zeros(max(cfg.M, 0), dtype=np.int64)
        self._trip_started = self.pos_of == 0
        self._trip_hot = np.zeros(n, dtype=bool)
        self.trips = np.zeros(n, dtype=np.int64)
        self.positions = [self.pos_of.copy()]
        self.att_iter, self.att_pair, self.att_acc = [], [], []
        self.kept_iter, self.kept = [], []
        self.kept_levels = [[] for _ in range(n)] if cfg.keep_all_levels else None

    @property
    def done(self) -> bool:
        return self.iteration >= self.cfg.n_iters

    def _sweep_position(self, p):
        r = self.lineage_at[p]
        beta = self.cfg.betas[p]
        st = self.states[r]
        for _ in range(self.cfg.n_within):
            st, flags = cwmh_sweep(self.target, st, beta, self.scales[p], self.rngs[r])
            self.scales[p].record(flags)
        self.states[r] = st

    def _update_trips(self, r):
        p = self.pos_of[r]
        if p == 0:
            if self._trip_hot[r]:
                self.trips[r] += 1
            self._trip_started[r], self._trip_hot[r] = True, False
        elif p == self.cfg.M and self._trip_started[r]:
            self._trip_hot[r] = True

    def _swap(self, h):
        cfg = self.cfg
        for k in select_swap_pair(cfg.swap_scheme, cfg.M, h, self.swap_rng):
            ra, rb = self.lineage_at[k], self.lineage_at[k + 1]
            a, b = self.states[ra], self.states[rb]
            bk, bk1 = cfg.betas[k], cfg.betas[k + 1]
            log_r = swap_log_ratio(a.log_target(bk), b.log_target(bk1), b.log_target(bk), a.log_target(bk1))
            accepted = math.log(self.swap_rng.random()) < log_r
            self.swap_attempts[k] += 1
            self.att_iter.append(h)
            self.att_pair.append(k)
            self.att_acc.append(accepted)
            if accepted:
                self.swap_accepts[k] += 1
                self.lineage_at[k], self.lineage_at[k + 1] = rb, ra
                self.pos_of[ra], self.pos_of[rb] = k + 1, k
                self._update_trips(ra)
                self._update_trips(rb)

    def run(self, n_steps: int | None = None, jobs: int = 1) -> "PtEngine":
        """Advance by ``n_steps`` iterations (default: to the end of the run)."""
        cfg = self.cfg
        stop = cfg.n_iters if n_steps is None else min(cfg.n_iters, self.iteration + n_steps)
        positions = range(cfg.M + 1)
        pool = ThreadPoolExecutor(jobs) if jobs > 1 and cfg.M > 0 else None
        try:
            while self.iteration < stop:
                h = self.iteration
                if pool is None:
                    for p in positions:
                        self._sweep_position(p)
                else:
                    list(pool.map(self._sweep_position, positions))
                if cfg.adapt and h < cfg.burn_in:
                    if (h + 1) % cfg.adapt_window == 0:
                        for sc in self.scales:
                            adapt_scales(sc)
                    if h + 1 == cfg.burn_in:
                        for sc in self.scales:
                            sc.frozen = True
                if cfg.M > 0:
                    self._swap(h)
                self.positions.append(self.pos_of.copy())
                if h >= cfg.burn_in and (h - cfg.burn_in) % cfg.thin == 0:
                    if cfg.record_samples:
                        self.kept_iter.append(h)
                        self.kept.append(self.states[self.lineage_at[0]].values)
                    if self.kept_levels is not None:
                        for p in positions:
                            self.kept_levels[p].append(self.states[self.lineage_at[p]].values)
                self.iteration = h + 1
                if cfg.progress_every and self.iteration % cfg.progress_every == 0:
                    with np.errstate(invalid="ignore", divide="ignore"):
                        rates = self.swap_accepts / self.swap_attempts
                    log.info("iteration %d swap rates %s round trips %d",
                             self.iteration, np.round(rates, 3).tolist(), int(self.trips.sum()))
        finally:
            if pool is not None:
                pool.shutdown()
        return self

    def result(self) -> PtResult:
        cfg, dim = self.cfg, self.target.dim
        samples = SampleStore(
            self.target.names,
            np.array(self.kept_iter, dtype=np.int64),
            np.array(self.kept, dtype=float).reshape(-1, dim),
            {"seed": cfg.seed, "betas": list(cfg.betas), "burn_in": cfg.burn_in, "thin": cfg.thin,
             "swap_scheme": cfg.swap_scheme},
        )
        traj = ReplicaTrajectory(np.array(self.positions), np.array(self.att_iter, dtype=np.int64),
                                 np.array(self.att_pair, dtype=np.int64), np.array(self.att_acc, dtype=bool),
                                 levels=cfg.M + 1)
        ladder = TemperatureLadder(cfg.betas, self.swap_attempts.copy(), self.swap_accepts.copy(),
                                   list(cfg.ladder.pilot_log))
        levels = None
        if self.kept_levels is not None:
            levels = [np.array(v, dtype=float).reshape(-1, dim) for v in self.kept_levels]
        return PtResult(samples, traj, ladder, self.scales, self.trips.copy(), levels)

    # checkpointing: plain arrays plus a JSON-able header, see io.checkpoint

    def state_dict(self) -> tuple[dict, dict]:
        arrays = {
            "values": np.array([s.values for s in self.states]),
            "loglik": np.array([s.loglik for s in self.states]),
            "logprior": np.array([s.logprior for s in self.states]),
            "lineage_at": self.lineage_at,
            "pos_of": self.pos_of,
            "swap_attempts": self.swap_attempts,
            "swap_accepts": self.swap_accepts,
            "trip_started": self._trip_started,
            "trip_hot": self._trip_hot,
            "trips": self.trips,
            "positions": np.array(self.positions),
            "att_iter": np.array(self.att_iter, dtype=np.int64),
            "att_pair": np.array(self.att_pair, dtype=np.int64),
            "att_acc": np.array(self.att_acc, dtype=bool),
            "kept_iter": np.array(self.kept_iter, dtype=np.int64),
            "kept": np.array(self.kept, dtype=float).reshape(-1, self.target.dim),
        }
        for p, sc in enumerate(self.scales):
            for name in ("steps", "accepts", "attempts", "total_accepts", "total_attempts"):
                arrays[f"scales{p}_{name}"] = getattr(sc, name)
        if self.kept_levels is not None:
            for p, v in enumerate(self.kept_levels):
                arrays[f"level{p}"] = np.array(v, dtype=float).reshape(-1, self.target.dim)
        header = {
            "iteration": self.iteration,
            "config": self.cfg.fingerprint(),
            "names": list(self.target.names),
            "rngs": [g.bit_generator.state for g in self.rngs],
            "swap_rng": self.swap_rng.bit_generator.state,
            "frozen": [sc.frozen for sc in self.scales],
        }
        return header, arrays

    @classmethod
    def from_state(cls, target, cfg: PtConfig, header: dict, arrays: dict) -> "PtEngine":
        if header["config"] != cfg.fingerprint():
            diff = sorted(k for k in cfg.fingerprint() if header["config"].get(k) != cfg.fingerprint()[k])
            raise ValueError(f"checkpoint was written with different settings: {', '.join(diff)}")
        if header["names"] != list(target.names):
            raise ValueError("checkpoint coordinates do not match the target")
        if header["iteration"] > cfg.n_iters:
            raise ValueError("checkpoint is past the configured n_iters")
        eng = cls.__new__(cls)
        eng.target, eng.cfg = target, cfg
        n = cfg.M + 1
        eng.rngs = []
        for st in header["rngs"]:
            g = np.random.Generator(np.random.PCG64())
            g.bit_generator.state = st
            eng.rngs.append(g)
        eng.swap_rng = np.random.Generator(np.random.PCG64())
        eng.swap_rng.bit_generator.state = header["swap_rng"]
        eng.states = [ReplicaState(arrays["values"][r].copy(), float(arrays["loglik"][r]), float(arrays["logprior"][r]))
                      for r in range(n)]
        eng.lineage_at = arrays["lineage_at"].copy()
        eng.pos_of = arrays["pos_of"].copy()
        eng.scales = []
        for p in range(n):
            kw = {name: arrays[f"scales{p}_{name}"].copy()
                  for name in ("steps", "accepts", "attempts", "total_accepts", "total_attempts")}
            eng.scales.append(ProposalScales(frozen=bool(header["frozen"][p]), **kw))
        eng.iteration = int(header["iteration"])
        eng.swap_attempts = arrays["swap_attempts"].copy()
        eng.swap_accepts = arrays["swap_accepts"].copy()
        eng._trip_started = arrays["trip_started"].copy()
        eng._trip_hot = arrays["trip_hot"].copy()
        eng.trips = arrays["trips"].copy()
        eng.positions = list(arrays["positions"])
        eng.att_iter = arrays["att_iter"].tolist()
        eng.att_pair = arrays["att_pair"].tolist()
        eng.att_acc = arrays["att_acc"].tolist()
        eng.kept_iter = arrays["kept_iter"].tolist()
        eng.kept = list(arrays["kept"])
        eng.kept_levels = [list(arrays[f"level{p}"]) for p in range(n)] if cfg.keep_all_levels else None
        return eng


def pt_run(target, cfg: PtConfig, init=None, jobs: int = 1) -> PtResult:
    """Run parallel tempering to completion and collect the results.

    The result is identical for any ``jobs``: each lineage draws from its
    own stream and the swap step runs serially after every sweep.
    """
    return PtEngine(target, cfg, init).run(jobs=jobs).result()


def run_single_chain(target, beta: float, n_iters: int, burn_in: int = 0, seed=0, init=None,
                     adapt_window: int = 250, steps=None) -> np.ndarray:
    """Plain CWMH at one inverse temperature; returns the post-burn-in draws."""
    rng = np.random.default_rng(seed)
    values = target.initial_point(rng) if init is None else np.asarray(init, float)
    st = ReplicaState.evaluate(target, values)
    if not np.isfinite(st.log_target(beta)):
        raise InitializationError("initial point has zero density")
    scales = ProposalScales.for_target(target)
    if steps is not None:
        scales.steps = np.array(steps, float)
    out = np.empty((n_iters - burn_in, target.dim))
    for h in range(n_iters):
        st, flags = cwmh_sweep(target, st, beta, scales, rng)
        scales.record(flags)
        if h < burn_in and (h + 1) % adapt_window == 0:
            adapt_scales(scales)
        if h >= burn_in:
            out[h - burn_in] = st.values
    return out
