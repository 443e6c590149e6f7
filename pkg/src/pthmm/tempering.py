"""Power posteriors and inverse-temperature ladders."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .hmm_core import ModelSpec, ObservationSet, ParamVector, log_likelihood
from .priors import PriorConfig, log_prior

log = logging.getLogger(__name__)

TARGET_SWAP_RATE = 0.234
SWAP_BAND = (0.22, 0.24)


class TuningError(RuntimeError):
    """Ladder tuning could not place the next rung; ``ladder`` holds the partial result."""

    def __init__(self, message, ladder):
        super().__init__(message)
        self.ladder = ladder


@dataclass
class TemperatureLadder:
    """Strictly decreasing inverse temperatures starting at 1.

    ``swap_attempts`` / ``swap_accepts`` hold one counter per adjacent pair.
    """

    betas: np.ndarray
    swap_attempts: np.ndarray = None
    swap_accepts: np.ndarray = None
    pilot_log: list = field(default_factory=list)

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float).reshape(-1)
        b = self.betas
        if len(b) == 0 or b[0] != 1.0:
            raise ValueError("ladder must start at beta = 1")
        if np.any(b <= 0) or np.any(np.diff(b) >= 0):
            raise ValueError("ladder must be strictly decreasing and positive")
        m = len(b) - 1
        if self.swap_attempts is None:
            self.swap_attempts = np.zeros(m, dtype=np.int64)
        if self.swap_accepts is None:
            self.swap_accepts = np.zeros(m, dtype=np.int64)
        self.swap_attempts = np.asarray(self.swap_attempts, dtype=np.int64)
        self.swap_accepts = np.asarray(self.swap_accepts, dtype=np.int64)
        if np.any(self.swap_accepts > self.swap_attempts):
            raise ValueError("accepts cannot exceed attempts")

    @property
    def M(self) -> int:
        return len(self.betas) - 1

    def __len__(self) -> int:
        return len(self.betas)

    def swap_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.swap_attempts > 0, self.swap_accepts / np.maximum(self.swap_attempts, 1), np.nan)


def log_power_posterior(spec: ModelSpec, theta: ParamVector, data: ObservationSet, config: PriorConfig, beta: float) -> float:
    """``beta * log p(y | theta) + log p(theta)``; only the likelihood is tempered."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    lp = log_prior(spec, theta, config)
    if lp == -np.inf:
        return -np.inf
    # multiply, never divide: dividing by beta would sharpen the hot replicas
    return beta * log_likelihood(spec, theta, data) + lp


def geometric_ladder(beta_hot: float, M: int, beta_cold: float = 1.0) -> TemperatureLadder:
    """``beta_m = R**m`` with ``R = (beta_hot / beta_cold) ** (1 / M)``."""
    if beta_cold != 1.0:
        raise ValueError("the coldest inverse temperature must be 1")
    if not 0.0 < beta_hot < 1.0 or M < 1:
        raise ValueError("need 0 < beta_hot < 1 and M >= 1")
    ratio = beta_hot ** (1.0 / M)
    betas = ratio ** np.arange(M + 1)
    betas[-1] = beta_hot
    return TemperatureLadder(betas)


def swap_log_ratio(l_k_at_xk, l_k1_at_xk1, l_k_at_xk1, l_k1_at_xk) -> float:
    """Log acceptance probability of exchanging the states of two replicas.

    Arguments are the four log power posteriors: replica k at its own
    state, replica k+1 at its own state, and each evaluated at the other's
    state. A ``-inf`` crossed term rejects outright.
    """
    crossed = l_k_at_xk1 + l_k1_at_xk
    if crossed == -math.inf:
        return -math.inf
    current = l_k_at_xk + l_k1_at_xk1
    return min(0.0, crossed - current)


def _pilot_rate(target, betas, pilot_iters, seed, jobs, swap_scheme="SEO"):
    from .engine import PtConfig, pt_run

    burn = max(pilot_iters // 5, 1)
    cfg = PtConfig(betas=list(betas), n_iters=pilot_iters + burn, burn_in=burn, seed=seed,
                   swap_scheme=swap_scheme, record_samples=False)
    res = pt_run(target, cfg, jobs=jobs)
    attempts, accepts = res.trajectory.pair_counts(after=burn)
    return accepts[-1] / max(attempts[-1], 1), attempts, accepts


def tune_ladder(target, floor: float, pilot_iters: int = 50_000, band=SWAP_BAND, hot_stop=None,
                max_adjustments: int = 20, seed=0, jobs: int = 1, swap_scheme: str = "SEO") -> TemperatureLadder:
    """Grow a ladder one rung at a time so each new adjacent pair swaps within ``band``.

    Starting from ``{1}``, each candidate for the next hottest rung is tested
    with a pilot run on the current ladder plus the candidate. The floor is
    tried first; otherwise the candidate is bisected in log-beta between the
    current hottest rung and ``floor``
    until the measured swap rate of the new pair lands in ``band``. Growth
    stops once ``hot_stop(beta_hottest)`` holds (default: ``beta <= floor``).

    If the floor itself still swaps too easily, the lower bracket is pushed
    further out geometrically. More than ``max_adjustments`` candidates for
    one rung raises :class:`TuningError` carrying the partial ladder.

    With ``swap_scheme="DEO"`` every pair is attempted every other
    iteration, so pilot rates are far less noisy for long ladders.
    """
    if not 0.0 < floor < 1.0:
        raise ValueError("floor must lie in (0, 1)")
    lo_rate, hi_rate = band
    stop = hot_stop or (lambda b: b <= floor)
    betas = [1.0]
    attempts_all, accepts_all, pilot_log = [], [], []
    rung_seed = np.random.SeedSequence(seed)
    while not stop(betas[-1]):
        top = math.log(betas[-1])
        hi, lo = top, math.log(min(floor, betas[-1] * 0.999))
        lo_verified = False
        # try the lower bracket first so a floor that already swaps well ends the ladder
        cand = lo
        child = rung_seed.spawn(1)[0]
        for attempt in range(max_adjustments):
            s = int(child.generate_state(1)[0]) + attempt
            # exp(log(floor)) can round above floor, which would defeat the stop rule
            beta = floor if cand == math.log(floor) else math.exp(cand)
            rate, att, acc = _pilot_rate(target, betas + [beta], pilot_iters, s, jobs, swap_scheme)
            pilot_log.append({"rung": len(betas), "beta": beta, "rate": float(rate)})
            log.info("rung %d: candidate beta=%.6g swap rate %.4f", len(betas), beta, rate)
            if lo_rate <= rate <= hi_rate:
                betas.append(beta)
                attempts_all.append(int(att[-1]))
                accepts_all.append(int(acc[-1]))
                break
            if rate > hi_rate:
                hi = cand
                if not lo_verified:
                    # even the lower bracket swaps too easily: push it out geometrically
                    lo -= top - lo
                    cand = lo
                    continue
            else:
                lo, lo_verified = cand, True
            cand = 0.5 * (hi + lo)
        else:
            partial = TemperatureLadder(betas, attempts_all, accepts_all, pilot_log)
            raise TuningError(f"no candidate for rung {len(betas)} reached the band {band}", partial)
    return TemperatureLadder(betas, attempts_all, accepts_all, pilot_log)


def hot_candidate_summaries(target, candidates, coordinate: str, n_iters: int = 20_000, bins: int = 40, seed=0) -> dict:
    """Histogram of one coordinate from a single chain at each candidate beta.

    Meant for judging by eye whether a candidate hottest replica is close to
    unimodal.
    """
    from .engine import run_single_chain

    col = target.names.index(coordinate)
    out = {}
    for b in candidates:
        draws = run_single_chain(target, float(b), n_iters, burn_in=n_iters // 4, seed=seed)
        counts, edges = np.histogram(draws[:, col], bins=bins)
        out[float(b)] = {"counts": counts, "edges": edges}
    return out
