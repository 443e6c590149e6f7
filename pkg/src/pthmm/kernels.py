"""Component-wise Metropolis-Hastings at a fixed inverse temperature."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .targets import LOG, REAL, SIMPLEX, Target

log = logging.getLogger(__name__)

RATE_LOW, RATE_HIGH = 0.2, 0.4
GROW, SHRINK = 1.3, 0.7
STEP_MIN, STEP_MAX = 1e-8, 1e4


@dataclass
class ReplicaState:
    """Current point of one chain with its cached log-likelihood and log-prior."""

    values: np.ndarray
    loglik: float
    logprior: float

    @classmethod
    def evaluate(cls, target: Target, values) -> "ReplicaState":
        values = np.array(values, dtype=float)
        lp = target.log_prior(values)
        ll = target.log_likelihood(values) if lp > -np.inf else -np.inf
        return cls(values, ll, lp)

    def log_target(self, beta: float) -> float:
        return beta * self.loglik + self.logprior


@dataclass
class ProposalScales:
    steps: np.ndarray
    accepts: np.ndarray = None
    attempts: np.ndarray = None
    total_accepts: np.ndarray = None
    total_attempts: np.ndarray = None
    frozen: bool = False

    def __post_init__(self):
        self.steps = np.array(self.steps, dtype=float)
        k = len(self.steps)
        for name in ("accepts", "attempts", "total_accepts", "total_attempts"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(k, dtype=np.int64))

    @classmethod
    def for_target(cls, target: Target) -> "ProposalScales":
        return cls([b.step for b in target.blocks])

    def record(self, flags) -> None:
        flags = np.asarray(flags, dtype=np.int64)
        self.accepts += flags
        self.attempts += 1
        self.total_accepts += flags
        self.total_attempts += 1

    def window_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.accepts / self.attempts

    def acceptance_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.total_accepts / self.total_attempts


def _propose(block, x, step, rng):
    """New block values and the log-Jacobian correction of the transform."""
    idx = block.indices
    cur = x[idx]
    eps = rng.standard_normal(len(idx) - (block.transform == SIMPLEX))
    if block.transform == REAL:
        return cur + step * eps, 0.0
    if block.transform == LOG:
        return cur * np.exp(step * eps), step * eps.sum()
    # additive log-ratio walk keeps the block on the simplex
    with np.errstate(divide="ignore"):
        logs = np.log(cur)
    ratios = logs[:-1] - logs[-1]
    moved = ratios + step * eps
    if np.array_equal(moved, ratios):
        return cur.copy(), 0.0
    z = np.append(moved, 0.0)
    z -= z.max()
    new = np.exp(z)
    new /= new.sum()
    with np.errstate(divide="ignore"):
        return new, float(np.log(new).sum() - logs.sum())


def cwmh_sweep(target: Target, state: ReplicaState, beta: float, scales: ProposalScales, rng: np.random.Generator):
    """One pass over every block in layout order.

    Returns the new state and per-block accept flags. The cached
    log-likelihood and log-prior are carried along, so rejected blocks cost
    nothing beyond their proposal evaluation.
    """
    x = state.values.copy()
    ll, lp = state.loglik, state.logprior
    flags = np.zeros(len(target.blocks), dtype=bool)
    for b, block in enumerate(target.blocks):
        new, log_jac = _propose(block, x, scales.steps[b], rng)
        prop = x.copy()
        prop[block.indices] = new
        lp_new = target.log_prior(prop)
        if lp_new == -np.inf:
            continue
        ll_new = target.log_likelihood(prop) if block.in_likelihood else ll
        log_a = beta * (ll_new - ll) + (lp_new - lp) + log_jac if ll_new > -np.inf else -np.inf
        if np.log(rng.random()) < log_a:
            x, ll, lp = prop, ll_new, lp_new
            flags[b] = True
    return ReplicaState(x, ll, lp), flags


def adapt_scales(scales: ProposalScales, window_accept_rates=None) -> ProposalScales:
    """Multiplicative step adjustment towards a 0.2-0.4 acceptance band.

    Uses the scales' own window counters unless rates are given, then resets
    the window. A frozen set of scales is returned untouched.
    """
    if scales.frozen:
        log.warning("adapt_scales called after adaptation was frozen; ignored")
        return scales
    rates = scales.window_rates() if window_accept_rates is None else np.asarray(window_accept_rates, float)
    steps = scales.steps.copy()
    steps[rates > RATE_HIGH] *= GROW
    steps[rates < RATE_LOW] *= SHRINK
    scales.steps = np.clip(steps, STEP_MIN, STEP_MAX)
    scales.accepts[:] = 0
    scales.attempts[:] = 0
    return scales
