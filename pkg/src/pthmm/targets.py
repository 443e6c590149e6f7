"""Sampling targets: a prior, a likelihood, and a block partition of the coordinates.

The kernels and the tempering engine only see this interface, so the HMM and
the analytic toy targets used for validation go through the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hmm_core import ModelSpec, ObservationSet, ParamVector, log_likelihood
from .priors import PriorConfig, log_prior, sample_prior

REAL, LOG, SIMPLEX = "real", "log", "simplex"


@dataclass(frozen=True)
class Block:
    """A sub-block of coordinates updated jointly.

    ``transform`` decides the random walk: ``real`` (plain), ``log``
    (multiplicative, for positive values) or ``simplex`` (additive log-ratio
    against the last coordinate). ``in_likelihood=False`` marks blocks the
    likelihood does not depend on, so the sweep reuses the cached value.
    """

    name: str
    indices: np.ndarray
    transform: str = REAL
    step: float = 0.1
    in_likelihood: bool = True

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))


class Target:
    names: list[str]
    blocks: list[Block]

    @property
    def dim(self) -> int:
        return len(self.names)

    def log_likelihood(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def log_prior(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


def hmm_blocks(spec: ModelSpec) -> list[Block]:
    """Block layout: logit row i with its zeta, delta, covariate row i, emission streams."""
    n, L = spec.n_states, spec.covariate_levels
    s0, s1, sz, sd = (spec.slice_of(k) for k in ("alpha0", "alpha1", "zeta", "delta"))
    blocks = []
    for i in range(n):
        row = np.arange(s0.start + i * (n - 1), s0.start + (i + 1) * (n - 1))
        # with one state the row is just zeta, a prior-only latent
        blocks.append(Block(f"alpha0[{i + 1}]", np.append(row, sz.start + i), REAL, 0.1, in_likelihood=n > 1))
    if n > 1:
        blocks.append(Block("delta", np.arange(sd.start, sd.stop), SIMPLEX, 0.1))
    if L:
        width = (n - 1) * L
        for i in range(n):
            blocks.append(Block(f"alpha1[{i + 1}]", np.arange(s1.start + i * width, s1.start + (i + 1) * width), REAL, 0.1))
    for name in spec.stream_names:
        sl = spec.slice_of(name)
        blocks.append(Block(name, np.arange(sl.start, sl.stop), LOG, 0.05))
    return blocks


class HMMTarget(Target):
    """Posterior of an HMM: forward likelihood times the joint prior."""

    def __init__(self, spec: ModelSpec, data: ObservationSet, prior: PriorConfig | None = None):
        data.validate(spec)
        self.spec = spec
        self.data = data
        self.prior = prior if prior is not None else PriorConfig.default(spec)
        self.prior.check(spec)
        self.names = spec.coordinate_names
        self.blocks = hmm_blocks(spec)

    def log_likelihood(self, x):
        return log_likelihood(self.spec, ParamVector(self.spec, x), self.data)

    def log_prior(self, x):
        return log_prior(self.spec, ParamVector(self.spec, x), self.prior)

    def initial_point(self, rng):
        return sample_prior(self.spec, self.prior, rng).values


class GaussianToy(Target):
    """Likelihood exp(-x^2 / 2) under a flat prior on ``[lower, upper]``."""

    def __init__(self, lower=-50.0, upper=50.0, step=1.0):
        self.lower, self.upper = lower, upper
        self.names = ["x"]
        self.blocks = [Block("x", [0], REAL, step)]

    def log_likelihood(self, x):
        return -0.5 * float(x[0]) ** 2

    def log_prior(self, x):
        return 0.0 if self.lower <= x[0] <= self.upper else -np.inf

    def initial_point(self, rng):
        return rng.normal(size=1)


class BimodalToy(GaussianToy):
    """Equal-weight two-component unit-variance Gaussian mixture at ``+-separation``."""

    def __init__(self, separation=5.0, lower=-50.0, upper=50.0, step=1.0):
        super().__init__(lower, upper, step)
        self.separation = separation

    def log_likelihood(self, x):
        v = float(x[0])
        a = -0.5 * (v - self.separation) ** 2
        b = -0.5 * (v + self.separation) ** 2
        m = max(a, b)
        return m + np.log(np.exp(a - m) + np.exp(b - m)) - np.log(2.0)

    def initial_point(self, rng):
        return np.array([self.separation + rng.normal()])
