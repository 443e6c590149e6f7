"""Priors for HMM parameters, including the Gumbel hierarchy on the logits.

With ``-zeta_i ~ Gumbel(0, 1)`` and ``-alpha0_ij | zeta_i ~ Gumbel(zeta_i, 1)``
each transition row is uniform on the simplex (Dirichlet(1, ..., 1)). The
covariate offsets ``-alpha1_lij | alpha0_ij, zeta_i ~ Gumbel(alpha0_ij + zeta_i, 1)``
keep every covariate level's row uniform as well.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .hmm_core import ModelSpec, ParamVector, StreamFamily

# Default hyperparameters (shape, rate): Poisson rates, Gamma-stream means and sds.
POISSON_RATE_PRIOR = (1.5, 0.5)
GAMMA_MEAN_PRIOR = (3.0, 0.01)
GAMMA_SD_PRIOR = (3.0, 0.01)


def gumbel_logpdf(x, location=0.0):
    """Log density of Gumbel(location, 1) (max-type) at ``x``."""
    u = np.subtract(x, location)
    return -u - np.exp(-u)


def _gamma_logpdf(x, shape, rate):
    x = np.asarray(x, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x
    return np.where(x > 0, out, -np.inf)


@dataclass
class PriorConfig:
    """Hyperparameters for one model.

    ``emission`` maps stream name to an array of shape ``(n_params, N, 2)``
    holding Gamma (shape, rate) pairs per parameter and state.
    """

    delta_concentration: np.ndarray
    emission: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.delta_concentration = np.asarray(self.delta_concentration, float)
        self.emission = {k: np.asarray(v, float) for k, v in self.emission.items()}
        if np.any(self.delta_concentration <= 0):
            raise ValueError("Dirichlet concentrations must be positive")
        for k, v in self.emission.items():
            if np.any(v <= 0):
                raise ValueError(f"Gamma hyperparameters for {k!r} must be positive")

    @classmethod
    def default(cls, spec: ModelSpec, poisson_rate=POISSON_RATE_PRIOR, gamma_mean=GAMMA_MEAN_PRIOR,
                gamma_sd=GAMMA_SD_PRIOR, delta_concentration=None) -> "PriorConfig":
        """Exchangeable priors: the same hyperparameters for every state."""
        n = spec.n_states
        em = {}
        for name, fam in zip(spec.stream_names, spec.streams):
            pairs = [poisson_rate] if fam is StreamFamily.POISSON else [gamma_mean, gamma_sd]
            em[name] = np.array([[pair] * n for pair in pairs], float)
        conc = np.ones(n) if delta_concentration is None else delta_concentration
        return cls(conc, em)

    def check(self, spec: ModelSpec) -> None:
        if self.delta_concentration.shape != (spec.n_states,):
            raise ValueError("delta_concentration must have one entry per state")
        for name, fam in zip(spec.stream_names, spec.streams):
            if name not in self.emission:
                raise ValueError(f"no prior for stream {name!r}")
            want = (len(fam.param_names), spec.n_states, 2)
            if self.emission[name].shape != want:
                raise ValueError(f"prior for stream {name!r} must have shape {want}")


@functools.lru_cache(maxsize=None)
def _row_of_offdiag(n: int) -> np.ndarray:
    # row index of each packed off-diagonal entry (row-major, diagonal skipped)
    return np.repeat(np.arange(n), n - 1)


def transition_log_prior(spec: ModelSpec, theta: ParamVector) -> float:
    v = theta.values
    zeta = v[spec.slice_of("zeta")]
    a0 = v[spec.slice_of("alpha0")]
    loc0 = zeta[_row_of_offdiag(spec.n_states)]
    lp = gumbel_logpdf(-zeta, 0.0).sum() + gumbel_logpdf(-a0, loc0).sum()
    if spec.covariate_levels:
        # alpha1 is stored pair-major with the level index running fastest
        a1 = v[spec.slice_of("alpha1")].reshape(len(a0), spec.covariate_levels)
        lp += gumbel_logpdf(-a1, (a0 + loc0)[:, None]).sum()
    return float(lp)


def dirichlet_logpdf(x, conc) -> float:
    x = np.asarray(x, float)
    if np.any(x < 0) or abs(x.sum() - 1.0) > 1e-9:
        return -np.inf
    if len(x) == 1:
        return 0.0
    if np.all(conc == 1.0):
        return float(gammaln(len(x)))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(conc == 1.0, 0.0, (conc - 1.0) * np.log(x))
    return float(gammaln(conc.sum()) - gammaln(conc).sum() + terms.sum())


def log_prior(spec: ModelSpec, theta: ParamVector, config: PriorConfig) -> float:
    """Joint log prior density; ``-inf`` outside the support."""
    lp = dirichlet_logpdf(theta.delta, config.delta_concentration)
    if lp == -np.inf:
        return -np.inf
    for name in spec.stream_names:
        h = config.emission[name]
        lp += float(_gamma_logpdf(theta.emission(name), h[..., 0], h[..., 1]).sum())
        if lp == -np.inf:
            return -np.inf
    return lp + transition_log_prior(spec, theta)


def _gumbel_latents(rng, size) -> np.ndarray:
    # zeta = log(-log U), so -zeta ~ Gumbel(0, 1)
    return np.log(-np.log(rng.random(size)))


def sample_prior(spec: ModelSpec, config: PriorConfig, seed=None, size: int | None = None):
    """Exact draws from the joint prior.

    The logits are built constructively from uniform variates so each
    transition row is Dirichlet(1) by construction. Returns one
    :class:`ParamVector`, or with ``size`` an array of ``size`` flat draws.
    """
    rng = np.random.default_rng(seed)
    m = 1 if size is None else int(size)
    n, L = spec.n_states, spec.covariate_levels
    off = ~np.eye(n, dtype=bool)
    v = np.empty((m, spec.dim))
    zfull = _gumbel_latents(rng, (m, n, n))
    zeta = np.diagonal(zfull, axis1=1, axis2=2)
    v[:, spec.slice_of("zeta")] = zeta
    v[:, spec.slice_of("alpha0")] = (zfull - zeta[:, :, None])[:, off]
    if L:
        zl = _gumbel_latents(rng, (m, L, n, n))
        # stored pair-major with the level index running fastest
        v[:, spec.slice_of("alpha1")] = (zl - zfull[:, None])[:, :, off].transpose(0, 2, 1).reshape(m, -1)
    v[:, spec.slice_of("delta")] = rng.dirichlet(config.delta_concentration, size=m)
    for name in spec.stream_names:
        h = config.emission[name]
        v[:, spec.slice_of(name)] = rng.gamma(h[..., 0], 1.0 / h[..., 1], size=(m,) + h[..., 0].shape).reshape(m, -1)
    return ParamVector(spec, v[0]) if size is None else v


def tempered_prior_demo(beta: float, n_draws: int = 100_000, seed=None, n_states: int = 3) -> dict:
    """Induced transition rows when the logit prior itself is raised to ``beta``.

    Powering a Gumbel(m, 1) density by ``beta`` gives a proper density whose
    variable ``exp(-(x - m))`` is Gamma(beta, rate=beta), so draws are exact.
    Returns the mean (and its standard error) of ``max_j gamma_ij``, the
    mean diagonal entry, and the raw statistic.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    n = n_states

    def powered_gumbel_offsets(size):
        return -np.log(rng.gamma(beta, 1.0 / beta, size))

    zeta = -powered_gumbel_offsets(n_draws)  # row i = 0
    off = powered_gumbel_offsets((n_draws, n - 1))
    alpha0 = -(zeta[:, None] + off)
    eta = np.concatenate([np.zeros((n_draws, 1)), alpha0], axis=1)
    eta -= eta.max(axis=1, keepdims=True)
    rows = np.exp(eta)
    rows /= rows.sum(axis=1, keepdims=True)
    stat = rows.max(axis=1)
    return {
        "beta": beta,
        "mean_max": float(stat.mean()),
        "se_max": float(stat.std(ddof=1) / np.sqrt(n_draws)),
        "mean_diagonal": float(rows[:, 0].mean()),
        "rows": rows,
    }


