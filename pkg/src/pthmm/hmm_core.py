"""Multivariate HMM structure, emission densities and the forward likelihood.

Parameters live in a single flat float vector (``ParamVector.values``) whose
layout is fixed by the :class:`ModelSpec`; the named accessors return views or
small derived arrays. Keeping one flat vector makes block proposals, sample
storage and checkpointing trivial.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from scipy.special import gammaln, logsumexp


class StreamFamily(str, enum.Enum):
    POISSON = "poisson"
    GAMMA = "gamma"  # mean / sd parameterisation

    @property
    def param_names(self) -> tuple[str, ...]:
        return ("rate",) if self is StreamFamily.POISSON else ("mean", "sd")


@dataclass(frozen=True)
class ModelSpec:
    """Static structure of an HMM.

    Parameters
    ----------
    n_states : int
        Number of hidden states ``N``.
    streams : sequence of StreamFamily or str
        One emission family per observed stream.
    covariate_levels : int
        Number of non-baseline levels of the categorical transition covariate
        (0 means a homogeneous chain).
    stream_names : sequence of str, optional
        Names used for coordinate labels and data columns. Defaults to
        ``y1, y2, ...``.
    """

    n_states: int
    streams: tuple[StreamFamily, ...]
    covariate_levels: int = 0
    stream_names: tuple[str, ...] = ()
    _layout: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        streams = tuple(StreamFamily(s) for s in self.streams)
        object.__setattr__(self, "streams", streams)
        names = tuple(self.stream_names) or tuple(f"y{p + 1}" for p in range(len(streams)))
        object.__setattr__(self, "stream_names", names)
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        if len(streams) < 1:
            raise ValueError("at least one stream is required")
        if self.covariate_levels < 0:
            raise ValueError("covariate_levels must be >= 0")
        if len(names) != len(streams) or len(set(names)) != len(names):
            raise ValueError("stream_names must be unique, one per stream")
        object.__setattr__(self, "_layout", _build_layout(self))

    @property
    def n_streams(self) -> int:
        return len(self.streams)

    @property
    def dim(self) -> int:
        return self._layout["dim"]

    def slice_of(self, part: str) -> slice:
        """Slice of the flat vector holding ``part``.

        ``part`` is one of ``delta``, ``alpha0``, ``alpha1``, ``zeta`` or a
        stream name.
        """
        return self._layout["slices"][part]

    @property
    def coordinate_names(self) -> list[str]:
        return list(self._layout["names"])

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "streams": [s.value for s in self.streams],
            "covariate_levels": self.covariate_levels,
            "stream_names": list(self.stream_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            n_states=int(d["n_states"]),
            streams=tuple(d["streams"]),
            covariate_levels=int(d.get("covariate_levels", 0)),
            stream_names=tuple(d.get("stream_names", ())),
        )


def _offdiag(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def _build_layout(spec: ModelSpec) -> dict:
    n, L = spec.n_states, spec.covariate_levels
    names: list[str] = []
    slices: dict[str, slice] = {}

    def add(part, labels):
        start = len(names)
        names.extend(labels)
        slices[part] = slice(start, len(names))

    add("delta", [f"delta[{i + 1}]" for i in range(n)])
    add("alpha0", [f"alpha0[{i + 1},{j + 1}]" for i, j in _offdiag(n)])
    add("alpha1", [f"alpha1[{i + 1},{j + 1},{l + 1}]" for i, j in _offdiag(n) for l in range(L)])
    add("zeta", [f"zeta[{i + 1}]" for i in range(n)])
    for name, fam in zip(spec.stream_names, spec.streams):
        add(name, [f"{name}.{p}[{s + 1}]" for p in fam.param_names for s in range(n)])
    return {"names": tuple(names), "slices": slices, "dim": len(names)}


@dataclass
class ParamVector:
    """One point in parameter space, stored flat.

    ``alpha0`` is exposed as an ``N x N`` matrix with a zero diagonal
    (the fixed reference logit) and ``alpha1`` as ``L x N x N``.
    """

    spec: ModelSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.spec.dim,):
            raise ValueError(f"expected {self.spec.dim} values, got {self.values.shape}")

    @classmethod
    def from_parts(cls, spec, delta, alpha0, emission, zeta=None, alpha1=None):
        """Assemble from named parts.

        ``alpha0`` may be ``N x N`` (diagonal ignored) or ``N x (N-1)``;
        ``emission`` is one array per stream: Poisson ``(N,)`` rates, Gamma
        ``(2, N)`` rows of means and sds.
        """
        n, L = spec.n_states, spec.covariate_levels
        v = np.zeros(spec.dim)
        v[spec.slice_of("delta")] = np.asarray(delta, float)
        v[spec.slice_of("alpha0")] = _pack_offdiag(np.asarray(alpha0, float), n)
        if L:
            a1 = np.asarray(alpha1, float).reshape(L, n, -1)
            packed = np.stack([_pack_offdiag(a1[l], n) for l in range(L)], axis=-1)
            v[spec.slice_of("alpha1")] = packed.ravel()
        elif alpha1 is not None and np.size(alpha1):
            raise ValueError("alpha1 given for a homogeneous model")
        if zeta is not None:
            v[spec.slice_of("zeta")] = np.asarray(zeta, float)
        for name, fam, e in zip(spec.stream_names, spec.streams, emission):
            e = np.asarray(e, float).reshape(len(fam.param_names), n)
            v[spec.slice_of(name)] = e.ravel()
        return cls(spec, v)

    def copy(self) -> "ParamVector":
        return ParamVector(self.spec, self.values.copy())

    @property
    def delta(self) -> np.ndarray:
        return self.values[self.spec.slice_of("delta")]

    @property
    def zeta(self) -> np.ndarray:
        return self.values[self.spec.slice_of("zeta")]

    @property
    def alpha0(self) -> np.ndarray:
        return _unpack_offdiag(self.values[self.spec.slice_of("alpha0")], self.spec.n_states)

    @property
    def alpha1(self) -> np.ndarray:
        n, L = self.spec.n_states, self.spec.covariate_levels
        flat = self.values[self.spec.slice_of("alpha1")].reshape(n * (n - 1), L)
        return np.stack([_unpack_offdiag(flat[:, l], n) for l in range(L)]) if L else np.zeros((0, n, n))

    def emission(self, stream: int | str) -> np.ndarray:
        """Per-state parameters of one stream, shape ``(n_params, N)``."""
        if isinstance(stream, int):
            stream = self.spec.stream_names[stream]
        p = self.spec.stream_names.index(stream)
        k = len(self.spec.streams[p].param_names)
        return self.values[self.spec.slice_of(stream)].reshape(k, self.spec.n_states)

    def is_valid(self) -> bool:
        d = self.delta
        if np.any(d < 0) or abs(d.sum() - 1.0) > 1e-12:
            return False
        if not np.all(np.isfinite(self.values)):
            return False
        return all(np.all(self.emission(p) > 0) for p in range(self.spec.n_streams))


def _pack_offdiag(m: np.ndarray, n: int) -> np.ndarray:
    if m.shape == (n, n):
        return np.array([m[i, j] for i, j in _offdiag(n)])
    return m.reshape(-1)


def _unpack_offdiag(flat: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    if n > 1:
        out[~np.eye(n, dtype=bool)] = flat
    return out


@dataclass
class ObservationSet:
    """``W`` sequences of ``T_w x P`` observations (NaN = missing) plus covariates."""

    sequences: list[np.ndarray]
    covariates: list[np.ndarray]
    states: list[np.ndarray] | None = None  # filled by simulate()

    def __post_init__(self):
        self.sequences = [np.asarray(y, dtype=float) for y in self.sequences]
        self.sequences = [y[:, None] if y.ndim == 1 else y for y in self.sequences]
        if len(self.covariates) != len(self.sequences):
            raise ValueError("one covariate vector per sequence is required")
        self.covariates = [np.asarray(z, dtype=np.int64).reshape(-1) for z in self.covariates]
        for y, z in zip(self.sequences, self.covariates):
            if len(z) != len(y):
                raise ValueError("covariate length differs from sequence length")
        self._packed = None

    @classmethod
    def homogeneous(cls, sequences) -> "ObservationSet":
        seqs = [np.asarray(y, float) for y in sequences]
        seqs = [y[:, None] if y.ndim == 1 else y for y in seqs]
        return cls(seqs, [np.zeros(len(y), dtype=np.int64) for y in seqs])

    @property
    def lengths(self) -> list[int]:
        return [len(y) for y in self.sequences]

    def validate(self, spec: ModelSpec) -> None:
        for w, (y, z) in enumerate(zip(self.sequences, self.covariates)):
            if y.shape[1] != spec.n_streams:
                raise ValueError(f"sequence {w}: expected {spec.n_streams} columns, got {y.shape[1]}")
            if np.any((z < 0) | (z > spec.covariate_levels)):
                raise ValueError(f"sequence {w}: covariate level out of range")
            for p, fam in enumerate(spec.streams):
                col = y[:, p][~np.isnan(y[:, p])]
                if fam is StreamFamily.POISSON and np.any((col < 0) | (col != np.floor(col))):
                    raise ValueError(f"sequence {w}, stream {p}: Poisson values must be non-negative integers")
                if fam is StreamFamily.GAMMA and np.any(col <= 0):
                    raise ValueError(f"sequence {w}, stream {p}: Gamma values must be positive")

    def packed(self):
        """Concatenated arrays consumed by the compiled forward kernel."""
        if self._packed is None:
            y = np.ascontiguousarray(np.concatenate(self.sequences, axis=0))
            with np.errstate(divide="ignore", invalid="ignore"):
                logy = np.where(y > 0, np.log(np.where(y > 0, y, 1.0)), -np.inf)
                lfact = gammaln(np.where(np.isnan(y), 0.0, y) + 1.0)
            starts = np.concatenate([[0], np.cumsum(self.lengths)]).astype(np.int64)
            z = np.ascontiguousarray(np.concatenate(self.covariates)).astype(np.int64)
            self._packed = (y, np.ascontiguousarray(logy), np.ascontiguousarray(lfact), z, starts)
        return self._packed


def gamma_meansd_to_shaperate(mean, sd):
    """Moment-matched Gamma shape and rate for a given mean and sd."""
    mean = np.asarray(mean, float)
    sd = np.asarray(sd, float)
    if np.any(mean <= 0) or np.any(sd <= 0):
        raise ValueError("mean and sd must be positive")
    shape = mean**2 / sd**2
    rate = mean / sd**2
    if shape.ndim == 0:
        return float(shape), float(rate)
    return shape, rate


def emission_log_density(family, state_params, y) -> float:
    """log f(y | state) for a single stream; 0 when ``y`` is missing."""
    family = StreamFamily(family)
    if y is None or (isinstance(y, float) and math.isnan(y)):
        return 0.0
    if family is StreamFamily.POISSON:
        (lam,) = np.atleast_1d(state_params)
        return y * math.log(lam) - lam - math.lgamma(y + 1.0)
    mean, sd = state_params
    if y <= 0:
        return -math.inf
    a, b = gamma_meansd_to_shaperate(mean, sd)
    return a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(y) - b * y


def _logsumexp_rows(eta: np.ndarray) -> np.ndarray:
    m = eta.max(axis=-1, keepdims=True)
    return m + np.log(np.exp(eta - m).sum(axis=-1, keepdims=True))


def tpm_row(alpha0_row, alpha1_row=None, z: int = 0, i: int = 0) -> np.ndarray:
    """Transition probabilities out of state ``i`` via the multinomial logit.

    ``alpha0_row`` holds the ``N-1`` off-diagonal logits of the row in column
    order; the reference logit 0 is inserted at position ``i``.
    ``alpha1_row`` holds the per-level offsets, shape ``(L, N-1)``; level
    ``z = 0`` is the baseline.
    """
    eta = np.asarray(alpha0_row, float).reshape(-1)
    if z > 0:
        eta = eta + np.asarray(alpha1_row, float).reshape(-1, len(eta))[z - 1]
    eta = np.insert(eta, i, 0.0)
    eta = eta - eta.max()
    p = np.exp(eta)
    return p / p.sum()


def log_transition_matrices(theta: ParamVector) -> np.ndarray:
    """log Gamma(z) for every covariate level, shape ``(L + 1, N, N)``."""
    a0 = theta.alpha0
    eta = a0[None, :, :] + np.concatenate([np.zeros((1,) + a0.shape), theta.alpha1])
    n = a0.shape[0]
    eta[:, np.arange(n), np.arange(n)] = 0.0
    return eta - _logsumexp_rows(eta)


def _emission_arrays(theta: ParamVector):
    """Per-stream (family code, p1, p2) arrays for the kernel.

    Poisson: p1 = log rate, p2 = rate. Gamma: p1 = shape, p2 = rate.
    """
    spec = theta.spec
    fam = np.array([0 if f is StreamFamily.POISSON else 1 for f in spec.streams], dtype=np.int64)
    p1 = np.empty((spec.n_streams, spec.n_states))
    p2 = np.empty_like(p1)
    for p, f in enumerate(spec.streams):
        e = theta.emission(p)
        if f is StreamFamily.POISSON:
            p1[p] = np.log(e[0])
            p2[p] = e[0]
        else:
            p1[p] = (e[0] / e[1]) ** 2
            p2[p] = e[0] / e[1] ** 2
    const = np.where(fam[:, None] == 1, p1 * np.log(p2) - gammaln(p1), 0.0)
    return fam, p1, p2, const


@numba.njit(cache=True, nogil=True)
def _forward_kernel(y, logy, lfact, z, starts, fam, p1, p2, const, log_delta, log_gamma):
    n_seq = starts.shape[0] - 1
    P = y.shape[1]
    N = log_delta.shape[0]
    total = 0.0
    psi = np.empty(N)
    scaled = np.empty(N)
    gamma = np.exp(log_gamma)
    logb = np.empty(N)
    for w in range(n_seq):
        for t in range(starts[w], starts[w + 1]):
            for j in range(N):
                acc = 0.0
                for p in range(P):
                    v = y[t, p]
                    if np.isnan(v):
                        continue
                    if fam[p] == 0:
                        acc += v * p1[p, j] - p2[p, j] - lfact[t, p]
                    elif v <= 0.0:
                        acc = -np.inf
                    else:
                        acc += const[p, j] + (p1[p, j] - 1.0) * logy[t, p] - p2[p, j] * v
                logb[j] = acc
            if t == starts[w]:
                for j in range(N):
                    psi[j] = log_delta[j] + logb[j]
            else:
                # log sum_i exp(psi_i + g_ij) = m + log sum_i exp(psi_i - m) Gamma_ij
                m = -np.inf
                for i in range(N):
                    if psi[i] > m:
                        m = psi[i]
                if m == -np.inf:
                    return -np.inf
                for i in range(N):
                    scaled[i] = np.exp(psi[i] - m)
                g = gamma[z[t]]
                for j in range(N):
                    s = 0.0
                    for i in range(N):
                        s += scaled[i] * g[i, j]
                    psi[j] = m + np.log(s) + logb[j] if s > 0.0 else -np.inf
        m = -np.inf
        for j in range(N):
            if psi[j] > m:
                m = psi[j]
        if m == -np.inf:
            return -np.inf
        s = 0.0
        for j in range(N):
            s += np.exp(psi[j] - m)
        total += m + np.log(s)
    return total


def log_likelihood(spec: ModelSpec, theta: ParamVector, data: ObservationSet) -> float:
    """Sum over sequences of the log-space forward recursion.

    Transition matrices are built once per covariate level, never per step.
    Returns ``-inf`` (not NaN) when an observation has zero density under
    every path.
    """
    y, logy, lfact, z, starts = data.packed()
    fam, p1, p2, const = _emission_arrays(theta)
    with np.errstate(divide="ignore"):
        log_delta = np.log(theta.delta)
    return float(
        _forward_kernel(y, logy, lfact, z, starts, fam, p1, p2, const, log_delta, log_transition_matrices(theta))
    )


def log_likelihood_bruteforce(spec: ModelSpec, theta: ParamVector, data: ObservationSet, max_paths: int = 10**6) -> float:
    """Exact likelihood by enumerating every state path (test oracle)."""
    from scipy import stats

    n = spec.n_states
    a0 = theta.alpha0
    a1 = theta.alpha1
    gammas = []
    for lvl in range(spec.covariate_levels + 1):
        eta = a0 + (a1[lvl - 1] if lvl else 0.0)
        np.fill_diagonal(eta, 0.0)
        e = np.exp(eta)
        gammas.append(e / e.sum(axis=1, keepdims=True))
    total = 0.0
    for y, zs in zip(data.sequences, data.covariates):
        T = len(y)
        if n**T > max_paths:
            raise ValueError(f"{n}**{T} paths exceeds the enumeration bound {max_paths}")
        dens = np.zeros((T, n))
        for p, fam in enumerate(spec.streams):
            e = theta.emission(p)
            for s in range(n):
                col = y[:, p]
                obs = ~np.isnan(col)
                if fam is StreamFamily.POISSON:
                    lp = stats.poisson.logpmf(col[obs], e[0, s])
                else:
                    shape = (e[0, s] / e[1, s]) ** 2
                    scale = e[1, s] ** 2 / e[0, s]
                    lp = stats.gamma.logpdf(col[obs], a=shape, scale=scale)
                dens[obs, s] += lp
        terms = []
        for path in itertools.product(range(n), repeat=T):
            with np.errstate(divide="ignore"):
                lp = math.log(theta.delta[path[0]]) if theta.delta[path[0]] > 0 else -math.inf
            lp += dens[0, path[0]]
            for t in range(1, T):
                lp += math.log(gammas[zs[t]][path[t - 1], path[t]]) + dens[t, path[t]]
            terms.append(lp)
        total += float(logsumexp(terms)) if np.max(terms) > -np.inf else -math.inf
    return total


def simulate(spec: ModelSpec, theta: ParamVector, lengths: Sequence[int], covariates=None, seed=None) -> ObservationSet:
    """Draw state paths and observations from the model."""
    rng = np.random.default_rng(seed)
    gammas = np.exp(log_transition_matrices(theta))
    if covariates is None:
        covariates = [np.zeros(T, dtype=np.int64) for T in lengths]
    seqs, states = [], []
    for T, zs in zip(lengths, covariates):
        zs = np.asarray(zs, dtype=np.int64)
        s = np.empty(T, dtype=np.int64)
        s[0] = rng.choice(spec.n_states, p=theta.delta)
        for t in range(1, T):
            s[t] = rng.choice(spec.n_states, p=gammas[zs[t]][s[t - 1]])
        y = np.empty((T, spec.n_streams))
        for p, fam in enumerate(spec.streams):
            e = theta.emission(p)
            if fam is StreamFamily.POISSON:
                y[:, p] = rng.poisson(e[0, s])
            else:
                shape, rate = gamma_meansd_to_shaperate(e[0, s], e[1, s])
                y[:, p] = rng.gamma(shape, 1.0 / rate)
        seqs.append(y)
        states.append(s)
    return ObservationSet(seqs, list(covariates), states=states)
