"""Post-sampling analysis of cold-chain draws and replica trajectories."""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass

import numpy as np

from .engine import count_round_trips
from .store import ReplicaTrajectory, SampleStore

_INDEXED = re.compile(r"^(?P<base>.+)\[(?P<idx>\d+(?:,\d+)*)\]$")


@dataclass(frozen=True)
class ModeRegion:
    """Open interval ``(lower, upper)`` on one coordinate; either end may be infinite."""

    coordinate: str
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("region needs lower < upper")

    def contains(self, x):
        x = np.asarray(x, float)
        return (x > self.lower) & (x < self.upper)


def _state_permutation_columns(names: list[str], perm: np.ndarray) -> np.ndarray:
    """Source column for every output column when new state ``a`` is old state ``perm[a]``.

    The first one or two bracketed indices of a coordinate name are state
    labels (``delta[i]``, ``y.rate[i]``, ``alpha0[i,j]``); any further index
    (the covariate level of ``alpha1[i,j,l]``) is left alone.
    """
    lookup = {name: c for c, name in enumerate(names)}
    src = np.arange(len(names))
    for c, name in enumerate(names):
        m = _INDEXED.match(name)
        if not m:
            continue
        idx = [int(v) for v in m["idx"].split(",")]
        moved = [perm[i - 1] + 1 if k < 2 else i for k, i in enumerate(idx)]
        src[c] = lookup[f"{m['base']}[{','.join(map(str, moved))}]"]
    return src


def relabel_by_ordering(store: SampleStore, constraint) -> SampleStore:
    """Permute state labels in every draw so the ``constraint`` coordinates increase.

    ``constraint`` lists one coordinate per state, e.g.
    ``["y2.mean[1]", "y2.mean[2]", "y2.mean[3]"]``. Every state-indexed block
    follows the same permutation; transition logits permute by row and
    column together with each row's latent Gumbel variable, which leaves
    likelihood and prior unchanged. Ties keep the original order and warn.
    """
    cols = [store.names.index(c) if c in store.names else None for c in constraint]
    missing = [c for c, i in zip(constraint, cols) if i is None]
    if missing:
        raise KeyError(f"unknown constraint coordinates: {missing}")
    keys = store.values[:, cols]
    perms = np.argsort(keys, axis=1, kind="stable")
    if len(keys) and np.any(np.diff(np.sort(keys, axis=1), axis=1) == 0):
        warnings.warn("ties in the ordering constraint; broken by original state index", stacklevel=2)
    out = store.values.copy()
    uniq, inverse = np.unique(perms, axis=0, return_inverse=True)
    for u, perm in enumerate(uniq):
        rows = np.flatnonzero(inverse.reshape(-1) == u)
        out[rows] = store.values[rows][:, _state_permutation_columns(store.names, perm)]
    meta = dict(store.metadata, relabeled_by=list(constraint))
    return SampleStore(store.names, store.iterations.copy(), out, meta)


def running_weight(draws, region: ModeRegion, burn_in: int = 0) -> np.ndarray:
    """Cumulative fraction of draws inside ``region``, from index ``burn_in`` on.

    ``draws`` is a :class:`SampleStore` or a 1-D array of the region's
    coordinate. Element ``k`` averages draws ``burn_in .. burn_in + k``.
    """
    x = draws.column(region.coordinate) if isinstance(draws, SampleStore) else np.asarray(draws, float)
    if not 0 <= burn_in < len(x):
        raise ValueError(f"no draws after burn-in {burn_in} (have {len(x)})")
    hits = region.contains(x[burn_in:]).astype(np.int64)
    return np.cumsum(hits) / np.arange(1, len(hits) + 1)


def _as_chains(chains) -> np.ndarray:
    a = np.asarray(chains, float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError("chains must be (n,), (chains, n) or (chains, n, coords)")
    return a


def _split(a: np.ndarray) -> np.ndarray:
    half = a.shape[1] // 2
    return np.concatenate([a[:, :half], a[:, a.shape[1] - half:]], axis=0)


def split_rhat(chains) -> np.ndarray:
    """Split potential scale reduction factor per coordinate (not rank-normalized).

    Zero within-chain variance yields NaN with a warning.
    """
    a = _as_chains(chains)
    if a.shape[1] < 4:
        raise ValueError("each chain needs at least 4 draws")
    s = _split(a)
    n = s.shape[1]
    w = s.var(axis=1, ddof=1).mean(axis=0)
    b = n * s.mean(axis=1).var(axis=0, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.sqrt(((n - 1) / n * w + b / n) / w)
    r = np.where(w > 0, r, np.nan)
    if np.any(np.isnan(r)):
        warnings.warn("zero within-chain variance; R-hat undefined", stacklevel=2)
    return r


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row, via FFT."""
    n = x.shape[-1]
    x = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    return np.fft.irfft(f * np.conj(f), size)[..., :n] / n


def ess_basic(chains) -> np.ndarray:
    """Effective sample size per coordinate from split chains.

    Autocorrelations are combined across chains and summed in adjacent
    pairs until a pair turns negative, with pair sums forced monotone.
    Capped at 1.25 times the number of draws; degenerate input gives NaN.
    """
    a = _as_chains(chains)
    if a.shape[1] < 8:
        raise ValueError("each chain needs at least 8 draws")
    s = _split(a)
    m, n, d = s.shape
    total = m * n
    out = np.full(d, np.nan)
    for j in range(d):
        x = s[:, :, j]
        acov = _autocov(x)
        w = acov[:, 0].mean() * n / (n - 1)
        var_plus = w * (n - 1) / n + (x.mean(axis=1).var(ddof=1) if m > 1 else 0.0)
        if not var_plus > 0:
            continue
        rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
        rho[0] = 1.0
        pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
        neg = np.flatnonzero(pairs < 0)
        pairs = pairs[: neg[0] if len(neg) else len(pairs)]
        pairs = np.minimum.accumulate(pairs)
        tau = -1.0 + 2.0 * pairs.sum()
        out[j] = min(total / tau, 1.25 * total) if tau > 0 else 1.25 * total
    if np.any(np.isnan(out)):
        warnings.warn("zero variance; ESS undefined", stacklevel=2)
    return out


def swap_summary(trajectory: ReplicaTrajectory, ladder=None) -> dict:
    """Per-pair swap rates recounted from the attempt records, round trips, and lineage traces.

    ``traces`` is a long-format ``(step, lineage, position)`` integer array;
    step 0 is the initial assignment and step ``h`` follows iteration ``h - 1``.
    """
    attempts, accepts = trajectory.pair_counts()
    with np.errstate(invalid="ignore", divide="ignore"):
        rates = np.where(attempts > 0, accepts / np.maximum(attempts, 1), 0.0)
    per_lineage, total = count_round_trips(trajectory)
    steps, lineages = trajectory.positions.shape
    traces = np.column_stack([
        np.repeat(np.arange(steps), lineages),
        np.tile(np.arange(lineages), steps),
        trajectory.positions.reshape(-1),
    ])
    out = {
        "attempts": attempts,
        "accepts": accepts,
        "rates": rates,
        "round_trips": per_lineage,
        "total_round_trips": total,
        "traces": traces,
    }
    if ladder is not None:
        out["betas"] = np.asarray(ladder.betas if hasattr(ladder, "betas") else ladder, float)
    return out


QUANTILES = (0.025, 0.17, 0.5, 0.83, 0.975)


def interval_table(store: SampleStore, regions: dict | None = None, burn_in: int = 0) -> list[dict]:
    """Median plus 66% and 95% central intervals for every coordinate.

    With ``regions`` (label to :class:`ModeRegion`) the summaries are
    computed separately over the draws falling in each region.
    """
    groups = {"all": np.ones(len(store) - burn_in, dtype=bool)}
    if regions:
        groups = {label: reg.contains(store.column(reg.coordinate)[burn_in:]) for label, reg in regions.items()}
    rows = []
    for label, mask in groups.items():
        vals = store.values[burn_in:][mask]
        q = np.quantile(vals, QUANTILES, axis=0) if len(vals) else np.full((len(QUANTILES), len(store.names)), np.nan)
        for c, name in enumerate(store.names):
            rows.append({
                "mode": label, "coordinate": name, "n": int(len(vals)),
                "median": float(q[2, c]), "q66_low": float(q[1, c]), "q66_high": float(q[3, c]),
                "q95_low": float(q[0, c]), "q95_high": float(q[4, c]),
            })
    return rows


def suggest_threshold(x, bins: int = 50) -> float | None:
    """Deepest histogram valley between the two tallest peaks; a starting point only."""
    counts, edges = np.histogram(np.asarray(x, float), bins=bins)
    peaks = [i for i in range(bins) if counts[i] > 0
             and (i == 0 or counts[i] >= counts[i - 1]) and (i == bins - 1 or counts[i] >= counts[i + 1])]
    if len(peaks) < 2:
        return None
    a, b = sorted(sorted(peaks, key=lambda i: counts[i])[-2:])
    if b - a < 2:
        return None
    v = a + int(np.argmin(counts[a:b + 1]))
    return float(0.5 * (edges[v] + edges[v + 1]))
