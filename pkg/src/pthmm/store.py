"""Containers for sampler output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SampleStore:
    """Retained cold-chain draws, one row per kept iteration."""

    names: list[str]
    iterations: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.names = list(self.names)
        self.iterations = np.asarray(self.iterations, dtype=np.int64).reshape(-1)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.iterations), len(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError("coordinate names must be unique")

    def __len__(self) -> int:
        return len(self.iterations)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"unknown coordinate {name!r}") from None

    def equals(self, other: "SampleStore") -> bool:
        return (
            self.names == other.names
            and np.array_equal(self.iterations, other.iterations)
            and np.array_equal(self.values, other.values)
        )


@dataclass
class ReplicaTrajectory:
    """Swap attempts and the ladder position of every lineage over time.

    ``positions[h, r]`` is the ladder position of the lineage that started
    at position ``r``, after step ``h`` (row 0 is the initial assignment).
    """

    positions: np.ndarray
    attempt_iteration: np.ndarray
    attempt_pair: np.ndarray
    attempt_accepted: np.ndarray
    levels: int | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if self.positions.ndim != 2:
            raise ValueError("positions must be (steps, lineages)")
        self.attempt_iteration = np.asarray(self.attempt_iteration, dtype=np.int64)
        self.attempt_pair = np.asarray(self.attempt_pair, dtype=np.int64)
        self.attempt_accepted = np.asarray(self.attempt_accepted, dtype=bool)
        if self.levels is None:
            self.levels = self.positions.shape[1]

    @property
    def n_levels(self) -> int:
        return self.levels

    @classmethod
    def from_paths(cls, paths, levels: int | None = None) -> "ReplicaTrajectory":
        """Build from explicit lineage position paths (no attempt records).

        ``paths`` is ``(steps,)`` for one lineage or ``(steps, lineages)``.
        """
        pos = np.asarray(paths, dtype=np.int64)
        if pos.ndim == 1:
            pos = pos[:, None]
        empty = np.zeros(0, dtype=np.int64)
        return cls(pos, empty, empty, empty.astype(bool), levels)

    def pair_counts(self, after: int = 0):
        m = self.n_levels - 1
        keep = self.attempt_iteration >= after
        attempts = np.bincount(self.attempt_pair[keep], minlength=m)[:m]
        accepts = np.bincount(self.attempt_pair[keep & self.attempt_accepted], minlength=m)[:m]
        return attempts, accepts

    def pair_rates(self, after: int = 0) -> np.ndarray:
        attempts, accepts = self.pair_counts(after)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(attempts > 0, accepts / np.maximum(attempts, 1), np.nan)
