"""Probability vectors over flow lengths measured in packets.

Index convention: ``probs[i]`` is the probability of a flow of exactly
``i + 1`` packets.  Zero-length flows never appear in these vectors; the
sampling operators handle the unobservable zero-length outcome internally.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

# Tolerance on the sum-to-one invariant for stored probability vectors.
SUM_TOLERANCE = 1e-12


def _as_prob_vector(probs, what: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(probs, dtype=float)).copy()
    if arr.ndim != 1:
        raise ValueError(f"{what} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        return arr
    if arr.min() < 0.0:
        raise ValueError(f"{what} contains negative probabilities")
    total = float(arr.sum())
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise ValueError(f"{what} must sum to 1 within {SUM_TOLERANCE}, got {total!r}")
    return arr


def _counts_to_probs(counts: Mapping[int, int]) -> np.ndarray:
    if not counts:
        return np.zeros(0)
    lengths = list(counts)
    if min(lengths) < 1 or any(int(n) != n for n in lengths):
        raise ValueError("flow lengths must be integers >= 1")
    vec = np.zeros(max(lengths))
    for length, count in counts.items():
        if count < 0:
            raise ValueError(f"negative count for length {length}")
        vec[length - 1] = count
    total = vec.sum()
    if total == 0:
        return np.zeros(0)
    vec /= total
    vec /= vec.sum()  # second pass pins the float sum to 1
    return vec


@dataclass(frozen=True, eq=False)
class FlowLengthDistribution:
    """Distribution of flow lengths: probs[i] = P(flow is i+1 packets long)."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "probs", _as_prob_vector(self.probs, "flow length distribution")
        )

    @property
    def max_len(self) -> int:
        return len(self.probs)

    def prob(self, length: int) -> float:
        if 1 <= length <= len(self.probs):
            return float(self.probs[length - 1])
        return 0.0

    @classmethod
    def from_lengths(cls, lengths: Iterable[int]) -> "FlowLengthDistribution":
        return cls.from_counts(Counter(int(n) for n in lengths))

    @classmethod
    def from_counts(cls, counts: Mapping[int, int]) -> "FlowLengthDistribution":
        return cls(_counts_to_probs(counts))


@dataclass(frozen=True, eq=False)
class ObservedDistribution:
    """Distribution of sampled flow lengths, zero-length outcomes excluded.

    ``p_used`` records the per-packet (or per-byte) sampling probability the
    sample was collected with, so downstream inversion can recompute its
    normalizer from the inputs alone.
    """

    probs: np.ndarray
    p_used: float

    def __post_init__(self):
        object.__setattr__(
            self, "probs", _as_prob_vector(self.probs, "observed distribution")
        )
        if not 0.0 < self.p_used <= 1.0:
            raise ValueError(f"p_used must be in (0, 1], got {self.p_used}")

    @property
    def max_len(self) -> int:
        return len(self.probs)

    @classmethod
    def from_lengths(cls, lengths: Iterable[int], p_used: float) -> "ObservedDistribution":
        counts = Counter(int(n) for n in lengths)
        return cls(_counts_to_probs(counts), p_used)
