"""Exhaustive optimization of the surface-to-user assignment.

With the precoder and phases frozen, each of the K^N one-user-per-surface
assignments is scored by its exact sum rate. Candidate scalars are
precomputed per (surface, user, stream) so a candidate costs an O(N K^2)
accumulation instead of a channel rebuild, and candidates are evaluated in
vectorized lexicographic chunks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import system
from .channel import ChannelSet

DEFAULT_CANDIDATE_BUDGET = 10_000_000
CHUNK = 65536


class BudgetExceeded(RuntimeError):
    """K^N exceeds the enumeration budget; the caller must opt into the
    greedy fallback explicitly."""


@dataclass
class SelectionResult:
    assignment: np.ndarray    # (N,) served-user index per surface, 0-based
    sum_rate: float
    candidates_visited: int


def assignment_to_matrix(assignment: np.ndarray, k: int) -> np.ndarray:
    """One-hot rows from a served-user index vector."""
    a = np.zeros((len(assignment), k))
    a[np.arange(len(assignment)), assignment] = 1.0
    return a


def _candidate_block(start: int, stop: int, n: int, k: int) -> np.ndarray:
    """Rows ``start:stop`` of the lexicographic K^N enumeration (surface 0
    is the most significant digit)."""
    idx = np.arange(start, stop)
    digits = np.empty((idx.size, n), dtype=np.int64)
    for pos in range(n - 1, -1, -1):
        digits[:, pos] = idx % k
        idx = idx // k
    return digits


def enumerate_best_assignment(
    state: system.BeamformingState,
    channels: ChannelSet,
    noise: float,
    budget: int = DEFAULT_CANDIDATE_BUDGET,
    allow_greedy_fallback: bool = False,
    direct_gains: np.ndarray | None = None,
) -> SelectionResult:
    """Return the exact sum-rate maximizer over all assignments.

    Ties break toward the lexicographically smallest assignment vector.
    ``direct_gains`` optionally adds the (K, K) blocked-link gain matrix to
    every candidate. The SINR floor is deliberately not enforced here; the
    surrounding alternating loop restores it through the beamforming blocks.
    """
    n, k = state.A.shape
    total = k**n
    if total > budget:
        if not allow_greedy_fallback:
            raise BudgetExceeded(f"K^N = {total} exceeds budget {budget}")
        return _greedy_assignment(state, channels, noise, direct_gains)

    rows = system.cascade_rows(channels, state.theta)       # (N, K, M)
    scalars = rows @ state.P                                  # (N, K, K): s[n,k,i]
    base = direct_gains if direct_gains is not None else np.zeros((k, k), dtype=complex)

    best_rate = -np.inf
    best_assignment = None
    user_range = np.arange(k)
    for start in range(0, total, CHUNK):
        stop = min(start + CHUNK, total)
        cand = _candidate_block(start, stop, n, k)            # (C, N)
        gains = np.broadcast_to(base, (stop - start, k, k)).copy()
        for surf in range(n):
            mask = cand[:, surf, None] == user_range[None, :]  # (C, K)
            gains += mask[:, :, None] * scalars[surf][None, :, :]
        power = np.abs(gains) ** 2
        signal = power[:, user_range, user_range]
        interference = power.sum(axis=2) - signal
        rates = np.log2(1.0 + signal / (interference + noise))
        sums = rates.sum(axis=1)
        pos = int(np.argmax(sums))
        if sums[pos] > best_rate:
            best_rate = float(sums[pos])
            best_assignment = cand[pos].copy()

    return SelectionResult(
        assignment=best_assignment, sum_rate=best_rate, candidates_visited=total
    )


def _greedy_assignment(state, channels, noise, direct_gains=None) -> SelectionResult:
    """Non-exhaustive fallback: assign surfaces one at a time, each to the
    user whose gain improves the running sum rate most. Off by default."""
    n, k = state.A.shape
    rows = system.cascade_rows(channels, state.theta)
    scalars = rows @ state.P
    assignment = np.zeros(n, dtype=np.int64)
    gains = (direct_gains.copy() if direct_gains is not None
             else np.zeros((k, k), dtype=complex))
    visited = 0
    for surf in range(n):
        best_rate, best_user = -np.inf, 0
        for user in range(k):
            trial = gains.copy()
            trial[user] += scalars[surf, user]
            power = np.abs(trial) ** 2
            signal = np.diag(power)
            rate = float(np.sum(np.log2(1.0 + signal / (power.sum(1) - signal + noise))))
            visited += 1
            if rate > best_rate:
                best_rate, best_user = rate, user
        assignment[surf] = best_user
        gains[best_user] += scalars[surf, best_user]
    power = np.abs(gains) ** 2
    signal = np.diag(power)
    rate = float(np.sum(np.log2(1.0 + signal / (power.sum(1) - signal + noise))))
    return SelectionResult(assignment=assignment, sum_rate=rate, candidates_visited=visited)
