"""Cascaded channels, SINR and sum-rate evaluation.

The direct base-station-to-user link is treated as blocked and excluded
from the SINR by default; ``include_direct=True`` adds it back for
exploration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet


@dataclass
class BeamformingState:
    """Joint decision variables: precoder, phase vectors, selection matrix.

    ``P`` is M-by-K (column k serves user k), ``theta`` is N-by-L with one
    reflection vector per surface, ``A`` is the N-by-K 0/1 selection matrix.
    """

    P: np.ndarray
    theta: np.ndarray
    A: np.ndarray

    def copy(self) -> "BeamformingState":
        return BeamformingState(self.P.copy(), self.theta.copy(), self.A.copy())

    def transmit_power(self) -> float:
        return float(np.sum(np.abs(self.P) ** 2))

    def validate(self, p_max: float, one_hot_rows: bool = True, tol: float = 1e-6) -> None:
        """Check the feasibility invariants (power budget, relaxed modulus,
        one-hot selection rows). ``one_hot_rows=False`` admits the
        selection-free baseline where A is all ones."""
        if self.transmit_power() > p_max * (1.0 + tol):
            raise ValueError(f"power budget violated: {self.transmit_power()} > {p_max}")
        if np.any(np.abs(self.theta) > 1.0 + tol):
            raise ValueError("reflection coefficients exceed unit modulus")
        if not np.all((self.A == 0) | (self.A == 1)):
            raise ValueError("selection matrix entries must be 0/1")
        if one_hot_rows and not np.all(self.A.sum(axis=1) == 1):
            raise ValueError("each selection row must sum to exactly 1")


def cascaded_channel(h_irs_user_nk: np.ndarray, theta_n: np.ndarray, H_n: np.ndarray) -> np.ndarray:
    """Row of the composite reflector link for one (surface, user) pair.

    Returns theta_n^H diag(h_nk^H) H_n as a length-M array; identical to
    h_nk^H Theta_n^H H_n with Theta_n = diag(theta_n).
    """
    h_row = np.conj(np.asarray(h_irs_user_nk))
    theta_row = np.conj(np.asarray(theta_n))
    H_n = np.asarray(H_n)
    if h_row.shape != theta_row.shape or H_n.shape[0] != h_row.shape[0]:
        raise ValueError(
            f"shape mismatch: h {h_row.shape}, theta {theta_row.shape}, H {H_n.shape}"
        )
    return (theta_row * h_row) @ H_n


def cascade_rows(channels: ChannelSet, theta: np.ndarray) -> np.ndarray:
    """All composite rows at once, (N, K, M)."""
    return np.einsum(
        "nl,nkl,nlm->nkm", np.conj(theta), np.conj(channels.h_irs_user), channels.H_bs_irs
    )


def effective_channels(
    state: BeamformingState, channels: ChannelSet, include_direct: bool = False
) -> np.ndarray:
    """Selection-weighted effective rows H_k^H for every user, (K, M)."""
    rows = cascade_rows(channels, state.theta)
    return effective_from_rows(rows, state.A, channels if include_direct else None)


def effective_from_rows(
    rows: np.ndarray, A: np.ndarray, direct_channels: ChannelSet | None = None
) -> np.ndarray:
    """Combine precomputed cascade rows under a selection matrix."""
    eff = np.einsum("nk,nkm->km", A.astype(rows.real.dtype), rows)
    if direct_channels is not None:
        eff = eff + np.conj(direct_channels.h_direct)
    return eff


def gain_matrix(eff_rows: np.ndarray, P: np.ndarray) -> np.ndarray:
    """G[k, i] = H_k^H p_i."""
    return eff_rows @ P


def sinr_from_gains(G: np.ndarray, noise: float) -> np.ndarray:
    """Per-user SINR from the K-by-K gain matrix."""
    power = np.abs(G) ** 2
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    return signal / (interference + noise)


def sinr(
    state: BeamformingState,
    channels: ChannelSet,
    noise: float,
    k: int | None = None,
    include_direct: bool = False,
) -> np.ndarray | float:
    """SINR of user ``k`` (or all users when ``k`` is None)."""
    if noise <= 0:
        raise ValueError("noise power must be > 0")
    eff = effective_channels(state, channels, include_direct)
    values = sinr_from_gains(gain_matrix(eff, state.P), noise)
    return values if k is None else float(values[k])


def rates_from_sinr(sinrs: np.ndarray) -> np.ndarray:
    return np.log2(1.0 + np.asarray(sinrs))


def per_user_rates(
    state: BeamformingState, channels: ChannelSet, noise: float, include_direct: bool = False
) -> np.ndarray:
    return rates_from_sinr(sinr(state, channels, noise, include_direct=include_direct))


def sum_rate(
    state: BeamformingState, channels: ChannelSet, noise: float, include_direct: bool = False
) -> float:
    """Total throughput sum_k log2(1 + SINR_k), in bps/Hz."""
    return float(np.sum(per_user_rates(state, channels, noise, include_direct)))
