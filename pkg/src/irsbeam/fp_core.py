"""Fractional-programming transforms and convex subproblem assembly.

The sum-rate objective is handled in two layers. A logarithm-free
surrogate introduces one nonnegative auxiliary per user (``alpha``) whose
closed-form optimum is the user's SINR and which makes the surrogate equal
to the true sum rate. The remaining sum-of-ratios term is linearized by
the quadratic transform: one complex auxiliary per user (``epsilon`` for
the precoder block, ``beta`` for the phase block) turns each ratio into a
concave quadratic that is tight at the closed-form auxiliary optimum.
With the auxiliaries frozen, each block becomes a concave quadratic
maximization with a power ball (precoder) or relaxed unit-modulus boxes
(phases) plus one second-order cone per user enforcing the SINR floor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .cone_solver import BallConstraint, ConeProblem, SocConstraint

LN2 = float(np.log(2.0))


@dataclass
class FpState:
    """Per-user auxiliaries of the two transform layers."""

    alpha: np.ndarray     # (K,) nonnegative
    epsilon: np.ndarray   # (K,) complex
    beta: np.ndarray      # (K,) complex

    @classmethod
    def zeros(cls, k: int) -> "FpState":
        return cls(np.zeros(k), np.zeros(k, dtype=complex), np.zeros(k, dtype=complex))


# -- auxiliary updates and surrogate values ---------------------------------


def update_alpha(sinrs: np.ndarray) -> np.ndarray:
    """Closed-form maximizer of the log-free surrogate: alpha_k = SINR_k."""
    sinrs = np.asarray(sinrs, dtype=float)
    if np.any(sinrs < 0):
        raise ValueError("SINR values must be nonnegative")
    return sinrs.copy()


def f1a_from_sinrs(alpha: np.ndarray, sinrs: np.ndarray) -> float:
    """Log-free surrogate of the sum rate (equals it at alpha = SINR)."""
    alpha = np.asarray(alpha, dtype=float)
    sinrs = np.asarray(sinrs, dtype=float)
    return float(
        np.sum(np.log2(1.0 + alpha))
        - np.sum(alpha) / LN2
        + np.sum((1.0 + alpha) * sinrs / ((1.0 + sinrs) * LN2))
    )


def f1a_value(state, fp: FpState, channels: ChannelSet, noise: float,
              include_direct: bool = False) -> float:
    from . import system

    sinrs = system.sinr(state, channels, noise, include_direct=include_direct)
    return f1a_from_sinrs(fp.alpha, sinrs)


def update_epsilon(G: np.ndarray, alpha: np.ndarray, noise: float) -> np.ndarray:
    """Quadratic-transform auxiliary for the precoder block.

    ``G[k, i] = H_k^H p_i``; the optimum is sqrt(1+alpha_k) * G[k,k] divided
    by the user's total received power plus noise.
    """
    total = np.sum(np.abs(G) ** 2, axis=1) + noise
    return np.sqrt(1.0 + np.asarray(alpha)) * np.diag(G) / total


def f2_value(G: np.ndarray, alpha: np.ndarray, noise: float) -> float:
    """Sum-of-ratios objective of the precoder block (denominator includes
    the own-signal term, equivalently SINR/(1+SINR) scaled by 1+alpha)."""
    num = (1.0 + np.asarray(alpha)) * np.abs(np.diag(G)) ** 2
    den = np.sum(np.abs(G) ** 2, axis=1) + noise
    return float(np.sum(num / den))


def f2a_value(G: np.ndarray, alpha: np.ndarray, epsilon: np.ndarray, noise: float) -> float:
    """Quadratic-transform surrogate; equals f2 at the optimal epsilon."""
    alpha = np.asarray(alpha)
    lin = 2.0 * np.sqrt(1.0 + alpha) * np.real(np.conj(epsilon) * np.diag(G))
    quad = np.abs(epsilon) ** 2 * (np.sum(np.abs(G) ** 2, axis=1) + noise)
    return float(np.sum(lin - quad))


def build_b_vectors(channels: ChannelSet, P: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Stacked phase-block data vectors, shape (K, K, N*L).

    Block n of ``b[k, i]`` is ``A[n,k] * diag(h_nk^H) H_n p_i``; the scalar
    seen by user k from stream i is ``theta_stack^H b[k, i]``.
    """
    t1 = np.einsum("nlm,mi->nli", channels.H_bs_irs, P)
    b = np.einsum("nk,nkl,nli->kinl", A.astype(float), np.conj(channels.h_irs_user), t1)
    n_irs, length = channels.H_bs_irs.shape[0], channels.H_bs_irs.shape[1]
    return b.reshape(b.shape[0], b.shape[1], n_irs * length)


def phase_gains(b: np.ndarray, theta_stack: np.ndarray) -> np.ndarray:
    """T[k, i] = theta_stack^H b[k, i]."""
    return np.einsum("n,kin->ki", np.conj(theta_stack), b)


def update_beta(b: np.ndarray, theta_stack: np.ndarray, alpha: np.ndarray,
                noise: float) -> np.ndarray:
    """Quadratic-transform auxiliary for the phase block."""
    T = phase_gains(b, theta_stack)
    total = np.sum(np.abs(T) ** 2, axis=1) + noise
    return np.sqrt(1.0 + np.asarray(alpha)) * np.diag(T) / total


def f3a_value(b: np.ndarray, theta_stack: np.ndarray, alpha: np.ndarray, noise: float) -> float:
    """Sum-of-ratios objective of the phase block."""
    T = phase_gains(b, theta_stack)
    num = (1.0 + np.asarray(alpha)) * np.abs(np.diag(T)) ** 2
    den = np.sum(np.abs(T) ** 2, axis=1) + noise
    return float(np.sum(num / den))


def f3b_value(b: np.ndarray, theta_stack: np.ndarray, alpha: np.ndarray,
              beta: np.ndarray, noise: float) -> float:
    """Quadratic-transform surrogate of the phase block."""
    T = phase_gains(b, theta_stack)
    alpha = np.asarray(alpha)
    lin = 2.0 * np.sqrt(1.0 + alpha) * np.real(np.conj(beta) * np.diag(T))
    quad = np.abs(beta) ** 2 * (np.sum(np.abs(T) ** 2, axis=1) + noise)
    return float(np.sum(lin - quad))


# -- complex stacking -------------------------------------------------------


def stack_precoder(P: np.ndarray) -> np.ndarray:
    """(M, K) -> (M*K,) with stream i occupying block i*M:(i+1)*M."""
    return P.T.reshape(-1).copy()


def unstack_precoder(x: np.ndarray, m: int, k: int) -> np.ndarray:
    return x.reshape(k, m).T.copy()


def stack_phases(theta: np.ndarray) -> np.ndarray:
    """(N, L) -> (N*L,), surface blocks in order."""
    return theta.reshape(-1).copy()


def unstack_phases(x: np.ndarray, n: int, length: int) -> np.ndarray:
    return x.reshape(n, length).copy()


# -- subproblem assembly ----------------------------------------------------


def assemble_p_subproblem(eff_rows: np.ndarray, alpha: np.ndarray, epsilon: np.ndarray,
                          noise: float, p_max: float, sinr_min: float) -> ConeProblem:
    """Concave quadratic cone program in the stacked precoder.

    The quadratic term is block-diagonal with identical per-stream blocks
    ``sum_k |eps_k|^2 H_k H_k^H``; the linear term stacks
    ``sqrt(1+alpha_k) eps_k H_k``. One power ball plus one SINR cone per
    user (the cone's right side stacks all K stream gains and the noise
    standard deviation).
    """
    k, m = eff_rows.shape
    n = m * k
    alpha = np.asarray(alpha, dtype=float)
    epsilon = np.asarray(epsilon, dtype=complex)
    h_cols = eff_rows.conj()                       # (K, M), column vectors H_k
    ez = (h_cols * np.abs(epsilon)[:, None]).T     # (M, K)
    z_block = ez @ ez.conj().T
    q = np.kron(np.eye(k), z_block)
    q_factor = np.kron(np.eye(k), ez)
    v = (np.sqrt(1.0 + alpha)[:, None] * epsilon[:, None] * h_cols).reshape(-1)
    const = float(np.sum(np.abs(epsilon) ** 2) * noise)

    sigma = float(np.sqrt(noise))
    gain = float(np.sqrt(1.0 + 1.0 / sinr_min))
    socs = []
    for user in range(k):
        lhs = np.zeros(n, dtype=complex)
        lhs[user * m : (user + 1) * m] = eff_rows[user]
        rhs = np.zeros((k, n), dtype=complex)
        for i in range(k):
            rhs[i, i * m : (i + 1) * m] = eff_rows[user]
        socs.append(SocConstraint(gain=gain, lhs=lhs, rhs=rhs, offset=sigma))

    return ConeProblem(
        Q=q, v=v, const=const,
        balls=[BallConstraint(radius=float(np.sqrt(p_max)))],
        socs=socs, box=None, q_factor=q_factor,
    )


def assemble_theta_subproblem(b: np.ndarray, alpha: np.ndarray, beta: np.ndarray,
                              noise: float, sinr_min: float) -> ConeProblem:
    """Concave quadratic cone program in the stacked phase vector.

    Quadratic term ``sum_k |beta_k|^2 sum_i b_ki b_ki^H``, linear term
    ``sum_k sqrt(1+alpha_k) conj(beta_k) b_kk``, relaxed per-coordinate
    unit boxes, and one SINR cone per user. Cone rows act on the stacked
    vector through ``conj(b)`` so their values match ``theta^H b``
    up to the conjugate, which the cone (norms, real parts) cannot see.
    """
    k = b.shape[0]
    n = b.shape[2]
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=complex)

    weighted = np.abs(beta)[:, None, None] * b       # (K, K, n)
    q_factor = weighted.reshape(k * k, n).T          # (n, K^2)
    q = q_factor @ q_factor.conj().T
    v = np.einsum("k,kn->n", np.sqrt(1.0 + alpha) * np.conj(beta), b[np.arange(k), np.arange(k)])
    const = float(np.sum(np.abs(beta) ** 2) * noise)

    sigma = float(np.sqrt(noise))
    gain = float(np.sqrt(1.0 + 1.0 / sinr_min))
    socs = [
        SocConstraint(gain=gain, lhs=np.conj(b[user, user]), rhs=np.conj(b[user]), offset=sigma)
        for user in range(k)
    ]

    return ConeProblem(
        Q=q, v=v, const=const, balls=[], socs=socs,
        box=np.ones(n, dtype=bool), q_factor=q_factor,
    )


def project_unit_modulus(theta: np.ndarray) -> np.ndarray:
    """Snap relaxed reflection coefficients back to the unit circle.

    Zero entries carry no phase information and map to 1."""
    theta = np.asarray(theta, dtype=complex)
    mag = np.abs(theta)
    out = np.where(mag > 0, theta / np.where(mag > 0, mag, 1.0), 1.0 + 0.0j)
    return out
