"""Alternating optimization loop and the three baseline methods.

Per iteration the blocks run in a fixed order: rate auxiliaries (closed
form), precoder (cone solve), phase vectors (cone solve), assignment
(exhaustive enumeration). A solver that reports an infeasible SINR floor
leaves its block untouched; two infeasible reports in a row abort the drop
so Monte Carlo aggregates can exclude it.

Baselines reuse the same loop with blocks disabled: ``wis`` fixes the
assignment to all-ones (no selection), ``rps`` freezes one random phase
draw and keeps selecting, ``nis`` fixes each surface to its nearest user.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fp_core, selection, system
from .channel import ChannelSet
from .cone_solver import SolverOptions, solve
from .scenario import STREAM_PHASES, ScenarioConfig, substream

log = logging.getLogger(__name__)

METHODS = ("proposed", "wis", "rps", "nis")


@dataclass
class OptimOptions:
    tol: float = 1e-4                 # relative sum-rate change declaring convergence
    max_iter: int = 50
    solver: SolverOptions = field(default_factory=SolverOptions)
    enum_budget: int = selection.DEFAULT_CANDIDATE_BUDGET
    allow_greedy_fallback: bool = False


@dataclass
class OptimResult:
    trace_sum_rate: np.ndarray
    trace_f1a: np.ndarray
    final_state: system.BeamformingState
    per_user_rates: np.ndarray
    status: str                      # converged | max_iter | infeasible_drop
    iterations: int
    sum_rate_relaxed: float
    sum_rate_projected: float

    @property
    def trace(self) -> list:
        return list(zip(self.trace_sum_rate.tolist(), self.trace_f1a.tolist()))


def nearest_user_assignment(channels: ChannelSet) -> np.ndarray:
    """Each surface serves its geometrically nearest user."""
    if channels.layout is None:
        raise ValueError("channel set carries no layout; cannot derive assignment")
    return np.argmin(channels.layout.dist_irs_user, axis=1)


def _initial_state(config: ScenarioConfig, channels: ChannelSet, rng,
                   a_matrix: np.ndarray) -> system.BeamformingState:
    """Random phases, matched-filter precoder at equal per-user power."""
    theta = np.exp(2j * np.pi * rng.uniform(size=(config.N, config.L)))
    rows = system.cascade_rows(channels, theta)
    eff = system.effective_from_rows(rows, a_matrix,
                                     channels if config.include_direct_link else None)
    P = np.zeros((config.M, config.K), dtype=complex)
    per_user = np.sqrt(config.p_max / config.K)
    for k in range(config.K):
        norm = np.linalg.norm(eff[k])
        if norm > 0:
            P[:, k] = per_user * np.conj(eff[k]) / norm
    total = float(np.sum(np.abs(P) ** 2))
    if total > config.p_max:
        P *= np.sqrt(config.p_max / total)
    return system.BeamformingState(P=P, theta=theta, A=a_matrix.astype(float))


def _align_precoder_phases(P: np.ndarray, eff_rows: np.ndarray) -> np.ndarray:
    """Rotate each stream so its own-channel gain is real nonnegative;
    rate-neutral, but matches the cone's realness side condition."""
    P = P.copy()
    for k in range(P.shape[1]):
        g = eff_rows[k] @ P[:, k]
        if abs(g) > 0:
            P[:, k] *= np.exp(-1j * np.angle(g))
    return P


def _align_theta_phase(theta_stack: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pick the global phase maximizing the worst own-signal real part.

    A common rotation leaves every rate and modulus unchanged but moves the
    warm start toward the cone's realness condition.
    """
    diag = fp_core.phase_gains(b, theta_stack).diagonal()
    if np.all(np.abs(diag) == 0):
        return theta_stack
    grid = np.exp(-1j * 2.0 * np.pi * np.arange(128) / 128.0)
    scores = np.min(np.real(grid[:, None] * diag[None, :]), axis=1)
    best = np.argmax(scores)
    # theta -> theta * e^{j phi} multiplies theta^H b by e^{-j phi}
    return theta_stack * np.conj(grid[best])


def _feasible_for(problem, x, tol=1e-7) -> bool:
    viol = problem.feasibility_violations(x)
    return max(viol.values()) <= tol


def _run_loop(config: ScenarioConfig, channels: ChannelSet, opts: OptimOptions,
              phases_rng, update_theta: bool, update_a: bool,
              a_init: str) -> OptimResult:
    noise = config.noise_power
    p_max = config.p_max
    sinr_min = config.sinr_min
    include_direct = config.include_direct_link
    direct_arg = channels if include_direct else None

    if a_init == "ones":
        a_matrix = np.ones((config.N, config.K))
    else:
        a_matrix = selection.assignment_to_matrix(nearest_user_assignment(channels), config.K)

    state = _initial_state(config, channels, phases_rng, a_matrix)
    if not update_theta and a_init != "ones":
        # the frozen-random-phase baseline keeps the initial draw unchanged
        pass

    trace_rate: list[float] = []
    trace_f1a: list[float] = []
    consecutive_fail = 0
    status = "max_iter"
    prev_rate = None
    iterations = 0

    for _ in range(opts.max_iter):
        iterations += 1
        aborted = False

        rows = system.cascade_rows(channels, state.theta)
        eff = system.effective_from_rows(rows, state.A, direct_arg)
        G = system.gain_matrix(eff, state.P)
        sinrs = system.sinr_from_gains(G, noise)
        alpha = fp_core.update_alpha(sinrs)

        # precoder block
        epsilon = fp_core.update_epsilon(G, alpha, noise)
        p_problem = fp_core.assemble_p_subproblem(eff, alpha, epsilon, noise, p_max, sinr_min)
        warm_p = fp_core.stack_precoder(_align_precoder_phases(state.P, eff))
        report = solve(p_problem, warm_p, opts.solver)
        if report.status == "infeasible":
            consecutive_fail += 1
        else:
            consecutive_fail = 0
            keep_warm = (
                _feasible_for(p_problem, warm_p)
                and p_problem.objective(warm_p) > report.objective
            )
            if not keep_warm:
                state.P = fp_core.unstack_precoder(report.x, config.M, config.K)
        if consecutive_fail >= 2:
            status = "infeasible_drop"
            aborted = True

        # phase block
        if not aborted and update_theta:
            b = fp_core.build_b_vectors(channels, state.P, state.A)
            theta_stack = _align_theta_phase(fp_core.stack_phases(state.theta), b)
            state.theta = fp_core.unstack_phases(theta_stack, config.N, config.L)
            beta = fp_core.update_beta(b, theta_stack, alpha, noise)
            t_problem = fp_core.assemble_theta_subproblem(b, alpha, beta, noise, sinr_min)
            report = solve(t_problem, theta_stack, opts.solver)
            if report.status == "infeasible":
                consecutive_fail += 1
            else:
                consecutive_fail = 0
                keep_warm = (
                    _feasible_for(t_problem, theta_stack)
                    and t_problem.objective(theta_stack) > report.objective
                )
                if not keep_warm:
                    state.theta = fp_core.unstack_phases(report.x, config.N, config.L)
            if consecutive_fail >= 2:
                status = "infeasible_drop"
                aborted = True

        # assignment block
        if not aborted and update_a:
            direct_gains = (
                system.gain_matrix(np.conj(channels.h_direct), state.P)
                if include_direct else None
            )
            sel = selection.enumerate_best_assignment(
                state, channels, noise, budget=opts.enum_budget,
                allow_greedy_fallback=opts.allow_greedy_fallback,
                direct_gains=direct_gains,
            )
            state.A = selection.assignment_to_matrix(sel.assignment, config.K)

        rate = system.sum_rate(state, channels, noise, include_direct)
        end_sinrs = system.sinr(state, channels, noise, include_direct=include_direct)
        trace_rate.append(rate)
        trace_f1a.append(fp_core.f1a_from_sinrs(alpha, end_sinrs))

        if aborted:
            break
        if prev_rate is not None and abs(rate - prev_rate) / max(1.0, abs(rate)) < opts.tol:
            status = "converged"
            break
        prev_rate = rate

    relaxed = system.sum_rate(state, channels, noise, include_direct)
    projected_state = system.BeamformingState(
        P=state.P, theta=fp_core.project_unit_modulus(state.theta), A=state.A
    )
    projected = system.sum_rate(projected_state, channels, noise, include_direct)
    log.debug(
        "relaxed sum rate %.6g, projected %.6g (gap %.3g)",
        relaxed, projected, relaxed - projected,
    )
    return OptimResult(
        trace_sum_rate=np.asarray(trace_rate),
        trace_f1a=np.asarray(trace_f1a),
        final_state=state,
        per_user_rates=system.per_user_rates(state, channels, noise, include_direct),
        status=status,
        iterations=iterations,
        sum_rate_relaxed=relaxed,
        sum_rate_projected=projected,
    )


def optimize(config: ScenarioConfig, channels: ChannelSet,
             opts: OptimOptions | None = None,
             phases_rng: np.random.Generator | None = None) -> OptimResult:
    """Joint precoder / phase / assignment optimization of one drop."""
    opts = opts or OptimOptions()
    if phases_rng is None:
        phases_rng = substream(config.seed, STREAM_PHASES, channels.drop)
    return _run_loop(config, channels, opts, phases_rng,
                     update_theta=True, update_a=True, a_init="nearest")


def run_baseline(method: str, config: ScenarioConfig, channels: ChannelSet,
                 opts: OptimOptions | None = None,
                 phases_rng: np.random.Generator | None = None) -> OptimResult:
    """Run one of the reference methods: ``wis``, ``rps`` or ``nis``."""
    opts = opts or OptimOptions()
    if phases_rng is None:
        phases_rng = substream(config.seed, STREAM_PHASES, channels.drop)
    if method == "proposed":
        return optimize(config, channels, opts, phases_rng)
    if method == "wis":
        return _run_loop(config, channels, opts, phases_rng,
                         update_theta=True, update_a=False, a_init="ones")
    if method == "rps":
        return _run_loop(config, channels, opts, phases_rng,
                         update_theta=False, update_a=True, a_init="nearest")
    if method == "nis":
        return _run_loop(config, channels, opts, phases_rng,
                         update_theta=True, update_a=False, a_init="nearest")
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
