"""Embedded solver for concave-quadratic cone programs.

Problems maximize ``-x^H Q x + 2 Re{v^H x} - const`` over complex ``x``
subject to any mix of:

* ball constraints ``||x_S||^2 <= R^2`` on a coordinate subset,
* per-coordinate unit boxes ``|x_j| <= 1``,
* second-order cones ``gain * Re{lhs @ x} >= ||(rhs @ x, offset)||`` with
  the side condition ``Im{lhs @ x} = 0``.

The algorithm is a primal log-barrier path-following method on the real
lifting (each complex coordinate becomes two reals). Newton systems are
solved through a block-diagonal-plus-low-rank decomposition of the barrier
Hessian, so a step costs O(d * r^2) for real dimension d and low-rank
budget r instead of O(d^3). Feasibility is established by a slack-variable
auxiliary problem when the starting point violates a cone; its certified
minimum doubles as the infeasibility detector.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg


# ---------------------------------------------------------------------------
# problem description
# ---------------------------------------------------------------------------


@dataclass
class BallConstraint:
    """``||x[indices]||^2 <= radius^2`` (indices=None means the whole vector)."""

    radius: float
    indices: Optional[np.ndarray] = None


@dataclass
class SocConstraint:
    """``gain * Re{lhs @ x} >= ||concat(rhs @ x, offset)||, Im{lhs @ x} = 0``.

    ``lhs`` is a complex row of length n, ``rhs`` a complex (m, n) matrix;
    both act by plain matrix multiplication against x.
    """

    gain: float
    lhs: np.ndarray
    rhs: np.ndarray
    offset: float


@dataclass
class ConeProblem:
    """Standard form consumed by :func:`solve`.

    ``Q`` is Hermitian PSD; ``q_factor`` optionally carries a tall factor F
    with ``Q = F F^H`` which the solver exploits for low-rank Newton steps.
    ``box`` marks complex coordinates constrained to ``|x_j| <= 1``
    (boolean mask of length n, or None).
    """

    Q: np.ndarray
    v: np.ndarray
    const: float = 0.0
    balls: list = field(default_factory=list)
    socs: list = field(default_factory=list)
    box: Optional[np.ndarray] = None
    q_factor: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.v.shape[0]

    def objective(self, x: np.ndarray) -> float:
        """Value of the maximized objective at ``x``."""
        quad = np.real(np.vdot(x, self.Q @ x))
        lin = 2.0 * np.real(np.vdot(self.v, x))
        return float(-quad + lin - self.const)

    def validate(self, hermitian_tol: float = 1e-10) -> "ConeProblem":
        n = self.n
        if self.Q.shape != (n, n):
            raise ValueError(f"Q has shape {self.Q.shape}, expected {(n, n)}")
        scale = max(1.0, float(np.abs(self.Q).max(initial=0.0)))
        if np.abs(self.Q - self.Q.conj().T).max(initial=0.0) > hermitian_tol * scale:
            raise ValueError("Q must be Hermitian")
        for ball in self.balls:
            if ball.radius <= 0:
                raise ValueError("ball radius must be > 0")
        for soc in self.socs:
            if soc.gain <= 0:
                raise ValueError("soc gain must be > 0")
            if soc.lhs.shape != (n,) or soc.rhs.shape[1] != n:
                raise ValueError("soc row dimensions inconsistent with problem")
            if soc.offset < 0:
                raise ValueError("soc offset must be >= 0")
        if self.box is not None and self.box.shape != (n,):
            raise ValueError("box mask must have length n")
        return self

    def feasibility_violations(self, x: np.ndarray) -> dict:
        """Relative violation of every constraint family at ``x``."""
        out = {"ball": 0.0, "box": 0.0, "soc": 0.0, "soc_im": 0.0}
        for ball in self.balls:
            sub = x if ball.indices is None else x[ball.indices]
            norm2 = float(np.sum(np.abs(sub) ** 2))
            out["ball"] = max(out["ball"], (norm2 - ball.radius**2) / max(1.0, ball.radius**2))
        if self.box is not None and self.box.any():
            out["box"] = float(np.max(np.abs(x[self.box]) ** 2 - 1.0, initial=0.0))
        for soc in self.socs:
            lhs_val = soc.lhs @ x
            t = soc.gain * lhs_val.real
            rhs_norm = math.hypot(float(np.linalg.norm(soc.rhs @ x)), soc.offset)
            out["soc"] = max(out["soc"], (rhs_norm - t) / max(1.0, rhs_norm))
            out["soc_im"] = max(out["soc_im"], abs(lhs_val.imag) / max(1.0, abs(lhs_val)))
        return out

    # -- debug dump (structured text) -----------------------------------

    def to_json(self) -> str:
        def cplx(arr):
            arr = np.asarray(arr)
            return {"re": arr.real.tolist(), "im": arr.imag.tolist()}

        doc = {
            "Q": cplx(self.Q),
            "v": cplx(self.v),
            "const": self.const,
            "balls": [
                {"radius": b.radius,
                 "indices": None if b.indices is None else np.asarray(b.indices).tolist()}
                for b in self.balls
            ],
            "socs": [
                {"gain": s.gain, "lhs": cplx(s.lhs), "rhs": cplx(s.rhs), "offset": s.offset}
                for s in self.socs
            ],
            "box": None if self.box is None else self.box.astype(bool).tolist(),
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConeProblem":
        doc = json.loads(text)

        def cplx(node):
            return np.asarray(node["re"], dtype=float) + 1j * np.asarray(node["im"], dtype=float)

        return cls(
            Q=cplx(doc["Q"]),
            v=cplx(doc["v"]),
            const=float(doc["const"]),
            balls=[
                BallConstraint(
                    radius=float(b["radius"]),
                    indices=None if b["indices"] is None else np.asarray(b["indices"], int),
                )
                for b in doc["balls"]
            ],
            socs=[
                SocConstraint(
                    gain=float(s["gain"]), lhs=cplx(s["lhs"]), rhs=cplx(s["rhs"]),
                    offset=float(s["offset"]),
                )
                for s in doc["socs"]
            ],
            box=None if doc["box"] is None else np.asarray(doc["box"], dtype=bool),
        ).validate()


@dataclass
class SolverOptions:
    tol_gap: float = 1e-5           # relative optimality gap
    tol_feas: float = 1e-8          # primal feasibility (absolute, scaled units)
    tol_kkt: float = 1e-6           # residual required for 'optimal'
    max_iter: int = 500             # total Newton-step budget
    mu: float = 20.0                # barrier parameter growth
    t0: float = 1.0
    newton_tol: float = 5e-15       # squared-decrement/2 threshold
    max_newton_per_round: int = 50
    max_rounds: int = 60
    feas_margin: float = 1e-7       # relative cone margin for "strictly feasible"


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    status: str                     # optimal | max_iter | infeasible
    kkt_residual: float
    iterations: int
    multipliers: Optional[dict] = None
    trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# real lifting helpers
# ---------------------------------------------------------------------------


def _lift_re_rows(rows: np.ndarray) -> np.ndarray:
    """Real functionals of Re{rows @ x} on z = [Re x; Im x]."""
    return np.hstack([rows.real, -rows.imag])


def _lift_im_rows(rows: np.ndarray) -> np.ndarray:
    return np.hstack([rows.imag, rows.real])


def _lift_grad(c: np.ndarray) -> np.ndarray:
    """Lift of a complex gradient vector: [Re c; Im c]."""
    return np.concatenate([c.real, c.imag])


def _factorize_q(problem: ConeProblem) -> np.ndarray:
    """Return F with Q ~= F F^H, preferring the supplied factor."""
    if problem.q_factor is not None:
        return np.asarray(problem.q_factor)
    w, vecs = np.linalg.eigh(problem.Q)
    floor = 1e-12 * max(1.0, float(w.max(initial=0.0)))
    keep = w > floor
    return vecs[:, keep] * np.sqrt(w[keep])


# ---------------------------------------------------------------------------
# compiled real-domain model
# ---------------------------------------------------------------------------


class _RealCone:
    """Real lifting of a (scaled) ConeProblem, optionally with a slack
    coordinate appended for the feasibility phase."""

    def __init__(self, problem: ConeProblem, with_slack: bool, slack_bounds=None):
        n = problem.n
        self.ncx = n
        self.with_slack = with_slack
        self.d = 2 * n + (1 if with_slack else 0)
        d = self.d

        fac = _factorize_q(problem)
        rows = fac.conj().T  # (r, n), act by rows @ x = F^H x
        if rows.shape[0]:
            g = np.vstack([_lift_re_rows(rows), _lift_im_rows(rows)])
            if with_slack:
                g = np.hstack([g, np.zeros((g.shape[0], 1))])
            self.G = np.ascontiguousarray(g)
        else:
            self.G = np.zeros((0, d))

        uv = _lift_grad(problem.v)
        if with_slack:
            # slack phase: objective is the slack coordinate itself
            uv = np.concatenate([np.zeros_like(uv), [-0.5]])
            self.G = np.zeros((0, d))
        self.u_v = uv

        self.balls = []
        for ball in problem.balls:
            idx = np.arange(n) if ball.indices is None else np.asarray(ball.indices, int)
            mask = np.zeros(d, dtype=bool)
            mask[idx] = True
            mask[idx + n] = True
            self.balls.append((mask, float(ball.radius) ** 2))

        self.box_idx = (
            np.flatnonzero(problem.box) if problem.box is not None else np.zeros(0, dtype=int)
        )

        self.socs = []
        eq_rows = []
        for soc in problem.socs:
            u_t = soc.gain * np.concatenate([soc.lhs.real, -soc.lhs.imag])
            e = np.concatenate([soc.lhs.imag, soc.lhs.real])
            ms = np.vstack([_lift_re_rows(soc.rhs), _lift_im_rows(soc.rhs)])
            if with_slack:
                u_t = np.concatenate([u_t, [1.0]])
                e = np.concatenate([e, [0.0]])
                ms = np.hstack([ms, np.zeros((ms.shape[0], 1))])
            self.socs.append((u_t, np.ascontiguousarray(ms), float(soc.offset) ** 2))
            eq_rows.append(e)
        self.E = np.vstack(eq_rows) if eq_rows else None

        # one-dimensional interval barriers (used to box the slack coordinate)
        self.intervals = []
        if with_slack and slack_bounds is not None:
            lo, hi = slack_bounds
            self.intervals.append((d - 1, float(lo), float(hi)))

        self.nu = (
            len(self.balls) + len(self.box_idx) + 2 * len(self.socs) + 2 * len(self.intervals)
        )

    # -- complex/real conversions ---------------------------------------

    def to_real(self, x: np.ndarray, slack: float = 0.0) -> np.ndarray:
        z = np.concatenate([x.real, x.imag])
        if self.with_slack:
            z = np.concatenate([z, [slack]])
        return z

    def to_complex(self, z: np.ndarray) -> np.ndarray:
        n = self.ncx
        return z[:n] + 1j * z[n : 2 * n]

    # -- objective --------------------------------------------------------

    def f_value(self, z: np.ndarray) -> float:
        val = -2.0 * float(self.u_v @ z)
        if self.G.shape[0]:
            gz = self.G @ z
            val += float(gz @ gz)
        return val

    def f_grad(self, z: np.ndarray) -> np.ndarray:
        g = -2.0 * self.u_v.copy()
        if self.G.shape[0]:
            g += 2.0 * (self.G.T @ (self.G @ z))
        return g

    # -- constraint slacks -------------------------------------------------

    def slacks(self, z: np.ndarray):
        """Return (ball_slacks, box_slacks, soc (q, t, Ms z) triples,
        interval slack pairs) or None when out of domain."""
        n = self.ncx
        ball_s = []
        for mask, r2 in self.balls:
            s = r2 - float(z[mask] @ z[mask])
            if s <= 0.0:
                return None
            ball_s.append(s)
        if len(self.box_idx):
            zr = z[self.box_idx]
            zi = z[self.box_idx + n]
            box_s = 1.0 - (zr * zr + zi * zi)
            if np.any(box_s <= 0.0):
                return None
        else:
            box_s = np.zeros(0)
        soc_s = []
        for u_t, ms, sig2 in self.socs:
            t = float(u_t @ z)
            if t <= 0.0:
                return None
            msz = ms @ z
            q = t * t - float(msz @ msz) - sig2
            if q <= 0.0:
                return None
            soc_s.append((q, t, msz))
        int_s = []
        for idx, lo, hi in self.intervals:
            a, b = z[idx] - lo, hi - z[idx]
            if a <= 0.0 or b <= 0.0:
                return None
            int_s.append((a, b))
        return ball_s, box_s, soc_s, int_s

    def barrier_value(self, slk) -> float:
        ball_s, box_s, soc_s, int_s = slk
        val = -sum(math.log(s) for s in ball_s)
        if len(box_s):
            val -= float(np.log(box_s).sum())
        val -= sum(math.log(q) for q, _, _ in soc_s)
        val -= sum(math.log(a) + math.log(b) for a, b in int_s)
        return val

    def barrier_grad(self, z: np.ndarray, slk) -> np.ndarray:
        n = self.ncx
        ball_s, box_s, soc_s, int_s = slk
        g = np.zeros(self.d)
        for (mask, _), s in zip(self.balls, ball_s):
            g[mask] += (2.0 / s) * z[mask]
        if len(self.box_idx):
            coef = 2.0 / box_s
            g[self.box_idx] += coef * z[self.box_idx]
            g[self.box_idx + n] += coef * z[self.box_idx + n]
        for (u_t, ms, _), (q, t, msz) in zip(self.socs, soc_s):
            grad_q = 2.0 * t * u_t - 2.0 * (ms.T @ msz)
            g -= grad_q / q
        for (idx, _, _), (a, b) in zip(self.intervals, int_s):
            g[idx] += 1.0 / b - 1.0 / a
        return g


# ---------------------------------------------------------------------------
# Newton machinery: H = D (2x2 block diagonal) + W diag(s) W^T
# ---------------------------------------------------------------------------


class _BlockDiag:
    """2x2-block-diagonal operator over paired real coordinates, plus an
    optional scalar for the slack coordinate."""

    def __init__(self, ncx: int, with_slack: bool, reg: float):
        self.ncx = ncx
        self.with_slack = with_slack
        self.drr = np.full(ncx, reg)
        self.dii = np.full(ncx, reg)
        self.dri = np.zeros(ncx)
        self.dtau = reg

    def apply(self, b: np.ndarray) -> np.ndarray:
        n = self.ncx
        br, bi = b[:n], b[n : 2 * n]
        out = np.empty_like(b)
        out[:n] = self.drr[:, None] * br + self.dri[:, None] * bi if b.ndim == 2 else (
            self.drr * br + self.dri * bi
        )
        out[n : 2 * n] = self.dri[:, None] * br + self.dii[:, None] * bi if b.ndim == 2 else (
            self.dri * br + self.dii * bi
        )
        if self.with_slack:
            out[2 * n] = self.dtau * b[2 * n]
        return out

    def apply_inv(self, b: np.ndarray) -> np.ndarray:
        n = self.ncx
        det = self.drr * self.dii - self.dri * self.dri
        br, bi = b[:n], b[n : 2 * n]
        out = np.empty_like(b)
        if b.ndim == 2:
            out[:n] = (self.dii[:, None] * br - self.dri[:, None] * bi) / det[:, None]
            out[n : 2 * n] = (-self.dri[:, None] * br + self.drr[:, None] * bi) / det[:, None]
        else:
            out[:n] = (self.dii * br - self.dri * bi) / det
            out[n : 2 * n] = (-self.dri * br + self.drr * bi) / det
        if self.with_slack:
            out[2 * n] = b[2 * n] / self.dtau
        return out


class _NewtonSystem:
    def __init__(self, cone: _RealCone, z: np.ndarray, slk, t_bar: float, reg: float):
        n = cone.ncx
        ball_s, box_s, soc_s, int_s = slk
        D = _BlockDiag(n, cone.with_slack, reg)

        cols = []
        weights = []
        if cone.G.shape[0]:
            cols.append(cone.G.T)
            weights.append(np.full(cone.G.shape[0], 2.0 * t_bar))
        for (mask, _), s in zip(cone.balls, ball_s):
            half = mask[:n]
            D.drr[half] += 2.0 / s
            D.dii[half] += 2.0 / s
            zc = np.where(mask, z, 0.0)
            cols.append(zc[:, None])
            weights.append(np.array([4.0 / (s * s)]))
        if len(cone.box_idx):
            idx = cone.box_idx
            zr, zi = z[idx], z[idx + n]
            c1 = 2.0 / box_s
            c2 = 4.0 / (box_s * box_s)
            D.drr[idx] += c1 + c2 * zr * zr
            D.dii[idx] += c1 + c2 * zi * zi
            D.dri[idx] += c2 * zr * zi
        for (u_t, ms, _), (q, t, msz) in zip(cone.socs, soc_s):
            grad_q = 2.0 * t * u_t - 2.0 * (ms.T @ msz)
            cols.append(grad_q[:, None])
            weights.append(np.array([1.0 / (q * q)]))
            cols.append(u_t[:, None])
            weights.append(np.array([-2.0 / q]))
            cols.append(ms.T)
            weights.append(np.full(ms.shape[0], 2.0 / q))
        for (idx, _, _), (a, b) in zip(cone.intervals, int_s):
            if cone.with_slack and idx == cone.d - 1:
                D.dtau += 1.0 / (a * a) + 1.0 / (b * b)
            else:  # pragma: no cover - intervals only box the slack coordinate
                raise NotImplementedError

        self.D = D
        if cols:
            self.W = np.concatenate(cols, axis=1)
            self.s = np.concatenate(weights)
            small = np.diag(1.0 / self.s) + self.W.T @ D.apply_inv(self.W)
            self.lu = scipy.linalg.lu_factor(small)
        else:
            self.W = None
            self.s = None
            self.lu = None

    def _solve_once(self, b: np.ndarray) -> np.ndarray:
        dib = self.D.apply_inv(b)
        if self.W is None:
            return dib
        t = self.W.T @ dib
        u = scipy.linalg.lu_solve(self.lu, t)
        return dib - self.D.apply_inv(self.W @ u)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Apply H^-1 with iterative refinement; the low-rank correction can
        be badly conditioned when a cone is nearly active."""
        x = self._solve_once(b)
        for _ in range(2):
            r = b - self.apply(x)
            x = x + self._solve_once(r)
        return x

    def apply(self, b: np.ndarray) -> np.ndarray:
        out = self.D.apply(b)
        if self.W is not None:
            out = out + self.W @ (self.s * (self.W.T @ b))
        return out


def _project_to_nullspace(E: Optional[np.ndarray], z: np.ndarray) -> np.ndarray:
    if E is None or not E.shape[0]:
        return z
    w = np.linalg.lstsq(E @ E.T, E @ z, rcond=None)[0]
    return z - E.T @ w


def _newton_step(cone: _RealCone, sys: _NewtonSystem, grad: np.ndarray):
    """Equality-constrained Newton direction and dual estimate."""
    if cone.E is None or not cone.E.shape[0]:
        return sys.solve(-grad), None
    Et = cone.E.T
    Y = sys.solve(Et)
    schur = cone.E @ Y
    h = sys.solve(-grad)
    rhs = cone.E @ h
    try:
        w = np.linalg.solve(schur, rhs)
    except np.linalg.LinAlgError:
        w = np.linalg.lstsq(schur, rhs, rcond=None)[0]
    return h - Y @ w, w


# ---------------------------------------------------------------------------
# centering
# ---------------------------------------------------------------------------


def _center(cone: _RealCone, z: np.ndarray, t_bar: float, opts: SolverOptions,
            budget: int, stop_probe=None):
    """Newton-center t_bar * F + barrier over the equality subspace.

    Returns (z, eq_dual, steps, hit_budget, probe_hit). ``stop_probe`` may
    terminate centering early (used by the feasibility phase). The
    decrement threshold grows with the barrier magnitude: below the
    floating-point noise floor of t_bar * F further centering is
    meaningless.
    """
    steps = 0
    eq_dual = None
    reg = 1e-12
    for _ in range(opts.max_newton_per_round):
        if steps >= budget:
            return z, eq_dual, steps, True, False
        slk = cone.slacks(z)
        if slk is None:
            raise RuntimeError("iterate left the barrier domain")
        grad = t_bar * cone.f_grad(z) + cone.barrier_grad(z, slk)
        sys = _NewtonSystem(cone, z, slk, t_bar, reg)
        try:
            delta, eq_dual = _newton_step(cone, sys, grad)
        except (scipy.linalg.LinAlgError, ValueError):
            delta = None
        if delta is None or not np.all(np.isfinite(delta)):
            # fall back to a projected gradient step
            delta = _project_to_nullspace(cone.E, -grad)
        decrement = float(delta @ sys.apply(delta))
        if decrement / 2.0 <= opts.newton_tol:
            return z, eq_dual, steps, False, False
        accepted = False
        if decrement <= 0.0625:  # quadratic phase: full step, no line search
            cand = z + delta
            if cone.slacks(cand) is not None:
                z = cand
                accepted = True
        if not accepted:
            slope = float(grad @ delta)
            if slope > 0.0:
                delta = _project_to_nullspace(cone.E, -grad)
                slope = float(grad @ delta)
                if slope >= 0.0:
                    return z, eq_dual, steps, False, False
            psi0 = t_bar * cone.f_value(z) + cone.barrier_value(slk)
            step = 1.0
            for _ in range(70):
                cand = z + step * delta
                cslk = cone.slacks(cand)
                if cslk is not None:
                    psi = t_bar * cone.f_value(cand) + cone.barrier_value(cslk)
                    if psi <= psi0 + 0.25 * step * slope:
                        z = cand
                        accepted = True
                        break
                step *= 0.5
        steps += 1
        if not accepted:
            return z, eq_dual, steps, False, False
        if stop_probe is not None and stop_probe(z):
            return z, eq_dual, steps, False, True
    return z, eq_dual, steps, False, False


# ---------------------------------------------------------------------------
# the public solver
# ---------------------------------------------------------------------------


def _scale_problem(problem: ConeProblem):
    """Normalize coordinates by the tightest full ball (unless unit boxes
    already pin the scale) and the objective by its data magnitude."""
    full_radii = [b.radius for b in problem.balls if b.indices is None]
    boxed = problem.box is not None and bool(np.any(problem.box))
    s_x = min(full_radii) if full_radii and not boxed else 1.0
    q_scale = float(np.linalg.norm(problem.Q, "fro")) * s_x * s_x
    v_scale = float(np.linalg.norm(problem.v)) * s_x
    s_f = max(q_scale, v_scale, 1e-12)
    scaled = ConeProblem(
        Q=problem.Q * (s_x * s_x / s_f),
        v=problem.v * (s_x / s_f),
        const=0.0,
        balls=[BallConstraint(radius=b.radius / s_x, indices=b.indices) for b in problem.balls],
        socs=[
            SocConstraint(gain=s.gain, lhs=s.lhs * s_x, rhs=s.rhs * s_x, offset=s.offset)
            for s in problem.socs
        ],
        box=problem.box,
        q_factor=None if problem.q_factor is None else problem.q_factor * (s_x / np.sqrt(s_f)),
    )
    return scaled, s_x, s_f


def _strictly_feasible(cone: _RealCone, z: np.ndarray, margin: float) -> bool:
    n = cone.ncx
    x = z[: 2 * n]
    for u_t, ms, sig2 in cone.socs:
        t = float(u_t[: 2 * n] @ x)
        rhs = math.sqrt(float(np.sum((ms[:, : 2 * n] @ x) ** 2)) + sig2)
        if t - rhs < margin * max(1.0, rhs):
            return False
    return True


def _shrink_into_domain(cone: _RealCone, z: np.ndarray) -> np.ndarray:
    """Pull a point strictly inside every ball/box (cones handled later)."""
    n = cone.ncx
    z = z.copy()
    for mask, r2 in cone.balls:
        norm2 = float(z[mask] @ z[mask])
        if norm2 >= r2 * (1.0 - 1e-9):
            z[mask] *= math.sqrt(r2 * (1.0 - 1e-7) / max(norm2, 1e-300))
    if len(cone.box_idx):
        idx = cone.box_idx
        mag = np.sqrt(z[idx] ** 2 + z[idx + n] ** 2)
        bad = mag >= 1.0 - 1e-9
        if np.any(bad):
            shrink = (1.0 - 1e-7) / mag[bad]
            z[idx[bad]] *= shrink
            z[idx[bad] + n] *= shrink
    return z


def _phase_one(scaled: ConeProblem, cone: _RealCone, z0x: np.ndarray,
               opts: SolverOptions, budget: int):
    """Minimize the cone slack; returns (feasible_z_or_None, steps_used)."""
    margins = []
    n = cone.ncx
    for u_t, ms, sig2 in cone.socs:
        t = float(u_t[: 2 * n] @ z0x)
        rhs = math.sqrt(float(np.sum((ms[:, : 2 * n] @ z0x) ** 2)) + sig2)
        margins.append(rhs - t)
    tau0 = max(margins) if margins else 0.0
    tau0 = max(tau0 * 1.05 + 0.1, 0.2)
    bounds = (-10.0 * max(1.0, tau0), 2.0 * tau0 + 1.0)

    aux = _RealCone(scaled, with_slack=True, slack_bounds=bounds)
    z = np.concatenate([z0x, [tau0]])
    if aux.slacks(z) is None:
        return None, 0

    go = opts.feas_margin

    def probe(zc):
        return zc[-1] < 0.0 and _strictly_feasible(aux, zc, go)

    steps_total = 0
    t_bar = opts.t0
    for _ in range(opts.max_rounds):
        z, _, steps, hit_budget, probe_hit = _center(
            aux, z, t_bar, opts, budget - steps_total, stop_probe=probe
        )
        steps_total += steps
        if probe_hit or probe(z):
            return z[:-1], steps_total
        if hit_budget:
            return None, steps_total
        if aux.nu / t_bar <= max(go * 0.25, 1e-12):
            return None, steps_total  # certified: no strictly feasible point
        t_bar *= opts.mu
    return None, steps_total


def solve(problem: ConeProblem, warm_start: Optional[np.ndarray] = None,
          opts: Optional[SolverOptions] = None) -> SolveReport:
    """Maximize the cone program and report the solution with diagnostics.

    Deterministic given (problem, warm_start, opts). ``infeasible`` status
    means no point strictly satisfies every cone; the caller decides how to
    fall back.
    """
    opts = opts or SolverOptions()
    problem.validate()
    n = problem.n

    # structural infeasibility: a cone whose left side is identically zero
    for soc in problem.socs:
        if np.abs(soc.lhs).max(initial=0.0) == 0.0 and soc.offset > 0.0:
            return SolveReport(
                x=np.zeros(n, dtype=complex), objective=-math.inf, status="infeasible",
                kkt_residual=math.inf, iterations=0,
            )

    scaled, s_x, s_f = _scale_problem(problem)
    cone = _RealCone(scaled, with_slack=False)

    if warm_start is not None:
        z = cone.to_real(np.asarray(warm_start, dtype=complex) / s_x)
    else:
        z = np.zeros(cone.d)
    z = _project_to_nullspace(cone.E, z)
    z = _shrink_into_domain(cone, z)

    iterations = 0
    if cone.socs and not (_strictly_feasible(cone, z, opts.feas_margin)
                          and cone.slacks(z) is not None):
        zx, used = _phase_one(scaled, cone, z, opts, opts.max_iter)
        iterations += used
        if zx is None:
            return SolveReport(
                x=np.zeros(n, dtype=complex), objective=-math.inf, status="infeasible",
                kkt_residual=math.inf, iterations=iterations,
            )
        z = zx
    if cone.slacks(z) is None:
        # no cones to blame: fall back to the origin, which is always interior
        z = np.zeros(cone.d)

    trace = []
    t_bar = opts.t0
    status = "max_iter"
    best = None  # (kkt, z, t_bar, mults, gap_ok)
    for _ in range(opts.max_rounds):
        z, eq_dual, steps, hit_budget, _ = _center(cone, z, t_bar, opts,
                                                   opts.max_iter - iterations)
        iterations += steps
        x = cone.to_complex(z) * s_x
        mults = _multipliers(problem, cone, z, t_bar, eq_dual, s_x, s_f)
        kkt = kkt_residual(problem, x, mults)
        trace.append({
            "objective": problem.objective(x),
            "kkt": kkt,
            "gap_bound": s_f * cone.nu / t_bar,
            "t": t_bar,
        })
        f_scaled = abs(cone.f_value(z))
        gap_ok = cone.nu / t_bar <= opts.tol_gap * max(1.0, f_scaled)
        if best is None or (kkt < best[0] and gap_ok >= best[4]):
            best = (kkt, z.copy(), t_bar, mults, gap_ok)
        if gap_ok and kkt <= opts.tol_kkt:
            status = "optimal"
            best = (kkt, z.copy(), t_bar, mults, gap_ok)
            break
        if hit_budget or iterations >= opts.max_iter:
            status = "max_iter"
            break
        # stepping far past the tolerance-implied parameter only erodes
        # floating-point accuracy of the barrier terms
        t_target = max(
            cone.nu / (opts.tol_gap * max(1.0, f_scaled)),
            10.0 / (opts.tol_kkt * max(1.0, f_scaled)),
        )
        t_next = min(t_bar * opts.mu, 1.25 * t_target)
        if t_next <= t_bar * 1.000001:
            break  # parameter capped and residual stalled: numerical limit
        t_bar = t_next

    kkt, z, t_bar, mults, gap_ok = best
    x = cone.to_complex(z) * s_x
    if status == "optimal" and not (gap_ok and kkt <= opts.tol_kkt):
        status = "max_iter"
    return SolveReport(
        x=x, objective=problem.objective(x), status=status, kkt_residual=kkt,
        iterations=iterations, multipliers=mults, trace=trace,
    )


# ---------------------------------------------------------------------------
# KKT residual
# ---------------------------------------------------------------------------


def _multipliers(problem: ConeProblem, cone: _RealCone, z: np.ndarray, t_bar: float,
                 eq_dual, s_x: float, s_f: float) -> dict:
    """Dual estimates at a central point, in original problem units.

    With the barrier at parameter t, the multiplier of each quadratic-form
    constraint is s_f / (t * slack). Equality duals rescale by s_f.
    """
    slk = cone.slacks(z)
    if slk is None:
        raise RuntimeError("cannot extract multipliers outside the domain")
    ball_s, box_s, soc_s, _ = slk
    # ball/box slacks live in scaled coordinates (divide by s_x^2 to map the
    # multiplier back); cone rows absorbed the scale, so q is already in
    # original units.
    lam_ball = np.array([s_f / (t_bar * s * s_x * s_x) for s in ball_s])
    lam_box = np.zeros(problem.n)
    if len(cone.box_idx):
        lam_box[cone.box_idx] = s_f / (t_bar * box_s * s_x * s_x)
    lam_soc = np.array([s_f / (t_bar * q) for q, _, _ in soc_s])
    if eq_dual is not None:
        nu_eq = np.asarray(eq_dual) * s_f / t_bar
    else:
        nu_eq = np.zeros(len(problem.socs))
    return {"ball": lam_ball, "box": lam_box, "soc": lam_soc, "eq": nu_eq}


def kkt_residual(problem: ConeProblem, x: np.ndarray, multipliers: dict) -> float:
    """Max of stationarity, primal/dual feasibility and complementary
    slackness residuals of the lifted real program, each in relative form.

    Constraint functions are the quadratic slack forms (ball/box:
    ``||.||^2 - R^2``; cone: ``||rhs x||^2 + offset^2 - t^2`` on the t > 0
    branch) together with the cone's linear equality.
    """
    n = problem.n
    obj_scale = max(1.0, abs(problem.objective(x)))

    grad_f = _lift_grad(2.0 * (problem.Q @ x - problem.v))  # gradient of minimized objective
    stat = grad_f.copy()
    primal = 0.0
    dual = 0.0
    cs = 0.0

    lam_ball = np.asarray(multipliers.get("ball", np.zeros(len(problem.balls))))
    for lam, ball in zip(lam_ball, problem.balls):
        idx = np.arange(n) if ball.indices is None else np.asarray(ball.indices, int)
        sub = np.zeros(n, dtype=complex)
        sub[idx] = x[idx]
        f_val = float(np.sum(np.abs(x[idx]) ** 2)) - ball.radius**2
        stat += lam * _lift_grad(2.0 * sub)
        primal = max(primal, f_val / max(1.0, ball.radius**2))
        dual = max(dual, -lam)
        cs = max(cs, abs(lam * f_val) / obj_scale)

    lam_box = np.asarray(multipliers.get("box", np.zeros(n)))
    if problem.box is not None:
        for j in np.flatnonzero(problem.box):
            f_val = float(np.abs(x[j]) ** 2) - 1.0
            e = np.zeros(n, dtype=complex)
            e[j] = x[j]
            stat += lam_box[j] * _lift_grad(2.0 * e)
            primal = max(primal, f_val)
            dual = max(dual, -lam_box[j])
            cs = max(cs, abs(lam_box[j] * f_val) / obj_scale)

    lam_soc = np.asarray(multipliers.get("soc", np.zeros(len(problem.socs))))
    nu_eq = np.asarray(multipliers.get("eq", np.zeros(len(problem.socs))))
    for lam, nu, soc in zip(lam_soc, nu_eq, problem.socs):
        lhs_val = soc.lhs @ x
        t = soc.gain * lhs_val.real
        s_vec = soc.rhs @ x
        rhs2 = float(np.sum(np.abs(s_vec) ** 2)) + soc.offset**2
        f_val = rhs2 - t * t
        # grad of f: 2 * lift(rhs^H s) - 2 t * gain * [Re lhs; -Im lhs]
        grad = 2.0 * _lift_grad(soc.rhs.conj().T @ s_vec)
        grad -= 2.0 * t * soc.gain * np.concatenate([soc.lhs.real, -soc.lhs.imag])
        stat += lam * grad
        stat += nu * np.concatenate([soc.lhs.imag, soc.lhs.real])
        primal = max(primal, (math.sqrt(rhs2) - t) / max(1.0, math.sqrt(rhs2)))
        primal = max(primal, abs(lhs_val.imag) / max(1.0, abs(lhs_val)))
        dual = max(dual, -lam)
        cs = max(cs, abs(lam * f_val) / obj_scale)

    stat_rel = float(np.abs(stat).max(initial=0.0)) / max(
        1.0, float(np.abs(grad_f).max(initial=0.0))
    )
    return max(stat_rel, primal, dual, cs)
