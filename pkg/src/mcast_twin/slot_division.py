"""Slot division by sequential quadratic programming.

Once versions are fixed, only the rebuffering term of each SMG depends on
its slot share ``beta``; the objective we minimize is the negated weighted
MG QoE

    value(beta) = const + sum_g ow_g * max(K_g / beta_g - q_g, 0)

where ``ow_g = omega_g * lambda1_g``, ``K_g`` is the binding (transmission
vs. transcoding) service delay at ``beta = 1`` and ``q_g`` the current
buffer. Each term is convex and nonincreasing in ``beta_g``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from mcast_twin import qoe
from mcast_twin.buffering import MEGABIT, BufferingPlan, multicast_min_rate
from mcast_twin.core import SchedulingDecision, SmgState, SystemResources, VideoCatalog

log = logging.getLogger(__name__)

BETA_MIN = 1e-4
HESSIAN_REG = 1e-6
KINK_SIGMA = 0.5
# inside the optimizer a kink coordinate may only move into its active piece,
# whose one-sided derivative is the sigma = 1 subgradient
SQP_SIGMA = 1.0
ARMIJO_C = 1e-4


@dataclass(frozen=True)
class TransformedObjective:
    """Negated weighted QoE as a function of the slot ratios alone."""

    delay_at_full: np.ndarray  # K_g, seconds at beta = 1
    buffer: np.ndarray  # q_g
    penalty_weight: np.ndarray  # omega_g * lambda1_g
    constant: float  # beta-free part: -sum omega_g (Q_g - lambda2_g V_g)
    beta_min: float = BETA_MIN

    def __post_init__(self):
        for name in ("delay_at_full", "buffer", "penalty_weight"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def n(self) -> int:
        return len(self.delay_at_full)

    @property
    def phi1(self) -> np.ndarray:
        """beta-free numerator of each active rebuffering term."""
        return self.penalty_weight * self.delay_at_full

    @property
    def kink(self) -> np.ndarray:
        """Share at which service delay equals the buffer (rebuffering starts below it)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(self.buffer > 0, self.delay_at_full / self.buffer, np.inf)
        return np.where(self.delay_at_full > 0, k, 0.0)

    @property
    def has_work(self) -> np.ndarray:
        return (self.delay_at_full > 0) & (self.penalty_weight > 0)

    def terms(self, beta: Sequence[float]) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        with np.errstate(divide="ignore"):
            delay = np.where(self.delay_at_full > 0, self.delay_at_full / beta, 0.0)
        return self.penalty_weight * np.maximum(delay - self.buffer, 0.0)

    def value(self, beta: Sequence[float]) -> float:
        return float(self.constant + self.terms(beta).sum())

    def _state(self, beta: np.ndarray) -> np.ndarray:
        # -1 flat, 0 at the kink, +1 rebuffering active
        delay = self.delay_at_full / beta
        gap = delay - self.buffer
        tol = 1e-12 * np.maximum(1.0, np.abs(self.buffer))
        state = np.where(gap > tol, 1, np.where(np.abs(gap) <= tol, 0, -1))
        return np.where(self.has_work, state, -1)

    def subgradient(self, beta: Sequence[float], sigma: float = KINK_SIGMA) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        state = self._state(beta)
        slope = -self.phi1 / beta**2
        return np.where(state == 1, slope, np.where(state == 0, sigma * slope, 0.0))

    def hessian_diag(self, beta: Sequence[float]) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        curv = np.where(self._state(beta) >= 0, 2.0 * self.phi1 / beta**3, 0.0)
        return curv + HESSIAN_REG

    def piece_bounds(self, beta: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """Box of the smooth piece each coordinate currently sits on.

        A flat coordinate may shrink only down to its kink and an active
        one may grow only up to it; the quadratic model is exact inside.
        """
        beta = np.asarray(beta, dtype=float)
        state = self._state(beta)
        kink = np.clip(self.kink, self.beta_min, 1.0)
        lo = np.where(state == -1, np.where(self.has_work, kink, self.beta_min), self.beta_min)
        hi = np.where(state >= 0, kink, 1.0)
        lo = np.minimum(lo, beta)
        hi = np.maximum(hi, beta)
        return lo, hi

    @classmethod
    def from_context(
        cls,
        versions: Sequence[Sequence[int]],
        plan: BufferingPlan,
        smgs: Sequence[SmgState],
        res: SystemResources,
        catalog: VideoCatalog,
        buffers: Sequence[float] | None = None,
        beta_min: float = BETA_MIN,
    ) -> "TransformedObjective":
        """Collect the per-SMG constants for fixed versions.

        ``buffers`` replaces virtual buffer 0 as the rebuffering reference
        (used by the scheme that counts every buffered second).
        """
        G = len(smgs)
        decision = SchedulingDecision(tuple(tuple(v) for v in versions), (1.0,) * G)
        mbits = qoe.selected_megabits(decision, plan, catalog)
        weights = qoe.weighting(plan)
        q0 = [s.buffers[0] for s in smgs] if buffers is None else list(buffers)
        K, pen, const = [], [], 0.0
        for g, s in enumerate(smgs):
            work = float(mbits[g].sum())
            if work == 0:
                K.append(0.0)
                pen.append(0.0)
                continue
            r_min = multicast_min_rate(smgs, g, res)
            tx = work * MEGABIT / r_min if r_min > 0 else math.inf
            tc = res.computing_density * work / res.computing_capacity
            K.append(max(tx, tc))
            pen.append(weights[g] * s.lambda_rebuffer)
            quality, per_seg = qoe.video_quality(mbits[g], catalog.segment_duration)
            variation = qoe.quality_variation(per_seg, s.last_quality)
            const -= weights[g] * (quality - s.lambda_variation * variation)
        return cls(np.array(K), np.array(q0, dtype=float), np.array(pen), const, beta_min)


def transformed_value(objective: TransformedObjective, beta: Sequence[float]) -> float:
    return objective.value(beta)


def subgradient(objective: TransformedObjective, beta: Sequence[float], sigma: float = KINK_SIGMA) -> np.ndarray:
    return objective.subgradient(beta, sigma)


class QpInfeasible(RuntimeError):
    pass


def solve_qp_subproblem(
    beta: Sequence[float],
    grad: Sequence[float],
    hess_diag: Sequence[float],
    lower: float | Sequence[float] = BETA_MIN,
    upper: float | Sequence[float] = 1.0,
    cap: float = 1.0,
) -> np.ndarray:
    """Direction ``d`` minimizing ``grad.d + d.H.d / 2`` for diagonal ``H > 0``.

    Constraints: ``sum(beta + d) <= cap`` and ``lower <= beta + d <= upper``.
    The only coupling is the sum constraint, so for a multiplier ``nu >= 0``
    each coordinate is the clipped Newton step ``clip(-(g + nu) / h)``. The
    active bounds change only at the breakpoints of that piecewise-linear
    map; we walk the sorted breakpoints to the segment where the sum
    constraint is met with equality and solve for ``nu`` there.
    """
    beta = np.asarray(beta, dtype=float)
    g = np.asarray(grad, dtype=float)
    h = np.asarray(hess_diag, dtype=float)
    if np.any(h <= 0):
        raise ValueError("Hessian diagonal must be positive")
    lo = np.broadcast_to(np.asarray(lower, dtype=float), beta.shape) - beta
    hi = np.broadcast_to(np.asarray(upper, dtype=float), beta.shape) - beta
    slack = cap - beta.sum()
    if lo.sum() > slack + 1e-12:
        raise QpInfeasible("box and sum constraints cannot both hold")

    def step(nu: float) -> np.ndarray:
        return np.clip(-(g + nu) / h, lo, hi)

    d = step(0.0)
    if d.sum() <= slack:
        return d
    # sum of the clipped steps is nonincreasing and piecewise linear in nu
    bps = np.unique(np.concatenate((-g - h * hi, -g - h * lo)))
    prev, s_prev = 0.0, d.sum()
    for nu in bps[bps > 0]:
        s_nu = step(nu).sum()
        if s_nu <= slack:
            nu_star = prev + (s_prev - slack) / (s_prev - s_nu) * (nu - prev)
            return step(nu_star)
        prev, s_prev = nu, s_nu
    raise QpInfeasible("no multiplier satisfies the sum constraint")


def kkt_residual(beta, grad, hess_diag, d, lower=BETA_MIN, upper=1.0, cap=1.0) -> float:
    """Largest violation of the QP's optimality conditions at ``d``."""
    beta, g, h, d = (np.asarray(x, dtype=float) for x in (beta, grad, hess_diag, d))
    lo = np.broadcast_to(np.asarray(lower, dtype=float), beta.shape) - beta
    hi = np.broadcast_to(np.asarray(upper, dtype=float), beta.shape) - beta
    slack = cap - beta.sum()
    r = g + h * d
    tol = 1e-10
    at_lo = (d <= lo + tol) & ~(d >= hi - tol)
    at_hi = (d >= hi - tol) & ~at_lo
    free = ~(at_lo | at_hi)
    nu = 0.0
    if d.sum() >= slack - 1e-9:
        if free.any():
            nu = float(np.mean(-r[free]))
        elif at_lo.any():
            nu = max(0.0, float(np.max(-r[at_lo])))
    stat = r + nu
    viol = [
        max(0.0, d.sum() - slack),
        max(0.0, float(np.max(lo - d))),
        max(0.0, float(np.max(d - hi))),
        max(0.0, -nu),
        float(np.max(np.abs(stat[free]), initial=0.0)),
        float(np.max(-stat[at_lo], initial=0.0)),
        float(np.max(stat[at_hi], initial=0.0)),
    ]
    return max(viol)


@dataclass
class SqpResult:
    beta: np.ndarray
    value: float
    iterations: int
    converged: bool
    trajectory: list[dict] = field(default_factory=list)


def _finish(objective: TransformedObjective, beta: np.ndarray) -> np.ndarray:
    """Tie-breaking conventions on flat directions: idle SMGs get the floor,
    leftover share goes to the SMGs with work in proportion to what they hold."""
    work = objective.has_work
    out = beta.copy()
    out[~work] = objective.beta_min
    if not work.any():
        return np.full_like(beta, 1.0 / len(beta))
    spare = 1.0 - out.sum()
    if spare > 0:
        out[work] += spare * out[work] / out[work].sum()
    return np.clip(out, objective.beta_min, 1.0)


def slsqp_optimize(
    objective: TransformedObjective,
    beta0: Sequence[float] | None = None,
    eps: float = 1e-6,
    max_iter: int = 200,
    dump: IO[str] | None = None,
) -> SqpResult:
    """Minimize the transformed objective over ``sum(beta) <= 1``, ``beta in [beta_min, 1]``.

    Each iteration solves the quadratic model around the current iterate and
    backtracks (halving from a full step) until the Armijo condition holds.
    Stops when an accepted step moves less than ``eps``. ``dump`` receives
    one JSON line per accepted iterate.
    """
    G = objective.n
    lo = objective.beta_min
    beta = np.full(G, 1.0 / G) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    if beta.sum() > 1 + 1e-9 or np.any(beta < lo - 1e-12) or np.any(beta > 1):
        raise ValueError(f"initial slot ratios {beta} are infeasible")
    beta = np.clip(beta, lo, 1.0)
    f = objective.value(beta)
    traj = [{"iteration": 0, "beta": beta.tolist(), "value": f, "step": 0.0}]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = objective.subgradient(beta, SQP_SIGMA)
        piece_lo, piece_hi = objective.piece_bounds(beta)
        d = solve_qp_subproblem(beta, grad, objective.hessian_diag(beta), piece_lo, piece_hi, 1.0)
        slope = float(grad @ d)
        if np.linalg.norm(d) < eps:
            converged = True
            break
        alpha = 1.0
        accepted = False
        while alpha > 1e-12:
            trial = np.clip(beta + alpha * d, lo, 1.0)
            f_trial = objective.value(trial)
            if f_trial <= f + ARMIJO_C * alpha * min(slope, 0.0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = True
            break
        step = float(np.linalg.norm(trial - beta))
        beta, f = trial, f_trial
        traj.append({"iteration": it, "beta": beta.tolist(), "value": f, "step": step})
        if step < eps:
            converged = True
            break
    if not converged:
        log.warning("SQP slot division hit the iteration cap (%d)", max_iter)
    final = _finish(objective, beta)
    if objective.value(final) > f + 1e-12:  # conventions never trade objective
        final = beta
    if dump is not None:
        for row in traj:
            dump.write(json.dumps(row) + "\n")
    return SqpResult(final, objective.value(final), it, converged, traj)


def grid_search(objective: TransformedObjective, resolution: float = 1e-3) -> tuple[np.ndarray, float]:
    """Exhaustive oracle for ``G <= 3`` on a regular grid.

    The objective is nonincreasing in every coordinate, so the last
    coordinate can always take the remaining share.
    """
    G = objective.n
    lo = objective.beta_min
    if G == 1:
        return np.array([1.0]), objective.value([1.0])
    if G > 3:
        raise ValueError("grid oracle supports at most 3 SMGs")
    ticks = np.arange(1, int(round(1 / resolution))) * resolution
    ticks = np.concatenate(([lo], ticks))
    if G == 2:
        b1 = ticks
        b2 = 1.0 - b1
        grid = np.stack([b1, b2], axis=1)
    else:
        b1, b2 = np.meshgrid(ticks, ticks, indexing="ij")
        b1, b2 = b1.ravel(), b2.ravel()
        b3 = 1.0 - b1 - b2
        grid = np.stack([b1, b2, b3], axis=1)
    grid = grid[np.all(grid >= lo - 1e-15, axis=1)]
    with np.errstate(divide="ignore"):
        delay = np.where(objective.delay_at_full > 0, objective.delay_at_full / grid, 0.0)
    vals = objective.constant + (objective.penalty_weight * np.maximum(delay - objective.buffer, 0.0)).sum(axis=1)
    k = int(np.argmin(vals))
    return grid[k], float(vals[k])


def convexity_probe(objective: TransformedObjective, beta_a: Sequence[float], beta_b: Sequence[float], theta: float, slack: float = 1e-9) -> bool:
    """Check the convexity inequality along the segment between two points."""
    a = np.asarray(beta_a, dtype=float)
    b = np.asarray(beta_b, dtype=float)
    mid = theta * a + (1 - theta) * b
    lhs = objective.value(mid)
    rhs = theta * objective.value(a) + (1 - theta) * objective.value(b)
    return lhs <= rhs + slack

