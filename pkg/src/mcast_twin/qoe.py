"""Multicast QoE: delays, rebuffering, SSIM quality, variation and weighting."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from mcast_twin.buffering import MEGABIT, BufferingPlan, multicast_min_rate
from mcast_twin.core import QoeReport, SchedulingDecision, SmgState, SystemResources, VideoCatalog


def selected_megabits(decision: SchedulingDecision, plan: BufferingPlan, catalog: VideoCatalog) -> list[np.ndarray]:
    """Cumulative megabits of the chosen version for every planned segment."""
    out = []
    for g, segs in enumerate(plan.segments):
        versions = decision.versions[g]
        if len(versions) != len(segs):
            raise ValueError(f"smg {g}: {len(versions)} versions for {len(segs)} planned segments")
        out.append(np.array([catalog.cumulative_size(seg, v) for seg, v in zip(segs, versions)], dtype=float))
    return out


def transmission_delay(work_mb: float, min_rate: float, beta: float) -> float:
    if work_mb == 0:
        return 0.0
    if beta <= 0 or min_rate <= 0:
        return math.inf
    return work_mb * MEGABIT / (beta * min_rate)


def transcoding_delay(work_mb: float, beta: float, res: SystemResources) -> float:
    if work_mb == 0:
        return 0.0
    if beta <= 0:
        return math.inf
    return res.computing_density * work_mb / (beta * res.computing_capacity)


def multicast_delay(decision: SchedulingDecision, plan: BufferingPlan, smgs: Sequence[SmgState], res: SystemResources, catalog: VideoCatalog) -> list[float]:
    works = [float(z.sum()) for z in selected_megabits(decision, plan, catalog)]
    return [
        transmission_delay(w, multicast_min_rate(smgs, g, res), decision.betas[g])
        for g, w in enumerate(works)
    ]


def service_delay(decision: SchedulingDecision, plan: BufferingPlan, smgs: Sequence[SmgState], res: SystemResources, catalog: VideoCatalog) -> list[float]:
    """Transmission and transcoding run in parallel; the slower one binds."""
    works = [float(z.sum()) for z in selected_megabits(decision, plan, catalog)]
    delays = multicast_delay(decision, plan, smgs, res, catalog)
    return [max(d, transcoding_delay(w, decision.betas[g], res)) for g, (d, w) in enumerate(zip(delays, works))]


def rebuffering(service: float, buffer0: float) -> float:
    return max(service - buffer0, 0.0)


def segment_quality(cumulative_mb: np.ndarray | Sequence[float], segment_duration: float) -> np.ndarray:
    """SSIM of each segment from its bitrate in Mbps."""
    bitrate = np.asarray(cumulative_mb, dtype=float) / segment_duration
    return 1.0 - 1.0 / (2.0 * bitrate + 1.0)


def video_quality(cumulative_mb: np.ndarray | Sequence[float], segment_duration: float) -> tuple[float, np.ndarray]:
    """Summed SSIM of the newly buffered segments and the per-segment values."""
    per_segment = segment_quality(cumulative_mb, segment_duration)
    return float(per_segment.sum()), per_segment


def quality_variation(per_segment: Sequence[float], last_quality: float) -> float:
    """Mean absolute SSIM step, starting from the last buffered segment."""
    if len(per_segment) == 0:
        return 0.0
    q = np.concatenate(([last_quality], np.asarray(per_segment, dtype=float)))
    return float(np.abs(np.diff(q)).mean())


def smg_qoe(quality: float, rebuffer: float, variation: float, lambda_rebuffer: float, lambda_variation: float) -> float:
    return quality - lambda_rebuffer * rebuffer - lambda_variation * variation


def weighting(plan: BufferingPlan) -> list[float]:
    """Share of the buffering-order mass held by each SMG."""
    mass = [float(sum(row)) for row in plan.phi]
    total = sum(mass)
    if total <= 0:
        return [1.0 / len(mass)] * len(mass) if mass else []
    return [m / total for m in mass]


def weighted_qoe(qoes: Sequence[float], weights: Sequence[float]) -> tuple[list[float], float]:
    weighted = [w * u for u, w in zip(qoes, weights)]
    return weighted, float(sum(weighted))


def evaluate(
    decision: SchedulingDecision,
    plan: BufferingPlan,
    smgs: Sequence[SmgState],
    res: SystemResources,
    catalog: VideoCatalog,
    buffers: Sequence[float] | None = None,
) -> QoeReport:
    """Full QoE for one slot.

    ``buffers`` overrides the current buffer each SMG's rebuffering is
    measured against (default: virtual buffer 0).
    """
    tau = catalog.segment_duration
    q0 = [s.buffers[0] for s in smgs] if buffers is None else list(buffers)
    service = service_delay(decision, plan, smgs, res, catalog)
    mbits = selected_megabits(decision, plan, catalog)
    weights = weighting(plan)
    R, Q, V, U = [], [], [], []
    for g, s in enumerate(smgs):
        if len(plan.segments[g]) == 0:
            R.append(0.0), Q.append(0.0), V.append(0.0), U.append(0.0)
            continue
        quality, per_seg = video_quality(mbits[g], tau)
        r = rebuffering(service[g], q0[g])
        v = quality_variation(per_seg, s.last_quality)
        R.append(r), Q.append(quality), V.append(v)
        U.append(smg_qoe(quality, r, v, s.lambda_rebuffer, s.lambda_variation))
    weighted, _ = weighted_qoe(U, weights)
    return QoeReport(
        rebuffering=tuple(R),
        quality=tuple(Q),
        variation=tuple(V),
        qoe=tuple(U),
        weight=tuple(weights),
        weighted_qoe=tuple(weighted),
        segments=plan.counts,
        buffer=tuple(float(q) for q in q0),
    )
