"""How many segments to buffer each slot, and which ones per SMG."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from mcast_twin.core import Segment, SmgState, SystemResources, VideoCatalog
from mcast_twin.watch import WatchDistribution, buffering_order, sequential_order

MEGABIT = 1e6


@dataclass(frozen=True)
class BufferingPlan:
    """Segments each SMG buffers this slot.

    ``segments[g]`` is the ordered sequence for SMG ``g`` and ``phi[g]`` the
    matching buffering-order weights (larger means higher priority).
    """

    n: int
    segments: tuple[tuple[Segment, ...], ...]
    phi: tuple[tuple[float, ...], ...]

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.segments)

    def to_dict(self) -> dict:
        return {"n": self.n, "segments": [[list(s) for s in row] for row in self.segments], "phi": [list(r) for r in self.phi]}


def data_rate(h: float, res: SystemResources) -> float:
    """Shannon rate in bit/s for power gain ``h``."""
    return res.bandwidth * math.log2(1.0 + h * res.downlink_power / res.noise_power)


def multicast_min_rate(smgs: Sequence[SmgState], g: int, res: SystemResources) -> float:
    """Slowest user over SMGs ``0..g``; laggers piggyback on SMG ``g``'s stream."""
    return min(data_rate(h, res) for s in smgs[: g + 1] for h in s.gains)


def buffer_requirement(current_buffers: Sequence[float], slot_length: float, segment_duration: float) -> float:
    if segment_duration <= 0:
        raise ValueError("segment duration must be positive")
    return sum(max((slot_length - q) / segment_duration, 0.0) for q in current_buffers)


def max_affordable(costs: Iterable[float], budget: float, cap: int | None = None) -> int:
    """Largest prefix length whose summed cost stays within ``budget``."""
    total = 0.0
    n = 0
    for c in costs:
        if cap is not None and n >= cap:
            break
        total += c
        if total > budget:
            break
        n += 1
    return n


def _layer_sum(sizes: np.ndarray, first: int, last: int) -> float:
    # layers are 1-based and inclusive
    return float(sizes[first - 1 : last].sum())


def max_segments_bandwidth(
    segment_sizes: Sequence[np.ndarray],
    avg_version: int,
    min_rate: float,
    slot_length: float,
    cap: int | None = None,
) -> int:
    """Segments SMG ``g`` could receive at ``avg_version`` using the whole slot's bandwidth."""
    budget = slot_length * min_rate / MEGABIT
    return max_affordable((_layer_sum(z, 1, avg_version) for z in segment_sizes), budget, cap)


def max_segments_computing(
    segment_sizes: Sequence[np.ndarray],
    avg_version: int,
    res: SystemResources,
    cap: int,
) -> int:
    """Segments whose enhancement layers can be transcoded within the slot.

    With ``avg_version == 1`` nothing needs transcoding and the result is
    ``cap``.
    """
    if avg_version <= 1:
        return min(cap, len(segment_sizes))
    budget = res.slot_length * res.computing_capacity
    costs = (res.computing_density * _layer_sum(z, 2, avg_version) for z in segment_sizes)
    return max_affordable(costs, budget, cap)


def _candidates(dist: WatchDistribution | None, buffered: Iterable[Segment], order: str) -> list[Segment]:
    if dist is None:
        return []
    if order == "watch":
        return buffering_order(dist, buffered)
    if order == "sequential":
        return sequential_order(dist, buffered)
    raise ValueError(f"unknown buffering order {order!r}")


def assign_phi(segments: Sequence[Sequence[Segment]], dists: Sequence[WatchDistribution | None], order: str = "watch") -> tuple:
    """Global-rank weights: the top-priority planned segment gets the largest value.

    For ``order == "watch"`` the global rank sorts all planned (SMG, segment)
    pairs by the SMG's own watching probability; for ``"sequential"`` by
    position within each SMG's sequence.
    """
    entries = []
    for g, row in enumerate(segments):
        for m, seg in enumerate(row):
            if order == "watch":
                key = (-dists[g][seg], seg, g)
            else:
                key = (m, g, seg)
            entries.append((key, g, m))
    entries.sort()
    total = len(entries)
    phi = [[0.0] * len(row) for row in segments]
    for rank, (_, g, m) in enumerate(entries, start=1):
        phi[g][m] = float(total - rank + 1)
    return tuple(tuple(r) for r in phi)


def segment_number(n_buffer: float, n_tilde: Sequence[int], n_max: int | None = None) -> int:
    """Segments planned per SMG: the larger of the buffer need and the best resource count, capped."""
    n = int(math.floor(max([n_buffer, *n_tilde])))
    return n if n_max is None else min(n, n_max)


def build_plan(
    smgs: Sequence[SmgState],
    dists: Sequence[WatchDistribution | None],
    res: SystemResources,
    catalog: VideoCatalog,
    avg_version: int,
    n_max: int = 8,
    buffered: Sequence[Iterable[Segment]] | None = None,
    order: str = "watch",
) -> BufferingPlan:
    """Segment buffering number ``n`` and the per-SMG sequences.

    ``dists[g]`` is SMG ``g``'s distribution anchored at its own playhead
    (``None`` once the SMG has run past the catalog). ``buffered[g]`` lists
    segments SMG ``g`` already holds.
    """
    G = len(smgs)
    buffered = buffered if buffered is not None else [()] * G
    n_buffer = buffer_requirement([s.buffers[0] for s in smgs], res.slot_length, catalog.segment_duration)

    candidates = [_candidates(dists[g], buffered[g], order) for g in range(G)]
    n_tilde = []
    for g in range(G):
        sizes = [catalog.sizes(seg) for seg in candidates[g]]
        nb = max_segments_bandwidth(sizes, avg_version, multicast_min_rate(smgs, g, res), res.slot_length, n_max)
        nc = max_segments_computing(sizes, avg_version, res, n_max)
        n_tilde.append(min(nb, nc))
    n = segment_number(n_buffer, n_tilde, n_max)

    segments = tuple(tuple(c[:n]) for c in candidates)
    return BufferingPlan(n=n, segments=segments, phi=assign_phi(segments, dists, order))
