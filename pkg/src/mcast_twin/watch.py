"""Watching-probability analysis and buffering order."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from mcast_twin.core import Segment, VideoCatalog


def next_segment_prob(w_prev: float, p_prev: float) -> float:
    """Probability of reaching the next segment of the same video."""
    return w_prev * (1.0 - p_prev)


def first_segment_prob(w_prev_first: float, p_prev_video: Sequence[float]) -> float:
    """Probability of reaching the first segment of the next video.

    Only a swipe out of the previous video leads onward; ``p_prev_video``
    holds that video's per-segment swipe probabilities in playback order.
    """
    if len(p_prev_video) == 0:
        raise ValueError("previous video must have at least one segment")
    total = p_prev_video[0]
    survive = 1.0
    for j in range(1, len(p_prev_video)):
        survive *= 1.0 - p_prev_video[j - 1]
        total += p_prev_video[j] * survive
    return w_prev_first * total


def subsequent_segment_prob(w_first: float, p_prefix: Sequence[float]) -> float:
    """Probability of reaching segment ``j >= 2`` given the first one."""
    if len(p_prefix) == 0:
        raise ValueError("subsequent segments start at j = 2; prefix must be nonempty")
    w = w_first
    for p in p_prefix:
        w *= 1.0 - p
    return w


@dataclass(frozen=True)
class WatchDistribution:
    """Watching probabilities of every segment from ``anchor`` onward.

    ``probs[k]`` covers video ``anchor[0] + k``; for the anchor video the
    list starts at the anchor segment, so ``probs[0][0] == 1``.
    """

    anchor: Segment
    probs: tuple[tuple[float, ...], ...]

    def __getitem__(self, seg: Segment) -> float:
        i, j = seg
        k = i - self.anchor[0]
        if k < 0 or (k == 0 and j < self.anchor[1]):
            raise KeyError(f"segment {seg} is behind the anchor {self.anchor}")
        jj = j - self.anchor[1] if k == 0 else j
        return self.probs[k][jj]

    def items(self) -> list[tuple[Segment, float]]:
        out = []
        i0, j0 = self.anchor
        for k, row in enumerate(self.probs):
            start = j0 if k == 0 else 0
            out.extend(((i0 + k, start + jj), w) for jj, w in enumerate(row))
        return out

    def __contains__(self, seg: Segment) -> bool:
        try:
            self[seg]
        except (KeyError, IndexError):
            return False
        return True


def compute_distribution(catalog: VideoCatalog, playhead: Segment) -> WatchDistribution:
    """Anchor ``w = 1`` at ``playhead`` and chain forward through the list.

    The anchor video is treated as if it started at the playhead segment,
    so the first segment of the following video uses the swipe
    probabilities from the playhead onward.
    """
    i0, j0 = playhead
    if not (0 <= i0 < len(catalog) and 0 <= j0 < catalog.segment_count(i0)):
        raise IndexError(f"playhead {playhead} outside the catalog")
    rows = []
    w_first = 1.0
    for i in range(i0, len(catalog)):
        p = catalog.videos[i].swipe_probs
        if i == i0:
            p = p[j0:]
        row = [w_first]
        for j in range(1, len(p)):
            row.append(next_segment_prob(row[-1], p[j - 1]))
        rows.append(tuple(row))
        w_first = first_segment_prob(w_first, p)
    return WatchDistribution((i0, j0), tuple(rows))


def buffering_order(dist: WatchDistribution, already_buffered: Iterable[Segment] = ()) -> list[Segment]:
    """Unbuffered segments by watching probability, highest first.

    Ties go to the earlier segment in catalog order.
    """
    skip = set(already_buffered)
    return [seg for seg, w in sorted(dist.items(), key=lambda kv: (-kv[1], kv[0])) if seg not in skip]


def sequential_order(dist: WatchDistribution, already_buffered: Iterable[Segment] = ()) -> list[Segment]:
    """Playback-order buffering used by the scheme without a twin."""
    skip = set(already_buffered)
    return [seg for seg, _ in dist.items() if seg not in skip]
