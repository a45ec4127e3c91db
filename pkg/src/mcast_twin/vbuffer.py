"""Twin-managed virtual buffers: playback drain, multicast fill, swipe shift."""

from __future__ import annotations

from typing import Sequence

Levels = tuple[float, ...]


def advance(levels: Sequence[Sequence[float]], omega_counts: Sequence[int], slot_length: float, segment_duration: float) -> list[Levels]:
    """One slot of playback and buffering for every SMG.

    ``levels[g][f]`` is SMG ``g``'s virtual buffer ``f``. Buffer 0 drains by
    the slot length and gains SMG ``g``'s own segments; buffer ``f >= 1``
    collects what SMG ``g + f`` is sent.
    """
    G = len(levels)
    out = []
    for g, row in enumerate(levels):
        if len(row) != G - g:
            raise ValueError(f"smg {g} has {len(row)} buffers, expected {G - g}")
        new = [max(row[0] - slot_length + segment_duration * omega_counts[g], 0.0)]
        for f in range(1, len(row)):
            new.append(row[f] + segment_duration * omega_counts[g + f])
        out.append(tuple(new))
    return out


def apply_swipe(levels: Sequence[float], swiped: bool | int) -> Levels:
    """Move to the next video: buffer ``f + 1`` becomes ``f``, the last one empties."""
    if swiped not in (0, 1, False, True):
        raise ValueError("at most one swipe per SMG per slot")
    if not swiped:
        return tuple(levels)
    return tuple(levels[1:]) + (0.0,)


def video_transition(levels: Sequence[float]) -> Levels:
    """Finishing a video by playback shifts the buffers exactly like a swipe."""
    return apply_swipe(levels, 1)
