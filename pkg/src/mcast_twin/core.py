"""Domain types, scenario validation and JSON (de)serialization."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

Segment = tuple[int, int]  # (video index, segment index), both 0-based

SUM_TOL = 1e-9


class ScenarioError(ValueError):
    """Raised when a scenario violates one or more invariants.

    ``violations`` holds every problem found, not just the first one.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _raise_if(violations: list[str]) -> None:
    if violations:
        raise ScenarioError(violations)


@dataclass(frozen=True)
class Video:
    swipe_probs: tuple[float, ...]
    layer_sizes: tuple[tuple[float, ...], ...]  # megabits, [segment][layer]

    def __post_init__(self):
        object.__setattr__(self, "swipe_probs", tuple(float(p) for p in self.swipe_probs))
        object.__setattr__(
            self, "layer_sizes", tuple(tuple(float(z) for z in seg) for seg in self.layer_sizes)
        )
        _raise_if(self.violations())

    @property
    def segment_count(self) -> int:
        return len(self.swipe_probs)

    def violations(self, prefix: str = "") -> list[str]:
        out = []
        if self.segment_count < 1:
            out.append(f"{prefix}video has no segments")
        if len(self.layer_sizes) != self.segment_count:
            out.append(f"{prefix}layer_sizes rows ({len(self.layer_sizes)}) != segment count ({self.segment_count})")
        for j, p in enumerate(self.swipe_probs):
            if not (0.0 <= p <= 1.0) or math.isnan(p):
                out.append(f"{prefix}segment {j}: probability out of range ({p})")
        for j, seg in enumerate(self.layer_sizes):
            if not seg:
                out.append(f"{prefix}segment {j}: no layers")
            for l, z in enumerate(seg):
                if not z > 0 or not math.isfinite(z):
                    out.append(f"{prefix}segment {j} layer {l + 1}: negative or zero size ({z})")
        return out


@dataclass(frozen=True)
class VideoCatalog:
    """Recommended video list with per-segment SVC layer sizes.

    All segments share ``segment_duration`` (seconds) and the same number of
    layers ``L``. Sizes are in megabits.
    """

    videos: tuple[Video, ...]
    segment_duration: float

    def __post_init__(self):
        object.__setattr__(self, "videos", tuple(self.videos))
        _raise_if(self.violations())

    def violations(self) -> list[str]:
        out = []
        if not self.segment_duration > 0:
            out.append(f"segment duration must be positive ({self.segment_duration})")
        layer_counts = set()
        for i, v in enumerate(self.videos):
            out.extend(v.violations(prefix=f"video {i}: "))
            layer_counts.update(len(seg) for seg in v.layer_sizes)
        if len(layer_counts) > 1:
            out.append(f"inconsistent layer counts across segments: {sorted(layer_counts)}")
        return out

    def __len__(self) -> int:
        return len(self.videos)

    @property
    def n_layers(self) -> int:
        for v in self.videos:
            if v.layer_sizes:
                return len(v.layer_sizes[0])
        return 0

    def segment_count(self, i: int) -> int:
        return self.videos[i].segment_count

    def swipe_prob(self, i: int, j: int) -> float:
        return self.videos[i].swipe_probs[j]

    def sizes(self, seg: Segment) -> np.ndarray:
        i, j = seg
        return np.asarray(self.videos[i].layer_sizes[j], dtype=float)

    def cumulative_size(self, seg: Segment, version: int) -> float:
        """Megabits needed to play ``seg`` at ``version`` (layers 1..version)."""
        i, j = seg
        return float(sum(self.videos[i].layer_sizes[j][:version]))

    def segments_from(self, playhead: Segment) -> list[Segment]:
        """Every segment at or after ``playhead`` in playback order."""
        i0, j0 = playhead
        out = []
        for i in range(i0, len(self.videos)):
            start = j0 if i == i0 else 0
            out.extend((i, j) for j in range(start, self.segment_count(i)))
        return out

    def contains(self, seg: Segment) -> bool:
        i, j = seg
        return 0 <= i < len(self.videos) and 0 <= j < self.segment_count(i)

    def to_dict(self) -> dict:
        return {
            "segment_duration_s": self.segment_duration,
            "videos": [
                {"swipe_probs": list(v.swipe_probs), "layer_sizes_mb": [list(s) for s in v.layer_sizes]}
                for v in self.videos
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VideoCatalog":
        videos = tuple(Video(tuple(v["swipe_probs"]), tuple(tuple(s) for s in v["layer_sizes_mb"])) for v in d["videos"])
        return cls(videos, float(d["segment_duration_s"]))


@dataclass(frozen=True)
class SystemResources:
    bandwidth: float  # Hz
    computing_capacity: float  # cycles/s
    computing_density: float  # cycles per megabit
    downlink_power: float  # W
    noise_power: float  # W
    slot_length: float  # s

    def __post_init__(self):
        _raise_if(self.violations())

    def violations(self) -> list[str]:
        return [
            f"{name} must be strictly positive ({value})"
            for name, value in asdict(self).items()
            if not (value > 0 and math.isfinite(value))
        ]


@dataclass
class SmgState:
    """One sub-multicast group.

    ``buffers[f]`` is the virtual buffer (seconds) for the video ``f``
    positions ahead of the one being watched; SMG ``g`` of ``G`` owns
    ``G - g`` of them (0-based ``g``). ``gains`` is aligned with ``users``.
    """

    smg_id: int
    users: tuple[str, ...]
    gains: tuple[float, ...]
    buffers: tuple[float, ...]
    last_quality: float = 0.0
    lambda_rebuffer: float = 0.3
    lambda_variation: float = 0.6
    playhead: Segment = (0, 0)

    def __post_init__(self):
        self.users = tuple(str(u) for u in self.users)
        self.gains = tuple(float(h) for h in self.gains)
        self.buffers = tuple(float(q) for q in self.buffers)
        self.playhead = (int(self.playhead[0]), int(self.playhead[1]))
        _raise_if(self.violations())

    def violations(self, n_smgs: int | None = None) -> list[str]:
        p = f"smg {self.smg_id}: "
        out = []
        if not self.users:
            out.append(p + "empty SMG")
        if len(set(self.users)) != len(self.users):
            out.append(p + "duplicate membership within SMG")
        if len(self.gains) != len(self.users):
            out.append(p + f"{len(self.gains)} gains for {len(self.users)} users")
        if any(h < 0 or not math.isfinite(h) for h in self.gains):
            out.append(p + "channel gain must be finite and nonnegative")
        if any(q < 0 or not math.isfinite(q) for q in self.buffers):
            out.append(p + "buffer level must be finite and nonnegative")
        if not 0.0 <= self.last_quality < 1.0:
            out.append(p + f"last quality must be in [0, 1) ({self.last_quality})")
        if self.lambda_rebuffer < 0 or self.lambda_variation < 0:
            out.append(p + "sensitivities must be nonnegative")
        if n_smgs is not None and len(self.buffers) != n_smgs - self.smg_id:
            out.append(p + f"expected {n_smgs - self.smg_id} virtual buffers, got {len(self.buffers)}")
        return out

    def to_dict(self) -> dict:
        return {
            "smg_id": self.smg_id,
            "users": list(self.users),
            "gains": list(self.gains),
            "buffers": list(self.buffers),
            "last_quality": self.last_quality,
            "lambda_rebuffer": self.lambda_rebuffer,
            "lambda_variation": self.lambda_variation,
            "playhead": list(self.playhead),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SmgState":
        return cls(
            smg_id=int(d["smg_id"]),
            users=tuple(d["users"]),
            gains=tuple(d["gains"]),
            buffers=tuple(d["buffers"]),
            last_quality=float(d.get("last_quality", 0.0)),
            lambda_rebuffer=float(d.get("lambda_rebuffer", 0.3)),
            lambda_variation=float(d.get("lambda_variation", 0.6)),
            playhead=tuple(d.get("playhead", (0, 0))),
        )


@dataclass(frozen=True)
class SchedulingDecision:
    """Joint action for one slot.

    ``versions[g][m]`` is the selected version (1..L) of the m-th planned
    segment of SMG ``g``; it is the compact form of the one-hot selection
    ``a[g][m][l]``. ``betas[g]`` is SMG ``g``'s share of the slot.
    """

    versions: tuple[tuple[int, ...], ...]
    betas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "versions", tuple(tuple(int(v) for v in row) for row in self.versions))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    def violations(self, n_layers: int, plan_sizes: Sequence[int] | None = None) -> list[str]:
        out = []
        if len(self.versions) != len(self.betas):
            out.append(f"{len(self.versions)} version rows for {len(self.betas)} slot ratios")
        for g, row in enumerate(self.versions):
            for m, v in enumerate(row):
                if not 1 <= v <= n_layers:
                    out.append(f"smg {g} segment {m}: version {v} outside 1..{n_layers}")
            if plan_sizes is not None and g < len(plan_sizes) and len(row) != plan_sizes[g]:
                out.append(f"smg {g}: {len(row)} versions for {plan_sizes[g]} planned segments")
        for g, b in enumerate(self.betas):
            if not 0.0 <= b <= 1.0:
                out.append(f"smg {g}: slot ratio {b} outside [0, 1]")
        if sum(self.betas) > 1.0 + SUM_TOL:
            out.append(f"slot ratios sum to {sum(self.betas)} > 1")
        return out

    def one_hot(self, n_layers: int) -> list[np.ndarray]:
        out = []
        for row in self.versions:
            a = np.zeros((len(row), n_layers), dtype=int)
            a[np.arange(len(row)), np.asarray(row, dtype=int) - 1] = 1
            out.append(a)
        return out

    @classmethod
    def from_one_hot(cls, selections: Sequence[np.ndarray], betas: Sequence[float]) -> "SchedulingDecision":
        versions = []
        for g, a in enumerate(selections):
            a = np.asarray(a)
            if a.size and not (np.isin(a, (0, 1)).all() and (a.sum(axis=1) == 1).all()):
                raise ScenarioError([f"smg {g}: exactly one version must be selected per segment"])
            versions.append(tuple(int(k) + 1 for k in a.argmax(axis=1)) if a.size else ())
        return cls(tuple(versions), tuple(betas))


@dataclass(frozen=True)
class QoeReport:
    """Per-SMG QoE components for one slot plus the MG total."""

    rebuffering: tuple[float, ...]
    quality: tuple[float, ...]
    variation: tuple[float, ...]
    qoe: tuple[float, ...]
    weight: tuple[float, ...]
    weighted_qoe: tuple[float, ...]
    segments: tuple[int, ...]
    buffer: tuple[float, ...]  # q0 the decision acted on

    @property
    def mg_total(self) -> float:
        return float(sum(self.weighted_qoe))

    @property
    def mean_segment_quality(self) -> tuple[float, ...]:
        return tuple(q / n if n else 0.0 for q, n in zip(self.quality, self.segments))

    def to_dict(self) -> dict:
        d = {k: list(v) for k, v in asdict(self).items()}
        d["mean_segment_quality"] = list(self.mean_segment_quality)
        d["mg_total"] = self.mg_total
        return d


@dataclass(frozen=True)
class UserSpec:
    """Placement of one user for the log-distance channel model."""

    user_id: str
    distance: float  # m from the access point
    speed: float = 0.0  # km/h along a radial line


@dataclass(frozen=True)
class ChannelParams:
    path_loss_exponent: float = 3.5
    reference_gain: float = 1e-4
    reference_distance: float = 1.0
    fading: bool = True
    min_distance: float = 20.0
    max_distance: float = 500.0


@dataclass(frozen=True)
class Scenario:
    catalog: VideoCatalog
    smgs: tuple[SmgState, ...]
    resources: SystemResources
    users: tuple[UserSpec, ...]
    channel: ChannelParams = field(default_factory=ChannelParams)
    horizon: int = 75
    seed: int = 0
    n_max: int = 8
    swipe_estimate_noise: float = 0.0
    channel_trace: tuple[tuple[int, str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "smgs", tuple(self.smgs))
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "channel_trace", tuple(tuple(r) for r in self.channel_trace))
        _raise_if(self.violations())

    @property
    def n_smgs(self) -> int:
        return len(self.smgs)

    def violations(self) -> list[str]:
        out = _cross_violations(self.catalog, self.smgs, self.resources)
        if self.horizon < 1:
            out.append(f"horizon must be >= 1 ({self.horizon})")
        if self.n_max < 1:
            out.append(f"n_max must be >= 1 ({self.n_max})")
        if self.swipe_estimate_noise < 0:
            out.append("swipe_estimate_noise must be nonnegative")
        known = {u.user_id for u in self.users}
        for s in self.smgs:
            missing = [u for u in s.users if u not in known]
            if missing:
                out.append(f"smg {s.smg_id}: users without placement {missing}")
        for u in self.users:
            if not u.distance > 0 or u.speed < 0:
                out.append(f"user {u.user_id}: distance must be positive and speed nonnegative")
        c = self.channel
        if not (c.path_loss_exponent > 0 and c.reference_gain > 0 and c.reference_distance > 0):
            out.append("channel parameters must be positive")
        if not 0 < c.min_distance <= c.max_distance:
            out.append("channel distance range must satisfy 0 < min <= max")
        return out

    def user(self, user_id: str) -> UserSpec:
        for u in self.users:
            if u.user_id == user_id:
                return u
        raise KeyError(user_id)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "horizon": self.horizon,
            "n_max": self.n_max,
            "swipe_estimate_noise": self.swipe_estimate_noise,
            "resources": {
                "bandwidth_hz": self.resources.bandwidth,
                "computing_capacity_hz": self.resources.computing_capacity,
                "computing_density_cycles_per_mb": self.resources.computing_density,
                "downlink_power_w": self.resources.downlink_power,
                "noise_power_w": self.resources.noise_power,
                "slot_length_s": self.resources.slot_length,
            },
            "catalog": self.catalog.to_dict(),
            "smgs": [s.to_dict() for s in self.smgs],
            "users": [asdict(u) for u in self.users],
            "channel": asdict(self.channel),
            "channel_trace": [list(r) for r in self.channel_trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        r = d["resources"]
        resources = SystemResources(
            bandwidth=float(r["bandwidth_hz"]),
            computing_capacity=float(r["computing_capacity_hz"]),
            computing_density=float(r["computing_density_cycles_per_mb"]),
            downlink_power=float(r["downlink_power_w"]),
            noise_power=float(r["noise_power_w"]),
            slot_length=float(r["slot_length_s"]),
        )
        return cls(
            catalog=VideoCatalog.from_dict(d["catalog"]),
            smgs=tuple(SmgState.from_dict(s) for s in d["smgs"]),
            resources=resources,
            users=tuple(UserSpec(str(u["user_id"]), float(u["distance"]), float(u.get("speed", 0.0))) for u in d["users"]),
            channel=ChannelParams(**d.get("channel", {})),
            horizon=int(d.get("horizon", 75)),
            seed=int(d.get("seed", 0)),
            n_max=int(d.get("n_max", 8)),
            swipe_estimate_noise=float(d.get("swipe_estimate_noise", 0.0)),
            channel_trace=tuple((int(t), str(u), float(h)) for t, u, h in d.get("channel_trace", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def _cross_violations(catalog: VideoCatalog, smgs: Sequence[SmgState], res: SystemResources) -> list[str]:
    out = catalog.violations() + res.violations()
    if not smgs:
        out.append("scenario has no SMGs")
    seen: dict[str, int] = {}
    for g, s in enumerate(smgs):
        if s.smg_id != g:
            out.append(f"smg at position {g} has id {s.smg_id}; ids must follow viewing-position order")
        out.extend(s.violations(n_smgs=len(smgs)))
        for u in s.users:
            if u in seen and seen[u] != g:
                out.append(f"user {u}: duplicate membership in smg {seen[u]} and smg {g}")
            seen.setdefault(u, g)
        i, j = s.playhead
        if not (catalog.contains(s.playhead) or (i == len(catalog) and j == 0)):
            out.append(f"smg {g}: playhead {s.playhead} outside the catalog")
    return out


def validate_config(catalog: VideoCatalog, smgs: Sequence[SmgState], res: SystemResources) -> tuple:
    """Re-check every invariant across the three inputs.

    Returns ``(catalog, tuple(smgs), res)`` unchanged; raises
    :class:`ScenarioError` listing all violations otherwise. Nothing is
    clamped or repaired.
    """
    _raise_if(_cross_violations(catalog, smgs, res))
    return catalog, tuple(smgs), res
