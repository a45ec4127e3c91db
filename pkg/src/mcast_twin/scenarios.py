"""Scenario presets and the JSON/CSV configuration loader."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import numpy as np

from mcast_twin.core import (
    ChannelParams,
    Scenario,
    ScenarioError,
    SmgState,
    SystemResources,
    UserSpec,
    Video,
    VideoCatalog,
)
from mcast_twin.env import synthetic_catalog


def dbm_to_watt(dbm: float) -> float:
    return 10 ** (dbm / 10) * 1e-3


def noise_power(bandwidth: float, dbm_per_hz: float = -174.0) -> float:
    """Thermal noise over ``bandwidth`` Hz, in watts."""
    return dbm_to_watt(dbm_per_hz) * bandwidth


def resources(
    bandwidth: float = 10e6,
    computing_capacity: float = 10e9,
    computing_density: float = 4e9,
    power_dbm: float = 27.0,
    slot_length: float = 5.0,
) -> SystemResources:
    return SystemResources(bandwidth, computing_capacity, computing_density, dbm_to_watt(power_dbm), noise_power(bandwidth), slot_length)


def build_scenario(
    catalog: VideoCatalog,
    res: SystemResources,
    n_smgs: int,
    n_users: int,
    rng: np.random.Generator,
    channel: ChannelParams = ChannelParams(),
    speed: tuple[float, float] = (2.0, 5.0),
    lambda_rebuffer: tuple[float, float] = (0.2, 0.4),
    lambda_variation: tuple[float, float] = (0.5, 0.7),
    **kwargs,
) -> Scenario:
    """Users placed uniformly in the annulus, dealt round-robin into SMGs.

    SMG ``g`` starts at the first segment of video ``g`` so that SMG
    indices follow viewing position; all buffers start empty.
    """
    if n_users < n_smgs:
        raise ScenarioError([f"{n_users} users cannot fill {n_smgs} SMGs"])
    lo, hi = channel.min_distance, channel.max_distance
    users = tuple(
        UserSpec(f"u{k}", float(np.sqrt(rng.uniform(lo**2, hi**2))), float(rng.uniform(*speed)))
        for k in range(n_users)
    )
    smgs = []
    for g in range(n_smgs):
        members = tuple(u.user_id for u in users[g::n_smgs])
        smgs.append(
            SmgState(
                smg_id=g,
                users=members,
                gains=(0.0,) * len(members),
                buffers=(0.0,) * (n_smgs - g),
                lambda_rebuffer=float(rng.uniform(*lambda_rebuffer)),
                lambda_variation=float(rng.uniform(*lambda_variation)),
                playhead=(g, 0),
            )
        )
    return Scenario(catalog, tuple(smgs), res, users, channel, **kwargs)


def tiny_scenario(seed: int = 0, mean_swipe: float = 0.3, horizon: int = 20, fading: bool = False) -> Scenario:
    """Two SMGs, four users, two layers, at most two segments per SMG and slot.

    The enhancement layer is large and computing is ample, so version
    choice dominates the reward and its effect is easy to measure.
    """
    rng = np.random.default_rng(seed)
    catalog = synthetic_catalog(rng, 40, mean_swipe=mean_swipe, swipe_spread=0.05, segments=(3, 6), layer_sizes=(0.5, 2.0), size_jitter=0.1)
    channel = ChannelParams(fading=fading, min_distance=50.0, max_distance=200.0)
    res = resources(computing_capacity=20e9)
    return build_scenario(catalog, res, 2, 4, rng, channel, horizon=horizon, seed=seed, n_max=2)


def standard_scenario(
    seed: int = 0,
    n_users: int = 26,
    n_smgs: int = 3,
    bandwidth: float = 10e6,
    computing_capacity: float = 10e9,
    mean_swipe: float = 0.3,
    horizon: int = 75,
    n_max: int = 3,
    n_videos: int = 80,
    max_distance: float = 200.0,
    fading: bool = True,
) -> Scenario:
    """Four SVC layers, a 5 s slot and 2 s segments, mobile users."""
    rng = np.random.default_rng(seed)
    catalog = synthetic_catalog(rng, n_videos, mean_swipe=mean_swipe, segments=(4, 10), layer_sizes=(1.0, 0.8, 0.8, 0.8))
    res = resources(bandwidth=bandwidth, computing_capacity=computing_capacity)
    channel = ChannelParams(fading=fading, min_distance=20.0, max_distance=max_distance)
    return build_scenario(catalog, res, n_smgs, n_users, rng, channel, horizon=horizon, seed=seed, n_max=n_max)


PRESETS = {"tiny": tiny_scenario, "standard": standard_scenario}


def read_catalog_csv(path: str | Path, segment_duration: float = 2.0) -> VideoCatalog:
    """``video_id,segment_id,swipe_prob,layer1_mb,...,layerL_mb``; ids are 0-based and contiguous."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["video_id", "segment_id", "swipe_prob"] or len(header) < 4:
            raise ScenarioError([f"{path}: header must start with video_id,segment_id,swipe_prob,layer1_mb"])
        layers = [f"layer{k}_mb" for k in range(1, len(header) - 2)]
        if header[3:] != layers:
            raise ScenarioError([f"{path}: layer columns must be {','.join(layers)}"])
        rows: dict[int, dict[int, tuple[float, tuple[float, ...]]]] = {}
        for line in reader:
            if not line:
                continue
            i, j = int(line[0]), int(line[1])
            rows.setdefault(i, {})[j] = (float(line[2]), tuple(float(x) for x in line[3:]))
    videos = []
    for i in range(len(rows)):
        if i not in rows:
            raise ScenarioError([f"{path}: video ids are not contiguous from 0"])
        segs = rows[i]
        if sorted(segs) != list(range(len(segs))):
            raise ScenarioError([f"{path}: video {i} segment ids are not contiguous from 0"])
        videos.append(Video(tuple(segs[j][0] for j in range(len(segs))), tuple(segs[j][1] for j in range(len(segs)))))
    return VideoCatalog(tuple(videos), segment_duration)


def read_channel_csv(path: str | Path) -> tuple[tuple[int, str, float], ...]:
    """``slot,user_id,gain`` rows; the trace repeats once exhausted."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["slot", "user_id", "gain"]:
            raise ScenarioError([f"{path}: header must be slot,user_id,gain"])
        return tuple((int(r["slot"]), str(r["user_id"]), float(r["gain"])) for r in reader)


def scenario_from_config(cfg: dict[str, Any], base_dir: str | Path = ".", seed: int | None = None) -> Scenario:
    """Build a scenario from a config mapping.

    Either a full scenario document (``catalog`` and ``smgs`` keys) or a
    ``preset`` name with keyword ``params``. ``catalog_csv`` and
    ``channel_csv`` (paths relative to ``base_dir``) replace the catalog
    and add a channel trace. ``seed`` overrides the configured seed.
    """
    import dataclasses

    base = Path(base_dir)
    if "catalog" in cfg and "smgs" in cfg:
        doc = dict(cfg)
        if seed is not None:
            doc["seed"] = seed
        scenario = Scenario.from_dict(doc)
    elif "preset" in cfg:
        name = cfg["preset"]
        if name not in PRESETS:
            raise ScenarioError([f"unknown preset {name!r}; choose from {sorted(PRESETS)}"])
        params = dict(cfg.get("params", {}))
        params["seed"] = seed if seed is not None else int(cfg.get("seed", params.get("seed", 0)))
        scenario = PRESETS[name](**params)
    else:
        raise ScenarioError(["config needs either a preset or catalog and smgs"])
    changes = {}
    if "catalog_csv" in cfg:
        changes["catalog"] = read_catalog_csv(base / cfg["catalog_csv"], scenario.catalog.segment_duration)
    if "channel_csv" in cfg:
        changes["channel_trace"] = read_channel_csv(base / cfg["channel_csv"])
    return dataclasses.replace(scenario, **changes) if changes else scenario


def load_scenario(path: str | Path, seed: int | None = None) -> Scenario:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    return scenario_from_config(cfg, path.parent, seed)
