"""Digital-twin-assisted scheduling for multicast short-video streaming.

Indexing convention used throughout the package: SMGs, videos and segments
are 0-based. SMG 0 is the most lagging group; a larger index means a viewing
position further ahead. Versions are 1-based (version ``l`` plays SVC layers
``1..l``); action indices inside the Q-network are ``version - 1``.
"""

from mcast_twin.core import (
    Scenario,
    ScenarioError,
    SchedulingDecision,
    SmgState,
    SystemResources,
    Video,
    VideoCatalog,
    validate_config,
)

__all__ = [
    "Scenario",
    "ScenarioError",
    "SchedulingDecision",
    "SmgState",
    "SystemResources",
    "Video",
    "VideoCatalog",
    "validate_config",
]

__version__ = "0.1.0"
