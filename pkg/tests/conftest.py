import numpy as np
import pytest

from mcast_twin.core import ChannelParams, Scenario, SmgState, SystemResources, UserSpec, Video, VideoCatalog
from mcast_twin.slot_division import TransformedObjective


def make_catalog(probs, sizes=(1.0, 0.8), tau=2.0):
    """Catalog from nested swipe probabilities with identical layer sizes."""
    return VideoCatalog(tuple(Video(tuple(p), tuple(tuple(sizes) for _ in p)) for p in probs), tau)


def make_resources(**kw):
    base = dict(bandwidth=10e6, computing_capacity=10e9, computing_density=4e9, downlink_power=1.0, noise_power=1e-9, slot_length=5.0)
    base.update(kw)
    return SystemResources(**base)


def make_smgs(gains, buffers=None, playheads=None, **kw):
    G = len(gains)
    out = []
    for g, row in enumerate(gains):
        out.append(
            SmgState(
                smg_id=g,
                users=tuple(f"g{g}u{k}" for k in range(len(row))),
                gains=tuple(row),
                buffers=tuple(buffers[g]) if buffers else (0.0,) * (G - g),
                playhead=playheads[g] if playheads else (g, 0),
                **kw,
            )
        )
    return out


def make_scenario(catalog, smgs, res, **kw):
    users = tuple(UserSpec(u, 100.0) for s in smgs for u in s.users)
    return Scenario(catalog, tuple(smgs), res, users, ChannelParams(fading=False), **kw)


def random_objective(rng, G=None):
    """Random slot-division instance; some SMGs idle, some with empty buffers."""
    G = int(rng.integers(2, 4)) if G is None else G
    K = rng.uniform(0.1, 5.0, G) * (rng.random(G) > 0.1)
    q = rng.uniform(0.0, 6.0, G) * (rng.random(G) > 0.2)
    w = rng.dirichlet(np.ones(G)) * rng.uniform(0.2, 0.4, G)
    return TransformedObjective(K, q, w, float(rng.normal()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
