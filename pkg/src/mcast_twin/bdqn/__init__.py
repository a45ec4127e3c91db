"""Branching dueling Q-network agent (numpy only)."""

from mcast_twin.bdqn.agent import (
    BdqnAgent,
    BdqnPolicy,
    CurveRow,
    TrainConfig,
    epsilon_after,
    loss,
    loss_and_grads,
    priority,
    q_values,
    select_action,
    td_target,
    train,
)
from mcast_twin.bdqn.network import BranchingDuelingNet
from mcast_twin.bdqn.replay import PrioritizedReplay

__all__ = [
    "BdqnAgent",
    "BdqnPolicy",
    "BranchingDuelingNet",
    "CurveRow",
    "PrioritizedReplay",
    "TrainConfig",
    "epsilon_after",
    "loss",
    "loss_and_grads",
    "priority",
    "q_values",
    "select_action",
    "td_target",
    "train",
]
