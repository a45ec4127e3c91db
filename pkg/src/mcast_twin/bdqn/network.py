"""Fixed-architecture branching dueling Q-network in numpy.

A ReLU trunk feeds one scalar value head and one linear advantage head that
is reshaped into ``(branches, actions)``. Per branch

    Q_b(s, a) = V(s) + A_b(s, a) - mean_a' A_b(s, a')
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = 1


def relu(x):
    return np.maximum(x, 0.0)


class BranchingDuelingNet:
    def __init__(self, state_dim: int, n_branches: int, n_actions: int, hidden=(512, 256, 256, 128), rng=None):
        self.state_dim = int(state_dim)
        self.n_branches = int(n_branches)
        self.n_actions = int(n_actions)
        self.hidden = tuple(int(h) for h in hidden)
        rng = np.random.default_rng(rng)
        self.params: dict[str, np.ndarray] = {}
        sizes = (self.state_dim,) + self.hidden
        for k in range(len(self.hidden)):
            self.params[f"W{k}"] = _he_uniform(rng, sizes[k], sizes[k + 1])
            self.params[f"b{k}"] = np.zeros(sizes[k + 1])
        top = sizes[-1]
        self.params["Wv"] = _he_uniform(rng, top, 1)
        self.params["bv"] = np.zeros(1)
        self.params["Wa"] = _he_uniform(rng, top, self.n_branches * self.n_actions)
        self.params["ba"] = np.zeros(self.n_branches * self.n_actions)

    @property
    def n_layers(self) -> int:
        return len(self.hidden)

    def heads(self, x: np.ndarray):
        """Value ``(N,)``, advantages ``(N, B, L)`` and the backprop cache."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.state_dim:
            raise ValueError(f"state has dimension {x.shape[1]}, network expects {self.state_dim}")
        acts = [x]
        pre = []
        h = x
        for k in range(self.n_layers):
            z = h @ self.params[f"W{k}"] + self.params[f"b{k}"]
            pre.append(z)
            h = relu(z)
            acts.append(h)
        v = (h @ self.params["Wv"] + self.params["bv"])[:, 0]
        a = (h @ self.params["Wa"] + self.params["ba"]).reshape(-1, self.n_branches, self.n_actions)
        return v, a, (acts, pre)

    def forward(self, x: np.ndarray):
        v, a, cache = self.heads(x)
        q = v[:, None, None] + a - a.mean(axis=2, keepdims=True)
        return q, cache

    def q_values(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, dq: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given ``dq = dLoss/dQ`` of shape ``(N, B, L)``."""
        acts, pre = cache
        h = acts[-1]
        dv = dq.sum(axis=(1, 2))[:, None]
        da = (dq - dq.mean(axis=2, keepdims=True)).reshape(dq.shape[0], -1)
        grads = {
            "Wv": h.T @ dv,
            "bv": dv.sum(axis=0),
            "Wa": h.T @ da,
            "ba": da.sum(axis=0),
        }
        dh = dv @ self.params["Wv"].T + da @ self.params["Wa"].T
        for k in reversed(range(self.n_layers)):
            dz = dh * (pre[k] > 0)
            grads[f"W{k}"] = acts[k].T @ dz
            grads[f"b{k}"] = dz.sum(axis=0)
            if k:
                dh = dz @ self.params[f"W{k}"].T
        return grads

    def copy(self) -> "BranchingDuelingNet":
        other = object.__new__(BranchingDuelingNet)
        other.state_dim, other.n_branches, other.n_actions, other.hidden = self.state_dim, self.n_branches, self.n_actions, self.hidden
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def load_params(self, other: "BranchingDuelingNet") -> None:
        for k, v in other.params.items():
            self.params[k][...] = v

    def save(self, path: str | Path) -> None:
        """Write an ``.npz`` checkpoint; every array is stored little-endian float64."""
        arrays = {k: v.astype("<f8") for k, v in self.params.items()}
        meta = np.array([CHECKPOINT_FORMAT, self.state_dim, self.n_branches, self.n_actions, *self.hidden], dtype="<i8")
        with open(path, "wb") as fh:
            np.savez(fh, meta=meta, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "BranchingDuelingNet":
        with np.load(path) as data:
            meta = data["meta"].astype(int)
            if meta[0] != CHECKPOINT_FORMAT:
                raise ValueError(f"unsupported checkpoint format {meta[0]}")
            net = object.__new__(cls)
            net.state_dim, net.n_branches, net.n_actions = (int(m) for m in meta[1:4])
            net.hidden = tuple(int(h) for h in meta[4:])
            net.params = {k: data[k].astype(float) for k in data.files if k != "meta"}
        return net


def _he_uniform(rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))
