"""Small feed-forward Q-function: two ReLU hidden layers, scalar output."""
from __future__ import annotations

from pathlib import Path

import numpy as np

DUMP_VERSION = "kcharge-qnet/1"
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


def relu(x):
    return np.maximum(x, 0.0)


class QNetwork:
    def __init__(self, input_dim: int, hidden=(64, 64), seed: int = 0, zero: bool = False):
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        if len(self.hidden) != 2:
            raise ValueError("exactly two hidden layers are supported")
        rng = np.random.default_rng(seed)
        h1, h2 = self.hidden
        shapes = {"W1": (h1, input_dim), "b1": (h1,), "W2": (h2, h1), "b2": (h2,), "W3": (1, h2), "b3": (1,)}
        self.params = {}
        for name, shape in shapes.items():
            if zero or name.startswith("b"):
                self.params[name] = np.zeros(shape)
            else:
                # He initialisation for ReLU layers
                self.params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[1]), size=shape)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got {X.shape[1]}")
        return X

    def forward(self, X, keep=False):
        X = self._check(X)
        p = self.params
        z1 = X @ p["W1"].T + p["b1"]
        a1 = relu(z1)
        z2 = a1 @ p["W2"].T + p["b2"]
        a2 = relu(z2)
        q = (a2 @ p["W3"].T + p["b3"])[:, 0]
        if keep:
            return q, (X, z1, a1, z2, a2)
        return q

    def loss_and_grad(self, X, y):
        """Mean squared error ``mean((y - Q(X))^2)`` and its parameter gradients."""
        y = np.asarray(y, dtype=float)
        q, (X, z1, a1, z2, a2) = self.forward(X, keep=True)
        diff = q - y
        loss = float(np.mean(diff ** 2))
        dq = (2.0 / len(y)) * diff[:, None]
        p = self.params
        g = {"W3": dq.T @ a2, "b3": dq.sum(axis=0)}
        dz2 = (dq @ p["W3"]) * (z2 > 0)
        g["W2"] = dz2.T @ a1
        g["b2"] = dz2.sum(axis=0)
        dz1 = (dz2 @ p["W2"]) * (z1 > 0)
        g["W1"] = dz1.T @ X
        g["b1"] = dz1.sum(axis=0)
        return loss, g

    def sgd_step(self, grads, lr: float) -> None:
        for name, grad in grads.items():
            self.params[name] -= lr * grad

    def copy(self) -> "QNetwork":
        other = QNetwork(self.input_dim, self.hidden, zero=True)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.params.values())

    # -- text dump: header, then "name d0 d1 ..." and one line of values per array
    def dumps(self) -> str:
        lines = [DUMP_VERSION, f"input_dim {self.input_dim}", "hidden " + " ".join(map(str, self.hidden))]
        for name in PARAM_NAMES:
            arr = self.params[name]
            lines.append(name + " " + " ".join(map(str, arr.shape)))
            lines.append(" ".join(repr(float(v)) for v in arr.ravel()))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "QNetwork":
        lines = text.splitlines()
        if not lines or lines[0] != DUMP_VERSION:
            raise ValueError(f"not a {DUMP_VERSION} parameter dump")
        input_dim = int(lines[1].split()[1])
        hidden = tuple(int(h) for h in lines[2].split()[1:])
        net = cls(input_dim, hidden, zero=True)
        pos = 3
        for name in PARAM_NAMES:
            head = lines[pos].split()
            if head[0] != name:
                raise ValueError(f"expected parameter {name}, found {head[0]}")
            shape = tuple(int(s) for s in head[1:])
            values = np.array([float(v) for v in lines[pos + 1].split()])
            net.params[name] = values.reshape(shape)
            pos += 2
        return net

    @classmethod
    def load(cls, path) -> "QNetwork":
        return cls.loads(Path(path).read_text())
