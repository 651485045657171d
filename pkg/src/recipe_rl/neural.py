"""Small feedforward networks in plain numpy.

ReLU hidden layers, a ``tanh`` head for policies or an identity head for
critics, exact reverse-mode gradients and an Adam optimizer. Inputs may be a
single vector or a batch of row vectors.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = ["Mlp", "GradientBundle", "Adam", "forward", "backward", "adam_update", "ShapeError"]


class ShapeError(ValueError):
    pass


@dataclass
class GradientBundle:
    dW: list[np.ndarray]
    db: list[np.ndarray]
    dx: np.ndarray  # gradient with respect to the network input

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.dW, self.db) for a in pair])


class Mlp:
    """Multilayer perceptron with weights stored as (out, in) matrices."""

    def __init__(
        self,
        widths: Sequence[int],
        output: str = "identity",
        rng: np.random.Generator | None = None,
        seed: int | None = None,
    ):
        if len(widths) < 2:
            raise ShapeError("need at least input and output widths")
        if output not in ("identity", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.widths = [int(w) for w in widths]
        self.output = output
        self.seed = seed
        if rng is None:
            rng = np.random.default_rng(seed)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        for n_in, n_out in zip(self.widths[:-1], self.widths[1:]):
            limit = np.sqrt(6.0 / n_in)
            self.W.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
            self.b.append(np.zeros(n_out))

    @property
    def arch(self) -> list[int]:
        return list(self.widths)

    @property
    def hidden(self) -> list[int]:
        return self.widths[1:-1]

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)

    def params(self) -> list[np.ndarray]:
        return [a for pair in zip(self.W, self.b) for a in pair]

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.params())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.params()])

    def set_flat(self, v) -> None:
        v = np.asarray(v, dtype=float)
        if v.size != self.n_params:
            raise ShapeError(f"expected {self.n_params} parameters, got {v.size}")
        i = 0
        for a in self.params():
            a[...] = v[i : i + a.size].reshape(a.shape)
            i += a.size

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.widths, other.output, other.seed = list(self.widths), self.output, self.seed
        other.W = [w.copy() for w in self.W]
        other.b = [b.copy() for b in self.b]
        return other

    def soft_update(self, source: "Mlp", tau: float) -> None:
        """Polyak averaging ``self <- tau * source + (1 - tau) * self``."""
        for mine, theirs in zip(self.params(), source.params()):
            mine *= 1.0 - tau
            mine += tau * theirs

    def to_dict(self, created_at: str | None = None) -> dict:
        return {
            "arch": self.arch,
            "output": self.output,
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in zip(self.W, self.b)],
            "seed": self.seed,
            "created_at": created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        try:
            net = cls.__new__(cls)
            net.widths = [int(w) for w in d["arch"]]
            net.output = d.get("output", "identity")
            net.seed = d.get("seed")
            net.W = [np.array(layer["W"], dtype=float) for layer in d["layers"]]
            net.b = [np.array(layer["b"], dtype=float) for layer in d["layers"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ShapeError(f"malformed weights document: {exc}") from None
        if len(net.W) != len(net.widths) - 1:
            raise ShapeError(f"arch {net.widths} needs {len(net.widths) - 1} layers, got {len(net.W)}")
        for k, (W, b) in enumerate(zip(net.W, net.b)):
            want = (net.widths[k + 1], net.widths[k])
            if W.shape != want or b.shape != (want[0],):
                raise ShapeError(f"layer {k}: W {W.shape}, b {b.shape}, expected {want}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ShapeError(f"layer {k} contains non-finite values")
        return net

    def save(self, path: str | os.PathLike, created_at: str | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(created_at)) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Mlp":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ShapeError(f"{path}: invalid weights JSON ({exc})") from None
        return cls.from_dict(d)


def _check_input(net: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.widths[0] or x.ndim > 2:
        raise ShapeError(f"input of shape {x.shape} does not match input width {net.widths[0]}")
    return x


def _forward_cache(net: Mlp, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    last = len(net.W) - 1
    for k, (W, b) in enumerate(zip(net.W, net.b)):
        z = h @ W.T + b
        pre.append(z)
        if k < last:
            h = np.maximum(z, 0.0)
        else:
            h = np.tanh(z) if net.output == "tanh" else z
        acts.append(h)
    return pre, acts


def forward(net: Mlp, x) -> np.ndarray:
    x = _check_input(net, x)
    return _forward_cache(net, x)[1][-1]


def backward(net: Mlp, x, upstream) -> GradientBundle:
    """Gradients of ``sum(upstream * forward(net, x))``.

    For a batch, parameter gradients are summed over rows. ReLU uses the
    subgradient 0 at exactly 0.
    """
    x = _check_input(net, x)
    pre, acts = _forward_cache(net, x)
    g = np.asarray(upstream, dtype=float)
    if g.shape != acts[-1].shape:
        raise ShapeError(f"upstream shape {g.shape} does not match output shape {acts[-1].shape}")
    if net.output == "tanh":
        g = g * (1.0 - acts[-1] ** 2)
    n = len(net.W)
    dW: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    db: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for k in range(n - 1, -1, -1):
        a_in = acts[k]
        if g.ndim == 1:
            dW[k] = np.outer(g, a_in)
            db[k] = g.copy()
        else:
            dW[k] = g.T @ a_in
            db[k] = g.sum(axis=0)
        g = g @ net.W[k]
        if k > 0:
            g = g * (pre[k - 1] > 0.0)
    return GradientBundle(dW, db, g)


@dataclass
class Adam:
    """Adam in the descent convention: parameters move against the gradient."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float | None = None) -> None:
        """Update ``params`` in place."""
        lr = self.lr if lr is None else lr
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def step_net(self, net: Mlp, grads: GradientBundle, lr: float | None = None) -> None:
        self.step(net.params(), [a for pair in zip(grads.dW, grads.db) for a in pair], lr)


def adam_update(params, grads, state: Adam, lr: float):
    """Functional form: returns updated copies of ``params`` and the advanced state."""
    new = [np.array(p, dtype=float, copy=True) for p in params]
    st = Adam(lr, state.beta1, state.beta2, state.eps, state.t, [m.copy() for m in state.m], [v.copy() for v in state.v])
    st.step(new, [np.asarray(g, dtype=float) for g in grads], lr)
    return new, st
