"""
Bounded-parameter ReLU multilayer perceptrons.

A network is the pair (architecture, flat parameter vector). The flat
vector is the single source of truth; layer matrices are views into it.
Networks are immutable values, so evaluation and gradients are safe to
call from parallel replications.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import ShapeError


@dataclass(frozen=True)
class Architecture:
    """Widths ``(p_0, ..., p_{L+1})`` plus the sup-norm caps of the network class.

    Parameters
    ----------
    widths : sequence of int
        Layer widths, input dimension first; the last entry must be 1.
    B : float
        Bound on ``max_j |theta_j|``.
    F : float
        Bound on ``|h(x)|``, realised by output clamping.
    S : int, optional
        Sparsity budget, only recorded.
    """

    widths: tuple
    B: float
    F: float
    S: Optional[int] = None

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 3:
            raise ShapeError("need at least one hidden layer: widths has length L+2 >= 3")
        if any(w < 1 for w in widths):
            raise ShapeError(f"all widths must be >= 1, got {widths}")
        if widths[-1] != 1:
            raise ShapeError("output width p_{L+1} must be 1")
        if not self.B >= 0:
            raise ShapeError("weight bound B must be nonnegative")
        if not self.F > 0:
            raise ShapeError("output bound F must be positive")
        if self.S is not None and self.S < 0:
            raise ShapeError("sparsity budget S must be nonnegative")

    @classmethod
    def uniform(cls, d, depth, width, B, F, S=None):
        """Architecture with ``depth`` hidden layers of equal ``width``."""
        return cls((d,) + (width,) * depth + (1,), B, F, S)

    @property
    def depth(self):
        return len(self.widths) - 2

    @property
    def width(self):
        return max(self.widths[1:-1])

    @property
    def input_dim(self):
        return self.widths[0]

    @property
    def n_params(self):
        return n_params(self.widths)

    @property
    def widths_array(self):
        return np.asarray(self.widths, dtype=np.int64)


@dataclass(frozen=True)
class Activation:
    """Elementwise activation. Only ReLU is wired into the kernels."""

    kind: str = "relu"
    lipschitz_const: float = 1.0

    def __post_init__(self):
        if self.kind != "relu":
            raise NotImplementedError("only the relu activation is supported")
        if self.lipschitz_const != 1.0:
            raise ValueError("relu has Lipschitz constant 1")

    def __call__(self, z):
        return np.maximum(z, 0.0)


RELU = Activation()


def n_params(widths: Sequence[int]) -> int:
    return sum(widths[j] * widths[j - 1] + widths[j] for j in range(1, len(widths)))


def unflatten(arch: Architecture, flat) -> list:
    """Split a flat parameter vector into ``[(W_1, b_1), ..., (W_{L+1}, b_{L+1})]``.

    ``W_j`` has shape ``(p_j, p_{j-1})`` and is read column by column.
    The returned arrays are views of ``flat``.
    """
    flat = np.asarray(flat, dtype=np.float64)
    if flat.ndim != 1 or flat.shape[0] != arch.n_params:
        raise ShapeError(f"expected a flat vector of length {arch.n_params}, got shape {flat.shape}")
    return kernels._layers(flat, arch.widths)


def flatten_layers(layers: Iterable) -> np.ndarray:
    parts = []
    for W, b in layers:
        parts.append(np.asarray(W, dtype=np.float64).ravel(order="F"))
        parts.append(np.asarray(b, dtype=np.float64).ravel())
    return np.concatenate(parts)


def project_params(theta, B: float) -> np.ndarray:
    return np.clip(np.asarray(theta, dtype=np.float64), -B, B)


def sparsity(theta, zero_tol: float = 1e-8) -> int:
    return int(np.count_nonzero(np.abs(np.asarray(theta)) > zero_tol))


def init_params(arch: Architecture, rng: np.random.Generator) -> np.ndarray:
    """Uniform on ``[-r, r]`` per layer with ``r = min(B, 1/sqrt(fan_in))``."""
    parts = []
    for j in range(1, len(arch.widths)):
        fan_in, p_out = arch.widths[j - 1], arch.widths[j]
        r = min(arch.B, 1.0 / math.sqrt(fan_in))
        parts.append(rng.uniform(-r, r, size=p_out * fan_in + p_out))
    return np.concatenate(parts)


class Network:
    """An immutable (architecture, parameters) pair."""

    __slots__ = ("arch", "theta", "activation")

    def __init__(self, arch: Architecture, theta, activation: Activation = RELU):
        theta = np.array(theta, dtype=np.float64)
        if theta.ndim != 1 or theta.shape[0] != arch.n_params:
            raise ShapeError(f"expected {arch.n_params} parameters, got shape {theta.shape}")
        theta.flags.writeable = False
        self.arch = arch
        self.theta = theta
        self.activation = activation

    @classmethod
    def zeros(cls, arch: Architecture):
        return cls(arch, np.zeros(arch.n_params))

    @classmethod
    def random(cls, arch: Architecture, seed=0):
        return cls(arch, init_params(arch, np.random.default_rng(seed)))

    def with_theta(self, theta):
        return Network(self.arch, theta, self.activation)

    def layers(self):
        return unflatten(self.arch, self.theta)

    def predict(self, X, clamp: bool = True) -> np.ndarray:
        X = _as_batch(X, self.arch.input_dim)
        return kernels.active.predict(self.theta, self.arch.widths_array, X, self.arch.F, clamp)

    def __call__(self, X):
        return self.predict(X)

    def to_dict(self):
        return {
            "widths": list(self.arch.widths),
            "B": float(self.arch.B),
            "F": float(self.arch.F),
            "theta": [float(v) for v in self.theta],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc):
        arch = Architecture(tuple(doc["widths"]), float(doc["B"]), float(doc["F"]))
        return cls(arch, np.asarray(doc["theta"], dtype=np.float64))

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"Network(widths={self.arch.widths}, B={self.arch.B:g}, F={self.arch.F:g})"


def _as_batch(X, d):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        if X.shape[0] != d:
            raise ShapeError(f"input has length {X.shape[0]}, network expects {d}")
        return X[None, :]
    if X.ndim != 2 or X.shape[1] != d:
        raise ShapeError(f"input batch has shape {X.shape}, network expects (n, {d})")
    return X


def forward(net: Network, x, clamp: bool = True) -> float:
    """Evaluate the network at a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("forward takes one input vector; use Network.predict for batches")
    return float(net.predict(x, clamp=clamp)[0])


def flatten(net: Network) -> np.ndarray:
    return net.theta.copy()


def gradient(net: Network, loss, batch, clamp: bool = True) -> np.ndarray:
    """Gradient of the mean loss over ``batch`` with respect to the flat parameters.

    ``batch`` is either a pair of arrays ``(X, y)`` or a list of ``(x, y)`` pairs.
    ReLU, absolute value and clamp derivatives are taken as 0 at their kinks.
    """
    X, y = as_xy(batch, net.arch.input_dim)
    _, g = kernels.active.risk_grad(net.theta, net.arch.widths_array, X, y, loss.code, loss.delta,
                                    net.arch.F, clamp)
    return g


def as_xy(data, d):
    """Normalise ``(X, y)`` arrays or a list of ``(x, y)`` pairs to arrays."""
    if isinstance(data, tuple) and len(data) == 2 and isinstance(data[0], np.ndarray):
        X, y = data
    else:
        data = list(data)
        if not data:
            raise ShapeError("batch must be nonempty")
        X = np.array([np.atleast_1d(np.asarray(x, dtype=np.float64)) for x, _ in data])
        y = np.array([float(v) for _, v in data])
    X = _as_batch(X, d)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise ShapeError("batch must be nonempty")
    if y.shape[0] != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
    return X, y
