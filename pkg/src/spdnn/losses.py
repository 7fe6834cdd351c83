"""Lipschitz losses: absolute error, Huber and the margin-based logistic loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, InvalidLabelError
from .network import Network, as_xy

_CODES = {"l1": kernels.LOSS_L1, "huber": kernels.LOSS_HUBER, "logistic": kernels.LOSS_LOGISTIC}

DEFAULT_HUBER_DELTA = 10.0


@dataclass(frozen=True)
class LossSpec:
    kind: str
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in _CODES:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if self.kind == "huber" and not self.delta > 0:
            raise ConfigError("huber loss needs delta > 0")

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def lipschitz_const(self) -> float:
        return self.delta if self.kind == "huber" else 1.0

    def __str__(self):
        return f"huber:{self.delta:g}" if self.kind == "huber" else self.kind


L1 = LossSpec("l1")
LOGISTIC = LossSpec("logistic")


def huber(delta: float = DEFAULT_HUBER_DELTA) -> LossSpec:
    return LossSpec("huber", float(delta))


def parse_loss(text: str) -> LossSpec:
    """Parse ``"l1"``, ``"logistic"``, ``"huber"`` or ``"huber:<delta>"``."""
    if isinstance(text, LossSpec):
        return text
    kind, _, arg = str(text).strip().partition(":")
    kind = kind.lower()
    if kind == "huber":
        try:
            return huber(float(arg) if arg else DEFAULT_HUBER_DELTA)
        except ValueError:
            raise ConfigError(f"bad huber delta in {text!r}") from None
    if arg:
        raise ConfigError(f"loss {kind!r} takes no parameter")
    return LossSpec(kind)


def _check_labels(spec, y):
    if spec.kind == "logistic":
        y = np.asarray(y)
        if not np.all((y == 1) | (y == -1)):
            raise InvalidLabelError("logistic loss needs labels in {-1, +1}")


def loss_value(spec: LossSpec, prediction, y):
    _check_labels(spec, y)
    out = kernels.loss_value_np(spec.code, spec.delta, prediction, y)
    return float(out) if np.ndim(out) == 0 else out


def loss_grad(spec: LossSpec, prediction, y):
    """Derivative of the loss in the prediction (0 at the L1 kink)."""
    _check_labels(spec, y)
    out = kernels.loss_deriv_np(spec.code, spec.delta, prediction, y)
    return float(out) if np.ndim(out) == 0 else out


def empirical_risk(spec: LossSpec, net: Network, data) -> float:
    """Mean loss of the clamped network over ``data``."""
    X, y = as_xy(data, net.arch.input_dim)
    _check_labels(spec, y)
    return kernels.active.risk(net.theta, net.arch.widths_array, X, y, spec.code, spec.delta,
                               net.arch.F, True)
