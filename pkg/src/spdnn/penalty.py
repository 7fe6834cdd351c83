"""
Sparse penalties, their exact proximal maps, and the (lambda, tau) tuning rules.

Every family here is normalised so that ``pi(0) = 0``, ``pi`` is
non-decreasing, and ``pi(x) = lambda`` for all ``x > tau``. For SCAD and
MCP this means the usual shape parameter only bends the curve on
``[0, tau]``: SCAD with parameter ``a`` kinks at ``tau / a``; MCP reduces
to ``lambda * (2u - u^2)`` with ``u = x / tau`` whatever its gamma.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from ._exact import ceil_power_root
from .errors import ConfigError, DegenerateSampleError, DomainError

_FAMILIES = {"clipped_l1": kernels.PEN_CLIPPED_L1, "scad": kernels.PEN_SCAD, "mcp": kernels.PEN_MCP}
_DEFAULT_SHAPE = {"clipped_l1": 0.0, "scad": 3.7, "mcp": 3.0}

TAU_FLOOR = sys.float_info.min  # 2**-1022


@dataclass(frozen=True)
class PenaltySpec:
    family: str
    lam: float
    tau: float
    shape: Optional[float] = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigError(f"unknown penalty family {self.family!r}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError("lambda must be finite and >= 0")
        if not self.tau > 0:
            raise ConfigError("tau must be > 0")
        if self.shape is None:
            object.__setattr__(self, "shape", _DEFAULT_SHAPE[self.family])
        if self.family == "scad" and not self.shape > 2:
            raise ConfigError("scad needs a > 2")
        if self.family == "mcp" and not self.shape > 1:
            raise ConfigError("mcp needs gamma > 1")

    @property
    def code(self) -> int:
        return _FAMILIES[self.family]


def pi(spec: PenaltySpec, x):
    """Penalty value at ``x >= 0`` (scalar or array)."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("penalty is defined on [0, inf)")
    out = kernels.penalty_np(spec.code, arr, spec.lam, spec.tau, spec.shape)
    return float(out) if out.ndim == 0 else out


def penalty_total(spec: PenaltySpec, theta) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    return float(np.sum(kernels.penalty_np(spec.code, np.abs(theta), spec.lam, spec.tau, spec.shape)))


def prox(spec: PenaltySpec, x, eta: float):
    """Global minimiser of ``0.5 (z - x)^2 + eta * pi(|z|)``; ties go to smaller ``|z|``."""
    if not eta > 0:
        raise DomainError("prox step eta must be > 0")
    arr = np.asarray(x, dtype=np.float64)
    out = kernels.active.prox(spec.code, arr.reshape(-1), eta, spec.lam, spec.tau, spec.shape).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def prox_objective(spec: PenaltySpec, z, x, eta):
    return 0.5 * (np.asarray(z) - x) ** 2 + eta * kernels.penalty_np(spec.code, np.abs(z), spec.lam, spec.tau,
                                                                     spec.shape)


def n_alpha(n: int, c: float, gamma: float) -> int:
    """Effective sample size ``floor(n / ceil((8n/c)^(1/(gamma+1))))``.

    Returns 0 when ``n`` is too small; callers must treat that as degenerate.
    """
    if n < 1 or int(n) != n:
        raise DomainError("n must be a positive integer")
    if not (c > 0 and gamma > 0):
        raise DomainError("c and gamma must be positive")
    v = Fraction(8 * int(n)) / Fraction(c)
    return int(n) // ceil_power_root(v, gamma + 1.0)


class Tuning(NamedTuple):
    lam: float
    tau: float


REGIMES = ("subexponential", "exponential")


def effective_n(regime: str, n, c: float = 1.0, gamma: float = 1.0):
    """The sample size driving the rates: ``n_alpha`` or ``n`` itself."""
    if regime == "subexponential":
        return n_alpha(n, c, gamma)
    if regime == "exponential":
        return n
    raise ConfigError(f"regime must be one of {REGIMES}, got {regime!r}")


def log_tau_bound(K_ell: float, depth: int, width: int, B: float, m) -> float:
    """Log of ``1 / (16 K (L+1) ((N+1) B)^(L+1) m)``."""
    return -(math.log(16.0) + math.log(K_ell) + math.log(depth + 1) + (depth + 1) * math.log((width + 1) * B)
             + math.log(m))


def tune(regime: str, n, c: float, gamma: float, K_ell: float, arch, nu3: float,
         lambda_scale: float = 1.0) -> Tuning:
    """``lambda = scale * (log m)^nu3 / m`` and the largest admissible ``tau``.

    ``m`` is ``n_alpha(n, c, gamma)`` under subexponential mixing and ``n``
    under exponential mixing (where ``n`` may be any real >= 1). ``tau`` is
    the theoretical upper bound taken with equality, evaluated in log space
    and floored at the smallest positive normal double.
    """
    if regime == "subexponential":
        if not nu3 > 2:
            raise ConfigError("subexponential regime needs nu3 > 2")
    elif regime == "exponential":
        if not nu3 > 4:
            raise ConfigError("exponential regime needs nu3 > 4")
        if gamma < 1:
            raise ConfigError("exponential regime assumes gamma >= 1")
    else:
        raise ConfigError(f"regime must be one of {REGIMES}, got {regime!r}")
    if not lambda_scale > 0:
        raise ConfigError("lambda_scale must be > 0")
    if arch.B < 1:
        raise ConfigError("tuning assumes a weight bound B >= 1")
    m = effective_n(regime, n, c, gamma)
    if m <= 0:
        raise DegenerateSampleError(f"effective sample size is {m} for n={n}")
    lam = lambda_scale * math.log(m) ** nu3 / m
    log_tau = log_tau_bound(K_ell, arch.depth, arch.width, arch.B, m)
    tau = max(math.exp(log_tau), TAU_FLOOR) if log_tau > -745 else TAU_FLOOR
    return Tuning(lam, tau)


def make_penalty(family: str, tuning: Tuning, shape=None) -> PenaltySpec:
    return PenaltySpec(family, tuning.lam, tuning.tau, shape)


class ConditionAudit(NamedTuple):
    zero_at_origin: bool
    nondecreasing: bool
    flat_beyond_tau: bool

    @property
    def ok(self) -> bool:
        return self.zero_at_origin and self.nondecreasing and self.flat_beyond_tau


def audit_conditions(spec: PenaltySpec, points: int = 10_000) -> ConditionAudit:
    """Check ``pi(0) = 0``, monotonicity on ``[0, 3 tau]`` and ``pi = lam`` past ``tau``."""
    grid = np.linspace(0.0, 3.0 * spec.tau, points)
    vals = pi(spec, grid)
    beyond = pi(spec, spec.tau * np.array([1.0 + 1e-9, 2.0, 100.0]))
    return ConditionAudit(pi(spec, 0.0) == 0.0, bool(np.all(np.diff(vals) >= 0.0)),
                          bool(np.all(beyond == spec.lam)))
