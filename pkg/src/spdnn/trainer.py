"""
Penalised empirical risk minimisation by proximal gradient descent.

Each step is gradient -> componentwise prox -> projection onto
``[-B, B]``. Projection comes last so every iterate lies in the bounded
network class; the prox runs first so exact zeros survive projection.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from . import kernels
from .errors import ConfigError, TrainingFailure
from .losses import LossSpec
from .network import Architecture, Network, as_xy, init_params, project_params
from .penalty import PenaltySpec, penalty_total
from .processes import make_rng, split_seed

SCHEDULES = ("cosine", "constant")
INITS = ("uniform", "he")


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser settings.

    ``restarts`` is the number of independent initialisations (0 is
    treated as 1). ``backtracking`` halves the step until the full-batch
    objective does not increase; it only applies when ``batch_size`` is
    ``"full"``. ``inject_nan_at`` poisons the iterate at that epoch and
    exists to exercise divergence handling.
    """

    epochs: int = 200
    batch_size: Union[int, str] = "full"
    step_size: float = 0.05
    schedule: str = "cosine"
    final_step_fraction: float = 0.01
    restarts: int = 3
    seed: int = 0
    backtracking: bool = True
    max_halvings: int = 40
    zero_tol: float = 1e-8
    init: str = "uniform"
    inject_nan_at: Optional[int] = None

    def __post_init__(self):
        if not (isinstance(self.epochs, int) and self.epochs >= 1):
            raise ConfigError("epochs must be a positive integer")
        if self.batch_size != "full" and not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            raise ConfigError("batch_size must be a positive integer or 'full'")
        if not (self.step_size > 0 and math.isfinite(self.step_size)):
            raise ConfigError("step_size must be finite and > 0")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}")
        if not 0 < self.final_step_fraction <= 1:
            raise ConfigError("final_step_fraction must lie in (0, 1]")
        if self.restarts < 0:
            raise ConfigError("restarts must be >= 0")
        if self.init not in INITS:
            raise ConfigError(f"init must be one of {INITS}")

    @property
    def runs(self) -> int:
        return max(self.restarts, 1)

    def step_at(self, epoch: int) -> float:
        """Step size used during ``epoch`` (0-based)."""
        if self.schedule == "constant" or self.epochs == 1:
            return self.step_size
        lo = self.final_step_fraction
        frac = epoch / (self.epochs - 1)
        return self.step_size * (lo + (1 - lo) * 0.5 * (1 + math.cos(math.pi * frac)))


TRACE_COLUMNS = ("epoch", "objective", "risk", "penalty", "l0", "linf")


@dataclass
class TrainTrace:
    """Per-epoch records of the returned restart, epoch 0 being the initial point."""

    rows: List[tuple] = field(default_factory=list)
    restart: int = 0
    diverged: bool = False
    restart_objectives: List[float] = field(default_factory=list)
    restart_diverged: List[bool] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[TRACE_COLUMNS.index(name)] for r in self.rows], dtype=np.float64)

    @property
    def final_objective(self) -> float:
        return self.rows[-1][1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:4]] + [int(r[4]), repr(float(r[5]))])


def objective(net: Network, data, loss: LossSpec, penalty: PenaltySpec) -> float:
    """Mean loss of the clamped network plus ``sum_j pi(|theta_j|)``."""
    X, y = as_xy(data, net.arch.input_dim)
    risk = kernels.active.risk(net.theta, net.arch.widths_array, X, y, loss.code, loss.delta, net.arch.F, True)
    return risk + penalty_total(penalty, net.theta)


class _Problem:
    """Bundles the fixed pieces of one fit for fast repeated evaluation."""

    def __init__(self, X, y, arch, loss, penalty, zero_tol):
        self.X, self.y = X, y
        self.widths = arch.widths_array
        self.arch, self.loss, self.penalty = arch, loss, penalty
        self.zero_tol = zero_tol
        self.kern = kernels.active

    def risk(self, theta, idx=None):
        X, y = (self.X, self.y) if idx is None else (self.X[idx], self.y[idx])
        return self.kern.risk(theta, self.widths, X, y, self.loss.code, self.loss.delta, self.arch.F, True)

    def risk_grad(self, theta, idx=None):
        X, y = (self.X, self.y) if idx is None else (self.X[idx], self.y[idx])
        return self.kern.risk_grad(theta, self.widths, X, y, self.loss.code, self.loss.delta, self.arch.F, True)

    def pen(self, theta):
        return penalty_total(self.penalty, theta)

    def step(self, theta, grad, eta):
        z = theta - eta * grad
        p = self.penalty
        z = self.kern.prox(p.code, z, eta, p.lam, p.tau, p.shape)
        return project_params(z, self.arch.B)

    def record(self, epoch, theta, risk=None):
        if risk is None:
            risk = self.risk(theta)
        pen = self.pen(theta)
        finite = bool(np.all(np.isfinite(theta)))
        l0 = int(np.count_nonzero(np.abs(theta) > self.zero_tol)) if finite else -1
        linf = float(np.max(np.abs(theta))) if finite else float("nan")
        return (epoch, risk + pen, risk, pen, l0, linf)


def _initial(arch: Architecture, rng, how: str) -> np.ndarray:
    if how == "uniform":
        return project_params(init_params(arch, rng), arch.B)
    parts = []
    for j in range(1, len(arch.widths)):
        fan_in, p_out = arch.widths[j - 1], arch.widths[j]
        parts.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), p_out * fan_in))
        parts.append(np.zeros(p_out))
    return project_params(np.concatenate(parts), arch.B)


def _run(problem: _Problem, config: TrainConfig, rng) -> tuple:
    theta = _initial(problem.arch, rng, config.init)
    rows = [problem.record(0, theta)]
    n = problem.X.shape[0]
    full = config.batch_size == "full" or config.batch_size >= n
    for epoch in range(config.epochs):
        eta = config.step_at(epoch)
        if config.inject_nan_at is not None and epoch == config.inject_nan_at:
            theta = np.full_like(theta, np.nan)
        if not np.all(np.isfinite(theta)):
            # the prox would silently map NaN to a candidate, so stop here
            rows.append(problem.record(epoch + 1, theta))
            return theta, rows, True
        if full:
            risk, g = problem.risk_grad(theta)
            if not np.all(np.isfinite(g)):
                rows.append(problem.record(epoch + 1, np.full_like(theta, np.nan)))
                return theta, rows, True
            cur = risk + problem.pen(theta)
            new = problem.step(theta, g, eta)
            if config.backtracking and math.isfinite(cur):
                for _ in range(config.max_halvings):
                    if problem.risk(new) + problem.pen(new) <= cur:
                        break
                    eta *= 0.5
                    new = problem.step(theta, g, eta)
                else:
                    new = theta
            theta = new
        else:
            perm = rng.permutation(n)
            bs = config.batch_size
            for start in range(0, n, bs):
                idx = perm[start:start + bs]
                _, g = problem.risk_grad(theta, idx)
                if not np.all(np.isfinite(g)):
                    rows.append(problem.record(epoch + 1, np.full_like(theta, np.nan)))
                    return theta, rows, True
                theta = problem.step(theta, g, eta)
        row = problem.record(epoch + 1, theta)
        rows.append(row)
        if not math.isfinite(row[1]):
            return theta, rows, True
    return theta, rows, False


def fit(data, arch: Architecture, loss: LossSpec, penalty: PenaltySpec,
        config: TrainConfig = TrainConfig()) -> tuple:
    """Minimise the penalised empirical risk; returns ``(network, trace)``.

    Runs ``config.runs`` restarts seeded by ``split_seed(config.seed, r)``
    and keeps the one with the lowest final objective. A restart whose
    objective becomes non-finite is abandoned; if all of them are,
    :class:`TrainingFailure` is raised with their traces.
    """
    X, y = as_xy(data, arch.input_dim)
    X = np.ascontiguousarray(X)
    y = np.ascontiguousarray(y)
    if loss.kind == "logistic" and not np.all((y == 1) | (y == -1)):
        from .errors import InvalidLabelError
        raise InvalidLabelError("logistic loss needs labels in {-1, +1}")
    problem = _Problem(X, y, arch, loss, penalty, config.zero_tol)
    results = []
    for r in range(config.runs):
        rng = make_rng(split_seed(config.seed, r))
        theta, rows, diverged = _run(problem, config, rng)
        results.append((theta, rows, diverged))
    finals = [rows[-1][1] if not div else float("inf") for _, rows, div in results]
    divs = [div for _, _, div in results]
    if all(divs):
        traces = [TrainTrace(rows, r, True, finals, divs) for r, (_, rows, _) in enumerate(results)]
        raise TrainingFailure(f"all {config.runs} restarts diverged", traces)
    best = min(range(len(results)), key=lambda r: (finals[r], r))
    theta, rows, _ = results[best]
    return Network(arch, theta), TrainTrace(rows, best, False, finals, divs)
