"""
Experiment orchestration: held-out error estimation, sample-size sweeps,
log-log slope fits and the local excess-risk probe.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import kernels
from .config import (ProcessModel, _section, build_calibration, build_loss, build_process, build_train)
from .errors import (ConfigError, EstimationSupportError, InsufficientPointsError, ProbeFailure,
                     SPDNNError)
from .losses import LossSpec
from .processes import split_seed
from .trainer import fit


def _predict(predictor, X):
    if hasattr(predictor, "predict"):
        return np.asarray(predictor.predict(X), dtype=np.float64)
    return np.asarray(predictor(X), dtype=np.float64).ravel()


def in_unit_cube(X) -> np.ndarray:
    X = np.asarray(X)
    return np.all((X >= 0.0) & (X <= 1.0), axis=1)


# ---------------------------------------------------------------- error estimates

@dataclass(frozen=True)
class ErrorEstimate:
    value: float
    stderr: float
    count: int


def estimate_l2_error_detail(predictor, truth, process: ProcessModel, M_test: int, seed: int) -> ErrorEstimate:
    """Mean of ``(h_hat - h*)^2`` over held-out windows lying in ``[0, 1]^d``.

    The held-out path is a fresh trajectory of length ``M_test``; by
    ergodicity the average targets the squared ``L2(P_X)`` distance of the
    estimand restricted to the unit cube.
    """
    sample = process.simulate(M_test, seed)
    X = sample.X[in_unit_cube(sample.X)]
    if X.shape[0] == 0:
        raise EstimationSupportError(f"no held-out window out of {M_test} fell in the unit cube")
    sq = (_predict(predictor, X) - _predict(truth, X)) ** 2
    se = float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else float("nan")
    return ErrorEstimate(float(sq.mean()), se, int(sq.size))


def estimate_l2_error(predictor, truth, process: ProcessModel, M_test: int, seed: int) -> float:
    return estimate_l2_error_detail(predictor, truth, process, M_test, seed).value


def logistic_phi(v):
    """``log(1 + exp(-v))`` computed stably."""
    v = np.asarray(v, dtype=np.float64)
    return np.log1p(np.exp(-np.abs(v))) + np.maximum(-v, 0.0)


def binary_entropy(eta):
    eta = np.asarray(eta, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(eta > 0, -eta * np.log(np.where(eta > 0, eta, 1.0)), 0.0)
        b = np.where(eta < 1, -(1 - eta) * np.log(np.where(eta < 1, 1 - eta, 1.0)), 0.0)
    return a + b


def conditional_excess(pred, eta):
    """``eta phi(h) + (1 - eta) phi(-h) - H(eta)``, the pointwise logistic excess risk.

    At ``eta`` in ``{0, 1}`` the minimal risk is 0, which is the limit of
    the formula as the target logit tends to infinity.
    """
    pred = np.asarray(pred, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    pos = np.where(eta > 0, eta * logistic_phi(pred), 0.0)
    neg = np.where(eta < 1, (1 - eta) * logistic_phi(-pred), 0.0)
    return pos + neg - binary_entropy(eta)


def estimate_excess_risk_classification(predictor, eta_truth, process: ProcessModel, M_test: int,
                                        seed: int) -> float:
    """Held-out average of the closed-form conditional logistic excess risk.

    ``eta_truth`` maps windows to ``P(Y = 1 | window)``; pass ``None`` to
    use the probabilities recorded by the simulator.
    """
    sample = process.simulate(M_test, seed)
    if eta_truth is None:
        if sample.eta is None:
            raise ConfigError("no eta available for the held-out sample")
        eta = sample.eta
    else:
        eta = _predict(eta_truth, sample.X)
    return float(np.mean(conditional_excess(_predict(predictor, sample.X), eta)))


def best_constant_logit(eta) -> float:
    """Constant minimising the logistic risk: the logit of the mean probability."""
    p = float(np.mean(eta))
    p = min(max(p, 1e-12), 1 - 1e-12)
    return math.log(p / (1 - p))


# ---------------------------------------------------------------- slope fit

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    n_points: int


def fit_slope(points: Sequence) -> SlopeFit:
    """Least squares of ``log error`` on ``log n``; non-positive errors are dropped."""
    xs, ys = [], []
    for n, e in points:
        if not (e > 0 and math.isfinite(e)) or not n > 0:
            warnings.warn(f"dropping point ({n}, {e}): error must be positive and finite")
            continue
        xs.append(math.log(n))
        ys.append(math.log(e))
    if len(set(xs)) < 2:
        raise InsufficientPointsError(f"need two distinct usable points, got {len(xs)}")
    x = np.array(xs)
    y = np.array(ys)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    dof = len(x) - 2
    if dof > 0:
        resid = y - A @ coef
        s2 = float(resid @ resid) / dof
        stderr = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    else:
        stderr = float("nan")
    return SlopeFit(slope, intercept, stderr, len(x))


# ---------------------------------------------------------------- rate sweep

CELL_COLUMNS = ("n", "replication", "seed", "status", "error", "huber_excess", "l0", "objective",
                "depth", "width", "lambda", "tau", "message")


def huber_values(r, delta):
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * a - 0.5 * delta * delta)


def run_cell(cfg: dict, n: int, rep: int, cell_seed: int, poisoned: bool = False) -> dict:
    """One (n, replication) job: simulate, calibrate, fit, estimate."""
    process = build_process(_section(cfg, "process"))
    loss = build_loss(cfg)
    cal = build_calibration(_section(cfg, "calibration", False), process.d)
    train = build_train(_section(cfg, "train", False), 0)
    train = dataclasses.replace(train, seed=split_seed(cell_seed, 1),
                                inject_nan_at=0 if poisoned else train.inject_nan_at)
    sweep = _section(cfg, "sweep", False)
    M_test = int(sweep.get("M_test", 50_000))
    restrict = bool(sweep.get("train_in_cube", process.kind == "regression"))

    sample = process.simulate(n, split_seed(cell_seed, 0))
    X, y = sample.X, sample.y
    if restrict:
        keep = in_unit_cube(X)
        X, y = X[keep], y[keep]
        if X.shape[0] == 0:
            raise EstimationSupportError("no training window fell in the unit cube")
    calib = cal.calibrate(n, loss.lipschitz_const)
    net, trace = fit((X, y), calib.arch, loss, calib.penalty, train)
    test_seed = split_seed(cell_seed, 2)
    row = {"l0": trace.rows[-1][4], "objective": trace.final_objective, "depth": calib.arch.depth,
           "width": calib.arch.width, "lambda": calib.penalty.lam, "tau": calib.penalty.tau}
    if process.kind == "regression":
        held = process.simulate(M_test, test_seed)
        Xh = held.X[in_unit_cube(held.X)]
        if Xh.shape[0] == 0:
            raise EstimationSupportError("no held-out window fell in the unit cube")
        yh = held.y[in_unit_cube(held.X)]
        pred, true = net.predict(Xh), process.truth(Xh)
        row["error"] = float(np.mean((pred - true) ** 2))
        if loss.kind == "huber":
            row["huber_excess"] = float(np.mean(huber_values(pred - yh, loss.delta) - huber_values(true - yh, loss.delta)))
    else:
        row["error"] = estimate_excess_risk_classification(net, process.eta, process, M_test, test_seed)
    return row


def _cell_job(args):
    cfg, n, rep, cell_seed, poisoned, runner = args
    out = {"n": n, "replication": rep, "seed": cell_seed, "status": "ok", "error": float("nan"),
           "huber_excess": float("nan"), "l0": -1, "objective": float("nan"), "depth": -1, "width": -1,
           "lambda": float("nan"), "tau": float("nan"), "message": ""}
    try:
        with np.errstate(all="ignore"):
            if runner is not None:
                res = runner(cfg, n, rep, cell_seed)
                res = {"error": float(res)} if not isinstance(res, dict) else res
            else:
                res = run_cell(cfg, n, rep, cell_seed, poisoned)
        out.update(res)
        if not (out["error"] >= 0 and math.isfinite(out["error"])):
            raise FloatingPointError(f"non-finite error estimate {out['error']}")
    except (SPDNNError, FloatingPointError, ValueError, ArithmeticError) as exc:
        out["status"] = "failed"
        out["error"] = float("nan")
        out["message"] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass
class SweepResult:
    rows: List[dict]
    summary: List[dict]
    slope: Optional[SlopeFit]
    bootstrap_se: float
    inversions: int
    failures: List[dict]
    meta: dict = field(default_factory=dict)

    @property
    def medians(self) -> np.ndarray:
        return np.array([s["median"] for s in self.summary])

    def to_json_dict(self) -> dict:
        fit_doc = ({"slope": self.slope.slope, "intercept": self.slope.intercept,
                    "stderr": self.slope.stderr, "n_points": self.slope.n_points}
                   if self.slope is not None else "insufficient-points")
        return {"summary": self.summary, "fit": fit_doc, "bootstrap_se": self.bootstrap_se,
                "inversions": self.inversions, "failures": self.failures, **self.meta}

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "cells.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CELL_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in CELL_COLUMNS])
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("n", "median", "q25", "q75", "n_ok"))
            for s in self.summary:
                w.writerow([_fmt(s[k]) for k in ("n", "median", "q25", "q75", "n_ok")])
        with open(out / "result.json", "w") as fh:
            json.dump(_jsonable(self.to_json_dict()), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return repr(obj)


def source_revision() -> str:
    """Content hash of the package sources: identical code gives an identical string."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return "src-" + h.hexdigest()[:12]


def environment_stamp() -> dict:
    import scipy

    stamp = {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
             "machine": platform.machine(), "backend": kernels.active.name}
    if kernels.HAVE_NUMBA:
        import numba
        stamp["numba"] = numba.__version__
    return stamp


def count_inversions(values: Sequence[float]) -> int:
    """Adjacent pairs where the later value is larger."""
    return sum(1 for a, b in zip(values, values[1:]) if b > a)


def bootstrap_slope_se(grid, errors_by_n, n_boot: int = 200, seed: int = 0) -> float:
    """Standard deviation of the median-based slope over replication resamples."""
    rng = np.random.default_rng(seed)
    slopes = []
    for _ in range(n_boot):
        pts = []
        for n, errs in zip(grid, errors_by_n):
            if len(errs) == 0:
                continue
            pts.append((n, float(np.median(rng.choice(errs, size=len(errs), replace=True)))))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                slopes.append(fit_slope(pts).slope)
            except InsufficientPointsError:
                return float("nan")
    return float(np.std(slopes, ddof=1)) if len(slopes) > 1 else float("nan")


def sweep_grid(cfg: dict):
    sweep = _section(cfg, "sweep")
    grid = [int(v) for v in sweep.get("n_grid", [])]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("sweep.n_grid must be a nonempty strictly increasing list")
    R = int(sweep.get("replications", 1))
    if R < 1:
        raise ConfigError("sweep.replications must be >= 1")
    return grid, R


def rate_sweep(cfg: dict, workers: int = 1, cell_runner: Optional[Callable] = None,
               out_dir=None) -> SweepResult:
    """Run every (n, replication) cell, aggregate medians and fit the rate slope.

    Cell ``(i, r)`` is seeded by ``split_seed(seed, i, r)``, so results do
    not depend on ``workers`` or scheduling. Failed cells are recorded and
    excluded from the aggregates. ``cell_runner(cfg, n, r, seed)`` may
    replace the simulate-fit-estimate pipeline (it returns an error value).
    """
    grid, R = sweep_grid(cfg)
    seed = int(cfg.get("seed", 0))
    poison = {tuple(p) for p in _section(cfg, "sweep").get("poison", [])}
    if cell_runner is None:
        # fail fast on configuration problems before spawning jobs
        proc = build_process(_section(cfg, "process"))
        build_loss(cfg)
        build_calibration(_section(cfg, "calibration", False), proc.d)
        build_train(_section(cfg, "train", False), seed)
    jobs = [(cfg, n, r, split_seed(seed, i, r), (i, r) in poison, cell_runner)
            for i, n in enumerate(grid) for r in range(R)]
    if workers > 1 and cell_runner is None:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_cell_job, jobs))
    else:
        rows = [_cell_job(j) for j in jobs]

    summary, errors_by_n = [], []
    for n in grid:
        errs = np.array([r["error"] for r in rows if r["n"] == n and r["status"] == "ok"])
        errors_by_n.append(errs)
        if errs.size:
            q25, med, q75 = (float(v) for v in np.percentile(errs, [25, 50, 75]))
        else:
            q25 = med = q75 = float("nan")
        summary.append({"n": n, "median": med, "q25": q25, "q75": q75, "n_ok": int(errs.size)})
    pts = [(s["n"], s["median"]) for s in summary if s["n_ok"] > 0]
    try:
        slope = fit_slope(pts)
    except InsufficientPointsError:
        slope = None
    boot = bootstrap_slope_se(grid, errors_by_n, seed=split_seed(seed, 10**6)) if slope is not None else float("nan")
    meds = [s["median"] for s in summary if s["n_ok"] > 0]
    failures = [{"n": r["n"], "replication": r["replication"], "message": r["message"]}
                for r in rows if r["status"] != "ok"]
    meta = {"config": cfg, "seed_ledger": [{"n": r["n"], "replication": r["replication"], "seed": r["seed"]}
                                           for r in rows],
            "environment": environment_stamp(), "revision": source_revision(),
            "cells_failed": len(failures), "cells_total": len(rows)}
    result = SweepResult(rows, summary, slope, boot, count_inversions(meds), failures, meta)
    if out_dir is not None:
        result.write(out_dir)
    return result


# ---------------------------------------------------------------- A4 probe

@dataclass(frozen=True)
class A4Result:
    kappa: float
    intercept: float
    stderr: float
    shifts: tuple
    excess: tuple
    dropped: int

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "intercept": self.intercept, "stderr": self.stderr,
                "shifts": list(self.shifts), "excess": list(self.excess), "dropped": self.dropped}


DEFAULT_SHIFTS = tuple(s * v for v in (0.05, 0.1, 0.15, 0.2, 0.25, 0.3) for s in (-1, 1))


def a4_probe(loss: LossSpec, process: ProcessModel, truth=None, shifts: Sequence[float] = DEFAULT_SHIFTS,
             M: int = 1_000_000, seed: int = 0) -> A4Result:
    """Fit ``log(R(h* + a) - R(h*))`` against ``log |a|`` over constant shifts ``a``.

    One held-out path is shared by every shift (common random numbers).
    Regression uses realised residuals over windows in the unit cube;
    classification uses the closed-form conditional excess, so it carries
    no label noise.
    """
    shifts = tuple(float(a) for a in shifts)
    if any(a == 0 for a in shifts):
        raise ConfigError("shifts must be nonzero")
    sample = process.simulate(M, seed)
    truth = process.truth if truth is None else truth
    excess = []
    if process.kind == "classification" or loss.kind == "logistic":
        eta = _predict(process.eta, sample.X) if process.eta is not None else sample.eta
        h0 = _predict(truth, sample.X)
        for a in shifts:
            excess.append(float(np.mean(conditional_excess(h0 + a, eta))))
    else:
        keep = in_unit_cube(sample.X)
        if not keep.any():
            raise EstimationSupportError("no probe window fell in the unit cube")
        h0 = _predict(truth, sample.X[keep])
        y = sample.y[keep]
        base = kernels.loss_value_np(loss.code, loss.delta, h0, y)
        for a in shifts:
            excess.append(float(np.mean(kernels.loss_value_np(loss.code, loss.delta, h0 + a, y) - base)))
    usable = [(abs(a), e) for a, e in zip(shifts, excess) if e > 0]
    dropped = len(shifts) - len(usable)
    if dropped > len(shifts) / 2:
        raise ProbeFailure(f"{dropped} of {len(shifts)} excess estimates were non-positive")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = fit_slope(usable)
    return A4Result(f.slope, f.intercept, f.stderr, shifts, tuple(excess), dropped)
