"""
JSON experiment configuration: parsing into process models, calibration
settings and optimiser settings.

A configuration is a plain dict (the parsed JSON document). Sections::

    {"seed": 0,
     "process": {"type": "ar" | "gexpar" | "binary", ...},
     "loss": "huber:10",
     "calibration": {"class": "holder", "s": 2, "d": 1, "kappa": 2, "regime": "exponential", ...},
     "train": {"epochs": 100, "batch_size": 16, ...},
     "sweep": {"n_grid": [...], "replications": 20, "M_test": 50000},
     "a4": {"shifts": [...], "M": 1000000},
     "lowerbound": {"q": 0, "beta": [1], "t": [1], "n": 10000}}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Callable, Optional

import numpy as np

from . import processes as proc
from .errors import ConfigError
from .losses import LossSpec, parse_loss
from .theory import (CalibrationConstants, CompositionClass, HolderClass, calibrate,
                     effective_smoothness)
from .trainer import TrainConfig


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _section(cfg, name, required=True):
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"config has no {name!r} section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return sec


def _only(sec, allowed, where):
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


# ---------------------------------------------------------------- processes

class LinearLags:
    """``f(y) = bias + sum_i coef_i y_i``; picklable."""

    def __init__(self, coef, bias=0.0):
        self.coef = np.asarray(coef, dtype=np.float64)
        self.bias = float(bias)

    def __call__(self, y):
        return self.bias + float(np.dot(self.coef, np.asarray(y, dtype=np.float64)[:len(self.coef)]))


@dataclass
class ProcessModel:
    """A data-generating process together with its truth.

    For regression, ``truth`` is the regression function; for
    classification, ``eta`` maps windows to ``P(Y = 1 | window)`` and
    ``truth`` is its logit.
    """

    kind: str                 # "regression" or "classification"
    d: int
    simulate: Callable        # (n, seed) -> ARSample
    truth: Optional[Callable]
    eta: Optional[Callable] = None
    noise: Optional[str] = None
    meta: Optional[dict] = None


def target_spec(doc: dict, d: int) -> proc.TargetSpec:
    names = {f.name for f in fields(proc.TargetSpec)} - {"gexpar"}
    _only(doc, names, "process.target")
    kw = dict(doc)
    kw.setdefault("d", d)
    for key in ("dims", "t", "beta"):
        if key in kw:
            kw[key] = tuple(kw[key])
    return proc.TargetSpec(**kw)


def build_process(doc: dict) -> ProcessModel:
    kind = doc.get("type")
    if kind == "ar":
        _only(doc, {"type", "d", "noise", "burn_in", "target", "lipschitz"}, "process")
        d = int(doc.get("d", 1))
        target = proc.make_target(target_spec(doc.get("target", {"kind": "holder"}), d))
        if target.d != d:
            raise ConfigError("target dimension differs from the lag order")
        spec = proc.ARSpec(d, target, doc.get("noise", "gaussian"), int(doc.get("burn_in", proc.DEFAULT_BURN_IN)),
                           doc.get("lipschitz"))
        return ProcessModel("regression", d, lambda n, seed: proc.simulate_ar(spec, n, seed), target,
                            noise=spec.noise, meta=target.meta)
    if kind == "gexpar":
        _only(doc, {"type", "c0", "c", "pi", "lam", "z", "noise", "burn_in", "beta", "allow_explosive",
                    "override"}, "process")
        params = gexpar_params(doc)
        noise = doc.get("noise", "gaussian")
        if noise not in proc.NOISES:
            raise ConfigError(f"noise must be one of {proc.NOISES}")
        burn = int(doc.get("burn_in", proc.DEFAULT_BURN_IN))
        override = bool(doc.get("override", False))
        target = proc.make_target(proc.TargetSpec("gexpar", d=params.d, beta=(float(doc.get("beta", 1.0)),),
                                                  gexpar=params))
        return ProcessModel("regression", params.d,
                            lambda n, seed: proc.simulate_gexpar(params, n, noise, seed, burn, override),
                            target, noise=noise, meta={**target.meta, "params": params})
    if kind == "binary":
        _only(doc, {"type", "p", "coef", "bias", "burn_in", "recode"}, "process")
        p = int(doc.get("p", 1))
        coef = doc.get("coef", [0.4] + [0.0] * (p - 1))
        if len(coef) != p:
            raise ConfigError("binary process needs one coefficient per lag")
        spec = proc.BinaryARSpec(p, LinearLags(coef, doc.get("bias", 0.0)), recode=bool(doc.get("recode", True)),
                                 burn_in=int(doc.get("burn_in", proc.DEFAULT_BURN_IN)))
        eta = lambda X: proc.binary_eta(spec, X)  # noqa: E731

        def logit(X):
            e = np.clip(eta(X), 1e-300, 1 - 1e-16)
            return np.log(e) - np.log1p(-e)

        return ProcessModel("classification", spec.input_dim, lambda n, seed: proc.simulate_binary(spec, n, seed),
                            logit, eta=eta, meta={"kind": "binary", "p": p, "coef": list(coef)})
    raise ConfigError(f"process.type must be 'ar', 'gexpar' or 'binary', got {kind!r}")


def gexpar_params(doc: dict) -> proc.GexparParams:
    try:
        return proc.GexparParams(float(doc.get("c0", 0.0)), tuple(doc["c"]), tuple(doc["pi"]),
                                 float(doc.get("lam", -1.0)), tuple(doc.get("z", [0.0] * len(doc["c"]))),
                                 bool(doc.get("allow_explosive", False)))
    except KeyError as exc:
        raise ConfigError(f"gexpar process needs {exc}") from None


# ---------------------------------------------------------------- calibration

_CAL_KEYS = {"class", "s", "d", "kappa", "K", "regime", "c", "gamma", "q", "beta", "t", "dims",
             "c_L", "c_N", "c_B", "B", "F", "nu3", "lambda_scale", "family", "shape"}


@dataclass(frozen=True)
class CalibrationSettings:
    regime: str
    cls: object
    c: float
    gamma: float
    constants: CalibrationConstants

    def calibrate(self, n, K_ell: float):
        return calibrate(self.regime, self.cls, n, self.c, self.gamma, self.constants, K_ell)


def build_calibration(doc: dict, d: int) -> CalibrationSettings:
    _only(doc, _CAL_KEYS, "calibration")
    kind = doc.get("class", "holder")
    kappa = float(doc.get("kappa", 2.0))
    K = float(doc.get("K", 1.0))
    if kind == "holder":
        cls = HolderClass(float(doc.get("s", 2.0)), int(doc.get("d", d)), kappa, K)
    elif kind == "composition":
        sm = effective_smoothness(int(doc.get("q", 0)), tuple(doc.get("beta", (2.0,))), tuple(doc.get("t", (d,))),
                                  tuple(doc["dims"]) if "dims" in doc else None)
        cls = CompositionClass(sm, int(doc.get("d", d)), kappa, K)
    else:
        raise ConfigError(f"calibration.class must be 'holder' or 'composition', got {kind!r}")
    const_keys = {f.name for f in fields(CalibrationConstants)}
    constants = CalibrationConstants(**{k: doc[k] for k in const_keys if k in doc})
    return CalibrationSettings(doc.get("regime", "exponential"), cls, float(doc.get("c", 1.0)),
                               float(doc.get("gamma", 1.0)), constants)


def build_train(doc: dict, seed: int) -> TrainConfig:
    names = {f.name for f in fields(TrainConfig)}
    _only(doc, names, "train")
    kw = dict(doc)
    kw.setdefault("seed", seed)
    try:
        return TrainConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def build_loss(cfg: dict) -> LossSpec:
    return parse_loss(cfg.get("loss", "huber:10"))
