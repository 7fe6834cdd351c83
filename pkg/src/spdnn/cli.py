"""Command-line entry point: ``spdnn <subcommand> --config cfg.json --out DIR``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as C
from . import harness as H
from . import processes as proc
from . import theory
from .errors import (ConfigError, DegenerateConstructionError, DegenerateSampleError, DomainError,
                     InvalidLabelError, ShapeError, SPDNNError)
from .trainer import fit

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4
_CONFIG_ERRORS = (ConfigError, ShapeError, DomainError, InvalidLabelError)


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(H._jsonable(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", 0))


def cmd_simulate(args, cfg) -> int:
    process = C.build_process(C._section(cfg, "process"))
    n = int(cfg.get("n", 1000))
    sample = process.simulate(n, _seed(args, cfg))
    out = _out_dir(args)
    proc.write_dataset_csv(out / "dataset.csv", sample)
    print(f"wrote {n} rows to {out / 'dataset.csv'}")
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    seed = _seed(args, cfg)
    process = C.build_process(C._section(cfg, "process"))
    loss = C.build_loss(cfg)
    cal = C.build_calibration(C._section(cfg, "calibration", False), process.d)
    train = C.build_train(C._section(cfg, "train", False), proc.split_seed(seed, 1))
    n = int(cfg.get("n", 1000))
    sample = process.simulate(n, proc.split_seed(seed, 0))
    X, y = sample.X, sample.y
    if process.kind == "regression" and C._section(cfg, "sweep", False).get("train_in_cube", True):
        keep = H.in_unit_cube(X)
        X, y = X[keep], y[keep]
    calib = cal.calibrate(n, loss.lipschitz_const)
    net, trace = fit((X, y), calib.arch, loss, calib.penalty, train)
    out = _out_dir(args)
    (out / "model.json").write_text(net.to_json() + "\n")
    trace.to_csv(out / "trace.csv")
    _write_json(out / "meta.json", {"calibration": calib.meta, "restart": trace.restart,
                                    "restart_objectives": trace.restart_objectives,
                                    "final_objective": trace.final_objective, "n_train": int(X.shape[0]),
                                    "revision": H.source_revision(), "environment": H.environment_stamp()})
    print(f"final objective {trace.final_objective:.6g}, l0 {trace.rows[-1][4]}")
    return EXIT_OK


def cmd_rate_sweep(args, cfg) -> int:
    if args.seed is not None:
        cfg = {**cfg, "seed": args.seed}
    res = H.rate_sweep(cfg, workers=args.workers, out_dir=_out_dir(args))
    for s in res.summary:
        print(f"n={s['n']:>7d}  median={s['median']:.4g}  IQR=[{s['q25']:.4g}, {s['q75']:.4g}]  ok={s['n_ok']}")
    if res.slope is None:
        print("slope: insufficient-points")
    else:
        print(f"slope {res.slope.slope:.4f} (OLS se {res.slope.stderr:.3g}, bootstrap se {res.bootstrap_se:.3g})")
    if res.failures:
        print(f"{len(res.failures)} cell(s) failed")
    return EXIT_OK


def cmd_verify_lowerbound(args, cfg) -> int:
    lb = C._section(cfg, "lowerbound", False)
    q = int(lb.get("q", 0))
    sm = theory.effective_smoothness(q, tuple(lb.get("beta", [1.0])), tuple(lb.get("t", [1])),
                                     tuple(lb["dims"]) if "dims" in lb else None)
    n = float(lb.get("n", 10_000))
    con = theory.build_hypercube(sm, n, bool(lb.get("rho_search", True)), seed=_seed(args, cfg))
    rep = theory.verify_lemma1(con, n)
    doc = rep.to_dict()
    doc["kernel_amplitude"] = con.kernel.amplitude
    _write_json(_out_dir(args) / "lowerbound.json", doc)
    print(json.dumps(H._jsonable({k: doc[k] for k in ("kappa", "phi_n", "min_pair_l2", "kl_budget",
                                                      "log_M_over_9", "pass_i", "pass_ii")}), sort_keys=True))
    return EXIT_OK if rep.passed else EXIT_ACCEPTANCE


def cmd_a4_probe(args, cfg) -> int:
    process = C.build_process(C._section(cfg, "process"))
    loss = C.build_loss(cfg)
    a4 = C._section(cfg, "a4", False)
    res = H.a4_probe(loss, process, shifts=tuple(a4.get("shifts", H.DEFAULT_SHIFTS)),
                     M=int(a4.get("M", 1_000_000)), seed=_seed(args, cfg))
    _write_json(_out_dir(args) / "a4.json", res.to_dict())
    print(f"estimated kappa {res.kappa:.4f} (se {res.stderr:.3g}, dropped {res.dropped})")
    return EXIT_OK


def cmd_stability(args, cfg) -> int:
    doc = C._section(cfg, "process")
    if doc.get("type") != "gexpar":
        raise ConfigError("stability needs a gexpar process")
    rep = proc.gexpar_stability(C.gexpar_params(doc))
    _write_json(_out_dir(args) / "stability.json", rep.to_dict())
    print(("stable" if rep.stable else "unstable") + f"; spectral radius {rep.spectral_radius:.6g}")
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "simulate a process and write the dataset CSV"),
    "train": (cmd_train, "fit one calibrated model; write checkpoint, trace and metadata"),
    "rate-sweep": (cmd_rate_sweep, "run an n-sweep and fit the log-log error slope"),
    "verify-lowerbound": (cmd_verify_lowerbound, "build and audit the hypercube lower-bound construction"),
    "a4-probe": (cmd_a4_probe, "estimate the local excess-risk exponent"),
    "stability": (cmd_stability, "check the GEXPAR characteristic-root condition"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spdnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--out", default="results", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        cfg = C.load_config(args.config)
        with np.errstate(over="ignore"):
            return handler(args, cfg)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateSampleError, DegenerateConstructionError, SPDNNError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
