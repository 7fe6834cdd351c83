"""One test per acceptance criterion, each printing a single pass/fail line."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from spdnn import harness as H
from spdnn import processes as P
from spdnn import theory as T
from spdnn.cli import main
from spdnn.config import build_process, build_loss, load_config
from spdnn.losses import L1, LOGISTIC, huber
from spdnn.network import Architecture, Network, gradient
from spdnn.penalty import PenaltySpec, audit_conditions, n_alpha, prox

import oracles

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
FAMILIES = ("clipped_l1", "scad", "mcp")
CODES = {"clipped_l1": oracles.CLIPPED, "scad": oracles.SCAD, "mcp": oracles.MCP}


def test_criterion_01_prox_matches_grid_oracle(acceptance):
    rng = np.random.default_rng(20240601)
    oracles.grid_prox_min(0, 0.1, 0.1, 1.0, 0.5, 0.0, 1e-2)  # compile outside the timer
    t0 = time.perf_counter()
    worst = -np.inf
    for _ in range(1000):
        fam = FAMILIES[rng.integers(3)]
        lam, tau = rng.uniform(0.01, 10), rng.uniform(1e-4, 1)
        eta, x = rng.uniform(1e-3, 1), rng.uniform(-5, 5)
        spec = PenaltySpec(fam, lam, tau)
        z = prox(spec, x, eta)
        got = oracles.prox_objective(CODES[fam], z, x, eta, lam, tau, spec.shape)
        ref = oracles.grid_prox_min(CODES[fam], x, eta, lam, tau, spec.shape, 1e-5)
        worst = max(worst, got - ref)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 30
    acceptance(1, ok, f"max(prox objective - grid min) = {worst:.3e} (tol 1e-8), {elapsed:.1f}s (< 30s)")
    assert ok


# relative error is measured against max(|g|, |fd|, FLOOR). A step-1e-5 stencil carries
# rounding noise of about eps * |risk| / step ~ 1e-11 per component (one ulp of the risk),
# so exact zeros from dead units would otherwise show a "relative" error of order 1.
# Below the floor the check becomes an absolute one at 1e-10.
GRAD_FLOOR = 1e-5


def test_criterion_02_gradient_fidelity(acceptance):
    rng = np.random.default_rng(7)
    losses = (L1, huber(1.0), LOGISTIC)
    t0 = time.perf_counter()
    worst, nets = 0.0, 0
    while nets < 50:
        d = int(rng.integers(1, 4))
        L = int(rng.integers(1, 4))
        widths = (d,) + tuple(int(v) for v in rng.integers(1, 9, L)) + (1,)
        arch = Architecture(widths, 5.0, 3.0)
        theta = rng.normal(0, 0.8, arch.n_params)
        X = rng.normal(size=(8, d))
        y_reg = rng.normal(size=8)
        y_cls = rng.choice([-1.0, 1.0], 8)
        cases = [(loss, y_cls if loss.kind == "logistic" else y_reg) for loss in losses]
        if any(oracles.kink_distance(theta, widths, X, y, loss.kind, loss.delta, arch.F) < 1e-3
               for loss, y in cases):
            continue  # resample: a kink within reach of the finite-difference stencil
        net = Network(arch, theta)
        for loss, y in cases:
            g = gradient(net, loss, (X, y))
            fd = oracles.central_difference(
                lambda t: oracles.risk_reference(t, widths, X, y, loss.kind, loss.delta, arch.F), theta, 1e-5)
            rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), GRAD_FLOOR)
            worst = max(worst, float(rel.max()))
        nets += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 60
    acceptance(2, ok, f"50 nets x 3 losses, max componentwise rel. error {worst:.2e} (< 1e-5), {elapsed:.1f}s")
    assert ok


def test_criterion_03_penalty_conditions(acceptance):
    rng = np.random.default_rng(3)
    failures = []
    for fam in FAMILIES:
        for _ in range(100):
            shape = None
            if fam == "scad":
                shape = rng.uniform(2.05, 10)
            elif fam == "mcp":
                shape = rng.uniform(1.05, 10)
            spec = PenaltySpec(fam, rng.uniform(0.01, 10), 10 ** rng.uniform(-4, 0), shape)
            if not audit_conditions(spec).ok:
                failures.append(spec)
    ok = not failures
    acceptance(3, ok, f"conditions audited on 300 specs (100 per family), {len(failures)} failures")
    assert ok


def test_criterion_04_formulas(acceptance):
    checks = {
        "n_alpha(100,1,1)=3": n_alpha(100, 1, 1) == 3,
        "n_alpha(1000,8,1)=31": n_alpha(1000, 8, 1) == 31,
        "phi(1024)=2^-8": T.phi(1024, T.effective_smoothness(0, (2.0,), (1,))) == 2.0 ** -8,
    }
    for beta in (0.5, 1.0, 2.0):
        sm = T.effective_smoothness(1, (beta, max(beta, 1.0) * 2), (1, 2))
        checks[f"gexpar exponent beta={beta}"] = math.isclose(sm.exponent, 2 * beta / (2 * beta + 1), rel_tol=1e-14)
    ok = all(checks.values())
    bad = [k for k, v in checks.items() if not v]
    acceptance(4, ok, f"{len(checks)} formula checks" + (f", failed: {bad}" if bad else ""))
    assert ok


def test_criterion_05_lemma1(acceptance):
    t0 = time.perf_counter()
    sm = T.effective_smoothness(0, (1.0,), (1,))
    con = T.build_hypercube(sm, 1e4)
    rep = T.verify_lemma1(con, 1e4)
    elapsed = time.perf_counter() - t0
    ok = rep.passed and elapsed < 120
    acceptance(5, ok, f"min pair L2 {rep.min_pair_l2:.4g} >= {rep.threshold:.4g}; KL {rep.kl_budget:.4g} <= "
                      f"{rep.log_M_over_9:.4g}; quadrature rel. err {max(rep.bump_rel_err, rep.hamming_rel_err):.1e}; "
                      f"{elapsed:.1f}s")
    assert ok


def test_criterion_06_gexpar_stability(acceptance):
    rng = np.random.default_rng(6)
    draws = disagreements = 0
    while draws < 100:
        d = int(rng.integers(1, 6))
        c = rng.uniform(-0.7, 0.7, d) / math.sqrt(d)
        pi_ = rng.uniform(-0.4, 0.4, d) / math.sqrt(d)
        params = P.GexparParams(0.0, tuple(c), tuple(pi_), -1.0, (0.0,) * d)
        rho = float(np.max(np.abs(oracles.roots_numpy(params.phi))))
        if abs(rho - 1) < 1e-3:
            continue  # both oracles are ill-conditioned at the boundary
        rep = P.gexpar_stability(params)
        inside = oracles.argument_principle_count(params.phi)
        agree = (rep.stable == (rho < 1) == (inside == d)
                 and np.allclose(sorted(rep.moduli), sorted(np.abs(oracles.roots_numpy(params.phi))), atol=1e-9))
        disagreements += not agree
        draws += 1
    rep2 = P.gexpar_stability(P.GexparParams(0.0, (0.3, 0.2), (0.1, 0.1), -1.0, (0.0, 0.0)))
    roots = sorted(r.real for r in rep2.roots)
    example_ok = rep2.stable and np.allclose(roots, sorted(oracles.GEXPAR_D2_ROOTS), atol=1e-12)
    ok = disagreements == 0 and example_ok
    acceptance(6, ok, f"{disagreements}/100 disagreements with eigen and winding oracles; d=2 roots "
                      f"{roots[1]:.4f}, {roots[0]:.4f}")
    assert ok


def test_criterion_07_rate_band(acceptance, tmp_path):
    cfg = load_config(CONFIGS / "rate_sweep.json")
    assert cfg["sweep"]["n_grid"] == [512, 1024, 2048, 4096, 8192] and cfg["sweep"]["replications"] == 20
    t0 = time.perf_counter()
    res = H.rate_sweep(cfg, workers=1, out_dir=tmp_path)
    elapsed = time.perf_counter() - t0
    slope = res.slope.slope if res.slope is not None else float("nan")
    ok = res.inversions <= 1 and -1.2 <= slope <= -0.35 and not res.failures
    meds = ", ".join(f"{m:.3g}" for m in res.medians)
    acceptance(7, ok, f"slope {slope:.3f} in [-1.2, -0.35], inversions {res.inversions} (<= 1), "
                      f"medians [{meds}], {elapsed / 60:.1f} min")
    assert ok


def test_criterion_08_classification(acceptance):
    cfg = load_config(CONFIGS / "classification.json")
    res = H.rate_sweep(cfg)
    model_excess = float(np.median([r["error"] for r in res.rows if r["status"] == "ok"]))
    process = build_process(cfg["process"])
    held = process.simulate(200_000, P.split_seed(cfg["seed"], 99))
    c = H.best_constant_logit(held.eta)
    const_excess = float(np.mean(H.conditional_excess(np.full(held.n, c), held.eta)))
    ok = model_excess < 0.5 * const_excess and not res.failures
    acceptance(8, ok, f"median excess {model_excess:.3e} < 0.5 x constant-predictor excess {const_excess:.3e}")
    assert ok


def test_criterion_09_a4(acceptance):
    kappas = {}
    for name in ("a4_huber", "a4_logistic"):
        cfg = load_config(CONFIGS / f"{name}.json")
        process = build_process(cfg["process"])
        res = H.a4_probe(build_loss(cfg), process, M=int(cfg["a4"]["M"]), seed=int(cfg["seed"]))
        kappas[name] = res.kappa
    eta = build_process(load_config(CONFIGS / "a4_logistic.json")["process"]).eta(np.array([[0.0], [1.0]]))
    ok = all(1.8 <= k <= 2.2 for k in kappas.values()) and 0.2 <= eta.min() and eta.max() <= 0.8
    acceptance(9, ok, f"kappa huber {kappas['a4_huber']:.4f}, logistic {kappas['a4_logistic']:.4f} (both in [1.8, 2.2])")
    assert ok


SMALL = {
    "seed": 4, "n": 400, "loss": "huber:10",
    "process": {"type": "ar", "d": 1, "target": {"kind": "holder", "s": 2, "profile": "quadratic"}},
    "calibration": {"class": "holder", "s": 2, "d": 1, "regime": "exponential", "lambda_scale": 1e-5},
    "train": {"epochs": 5, "batch_size": 16, "restarts": 2, "init": "he"},
    "sweep": {"n_grid": [256, 512, 1024], "replications": 3, "M_test": 5000},
    "a4": {"M": 50000},
    "lowerbound": {"q": 0, "beta": [1], "t": [1], "n": 3000},
}
GEX = {"seed": 1, "n": 300, "process": {"type": "gexpar", "c": [0.3, 0.2], "pi": [0.1, 0.1], "lam": -1}}


def _run_twice(tmp_path, cmd, doc):
    cfg = tmp_path / f"{cmd}.json"
    cfg.write_text(json.dumps(doc))
    outs = []
    for k in ("a", "b"):
        out = tmp_path / cmd / k
        code = main([cmd, "--config", str(cfg), "--out", str(out)])
        assert code == 0, f"{cmd} exited with {code}"
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    return outs[0] == outs[1] and outs[0]


def test_criterion_10_determinism_and_isolation(acceptance, tmp_path):
    runs = {"simulate": SMALL, "train": SMALL, "rate-sweep": SMALL, "verify-lowerbound": SMALL,
            "a4-probe": SMALL, "stability": GEX}
    identical = {cmd: bool(_run_twice(tmp_path, cmd, doc)) for cmd, doc in runs.items()}

    clean = H.rate_sweep(SMALL)
    poisoned_cfg = {**SMALL, "sweep": {**SMALL["sweep"], "poison": [[1, 2]]}}
    poisoned = H.rate_sweep(poisoned_cfg)
    bad = [r for r in poisoned.rows if r["status"] != "ok"]
    others_same = all(json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
                      for a, b in zip(clean.rows, poisoned.rows)
                      if (a["n"], a["replication"]) != (512, 2))
    isolated = len(bad) == 1 and (bad[0]["n"], bad[0]["replication"]) == (512, 2) and others_same
    ok = all(identical.values()) and isolated
    diff = [k for k, v in identical.items() if not v]
    acceptance(10, ok, f"byte-identical reruns for {sum(identical.values())}/6 subcommands"
                       + (f" (differ: {diff})" if diff else "")
                       + f"; poisoned cell isolated: {isolated}")
    assert ok
