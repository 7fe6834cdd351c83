import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spdnn.errors import ConfigError, DegenerateSampleError, DomainError
from spdnn.network import Architecture
from spdnn.penalty import (TAU_FLOOR, PenaltySpec, audit_conditions, n_alpha, penalty_total, pi, prox,
                           prox_objective, tune)

import oracles

FAMILIES = ["clipped_l1", "scad", "mcp"]
CODES = {"clipped_l1": oracles.CLIPPED, "scad": oracles.SCAD, "mcp": oracles.MCP}

specs = st.builds(PenaltySpec, st.sampled_from(FAMILIES), st.floats(0.01, 10), st.floats(1e-4, 1))


def test_clipped_examples():
    s = PenaltySpec("clipped_l1", 0.4, 0.1)
    assert pi(s, 0.0) == 0.0
    assert pi(s, 0.05) == pytest.approx(0.2, rel=1e-15)
    assert pi(s, 1.0) == 0.4


def test_negative_argument_rejected():
    with pytest.raises(DomainError):
        pi(PenaltySpec("scad", 1.0, 1.0), -0.1)


@pytest.mark.parametrize("kw", [dict(family="lasso", lam=1, tau=1), dict(family="scad", lam=1, tau=0),
                                dict(family="scad", lam=1, tau=1, shape=2.0),
                                dict(family="mcp", lam=1, tau=1, shape=1.0),
                                dict(family="mcp", lam=-1, tau=1)])
def test_spec_validation(kw):
    with pytest.raises(ConfigError):
        PenaltySpec(**kw)


@pytest.mark.parametrize("family", FAMILIES)
def test_matches_textbook_forms(family):
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = PenaltySpec(family, rng.uniform(0.01, 10), rng.uniform(1e-4, 1))
        x = rng.uniform(0, 2 * s.tau, 50)
        ref = [oracles.textbook_penalty(CODES[family], v, s.lam, s.tau, s.shape) for v in x]
        assert np.allclose(pi(s, x), ref, rtol=1e-12, atol=1e-15)


def test_mcp_shape_cancels():
    a, b = PenaltySpec("mcp", 1.0, 0.5, 1.5), PenaltySpec("mcp", 1.0, 0.5, 8.0)
    x = np.linspace(0, 1, 101)
    assert np.allclose(pi(a, x), pi(b, x), rtol=1e-14)


@given(specs)
def test_conditions_hold(spec):
    assert audit_conditions(spec, 2000).ok


def test_penalty_total_examples():
    s = PenaltySpec("clipped_l1", 0.7, 0.2)
    assert penalty_total(s, np.zeros(5)) == 0.0
    assert penalty_total(s, [0.3, -1.0, 0.0, 5.0]) == pytest.approx(3 * 0.7)
    assert penalty_total(s, [0.1, 0.4]) == pytest.approx(0.35 + 0.7)


@given(specs, st.lists(st.floats(-3, 3), min_size=1, max_size=30), st.randoms())
def test_penalty_total_permutation_invariant(spec, theta, rnd):
    perm = list(theta)
    rnd.shuffle(perm)
    assert penalty_total(spec, theta) == pytest.approx(penalty_total(spec, perm), rel=1e-12, abs=1e-15)


def test_prox_examples():
    s = PenaltySpec("clipped_l1", 1.0, 0.5)
    assert prox(s, 0.0, 0.1) == 0.0
    assert prox(s, 0.1, 0.1) == 0.0
    assert prox(s, 2.0, 0.1) == 2.0
    with pytest.raises(DomainError):
        prox(s, 1.0, 0.0)


def test_prox_exact_zeros_in_dead_zone():
    s = PenaltySpec("clipped_l1", 2.0, 1.0)
    x = np.linspace(-0.19, 0.19, 39)
    assert np.all(prox(s, x, 0.1) == 0.0)


def test_prox_ties_go_to_zero():
    # clipped L1 with x = sqrt(2 eta lam): objective at 0 and at x both equal eta*lam
    lam, eta = 0.5, 0.5
    x = math.sqrt(2 * eta * lam)
    s = PenaltySpec("clipped_l1", lam, 1e-3)
    assert prox_objective(s, 0.0, x, eta) == pytest.approx(prox_objective(s, x, x, eta), abs=1e-15)
    assert abs(prox(s, x, eta)) <= x


@given(specs, st.floats(-5, 5), st.floats(1e-3, 1))
def test_prox_not_worse_than_candidates(spec, x, eta):
    z = prox(spec, x, eta)
    cand = np.array([0.0, x, spec.tau, -spec.tau, z])
    assert prox_objective(spec, z, x, eta) <= np.min(prox_objective(spec, cand, x, eta)) + 1e-12


@given(specs, st.floats(-5, 5), st.floats(1e-3, 1))
def test_prox_is_odd(spec, x, eta):
    assert prox(spec, -x, eta) == -prox(spec, x, eta)


def test_n_alpha_examples():
    assert n_alpha(100, 1, 1) == oracles.N_ALPHA_100_1_1
    assert n_alpha(1000, 8, 1) == oracles.N_ALPHA_1000_8_1
    assert n_alpha(1, 1, 1) == 0


@given(st.integers(1, 10**7), st.floats(0.1, 100), st.floats(0.1, 5))
def test_n_alpha_bounded_by_n(n, c, gamma):
    assert 0 <= n_alpha(n, c, gamma) <= n


def test_n_alpha_exact_near_power_boundary():
    # 8n/c = 900 exactly: sqrt is 30, not 31
    assert n_alpha(900, 8, 1) == 900 // 30


def _arch(depth=3, width=4, B=2.0):
    return Architecture.uniform(1, depth, width, B, 1.0)


def test_tune_lambda_exponential():
    t = tune("exponential", math.exp(math.e), 1, 1, 1.0, _arch(), 5)
    assert t.lam == pytest.approx(oracles.LAMBDA_EE, rel=1e-12)


def test_tune_tau_closed_form():
    t = tune("exponential", 1000, 1, 1, 2.0, _arch(2, 3, 1.5), 5)
    assert t.tau == pytest.approx(1 / (16 * 2 * 3 * (4 * 1.5) ** 3 * 1000), rel=1e-12)


def test_tune_subexponential_uses_n_alpha():
    t = tune("subexponential", 100, 1, 1, 1.0, _arch(), 3)
    assert t.lam == pytest.approx(math.log(3) ** 3 / 3)


def test_tau_decreases_with_depth():
    taus = [tune("exponential", 1000, 1, 1, 1.0, _arch(L), 5).tau for L in (1, 2, 3, 4)]
    assert all(a > b for a, b in zip(taus, taus[1:]))


def test_tau_floor_on_huge_architecture():
    t = tune("exponential", 1000, 1, 1, 1.0, Architecture.uniform(1, 200, 50, 1e3, 1.0), 5)
    assert t.tau == TAU_FLOOR and math.isfinite(t.lam)


@pytest.mark.parametrize("args", [("exponential", 4), ("subexponential", 2), ("weekly", 5)])
def test_tune_rejects_bad_nu3_or_regime(args):
    with pytest.raises(ConfigError):
        tune(args[0], 1000, 1, 1, 1.0, _arch(), args[1])


def test_tune_degenerate_sample():
    with pytest.raises(DegenerateSampleError):
        tune("subexponential", 2, 1, 1, 1.0, _arch(), 3)
