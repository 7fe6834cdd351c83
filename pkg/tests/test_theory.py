import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from spdnn import theory as T
from spdnn.errors import ConfigError, DegenerateConstructionError, DegenerateSampleError, PackingFailure

import oracles


def test_effective_smoothness_examples():
    assert T.effective_smoothness(0, (2.0,), (1,)).beta_star == (2.0,)
    sm = T.effective_smoothness(1, (0.5, 2.0), (1, 1))
    assert sm.beta_star == (0.5, 2.0)
    sm = T.effective_smoothness(1, (2.0, 0.5), (1, 1))
    assert sm.beta_star == (1.0, 0.5)


def test_binding_ties_go_to_smallest_index():
    sm = T.effective_smoothness(1, (1.0, 1.0), (1, 1))
    assert sm.binding == 0


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_gexpar_binding_exponent(beta, d):
    sm = T.effective_smoothness(1, (beta, max(beta, 1.0) * d), (1, d))
    assert sm.exponent == pytest.approx(2 * beta / (2 * beta + 1), rel=1e-14)


betas = st.lists(st.floats(0.1, 5), min_size=1, max_size=5)


@given(betas)
def test_last_beta_star_is_beta(beta):
    sm = T.effective_smoothness(len(beta) - 1, beta, (1,) * len(beta))
    assert sm.beta_star[-1] == beta[-1]


@given(betas, st.floats(1, 3))
def test_scaling_large_betas_never_decreases(beta, factor):
    q = len(beta) - 1
    t = (1,) * len(beta)
    scaled = [b * factor if b >= 1 else b for b in beta]
    a = T.effective_smoothness(q, beta, t).beta_star
    b = T.effective_smoothness(q, scaled, t).beta_star
    assert all(y >= x * (1 - 1e-12) for x, y in zip(a, b))


def test_phi_exact_power_of_two():
    sm = T.effective_smoothness(0, (2.0,), (1,))
    assert T.phi(1024, sm) == oracles.PHI_1024_BETA2
    assert T.holder_rate(2, 2, 1, 1024) == oracles.PHI_1024_BETA2


@given(st.floats(0.2, 5), st.integers(1, 4), st.integers(2, 10**6))
def test_phi_matches_holder_rate_in_degenerate_class(s, d, n):
    sm = T.effective_smoothness(0, (s,), (d,))
    assert T.phi(n, sm) == pytest.approx(T.holder_rate(2, s, d, n), rel=1e-12)


@given(st.floats(0.2, 5), st.integers(1, 4), st.integers(2, 10**6), st.integers(1, 1000))
def test_phi_non_increasing(s, d, n, k):
    sm = T.effective_smoothness(0, (s,), (d,))
    assert T.phi(n + k, sm) <= T.phi(n, sm)


def test_phi_needs_n_ge_2():
    with pytest.raises(DegenerateSampleError):
        T.phi(1, T.effective_smoothness(0, (1.0,), (1,)))


def test_smoothness_validation():
    with pytest.raises(ConfigError):
        T.effective_smoothness(1, (1.0,), (1, 1))
    with pytest.raises(ConfigError):
        T.effective_smoothness(0, (1.0,), (3,), dims=(2, 1))


# ---------------------------------------------------------------- calibration

def test_calibrate_composition_width():
    sm = T.effective_smoothness(0, (2.0,), (1,))
    cal = T.calibrate("exponential", T.CompositionClass(sm, 1), 1024)
    assert cal.arch.width == 4
    assert cal.arch.depth == math.ceil(math.log(1024))


def test_calibrate_holder_width():
    arch, penalty = T.calibrate("exponential", T.HolderClass(2, 1), 1024)
    assert arch.width == 4
    assert arch.B == pytest.approx(1024 ** (12 / 5))
    assert arch.F == 2.0


def test_calibrate_monotone_in_n():
    prev = None
    for n in [2 ** k for k in range(4, 20)]:
        arch, _ = T.calibrate("exponential", T.HolderClass(2, 1), n)
        if prev is not None:
            assert arch.width >= prev.width and arch.depth >= prev.depth
            assert arch.depth - prev.depth <= 1
        prev = arch


def test_calibrate_errors():
    with pytest.raises(DegenerateSampleError):
        T.calibrate("subexponential", T.HolderClass(2, 1), 5)
    sm = T.effective_smoothness(0, (2.0,), (1,))
    with pytest.raises(ConfigError):
        T.calibrate("exponential", T.CompositionClass(sm, 1, K=3.0), 1000, constants=T.CalibrationConstants(F=2.0))
    with pytest.raises(ConfigError):
        T.calibrate("exponential", T.HolderClass(2, 1), 1000, constants=T.CalibrationConstants(nu3=3.0))


def test_default_nu3():
    assert T.default_nu3("subexponential") == 3.0 and T.default_nu3("exponential") == 5.0


# ---------------------------------------------------------------- kernel and packing

@pytest.mark.parametrize("beta", [0.5, 1.0, 1.5, 2.0, 3.2])
def test_bump_kernel_in_unit_ball(beta):
    K = T.BumpKernel(beta)
    audit = K.audit()
    assert audit.ok and audit.norm_bound == pytest.approx(1.0)
    assert audit.quotient_grid <= audit.quotient_bound * (1 + 1e-9)
    assert K(-0.1) == 0.0 and K(1.1) == 0.0 and K(0.5) > 0


@pytest.mark.parametrize("B", [0.5, 1.0, 2.0])
def test_kernel_power_l2_closed_form(B):
    K = T.BumpKernel(1.0, 0.3)
    x = np.linspace(0, 1, 200_001)
    num = math.sqrt(np.trapezoid(K.power(x, B) ** 2, x))
    assert num == pytest.approx(K.l2_norm_power(B), rel=1e-6)


def test_packing_small_examples():
    p = T.vg_packing(8)
    assert p.size >= 2 and not p.words[0].any()
    p = T.vg_packing(16)
    H = T.pairwise_hamming(p.words)
    np.fill_diagonal(H, 99)
    assert p.size >= 4 and H.min() >= 2
    assert len({w.tobytes() for w in p.words}) == p.size


def test_packing_exhaustive_fallback():
    p = T.vg_packing(10, min_count=6, min_ham=5, budget=0)
    H = T.pairwise_hamming(p.words)
    np.fill_diagonal(H, 99)
    assert p.size >= 6 and H.min() >= 5


def test_packing_failure():
    with pytest.raises(PackingFailure):
        T.vg_packing(30, min_count=10**6, min_ham=15, budget=100)


# ---------------------------------------------------------------- hypercube

@pytest.fixture(scope="module")
def small_con():
    sm = T.effective_smoothness(0, (1.0,), (1,))
    return T.build_hypercube(sm, 2000.0, panels=64)


def test_disjoint_supports(small_con):
    x, w = small_con.quadrature_nodes()
    E = small_con.axis_bumps(x)
    G = (E * w) @ E.T
    assert np.max(np.abs(G - np.diag(np.diag(G)))) < 1e-10


def test_single_bump_norm(small_con):
    one = np.zeros(small_con.m)
    one[1] = 1.0
    assert small_con.l2_norm(one) == pytest.approx(small_con.bump_l2_closed_form(), rel=1e-6)


def test_h_W_matches_tensor_evaluation(small_con):
    word = small_con.words[-1]
    x = np.linspace(0, 1, 101)
    assert np.allclose(small_con.h_W(word)(x[:, None]), small_con.evaluate(word, x), atol=1e-15)


def test_two_dimensional_construction():
    sm = T.effective_smoothness(0, (2.0,), (2,))
    con = T.build_hypercube(sm, 5e4, panels=32)
    d = np.zeros(con.m ** 2)
    d[[0, 3]] = 1.0
    assert con.l2_norm(d) == pytest.approx(math.sqrt(2) * con.bump_l2_closed_form(), rel=1e-6)


def test_kl_budget_linear_and_trivial(small_con):
    a = T.laplace_kl_budget(small_con, 100.0)
    b = T.laplace_kl_budget(small_con, 200.0)
    assert b.budget == pytest.approx(2 * a.budget)
    same = np.zeros((2, small_con.m), dtype=np.uint8)
    assert T.laplace_kl_budget(small_con, 100.0, words=same).budget == 0.0


def test_degenerate_construction():
    with pytest.raises(DegenerateConstructionError):
        T.build_hypercube(T.effective_smoothness(0, (1.0,), (1,)), 3.0)


def test_verify_small(small_con):
    rep = T.verify_lemma1(small_con)
    assert rep.pass_i and rep.pass_quadrature and rep.hamming_rel_err < 1e-6
    assert rep.M >= 2 ** (small_con.m / 8)


def test_two_dimensional_h_W_matches_tensor():
    sm = T.effective_smoothness(0, (2.0,), (2,))
    con = T.build_hypercube(sm, 5e4, panels=8)
    word = con.words[-1]
    x = np.linspace(0, 1, 25)
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), -1).reshape(-1, 2)
    assert np.allclose(con.h_W(word)(pts), con.evaluate(word, x).reshape(-1), rtol=1e-12, atol=1e-18)
