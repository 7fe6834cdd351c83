"""
Rate formulas, architecture calibration, and a numerical check of the
hypercube construction behind the minimax lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import penalty as pen
from ._exact import rational_power
from .errors import ConfigError, DegenerateConstructionError, DegenerateSampleError, PackingFailure
from .network import Architecture


# ---------------------------------------------------------------- smoothness and rates

@dataclass(frozen=True)
class CompositionSmoothness:
    """Smoothness data of a composition class ``G(q, d, t, beta, A)``.

    ``beta_star[i] = beta[i] * prod_{j > i} min(beta[j], 1)``; ``binding``
    is the index minimising ``beta_star[i] / (2 beta_star[i] + t[i])``.
    """

    q: int
    beta: tuple
    t: tuple
    beta_star: tuple
    binding: int
    dims: Optional[tuple] = None

    @property
    def beta_ss(self) -> float:
        return self.beta_star[self.binding]

    @property
    def t_star(self) -> int:
        return self.t[self.binding]

    @property
    def exponents(self) -> tuple:
        return tuple(2 * b / (2 * b + t) for b, t in zip(self.beta_star, self.t))

    @property
    def exponent(self) -> float:
        """``phi_n = n ** -exponent``."""
        return self.exponents[self.binding]

    @property
    def kernel_smoothness(self) -> float:
        """``beta[binding]``: the Hölder order the bump kernel needs."""
        return self.beta[self.binding]

    @property
    def power(self) -> float:
        """``prod_{l > binding} min(beta[l], 1)``, so ``beta_ss = kernel_smoothness * power``."""
        return math.prod(min(b, 1.0) for b in self.beta[self.binding + 1:])


def effective_smoothness(q: int, beta: Sequence[float], t: Sequence[int], dims=None) -> CompositionSmoothness:
    beta = tuple(float(b) for b in beta)
    t = tuple(int(v) for v in t)
    if q < 0 or len(beta) != q + 1 or len(t) != q + 1:
        raise ConfigError("need q >= 0 and len(beta) = len(t) = q + 1")
    if any(b <= 0 for b in beta) or any(v < 1 for v in t):
        raise ConfigError("smoothness must be positive and t_i >= 1")
    if dims is not None:
        dims = tuple(int(v) for v in dims)
        if len(dims) != q + 2:
            raise ConfigError("dims must have length q + 2")
        if any(t[i] > dims[i] for i in range(q + 1)):
            raise ConfigError("need t_i <= d_i")
    star = []
    for i in range(q + 1):
        star.append(beta[i] * math.prod(min(b, 1.0) for b in beta[i + 1:]))
    ratios = [b / (2 * b + ti) for b, ti in zip(star, t)]
    best = min(range(q + 1), key=lambda i: (ratios[i], i))
    return CompositionSmoothness(q, beta, t, tuple(star), best, dims)


def phi(n, smoothness: CompositionSmoothness) -> float:
    """``max_i n ** (-2 beta*_i / (2 beta*_i + t_i))``."""
    if n < 2:
        raise DegenerateSampleError("phi needs n >= 2")
    return max(rational_power(n, -e) for e in smoothness.exponents)


def holder_rate(kappa: float, s: float, d: int, n) -> float:
    """``n ** (-kappa s / (kappa s + d))``."""
    if n < 2:
        raise DegenerateSampleError("holder_rate needs n >= 2")
    return rational_power(n, -kappa * s / (kappa * s + d))


# ---------------------------------------------------------------- calibration

@dataclass(frozen=True)
class HolderClass:
    s: float
    d: int
    kappa: float = 2.0
    K: float = 1.0


@dataclass(frozen=True)
class CompositionClass:
    smoothness: CompositionSmoothness
    d: int
    kappa: float = 2.0
    K: float = 1.0


@dataclass(frozen=True)
class CalibrationConstants:
    """Free multiplicative constants of the calibration rules (all default 1)."""

    c_L: float = 1.0
    c_N: float = 1.0
    c_B: float = 1.0
    B: float = 1.0
    F: Optional[float] = None
    nu3: Optional[float] = None
    lambda_scale: float = 1.0
    family: str = "clipped_l1"
    shape: Optional[float] = None


@dataclass(frozen=True)
class Calibration:
    arch: Architecture
    penalty: pen.PenaltySpec
    m: float
    meta: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.arch, self.penalty))


def default_nu3(regime: str) -> float:
    return 3.0 if regime == "subexponential" else 5.0


def calibrate(regime: str, cls, n, c: float = 1.0, gamma: float = 1.0,
              constants: CalibrationConstants = CalibrationConstants(), K_ell: float = 1.0) -> Calibration:
    """Depth, width, weight bound and penalty from the sample size.

    Hölder class: ``L = ceil(c_L log m)``, ``N = ceil(c_N m^(d/(kappa s + d)))``,
    ``B = c_B m^(4(s + d)/(kappa s + d))``. Composition class:
    ``N = ceil(c_N m phi_m)`` and ``B`` fixed. ``m`` is the effective sample
    size of the regime. Unpacks as ``(arch, penalty)``.
    """
    m = pen.effective_n(regime, n, c, gamma)
    if m < 2:
        raise DegenerateSampleError(f"effective sample size {m} < 2 for n={n}")
    L = max(1, math.ceil(constants.c_L * math.log(m)))
    F = constants.F if constants.F is not None else 2.0 * max(cls.K, 1.0)
    if isinstance(cls, CompositionClass) and not F > max(cls.K, 1.0):
        raise ConfigError("composition calibration needs F > max(K, 1)")
    if isinstance(cls, HolderClass):
        denom = cls.kappa * cls.s + cls.d
        N = math.ceil(constants.c_N * rational_power(m, cls.d / denom))
        B = constants.c_B * rational_power(m, 4 * (cls.s + cls.d) / denom)
        d = cls.d
        rate = holder_rate(cls.kappa, cls.s, cls.d, m)
    elif isinstance(cls, CompositionClass):
        rate = phi(m, cls.smoothness)
        N = math.ceil(constants.c_N * m * rate)
        B = constants.B
        if B < 1:
            raise ConfigError("composition calibration needs a fixed B >= 1")
        d = cls.d
    else:
        raise ConfigError(f"unknown function class {cls!r}")
    N = max(N, 1)
    arch = Architecture.uniform(d, L, N, B, F)
    nu3 = constants.nu3 if constants.nu3 is not None else default_nu3(regime)
    tuning = pen.tune(regime, n, c, gamma, K_ell, arch, nu3, constants.lambda_scale)
    spec = pen.PenaltySpec(constants.family, tuning.lam, tuning.tau, constants.shape)
    meta = {"regime": regime, "n": n, "m": m, "depth": L, "width": N, "B": B, "F": F,
            "lambda": tuning.lam, "tau": tuning.tau, "nu3": nu3, "rate": rate}
    return Calibration(arch, spec, m, meta)


# ---------------------------------------------------------------- bump kernel

@dataclass(frozen=True)
class HolderAudit:
    """Hölder-norm audit of a function on ``[0, 1]`` (zero outside)."""

    beta: float
    sup_norms: tuple        # ||K^(k)||_inf for k < beta
    quotient_grid: float    # Hölder quotient of K^(floor beta) on the audit grid
    quotient_bound: float   # certified upper bound O^(1-r) Lip^r
    norm_bound: float

    @property
    def ok(self) -> bool:
        return self.norm_bound <= 1.0 + 1e-12


class BumpKernel:
    """``K(x) = amplitude * c * (x (1 - x))^p`` on ``[0, 1]``, zero elsewhere.

    ``c`` normalises the certified ``C^beta`` norm bound to exactly 1 and
    ``p = ceil(beta) + 1``; ``amplitude <= 1`` keeps ``K`` in the unit ball.
    """

    def __init__(self, beta: float, amplitude: float = 1.0):
        self.beta = float(beta)
        self.p = math.ceil(self.beta) + 1
        self.amplitude = float(amplitude)
        self._base = np.polynomial.Polynomial([0.0, 1.0, -1.0]) ** self.p
        self.c_unit = 1.0 / _holder_audit(self._base, self.beta).norm_bound
        self.c = self.c_unit * self.amplitude
        self.poly = self._base * self.c

    def scaled(self, amplitude: float) -> "BumpKernel":
        return BumpKernel(self.beta, amplitude)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x >= 0.0) & (x <= 1.0)
        return np.where(inside, self.poly(np.clip(x, 0.0, 1.0)), 0.0)

    def power(self, x, B: float):
        """``K(x) ** B`` (with ``0 ** B = 0``)."""
        return self(x) ** B

    def l2_norm_power(self, B: float) -> float:
        """Closed form ``||K^B||_2 = c^B sqrt(Beta(2pB + 1, 2pB + 1))``."""
        a = 2 * self.p * B + 1
        return self.c ** B * math.exp(0.5 * special.betaln(a, a))

    def audit(self, grid: int = 1000) -> HolderAudit:
        return _holder_audit(self.poly, self.beta, grid)


def _holder_audit(poly, beta: float, grid: int = 1000) -> HolderAudit:
    """Norm bound ``sum_{k < beta} ||P^(k)||_inf + quotient`` on ``[0, 1]``.

    Sup norms are taken over the grid plus all interior critical points, so
    they are exact. The quotient of ``D = P^(floor beta)`` with exponent
    ``r`` is bounded by ``osc(D)^(1-r) * ||D'||_inf^r`` (the oscillation
    itself when ``r = 0``); the grid value is reported alongside.
    """
    j = math.floor(beta)
    r = beta - j

    def sup(P):
        pts = [0.0, 1.0] + [float(z.real) for z in P.deriv().roots()
                            if abs(z.imag) < 1e-12 and 0 <= z.real <= 1]
        xs = np.concatenate([np.linspace(0, 1, grid), pts])
        vals = P(xs)
        return float(np.max(np.abs(vals))), float(np.max(vals) - np.min(vals))

    sups = tuple(sup(poly.deriv(k) if k else poly)[0] for k in range(math.ceil(beta)))
    D = poly.deriv(j) if j else poly
    _, osc = sup(D)
    lip, _ = sup(D.deriv())
    xs = np.linspace(0, 1, grid)
    dv = D(xs)
    diff = np.abs(dv[:, None] - dv[None, :])
    dist = np.abs(xs[:, None] - xs[None, :])
    np.fill_diagonal(dist, 1.0)
    q_grid = float(np.max(diff / dist ** r)) if r > 0 else float(np.max(diff))
    q_bound = osc if r == 0 else osc ** (1 - r) * lip ** r
    return HolderAudit(beta, sups, q_grid, q_bound, sum(sups) + max(q_bound, q_grid))


# ---------------------------------------------------------------- packing

@dataclass(frozen=True)
class Packing:
    words: np.ndarray       # (|W|, m_bits) uint8, row 0 is the zero word
    min_ham: int            # smallest pairwise Hamming distance achieved

    @property
    def size(self) -> int:
        return self.words.shape[0]


def pairwise_hamming(words: np.ndarray) -> np.ndarray:
    w = np.asarray(words, dtype=np.int64)
    return (w[:, None, :] != w[None, :, :]).sum(axis=2)


def _finish(words, m_bits):
    arr = np.array(words, dtype=np.uint8).reshape(len(words), m_bits)
    H = pairwise_hamming(arr)
    np.fill_diagonal(H, m_bits + 1)
    return Packing(arr, int(H.min()) if len(words) > 1 else m_bits)


def vg_packing(m_bits: int, min_count: Optional[int] = None, min_ham: Optional[int] = None,
               seed: int = 0, budget: int = 100_000, exhaustive_limit: int = 20) -> Packing:
    """Binary words with pairwise Hamming distance ``>= min_ham``, zero word first.

    Defaults follow the Varshamov-Gilbert bound: ``min_count =
    ceil(2^(m/8))`` and ``min_ham = ceil(m/8)``. Random candidates are
    accepted greedily; after ``budget`` draws, words of length at most
    ``exhaustive_limit`` fall back to a lexicographic greedy scan.
    """
    if m_bits < 1:
        raise ConfigError("m_bits must be >= 1")
    if min_count is None:
        min_count = math.ceil(2 ** (m_bits / 8))
    if min_ham is None:
        min_ham = math.ceil(m_bits / 8)
    if min_ham > m_bits and min_count > 1:
        raise PackingFailure(f"no two words of length {m_bits} are {min_ham} apart")
    from .processes import make_rng

    rng = make_rng(seed)
    chosen = [np.zeros(m_bits, dtype=np.uint8)]
    for _ in range(budget):
        if len(chosen) >= min_count:
            return _finish(chosen, m_bits)
        cand = rng.integers(0, 2, m_bits, dtype=np.uint8)
        stack = np.asarray(chosen)
        if np.min(np.sum(stack != cand, axis=1)) >= min_ham:
            chosen.append(cand)
    if len(chosen) >= min_count:
        return _finish(chosen, m_bits)
    if m_bits <= exhaustive_limit:
        codes = [0]
        for v in range(1, 2 ** m_bits):
            if min(bin(v ^ c).count("1") for c in codes) >= min_ham:
                codes.append(v)
                if len(codes) >= min_count:
                    break
        if len(codes) >= min_count:
            bits = [[(v >> (m_bits - 1 - k)) & 1 for k in range(m_bits)] for v in codes]
            return _finish(bits, m_bits)
    raise PackingFailure(f"found {len(chosen)} of {min_count} words at Hamming distance {min_ham} "
                         f"within a budget of {budget}")


# ---------------------------------------------------------------- hypercube construction

RHO_GRID = tuple(2.0 ** -k for k in range(41))
QUAD_PANELS = 256


@dataclass
class HypercubeConstruction:
    smoothness: CompositionSmoothness
    n: float
    kernel: BumpKernel
    rho: float
    m: int
    power: float            # exponent B applied to each bump
    packing: Packing
    panels: int = QUAD_PANELS

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def t_star(self) -> int:
        return self.smoothness.t_star

    @property
    def beta_ss(self) -> float:
        return self.smoothness.beta_ss

    @property
    def beta_kernel(self) -> float:
        return self.smoothness.kernel_smoothness

    @property
    def words(self) -> np.ndarray:
        return self.packing.words

    @property
    def grid(self) -> np.ndarray:
        """Bump anchors ``{0, h, ..., (m-1) h}`` along one axis."""
        return np.arange(self.m) * self.h

    @property
    def kernel_l2(self) -> float:
        """``||K^B||_2^(t*)``."""
        return self.kernel.l2_norm_power(self.power) ** self.t_star

    def rho_condition(self) -> tuple:
        """``(n h^(beta** + t*), log 2 / (72 ||K^B||_2^t*))``."""
        return self.n * self.h ** (self.beta_ss + self.t_star), math.log(2) / (72 * self.kernel_l2)

    def bump_l2_closed_form(self) -> float:
        return self.h ** (self.beta_ss + self.t_star / 2) * self.kernel_l2

    # quadrature ------------------------------------------------------
    def quadrature_nodes(self):
        """Composite Simpson nodes and weights on [0, 1] with ``panels`` panels per cell."""
        k = self.m * self.panels
        x = np.linspace(0.0, 1.0, k + 1)
        w = np.ones(k + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= (1.0 / k) / 3.0
        return x, w

    def axis_bumps(self, x) -> np.ndarray:
        """``E[c, i] = (h^(beta/t*) K((x_i - c h) / h))^B`` for every anchor ``c``.

        The ``h^beta`` factor of a bump is split evenly over the ``t*`` axes
        so the tensor product carries it exactly once.
        """
        h = self.h
        vals = h ** (self.beta_kernel / self.t_star) * self.kernel((x[None, :] - self.grid[:, None]) / h)
        return vals ** self.power

    def evaluate(self, weights, x) -> np.ndarray:
        """``sum_u weights_u psi_u^B`` on the tensor grid ``x^t*`` (weights may be signed)."""
        E = self.axis_bumps(x)
        T = np.asarray(weights, dtype=np.float64).reshape((self.m,) * self.t_star)
        for _ in range(self.t_star):
            # contract the leading anchor axis with the bump table, appending a node axis
            T = np.tensordot(T, E, axes=([0], [0]))
        return T

    def l2_norm(self, weights) -> float:
        x, w = self.quadrature_nodes()
        vals = self.evaluate(weights, x) ** 2
        for _ in range(self.t_star):
            vals = np.tensordot(vals, w, axes=([0], [0]))
        return math.sqrt(max(float(vals), 0.0))

    def h_W(self, word):
        """Callable ``h_W`` on ``[0, 1]^t*`` (points as rows)."""
        word = np.asarray(word, dtype=np.float64)

        def f(X):
            X = np.atleast_2d(np.asarray(X, dtype=np.float64))
            out = np.zeros(X.shape[0])
            anchors = np.stack(np.meshgrid(*([self.grid] * self.t_star), indexing="ij"), -1).reshape(-1, self.t_star)
            for wu, u in zip(word, anchors):
                if wu:
                    vals = self.h ** self.beta_kernel * np.prod(self.kernel((X - u) / self.h), axis=1)
                    out += wu * vals ** self.power
            return out

        return f


def build_hypercube(smoothness: CompositionSmoothness, n, rho_search: bool = True, seed: int = 0,
                    budget: int = 100_000, panels: int = QUAD_PANELS) -> HypercubeConstruction:
    """Construct the bump hypercube at sample size ``n``.

    ``rho`` is the largest grid value ``2^-k`` meeting
    ``n h^(beta** + t*) <= log 2 / (72 ||K^B||_2^t*)`` with ``m >= 2``. When
    no grid value works with the unit-norm kernel (the usual case, since
    the left side grows like ``n^(beta**/(2 beta** + t*))``), the kernel
    amplitude is halved until ``rho = 1`` works; the kernel stays in the
    unit Hölder ball. The packing keeps one word more than the
    Varshamov-Gilbert count so that ``M = |W| - 1 >= 2^(m^t*/8)``.
    """
    if smoothness.dims is not None:
        i = smoothness.binding
        for k in range(i + 1):
            if smoothness.t[k] > min(smoothness.dims[:k + 1]):
                raise ConfigError("need t_i <= min(d_0, ..., d_{i-1})")
    bss, ts = smoothness.beta_ss, smoothness.t_star
    B = smoothness.power
    base = BumpKernel(smoothness.kernel_smoothness)
    scale = n ** (1.0 / (2 * bss + ts))
    grid = RHO_GRID if rho_search else (1.0,)

    def feasible(kernel, rho):
        m = math.floor(rho * scale)
        if m < 2:
            return None
        lhs = n * (1.0 / m) ** (bss + ts)
        rhs = math.log(2) / (72 * kernel.l2_norm_power(B) ** ts)
        return m if lhs <= rhs else None

    if math.floor(grid[0] * scale) < 2:
        raise DegenerateConstructionError(f"m_n < 2 at n={n}; the packing would be trivial")
    chosen = None
    for j in range(0, 1075):
        kernel = base if j == 0 else base.scaled(2.0 ** -j)
        for rho in grid:
            m = feasible(kernel, rho)
            if m is not None:
                chosen = (kernel, rho, m)
                break
            if math.floor(rho * scale) < 2:
                break
        if chosen is not None:
            break
    if chosen is None:
        raise DegenerateConstructionError("no kernel amplitude satisfies the rho condition")
    kernel, rho, m = chosen
    bits = m ** ts
    count = math.ceil(2 ** (bits / 8)) + 1
    packing = vg_packing(bits, count, math.ceil(bits / 8), seed=seed, budget=budget)
    return HypercubeConstruction(smoothness, n, kernel, rho, m, B, packing, panels)


# ---------------------------------------------------------------- verification

@dataclass
class Lemma1Report:
    kappa: float
    phi_n: float
    threshold: float
    min_pair_l2: float
    pass_i: bool
    kl_budget: float
    log_M_over_9: float
    pass_ii: bool
    bump_rel_err: float
    hamming_rel_err: float
    overlap_max: float
    pass_quadrature: bool
    kernel_norm_bound: float
    rho: float
    m: int
    M: int
    margins: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.pass_i and self.pass_ii and self.pass_quadrature and self.kernel_norm_bound <= 1 + 1e-12

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "kappa", "phi_n", "min_pair_l2", "kl_budget", "log_M_over_9", "pass_i", "pass_ii",
            "threshold", "bump_rel_err", "hamming_rel_err", "overlap_max", "pass_quadrature",
            "kernel_norm_bound", "rho", "m", "M")}
        out["passed"] = self.passed
        out["margins"] = dict(self.margins)
        return out


def pairwise_l2(con: HypercubeConstruction, words=None) -> np.ndarray:
    words = con.words if words is None else np.asarray(words)
    k = words.shape[0]
    D = np.zeros((k, k))
    for a in range(k):
        for b in range(a + 1, k):
            diff = words[a].astype(np.float64) - words[b].astype(np.float64)
            if not diff.any():
                continue
            D[a, b] = D[b, a] = con.l2_norm(diff)
    return D


@dataclass(frozen=True)
class KLBudget:
    budget: float
    log_M_over_9: float
    M: int

    @property
    def passed(self) -> bool:
        return self.budget <= self.log_M_over_9


def laplace_kl_budget(con: HypercubeConstruction, n, words=None, distances=None) -> KLBudget:
    """``(1/M) sum_{j=1..M} n ||h_(j) - h_(0)||_2`` against ``log(M) / 9``."""
    words = con.words if words is None else np.asarray(words)
    M = words.shape[0] - 1
    if M < 1:
        raise DegenerateConstructionError("need at least two hypotheses")
    if distances is None:
        d0 = [con.l2_norm(words[j].astype(np.float64) - words[0].astype(np.float64)) for j in range(1, M + 1)]
    else:
        d0 = list(distances[0, 1:])
    return KLBudget(float(n) * float(np.mean(d0)), math.log(M) / 9.0, M)


def verify_lemma1(con: HypercubeConstruction, n=None) -> Lemma1Report:
    """Audit separation (i), the KL budget (ii) and the quadrature identities."""
    n = con.n if n is None else n
    sm = con.smoothness
    kl2 = con.kernel_l2
    kappa = kl2 / math.sqrt(8 * con.rho ** sm.beta_ss)
    phi_n = rational_power(n, -sm.exponent)
    threshold = kappa * math.sqrt(phi_n)

    D = pairwise_l2(con)
    H = pairwise_hamming(con.words)
    k = con.words.shape[0]
    iu = np.triu_indices(k, 1)
    mask = H[iu] > 0
    dists = D[iu][mask]
    min_pair = float(dists.min()) if dists.size else 0.0
    closed = np.sqrt(H[iu][mask]) * con.bump_l2_closed_form()
    ham_err = float(np.max(np.abs(dists - closed) / closed)) if dists.size else 0.0

    one = np.zeros(con.m ** con.t_star)
    one[0] = 1.0
    bump = con.l2_norm(one)
    bump_err = abs(bump - con.bump_l2_closed_form()) / con.bump_l2_closed_form()

    x, w = con.quadrature_nodes()
    E = con.axis_bumps(x)
    # cross integrals along one axis; on the tensor grid they factor over axes
    G = (E * w) @ E.T
    np.fill_diagonal(G, 0.0)
    overlap = float(np.max(np.abs(G))) if con.m > 1 else 0.0

    kl = laplace_kl_budget(con, n, distances=D)
    audit = con.kernel.audit()
    pass_q = bump_err < 1e-6 and ham_err < 1e-6 and overlap < 1e-10
    margins = {"separation": min_pair - threshold, "kl": kl.log_M_over_9 - kl.budget}
    return Lemma1Report(kappa, phi_n, threshold, min_pair, bool(min_pair >= threshold), kl.budget,
                        kl.log_M_over_9, kl.passed, float(bump_err), ham_err, overlap, bool(pass_q),
                        audit.norm_bound, con.rho, con.m, kl.M, margins)
