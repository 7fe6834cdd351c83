"""
Simulators for the autoregressive, GEXPAR and binary autoregressive
processes, plus a small library of target functions with certified
smoothness metadata.

All randomness comes from ``numpy.random.Generator(Philox(seed))``.
Replications get independent streams through :func:`split_seed`, which
hashes ``(seed, *keys)`` with ``numpy.random.SeedSequence``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ExplosionError, ModelContractError, ShapeError, StabilityError

NOISES = ("gaussian", "laplace")
DEFAULT_BURN_IN = 1000


# ---------------------------------------------------------------- randomness

def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used everywhere in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


def split_seed(seed: int, *keys: int) -> int:
    """Derive an independent 64-bit seed for the job labelled by ``keys``.

    ``split_seed(s, i, j)`` is a pure function of its arguments, so cell
    ``(i, j)`` of a sweep draws the same stream whatever order or worker
    it runs on.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def draw_noise(kind: str, rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal, or standard Laplace density ``exp(-|y|)/2`` (variance 2)."""
    if kind == "gaussian":
        return rng.standard_normal(size)
    if kind == "laplace":
        return rng.laplace(0.0, 1.0, size)
    raise ConfigError(f"noise must be one of {NOISES}, got {kind!r}")


# ---------------------------------------------------------------- targets

@dataclass(frozen=True)
class TargetSpec:
    """Description of a true regression function.

    kind
        ``"holder"`` (uses ``s``, ``K``, ``d``, ``profile``),
        ``"composition"`` (uses ``q``, ``dims``, ``t``, ``beta``, ``A``),
        ``"gexpar"`` (uses ``gexpar`` and ``beta``) or ``"constant"``
        (uses ``value`` and ``d``).
    """

    kind: str
    d: int = 1
    s: float = 2.0
    K: float = 1.0
    profile: str = "sine"
    q: int = 0
    dims: tuple = ()
    t: tuple = ()
    beta: tuple = ()
    A: float = 1.0
    value: float = 0.0
    gexpar: Optional["GexparParams"] = None


# Per-profile sup norms G_k of the k-th derivative on [0, 1] and the
# oscillation O_k of the k-th derivative. The Lipschitz constant of the
# k-th derivative is G_{k+1}.
def _sine_profile(k):
    return (2 * math.pi) ** k, 2 * (2 * math.pi) ** k


def _quadratic_profile(k):
    G = (1.0, 2.0, 2.0)
    O = (1.0, 2.0, 0.0)
    return (G[k], O[k]) if k < 3 else (0.0, 0.0)


_PROFILES = {
    "sine": (_sine_profile, lambda u: math.sin(2 * math.pi * u), lambda u: np.sin(2 * np.pi * u)),
    "quadratic": (_quadratic_profile, lambda u: u * u, lambda u: u * u),
}


def profile_holder_norm(profile: str, s: float) -> float:
    """Upper bound on the ``C^s([0,1])`` norm of the unscaled profile.

    Sums the sup norms of derivatives of order ``< s`` and bounds the
    Hölder quotient of the ``floor(s)``-th derivative by
    ``O^(1-r) * Lip^r`` with ``r = s - floor(s)``.
    """
    bounds = _PROFILES[profile][0]
    j = math.floor(s)
    total = sum(bounds(k)[0] for k in range(math.ceil(s)))
    r = s - j
    osc = bounds(j)[1]
    lip = bounds(j + 1)[0]
    total += osc if r == 0 else osc ** (1 - r) * lip ** r
    return total


class Target:
    """A truth function on ``R^d`` with metadata.

    ``__call__`` takes an ``(k, d)`` batch; ``scalar`` takes one window
    and is what the simulators use step by step.
    """

    def __init__(self, d: int, scalar: Callable, batch: Callable, meta: dict):
        self.d = int(d)
        self.scalar = scalar
        self._batch = batch
        self.meta = dict(meta)

    def __call__(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, self.d) if self.d > 1 else X[:, None]
        if X.shape[1] != self.d:
            raise ShapeError(f"target expects dimension {self.d}, got {X.shape[1]}")
        return self._batch(X)

    def __repr__(self):
        return f"Target(d={self.d}, meta={self.meta})"


def _clip01(u):
    return 0.0 if u < 0.0 else (1.0 if u > 1.0 else u)


def make_target(spec: TargetSpec) -> Target:
    """Build a deterministic truth function with certified class parameters.

    Hölder targets are ``a * profile(clip(x_1, 0, 1))`` with ``a`` set so
    the ``C^s`` norm bound equals ``K``; clipping gives a bounded Lipschitz
    extension to all of ``R^d``.
    """
    from .theory import effective_smoothness

    if spec.kind == "holder":
        if spec.profile not in _PROFILES:
            raise ConfigError(f"unknown target profile {spec.profile!r}")
        if not (spec.s > 0 and spec.K > 0 and spec.d >= 1):
            raise ConfigError("holder target needs s > 0, K > 0, d >= 1")
        _, f1, fv = _PROFILES[spec.profile]
        a = spec.K / profile_holder_norm(spec.profile, spec.s)

        def scalar(x, a=a, f1=f1):
            return a * f1(_clip01(x[0]))

        def batch(X, a=a, fv=fv):
            return a * fv(np.clip(X[:, 0], 0.0, 1.0))

        meta = {"kind": "holder", "s": spec.s, "K": spec.K, "d": spec.d, "profile": spec.profile,
                "amplitude": a, "rate_exponent_kappa2": 2 * spec.s / (2 * spec.s + spec.d)}
        return Target(spec.d, scalar, batch, meta)

    if spec.kind == "constant":
        v = float(spec.value)
        meta = {"kind": "constant", "value": v, "d": spec.d}
        sm = effective_smoothness(0, (1.0,), (spec.d,))
        meta.update(beta_star=sm.beta_star, binding_index=sm.binding, phi_exponent=sm.exponent)
        return Target(spec.d, lambda x: v, lambda X: np.full(X.shape[0], v), meta)

    if spec.kind == "gexpar":
        if spec.gexpar is None or not spec.beta:
            raise ConfigError("gexpar target needs gexpar params and a smoothness beta")
        g = spec.gexpar
        b = float(spec.beta[0])
        d = g.d
        sm = effective_smoothness(1, (b, max(b, 1.0) * d), (1, d))
        tgt = gexpar_truth(g)
        tgt.meta.update(kind="gexpar", q=1, dims=(d, d, 1), t=(1, d), beta=(b, max(b, 1.0) * d),
                        beta_star=sm.beta_star, binding_index=sm.binding, phi_exponent=sm.exponent)
        return tgt

    if spec.kind == "composition":
        return _composition_target(spec)

    raise ConfigError(f"unknown target kind {spec.kind!r}")


def _composition_target(spec: TargetSpec) -> Target:
    """Layered composition ``g_q o ... o g_0`` of smooth components.

    Component ``j`` of layer ``i`` is the mean of ``sin(pi * clip(u))^2``
    over ``t_i`` consecutive (cyclic) coordinates starting at ``j``, so it
    depends on exactly ``t_i`` inputs and maps into ``[0, 1]``. The final
    layer is scaled by ``A``. Every component is infinitely smooth, hence a
    member of the class for the declared ``beta``.
    """
    from .theory import effective_smoothness

    q, dims, t, beta = spec.q, tuple(spec.dims), tuple(spec.t), tuple(spec.beta)
    if len(dims) != q + 2 or len(t) != q + 1 or len(beta) != q + 1:
        raise ConfigError("composition target needs len(dims)=q+2, len(t)=len(beta)=q+1")
    if dims[-1] != 1 or any(x < 1 for x in dims):
        raise ConfigError("composition dims must be positive with d_{q+1} = 1")
    if any(not (1 <= t[i] <= dims[i]) for i in range(q + 1)):
        raise ConfigError("each t_i must satisfy 1 <= t_i <= d_i")
    index = [np.array([[(j + k) % dims[i] for k in range(t[i])] for j in range(dims[i + 1])])
             for i in range(q + 1)]
    A = float(spec.A)

    def batch(X):
        Z = X
        for idx in index:
            U = np.sin(np.pi * np.clip(Z[:, idx], 0.0, 1.0)) ** 2
            Z = U.mean(axis=2)
        return A * Z[:, 0]

    def scalar(x):
        return float(batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    sm = effective_smoothness(q, beta, t)
    meta = {"kind": "composition", "q": q, "dims": dims, "t": t, "beta": beta, "A": A,
            "beta_star": sm.beta_star, "binding_index": sm.binding, "phi_exponent": sm.exponent}
    return Target(dims[0], scalar, batch, meta)


# ---------------------------------------------------------------- AR(d)

@dataclass
class ARSample:
    """A simulated path ``y`` and its lag windows ``X[t] = (y[t-1], ..., y[t-d])``."""

    y: np.ndarray
    X: np.ndarray
    eta: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.y.shape[0]

    def pairs(self):
        return self.X, self.y


@dataclass
class ARSpec:
    """Nonlinear AR(d) model ``Y_t = h(Y_{t-1}, ..., Y_{t-d}) + noise``.

    ``lipschitz`` optionally declares coefficients ``theta_i`` with
    ``|h(x) - h(y)| <= sum theta_i |x_i - y_i|``; they must sum to < 1.
    """

    d: int
    truth: Callable
    noise: str = "gaussian"
    burn_in: int = DEFAULT_BURN_IN
    lipschitz: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("lag order d must be >= 1")
        if self.noise not in NOISES:
            raise ConfigError(f"noise must be one of {NOISES}")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.lipschitz is not None:
            if len(self.lipschitz) != self.d:
                raise ConfigError("need one Lipschitz coefficient per lag")
            if not sum(abs(v) for v in self.lipschitz) < 1:
                raise StabilityError("declared contraction coefficients sum to >= 1")


def _scalar_fn(truth):
    fn = getattr(truth, "scalar", None)
    if fn is not None:
        return fn
    return lambda x: float(truth(np.asarray(x, dtype=np.float64)))


def _run_recursion(step, d, n, burn_in, eps, what):
    total = burn_in + n
    path = np.zeros(total + d)
    lags = [0.0] * d  # lags[0] = most recent
    for t in range(total):
        v = step(lags) + eps[t]
        if not math.isfinite(v) or abs(v) > 1e150:
            raise ExplosionError(f"{what} left the finite range at step {t}; check the stability certificate")
        path[d + t] = v
        lags.insert(0, v)
        lags.pop()
    return path


def _windows(path, d, burn_in, n):
    start = d + burn_in
    y = path[start:start + n].copy()
    X = np.empty((n, d))
    for i in range(d):
        X[:, i] = path[start - 1 - i:start - 1 - i + n]
    return y, X


def simulate_ar(spec: ARSpec, n: int, seed: int) -> ARSample:
    """Iterate the recursion from zero initial lags and drop the burn-in."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = make_rng(seed)
    eps = draw_noise(spec.noise, rng, spec.burn_in + n)
    h = _scalar_fn(spec.truth)
    path = _run_recursion(h, spec.d, n, spec.burn_in, eps, "AR trajectory")
    y, X = _windows(path, spec.d, spec.burn_in, n)
    return ARSample(y, X)


# ---------------------------------------------------------------- GEXPAR

@dataclass(frozen=True)
class GexparParams:
    """``h(y) = c0 + sum_i (c_i + pi_i exp(lam (y_i - z_i)^2)) y_i``."""

    c0: float
    c: tuple
    pi: tuple
    lam: float
    z: tuple
    allow_explosive: bool = False

    def __post_init__(self):
        for name in ("c", "pi", "z"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not (len(self.c) == len(self.pi) == len(self.z) >= 1):
            raise ConfigError("c, pi and z must have the same length d >= 1")
        if self.lam > 0 and not self.allow_explosive:
            raise ConfigError("GEXPAR needs lam <= 0 for a bounded regression function "
                              "(set allow_explosive to override)")

    @property
    def d(self):
        return len(self.c)

    @property
    def phi(self):
        return tuple(abs(a) + abs(b) for a, b in zip(self.c, self.pi))


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    roots: tuple
    moduli: tuple
    spectral_radius: float

    def to_dict(self):
        return {"stable": self.stable, "spectral_radius": self.spectral_radius,
                "roots": [[r.real, r.imag] for r in self.roots], "moduli": list(self.moduli)}


STABILITY_MARGIN = 1e-12


def characteristic_roots(phi: Sequence[float]) -> np.ndarray:
    """Roots of ``z^d - phi_1 z^(d-1) - ... - phi_d`` as companion-matrix eigenvalues."""
    phi = np.asarray(phi, dtype=np.float64)
    d = phi.shape[0]
    C = np.zeros((d, d))
    C[0, :] = phi
    if d > 1:
        C[1:, :-1] = np.eye(d - 1)
    return np.linalg.eigvals(C)


def gexpar_stability(params: GexparParams) -> StabilityReport:
    roots = characteristic_roots(params.phi)
    order = np.lexsort((roots.imag, -np.abs(roots)))
    roots = roots[order]
    mod = np.abs(roots)
    rho = float(mod.max())
    return StabilityReport(rho < 1 - STABILITY_MARGIN, tuple(complex(r) for r in roots),
                           tuple(float(m) for m in mod), rho)


def gexpar_truth(params: GexparParams) -> Target:
    c0, c, p, lam, z = params.c0, params.c, params.pi, params.lam, params.z
    d = params.d

    def scalar(x):
        v = c0
        for i in range(d):
            v += (c[i] + p[i] * math.exp(lam * (x[i] - z[i]) ** 2)) * x[i]
        return v

    ca, pa, za = np.asarray(c), np.asarray(p), np.asarray(z)

    def batch(X):
        return c0 + np.sum((ca + pa * np.exp(lam * (X - za) ** 2)) * X, axis=1)

    return Target(d, scalar, batch, {"kind": "gexpar", "d": d})


def simulate_gexpar(params: GexparParams, n: int, noise: str = "gaussian", seed: int = 0,
                    burn_in: int = DEFAULT_BURN_IN, override: bool = False) -> ARSample:
    """Simulate the GEXPAR recursion; refuses unstable parameters unless ``override``."""
    if not override:
        rep = gexpar_stability(params)
        if not rep.stable:
            raise StabilityError(f"GEXPAR characteristic polynomial has a root of modulus "
                                 f"{rep.spectral_radius:.6g} >= 1")
    spec = ARSpec(params.d, gexpar_truth(params), noise, burn_in)
    return simulate_ar(spec, n, seed)


# ---------------------------------------------------------------- binary AR

@dataclass
class BinaryARSpec:
    """Binary AR model with ``P(Y_t = 1 | past) = (1 + f(Y_{t-1..t-p}) + g(x_t)) / 2``.

    ``f`` takes the lag vector in ``{-1, 1}^p`` (most recent first); ``g``
    takes the covariate vector drawn by ``covariates(rng, n)``. Windows fed
    to a network are the lags, recoded to ``{0, 1}`` when ``recode`` is
    set, followed by the covariates.
    """

    p: int
    f: Callable
    g: Optional[Callable] = None
    covariates: Optional[Callable] = None
    d_x: int = 0
    recode: bool = True
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError("lag order p must be >= 1")
        if (self.g is None) != (self.covariates is None):
            raise ConfigError("g and the covariate generator must be given together")
        self.check_range()

    def check_range(self, n_probe: int = 64):
        """Verify ``f + g`` stays in ``[-1, 1]`` on all lag patterns (p <= 12) and a covariate probe."""
        if self.p <= 12:
            patterns = [np.array(c, dtype=np.float64) for c in itertools.product((-1.0, 1.0), repeat=self.p)]
        else:
            rng = make_rng(0)
            patterns = [rng.choice((-1.0, 1.0), self.p) for _ in range(4096)]
        gs = [0.0]
        if self.g is not None:
            Z = np.asarray(self.covariates(make_rng(0), n_probe), dtype=np.float64).reshape(n_probe, -1)
            gs = [float(self.g(z)) for z in Z]
        for y in patterns:
            fy = float(self.f(y))
            for gv in gs:
                if not -1.0 - 1e-12 <= fy + gv <= 1.0 + 1e-12:
                    raise ModelContractError(f"f + g = {fy + gv:.6g} outside [-1, 1] at lags {y.tolist()}")

    @property
    def input_dim(self):
        return self.p + self.d_x


def simulate_binary(spec: BinaryARSpec, n: int, seed: int) -> ARSample:
    """Labels in ``{-1, 1}``, windows ``X`` and the true conditional probabilities ``eta``."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = make_rng(seed)
    total = spec.burn_in + n
    U = rng.random(total)
    lags0 = rng.choice(np.array([-1.0, 1.0]), spec.p)
    Z = None
    if spec.covariates is not None:
        Z = np.asarray(spec.covariates(rng, total), dtype=np.float64).reshape(total, -1)
    labels = np.empty(total)
    etas = np.empty(total)
    lagbuf = np.empty((total, spec.p))
    lags = lags0.copy()
    for t in range(total):
        lagbuf[t] = lags
        val = float(spec.f(lags))
        if Z is not None:
            val += float(spec.g(Z[t]))
        eta = 0.5 * (1.0 + val)
        if not (-1e-12 <= eta <= 1.0 + 1e-12):
            raise ModelContractError(f"eta_t = {eta:.6g} outside [0, 1] at step {t}")
        eta = min(max(eta, 0.0), 1.0)
        y = 1.0 if U[t] < eta else -1.0
        etas[t] = eta
        labels[t] = y
        lags = np.concatenate(([y], lags[:-1]))
    sl = slice(spec.burn_in, total)
    X = lagbuf[sl]
    if spec.recode:
        X = (X + 1.0) / 2.0
    if Z is not None:
        X = np.hstack([X, Z[sl]])
    return ARSample(labels[sl].copy(), np.ascontiguousarray(X), etas[sl].copy())


def binary_eta(spec: BinaryARSpec, X) -> np.ndarray:
    """Closed-form ``eta`` at windows ``X`` laid out as by :func:`simulate_binary`."""
    X = np.asarray(X, dtype=np.float64)
    lags = X[:, :spec.p]
    if spec.recode:
        lags = 2.0 * lags - 1.0
    vals = np.array([float(spec.f(r)) for r in lags])
    if spec.g is not None:
        vals += np.array([float(spec.g(z)) for z in X[:, spec.p:]])
    return 0.5 * (1.0 + vals)


# ---------------------------------------------------------------- export

def write_dataset_csv(path, sample: ARSample) -> None:
    """Columns ``t, y, x_1..x_d`` with ``t`` starting at 1."""
    d = sample.X.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "y"] + [f"x_{i + 1}" for i in range(d)])
        for t in range(sample.n):
            w.writerow([t + 1, repr(float(sample.y[t]))] + [repr(float(v)) for v in sample.X[t]])


def read_dataset_csv(path) -> ARSample:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    return ARSample(body[:, 1].copy(), np.ascontiguousarray(body[:, 2:]))
