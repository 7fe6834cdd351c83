"""
Hot numeric kernels for the MLP, the losses and the proximal step.

Every kernel exists twice: a vectorised numpy implementation and a
loop-level numba implementation compiled with ``@njit``. The active
backend is chosen once at import time from the ``SPDNN_BACKEND``
environment variable (``"numba"`` or ``"numpy"``); when numba is not
importable the numpy path is used regardless. Both backends stay
reachable through :func:`get_backend` so they can be cross-checked and
benchmarked against each other.

Parameter layout is the flat vector ``(vec(W_1), b_1, ..., vec(W_{L+1}), b_{L+1})``
with ``vec`` stacking columns, so ``W_j[r, c]`` lives at offset ``c * p_j + r``
inside its block.
"""

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

LOSS_L1 = 0
LOSS_HUBER = 1
LOSS_LOGISTIC = 2

PEN_CLIPPED_L1 = 0
PEN_SCAD = 1
PEN_MCP = 2


def _requested_backend():
    name = os.environ.get("SPDNN_BACKEND", "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"SPDNN_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def loss_value_np(code, delta, pred, y):
    r = np.asarray(pred, dtype=np.float64) - y
    if code == LOSS_L1:
        return np.abs(r)
    if code == LOSS_HUBER:
        a = np.abs(r)
        return np.where(a <= delta, 0.5 * r * r, delta * a - 0.5 * delta * delta)
    m = np.asarray(y, dtype=np.float64) * pred
    return np.log1p(np.exp(-np.abs(m))) + np.maximum(-m, 0.0)


def loss_deriv_np(code, delta, pred, y):
    pred = np.asarray(pred, dtype=np.float64)
    if code == LOSS_L1:
        return np.sign(pred - y)
    if code == LOSS_HUBER:
        return np.clip(pred - y, -delta, delta)
    y = np.asarray(y, dtype=np.float64)
    m = y * pred
    e = np.exp(-np.abs(m))
    # sigmoid(-m), evaluated without overflow on either side
    s = np.where(m >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
    return -y * s


def _layers(theta, widths):
    off = 0
    out = []
    for j in range(1, len(widths)):
        p_in, p_out = int(widths[j - 1]), int(widths[j])
        W = theta[off:off + p_out * p_in].reshape((p_out, p_in), order="F")
        off += p_out * p_in
        b = theta[off:off + p_out]
        off += p_out
        out.append((W, b))
    return out


def predict_np(theta, widths, X, F, clamp):
    a = X
    layers = _layers(theta, widths)
    last = len(layers) - 1
    for j, (W, b) in enumerate(layers):
        z = a @ W.T + b
        a = np.maximum(z, 0.0) if j < last else z
    out = a[:, 0].copy()
    if clamp:
        np.clip(out, -F, F, out=out)
    return out


def risk_np(theta, widths, X, y, code, delta, F, clamp):
    pred = predict_np(theta, widths, X, F, clamp)
    return float(np.mean(loss_value_np(code, delta, pred, y)))


def risk_grad_np(theta, widths, X, y, code, delta, F, clamp):
    n = X.shape[0]
    layers = _layers(theta, widths)
    last = len(layers) - 1
    acts = [X]
    pres = []
    a = X
    for j, (W, b) in enumerate(layers):
        z = a @ W.T + b
        pres.append(z)
        a = np.maximum(z, 0.0) if j < last else z
        acts.append(a)
    raw = a[:, 0]
    if clamp:
        pred = np.clip(raw, -F, F)
        gate = ((raw > -F) & (raw < F)).astype(np.float64)
    else:
        pred = raw
        gate = 1.0
    risk = float(np.mean(loss_value_np(code, delta, pred, y)))
    g = (loss_deriv_np(code, delta, pred, y) * gate / n)[:, None]
    grads = []
    for j in range(last, -1, -1):
        W, _ = layers[j]
        if j < last:
            g = g * (pres[j] > 0.0)
        gW = g.T @ acts[j]
        gb = g.sum(axis=0)
        grads.append((gW, gb))
        if j > 0:
            g = g @ W
    flat = []
    for gW, gb in reversed(grads):
        flat.append(gW.ravel(order="F"))
        flat.append(gb)
    return risk, np.concatenate(flat)


def penalty_np(code, u, lam, tau, shape):
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        v = u / tau
    v = np.where(u == 0.0, 0.0, v)
    if code == PEN_CLIPPED_L1:
        return lam * np.minimum(v, 1.0)
    if code == PEN_SCAD:
        a = shape
        a2 = a * a
        inner = np.where(
            v <= 1.0 / a,
            2.0 * a * v / (a + 1.0),
            (2.0 * a2 * np.minimum(v, 1.0) - a2 * np.minimum(v, 1.0) ** 2 - 1.0) / (a2 - 1.0),
        )
        return lam * np.where(v > 1.0, 1.0, inner)
    w = np.minimum(v, 1.0)
    return lam * (2.0 * w - w * w)


def _pieces(code, lam, tau, shape):
    """(lo, hi, c1, c2) for each non-flat piece of the penalty on z >= 0."""
    with np.errstate(over="ignore", divide="ignore"):
        if code == PEN_CLIPPED_L1:
            return [(0.0, tau, lam / tau, 0.0)]
        if code == PEN_SCAD:
            a = shape
            a2 = a * a
            return [
                (0.0, tau / a, lam * 2.0 * a / ((a + 1.0) * tau), 0.0),
                (tau / a, tau, lam * 2.0 * a2 / ((a2 - 1.0) * tau), -lam * a2 / ((a2 - 1.0) * tau * tau)),
            ]
        return [(0.0, tau, 2.0 * lam / tau, -lam / (tau * tau))]


def prox_np(code, x, eta, lam, tau, shape):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    cands = [np.zeros_like(ax), np.maximum(ax, tau)]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for lo, hi, c1, c2 in _pieces(code, lam, tau, shape):
            cands.append(np.full_like(ax, hi))
            curv = 1.0 + 2.0 * eta * c2
            if curv > 0.0 and np.isfinite(curv):
                z = (ax - eta * c1) / curv
                z = np.where(np.isfinite(z), z, lo)
                cands.append(np.clip(z, lo, hi))
    C = np.stack(cands, axis=-1)
    obj = 0.5 * (C - ax[..., None]) ** 2 + eta * penalty_np(code, C, lam, tau, shape)
    best = obj.min(axis=-1, keepdims=True)
    # ties go to the smallest magnitude
    key = np.where(obj == best, C, np.inf)
    z = np.take_along_axis(C, np.argmin(key, axis=-1)[..., None], axis=-1)[..., 0]
    return np.sign(x) * z


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    njit = numba.njit(cache=True, error_model="numpy")

    @njit
    def _loss_pair_nb(code, delta, pred, y):
        r = pred - y
        if code == LOSS_L1:
            if r > 0.0:
                return r, 1.0
            if r < 0.0:
                return -r, -1.0
            return 0.0, 0.0
        if code == LOSS_HUBER:
            a = abs(r)
            if a <= delta:
                return 0.5 * r * r, r
            if r > 0.0:
                return delta * a - 0.5 * delta * delta, delta
            return delta * a - 0.5 * delta * delta, -delta
        m = y * pred
        e = np.exp(-abs(m))
        val = np.log1p(e) + max(-m, 0.0)
        if m >= 0.0:
            s = e / (1.0 + e)
        else:
            s = 1.0 / (1.0 + e)
        return val, -y * s

    @njit
    def _offsets_nb(widths):
        nl = widths.shape[0] - 1
        w_off = np.empty(nl, np.int64)
        b_off = np.empty(nl, np.int64)
        a_off = np.empty(nl + 1, np.int64)
        off = 0
        a_off[0] = 0
        for j in range(nl):
            w_off[j] = off
            off += widths[j + 1] * widths[j]
            b_off[j] = off
            off += widths[j + 1]
            a_off[j + 1] = a_off[j] + widths[j]
        return w_off, b_off, a_off, a_off[nl] + widths[nl]

    @njit
    def _forward_one_nb(theta, widths, x, w_off, b_off, a_off, act, pre):
        nl = widths.shape[0] - 1
        for k in range(widths[0]):
            act[k] = x[k]
        for j in range(nl):
            pin = widths[j]
            pout = widths[j + 1]
            ai = a_off[j]
            ao = a_off[j + 1]
            wo = w_off[j]
            bo = b_off[j]
            for r in range(pout):
                pre[ao + r] = theta[bo + r]
            for c in range(pin):
                a_c = act[ai + c]
                if a_c == 0.0:
                    continue
                col = wo + c * pout
                for r in range(pout):
                    pre[ao + r] += theta[col + r] * a_c
            for r in range(pout):
                s = pre[ao + r]
                if j < nl - 1 and s <= 0.0:
                    act[ao + r] = 0.0
                else:
                    act[ao + r] = s
        return act[a_off[nl]]

    @njit
    def predict_nb(theta, widths, X, F, clamp):
        n = X.shape[0]
        w_off, b_off, a_off, total = _offsets_nb(widths)
        act = np.empty(total)
        pre = np.empty(total)
        out = np.empty(n)
        for i in range(n):
            raw = _forward_one_nb(theta, widths, X[i], w_off, b_off, a_off, act, pre)
            if clamp:
                raw = min(max(raw, -F), F)
            out[i] = raw
        return out

    @njit
    def risk_nb(theta, widths, X, y, code, delta, F, clamp):
        pred = predict_nb(theta, widths, X, F, clamp)
        total = 0.0
        for i in range(pred.shape[0]):
            v, _ = _loss_pair_nb(code, delta, pred[i], y[i])
            total += v
        return total / pred.shape[0]

    @njit
    def risk_grad_nb(theta, widths, X, y, code, delta, F, clamp):
        n = X.shape[0]
        nl = widths.shape[0] - 1
        w_off, b_off, a_off, total = _offsets_nb(widths)
        act = np.empty(total)
        pre = np.empty(total)
        dz = np.empty(total)
        grad = np.zeros(theta.shape[0])
        risk = 0.0
        for i in range(n):
            raw = _forward_one_nb(theta, widths, X[i], w_off, b_off, a_off, act, pre)
            gate = 1.0
            pred = raw
            if clamp:
                if raw <= -F:
                    pred = -F
                    gate = 0.0
                elif raw >= F:
                    pred = F
                    gate = 0.0
            val, g = _loss_pair_nb(code, delta, pred, y[i])
            risk += val
            g *= gate
            if g == 0.0:
                continue
            dz[a_off[nl]] = g
            for j in range(nl - 1, -1, -1):
                pin = widths[j]
                pout = widths[j + 1]
                ai = a_off[j]
                ao = a_off[j + 1]
                wo = w_off[j]
                bo = b_off[j]
                for r in range(pout):
                    if j < nl - 1 and pre[ao + r] <= 0.0:
                        dz[ao + r] = 0.0
                    grad[bo + r] += dz[ao + r]
                for c in range(pin):
                    a_c = act[ai + c]
                    acc = 0.0
                    for r in range(pout):
                        d_r = dz[ao + r]
                        grad[wo + c * pout + r] += d_r * a_c
                        acc += theta[wo + c * pout + r] * d_r
                    if j > 0:
                        dz[ai + c] = acc
        inv = 1.0 / n
        for k in range(grad.shape[0]):
            grad[k] *= inv
        return risk * inv, grad

    @njit
    def _pen_one_nb(code, u, lam, tau, shape):
        if u == 0.0:
            return 0.0
        v = u / tau
        if v > 1.0:
            return lam
        if code == PEN_CLIPPED_L1:
            return lam * v
        if code == PEN_SCAD:
            a = shape
            a2 = a * a
            if v <= 1.0 / a:
                return lam * 2.0 * a * v / (a + 1.0)
            return lam * (2.0 * a2 * v - a2 * v * v - 1.0) / (a2 - 1.0)
        return lam * (2.0 * v - v * v)

    @njit
    def _consider_nb(z, ax, eta, code, lam, tau, shape, best_z, best_obj):
        obj = 0.5 * (z - ax) ** 2 + eta * _pen_one_nb(code, z, lam, tau, shape)
        if obj < best_obj or (obj == best_obj and z < best_z):
            return z, obj
        return best_z, best_obj

    @njit
    def _piece_nb(ax, eta, lo, hi, c1, c2, code, lam, tau, shape, best_z, best_obj):
        best_z, best_obj = _consider_nb(hi, ax, eta, code, lam, tau, shape, best_z, best_obj)
        curv = 1.0 + 2.0 * eta * c2
        if curv > 0.0 and np.isfinite(curv):
            z = (ax - eta * c1) / curv
            if not np.isfinite(z):
                z = lo
            z = min(max(z, lo), hi)
            best_z, best_obj = _consider_nb(z, ax, eta, code, lam, tau, shape, best_z, best_obj)
        return best_z, best_obj

    @njit
    def prox_nb(code, x, eta, lam, tau, shape):
        out = np.empty(x.shape[0])
        a = shape
        a2 = a * a
        for k in range(x.shape[0]):
            ax = abs(x[k])
            best_z = 0.0
            best_obj = 0.5 * ax * ax
            best_z, best_obj = _consider_nb(max(ax, tau), ax, eta, code, lam, tau, shape, best_z, best_obj)
            if code == PEN_CLIPPED_L1:
                best_z, best_obj = _piece_nb(ax, eta, 0.0, tau, lam / tau, 0.0, code, lam, tau, shape, best_z, best_obj)
            elif code == PEN_SCAD:
                b1 = tau / a
                best_z, best_obj = _piece_nb(
                    ax, eta, 0.0, b1, lam * 2.0 * a / ((a + 1.0) * tau), 0.0, code, lam, tau, shape, best_z, best_obj
                )
                best_z, best_obj = _piece_nb(
                    ax, eta, b1, tau, lam * 2.0 * a2 / ((a2 - 1.0) * tau),
                    -lam * a2 / ((a2 - 1.0) * tau * tau), code, lam, tau, shape, best_z, best_obj,
                )
            else:
                best_z, best_obj = _piece_nb(
                    ax, eta, 0.0, tau, 2.0 * lam / tau, -lam / (tau * tau), code, lam, tau, shape, best_z, best_obj
                )
            if x[k] > 0.0:
                out[k] = best_z
            elif x[k] < 0.0:
                out[k] = -best_z
            else:
                out[k] = 0.0
        return out


def _as_theta(theta):
    return np.ascontiguousarray(theta, dtype=np.float64)


def _wrap_numba():
    def predict(theta, widths, X, F, clamp):
        return predict_nb(_as_theta(theta), np.asarray(widths, np.int64),
                          np.ascontiguousarray(X, np.float64), float(F), bool(clamp))

    def risk(theta, widths, X, y, code, delta, F, clamp):
        return float(risk_nb(_as_theta(theta), np.asarray(widths, np.int64),
                             np.ascontiguousarray(X, np.float64), np.ascontiguousarray(y, np.float64),
                             int(code), float(delta), float(F), bool(clamp)))

    def risk_grad(theta, widths, X, y, code, delta, F, clamp):
        r, g = risk_grad_nb(_as_theta(theta), np.asarray(widths, np.int64),
                            np.ascontiguousarray(X, np.float64), np.ascontiguousarray(y, np.float64),
                            int(code), float(delta), float(F), bool(clamp))
        return float(r), g

    def prox(code, x, eta, lam, tau, shape):
        x = np.asarray(x, dtype=np.float64)
        out = prox_nb(int(code), np.ascontiguousarray(x.ravel()), float(eta), float(lam), float(tau), float(shape))
        return out.reshape(x.shape)

    return SimpleNamespace(name="numba", predict=predict, risk=risk, risk_grad=risk_grad, prox=prox)


def _wrap_numpy():
    def predict(theta, widths, X, F, clamp):
        return predict_np(_as_theta(theta), widths, np.asarray(X, np.float64), float(F), bool(clamp))

    def risk(theta, widths, X, y, code, delta, F, clamp):
        return risk_np(_as_theta(theta), widths, np.asarray(X, np.float64), np.asarray(y, np.float64),
                       code, delta, F, clamp)

    def risk_grad(theta, widths, X, y, code, delta, F, clamp):
        return risk_grad_np(_as_theta(theta), widths, np.asarray(X, np.float64), np.asarray(y, np.float64),
                            code, delta, F, clamp)

    def prox(code, x, eta, lam, tau, shape):
        return prox_np(code, x, eta, lam, tau, shape)

    return SimpleNamespace(name="numpy", predict=predict, risk=risk, risk_grad=risk_grad, prox=prox)


_BACKENDS = {"numpy": _wrap_numpy()}
if HAVE_NUMBA:
    _BACKENDS["numba"] = _wrap_numba()


def get_backend(name=None):
    """Return the kernel namespace for ``name`` (default: the active backend)."""
    if name is None:
        name = BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available") from None


BACKEND = _requested_backend()
active = get_backend(BACKEND)
