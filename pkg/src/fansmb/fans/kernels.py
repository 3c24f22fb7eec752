"""Inner loops of the flow: deep sigmoidal transform and per-sample masked layers.

Each kernel has a numba implementation and a vectorized numpy twin. The public
``dsf_forward`` / ``dsf_backward`` / ``masked_linear*`` functions dispatch on
:func:`fansmb._accel.use_numba`. Parameter layout for the transform along the
last axis is ``[w_pre (K), a_pre (K), b (K)]``; ``w = softmax(w_pre)``,
``a = softplus(a_pre)``.

The transform ``u = logit(sum_k w_k sigmoid(a_k x + b_k))`` is evaluated in
log space::

    L1 = log y       = LSE_k(log w_k + log sig(z_k))
    L0 = log(1 - y)  = LSE_k(log w_k + log sig(-z_k))
    Ld = log dy/dx   = LSE_k(log w_k + log a_k + log sig(z_k) + log sig(-z_k))
    u = L1 - L0,  log du/dx = Ld - L1 - L0
"""
import math

import numpy as np

from .._accel import njit, use_numba

# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def _softplus(x):
    return np.logaddexp(0.0, x)


def _log_softplus(x):
    # log(softplus(x)); softplus(x) ~ exp(x) for very negative x
    return np.where(x < -30.0, x, np.log(_softplus(np.maximum(x, -30.0))))


def _lse(v):
    m = np.max(v, axis=-1, keepdims=True)
    return (m + np.log(np.sum(np.exp(v - m), axis=-1, keepdims=True)))[..., 0]


def _dsf_terms(x, p, k):
    wt, at, b = p[..., :k], p[..., k:2 * k], p[..., 2 * k:3 * k]
    logw = wt - _lse(wt)[..., None]
    a = _softplus(at)
    loga = _log_softplus(at)
    z = a * x[..., None] + b
    ls = -_softplus(-z)
    lsn = -_softplus(z)
    l1 = _lse(logw + ls)
    l0 = _lse(logw + lsn)
    ld = _lse(logw + loga + ls + lsn)
    return logw, a, loga, z, ls, lsn, l1, l0, ld


def dsf_forward_np(x, p, k):
    *_, l1, l0, ld = _dsf_terms(x, p, k)
    return l1 - l0, ld - l1 - l0


def dsf_backward_np(x, p, k, gu, gld):
    logw, a, loga, z, ls, lsn, l1, l0, ld = _dsf_terms(x, p, k)
    gl1 = (gu - gld)[..., None]
    gl0 = (-gu - gld)[..., None]
    gd = gld[..., None]
    r1 = np.exp(logw + ls - l1[..., None])
    r0 = np.exp(logw + lsn - l0[..., None])
    rd = np.exp(logw + loga + ls + lsn - ld[..., None])
    s = np.exp(ls)
    g_logw = gl1 * r1 + gl0 * r0 + gd * rd
    w = np.exp(logw)
    g_wt = g_logw - w * g_logw.sum(axis=-1, keepdims=True)
    g_z = gl1 * r1 * (1.0 - s) - gl0 * r0 * s + gd * rd * (1.0 - 2.0 * s)
    # d log a / d a_pre = sigmoid(a_pre) / softplus(a_pre)
    at = p[..., k:2 * k]
    sig_at = 1.0 / (1.0 + np.exp(-at))
    g_at = g_z * x[..., None] * sig_at + gd * rd * np.exp(np.log(sig_at) - loga)
    dp = np.concatenate([g_wt, g_at, g_z], axis=-1)
    dx = np.sum(g_z * a, axis=-1)
    return dp, dx


def masked_linear_np(a, w, bias, sin, sout, strict):
    mask = (sin[:, None, :] < sout[:, :, None]) if strict else (sin[:, None, :] <= sout[:, :, None])
    return np.einsum("boi,oi,bi->bo", mask, w, a, optimize=True) + bias


def masked_linear_backward_np(delta, a, w, sin, sout, strict):
    mask = (sin[:, None, :] < sout[:, :, None]) if strict else (sin[:, None, :] <= sout[:, :, None])
    dw = np.einsum("boi,bo,bi->oi", mask, delta, a, optimize=True)
    da = np.einsum("boi,bo,oi->bi", mask, delta, w, optimize=True)
    return dw, da


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------


@njit
def _sp(x):
    if x > 30.0:
        return x
    if x < -30.0:
        return math.exp(x)
    return math.log1p(math.exp(x))


@njit
def _logsp(x):
    if x < -30.0:
        return x
    return math.log(_sp(x))


@njit
def _dsf_point(x, p, k, logw, a, loga, ls, lsn):
    m = -1e300
    for j in range(k):
        if p[j] > m:
            m = p[j]
    acc = 0.0
    for j in range(k):
        acc += math.exp(p[j] - m)
    lz = m + math.log(acc)
    m1 = -1e300
    m0 = -1e300
    md = -1e300
    for j in range(k):
        logw[j] = p[j] - lz
        a[j] = _sp(p[k + j])
        loga[j] = _logsp(p[k + j])
        z = a[j] * x + p[2 * k + j]
        ls[j] = -_sp(-z)
        lsn[j] = -_sp(z)
        m1 = max(m1, logw[j] + ls[j])
        m0 = max(m0, logw[j] + lsn[j])
        md = max(md, logw[j] + loga[j] + ls[j] + lsn[j])
    s1 = 0.0
    s0 = 0.0
    sd = 0.0
    for j in range(k):
        s1 += math.exp(logw[j] + ls[j] - m1)
        s0 += math.exp(logw[j] + lsn[j] - m0)
        sd += math.exp(logw[j] + loga[j] + ls[j] + lsn[j] - md)
    return m1 + math.log(s1), m0 + math.log(s0), md + math.log(sd)


@njit
def dsf_forward_nb(x, p, k):
    b, d = x.shape
    u = np.empty((b, d))
    ld = np.empty((b, d))
    logw = np.empty(k)
    a = np.empty(k)
    loga = np.empty(k)
    ls = np.empty(k)
    lsn = np.empty(k)
    for i in range(b):
        for j in range(d):
            l1, l0, lD = _dsf_point(x[i, j], p[i, j], k, logw, a, loga, ls, lsn)
            u[i, j] = l1 - l0
            ld[i, j] = lD - l1 - l0
    return u, ld


@njit
def dsf_backward_nb(x, p, k, gu, gld):
    b, d = x.shape
    dp = np.zeros((b, d, 3 * k))
    dx = np.zeros((b, d))
    logw = np.empty(k)
    a = np.empty(k)
    loga = np.empty(k)
    ls = np.empty(k)
    lsn = np.empty(k)
    glogw = np.empty(k)
    for i in range(b):
        for j in range(d):
            if gu[i, j] == 0.0 and gld[i, j] == 0.0:
                continue
            xv = x[i, j]
            pv = p[i, j]
            l1, l0, lD = _dsf_point(xv, pv, k, logw, a, loga, ls, lsn)
            gl1 = gu[i, j] - gld[i, j]
            gl0 = -gu[i, j] - gld[i, j]
            gd = gld[i, j]
            tot = 0.0
            acc_x = 0.0
            for q in range(k):
                r1 = math.exp(logw[q] + ls[q] - l1)
                r0 = math.exp(logw[q] + lsn[q] - l0)
                rd = math.exp(logw[q] + loga[q] + ls[q] + lsn[q] - lD)
                s = math.exp(ls[q])
                glogw[q] = gl1 * r1 + gl0 * r0 + gd * rd
                tot += glogw[q]
                gz = gl1 * r1 * (1.0 - s) - gl0 * r0 * s + gd * rd * (1.0 - 2.0 * s)
                at = pv[k + q]
                sig_at = 1.0 / (1.0 + math.exp(-at))
                dp[i, j, k + q] = gz * xv * sig_at + gd * rd * math.exp(math.log(sig_at) - loga[q])
                dp[i, j, 2 * k + q] = gz
                acc_x += gz * a[q]
            for q in range(k):
                dp[i, j, q] = glogw[q] - math.exp(logw[q]) * tot
            dx[i, j] = acc_x
    return dp, dx


@njit
def masked_linear_nb(a, w, bias, sin, sout, strict):
    nb, ni = a.shape
    no = w.shape[0]
    out = np.empty((nb, no))
    for b in range(nb):
        for o in range(no):
            acc = bias[o]
            so = sout[b, o]
            for i in range(ni):
                av = a[b, i]
                if av == 0.0:
                    continue
                si = sin[b, i]
                if (si < so) if strict else (si <= so):
                    acc += w[o, i] * av
            out[b, o] = acc
    return out


@njit
def masked_linear_backward_nb(delta, a, w, sin, sout, strict):
    nb, ni = a.shape
    no = w.shape[0]
    dw = np.zeros((no, ni))
    da = np.zeros((nb, ni))
    for b in range(nb):
        for o in range(no):
            g = delta[b, o]
            if g == 0.0:
                continue
            so = sout[b, o]
            for i in range(ni):
                si = sin[b, i]
                if (si < so) if strict else (si <= so):
                    dw[o, i] += g * a[b, i]
                    da[b, i] += g * w[o, i]
    return dw, da


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def dsf_forward(x, p, k):
    """Transformed value ``u`` and ``log du/dx`` for arrays ``x: (B, d)``, ``p: (B, d, 3k)``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    if use_numba():
        return dsf_forward_nb(x, p, k)
    return dsf_forward_np(x, p, k)


def dsf_backward(x, p, k, gu, gld):
    """Gradients w.r.t. ``p`` and ``x`` given upstream ``dL/du`` and ``dL/dlogderiv``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    gu = np.ascontiguousarray(gu, dtype=np.float64)
    gld = np.ascontiguousarray(gld, dtype=np.float64)
    if use_numba():
        return dsf_backward_nb(x, p, k, gu, gld)
    return dsf_backward_np(x, p, k, gu, gld)


def _as_rows(scores, nb):
    scores = np.asarray(scores, dtype=np.int64)
    if scores.ndim == 1:
        scores = np.broadcast_to(scores, (nb, scores.shape[0]))
    return np.ascontiguousarray(scores)


def masked_linear(a, w, bias, sin, sout, strict):
    """``out[b, o] = bias[o] + sum_i w[o, i] a[b, i] [sin[b, i] (<|<=) sout[b, o]]``.

    Scores may be shared ``(n,)`` vectors, in which case a single static mask
    is applied with a dense matmul.
    """
    if np.ndim(sin) == 1 and np.ndim(sout) == 1:
        return a @ (w * static_mask(sin, sout, strict)).T + bias
    nb = a.shape[0]
    sin, sout = _as_rows(sin, nb), _as_rows(sout, nb)
    a = np.ascontiguousarray(a, dtype=np.float64)
    if use_numba():
        return masked_linear_nb(a, np.ascontiguousarray(w), np.ascontiguousarray(bias), sin, sout, strict)
    return masked_linear_np(a, w, bias, sin, sout, strict)


def masked_linear_backward(delta, a, w, sin, sout, strict):
    """``(dL/dw, dL/da)`` for :func:`masked_linear` given ``delta = dL/dout``."""
    if np.ndim(sin) == 1 and np.ndim(sout) == 1:
        m = static_mask(sin, sout, strict)
        return (delta.T @ a) * m, delta @ (w * m)
    nb = a.shape[0]
    sin, sout = _as_rows(sin, nb), _as_rows(sout, nb)
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    if use_numba():
        return masked_linear_backward_nb(delta, a, np.ascontiguousarray(w), sin, sout, strict)
    return masked_linear_backward_np(delta, a, w, sin, sout, strict)


def static_mask(sin, sout, strict):
    sin = np.asarray(sin)
    sout = np.asarray(sout)
    return ((sin[None, :] < sout[:, None]) if strict else (sin[None, :] <= sout[:, None])).astype(np.float64)
