"""Feed-forward and gated-recurrent pair classifiers with hand-written backprop.

A network is a dict of named arrays; ``forward`` returns logits plus a cache
that ``backward`` turns into a gradient dict with the same keys.
"""
import numpy as np


def glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def output_loss(logits, y, n_out):
    """Mean BCE (one logit) or softmax cross-entropy, and d loss / d logits."""
    n = len(y)
    if n_out == 1:
        z = logits[:, 0]
        yf = y.astype(np.float64)
        loss = np.mean(np.logaddexp(0.0, z) - yf * z)
        return loss, ((sigmoid(z) - yf) / n)[:, None]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), y].mean()
    d = np.exp(logp)
    d[np.arange(n), y] -= 1.0
    return loss, d / n


def output_probs(logits):
    if logits.shape[1] == 1:
        return sigmoid(logits)
    return softmax(logits)


# --------------------------------------------------------------------------
# MLP: one ReLU hidden layer


def init_mlp(n_in, hidden, n_out, rng):
    return {"W1": glorot(rng, n_in, hidden), "b1": np.zeros(hidden),
            "W2": glorot(rng, hidden, n_out), "b2": np.zeros(n_out)}


def mlp_forward(p, X, train=False, rng=None, dropout=0.0):
    pre = X @ p["W1"] + p["b1"]
    hid = np.maximum(pre, 0.0)
    return hid @ p["W2"] + p["b2"], (X, pre, hid)


def mlp_backward(p, cache, dlogits):
    X, pre, hid = cache
    g = {"W2": hid.T @ dlogits, "b2": dlogits.sum(axis=0)}
    dhid = (dlogits @ p["W2"].T) * (pre > 0)
    g["W1"] = X.T @ dhid
    g["b1"] = dhid.sum(axis=0)
    return g


# --------------------------------------------------------------------------
# LSTM: stacked gated layers over (samples, time, features), gate order i f g o


def init_lstm_layer(n_in, hidden, rng, prefix):
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0   # forget-gate bias
    return {f"{prefix}Wx": glorot(rng, n_in, 4 * hidden),
            f"{prefix}Wh": glorot(rng, hidden, 4 * hidden),
            f"{prefix}b": b}


def lstm_cell(x, h_prev, c_prev, Wx, Wh, b):
    """One gated step; returns ``(h, c, gates)`` with gates ``(i, f, g, o, tanh_c)``."""
    H = h_prev.shape[1]
    z = x @ Wx + h_prev @ Wh + b
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H:2 * H])
    g = np.tanh(z[:, 2 * H:3 * H])
    o = sigmoid(z[:, 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return o * tc, c, (i, f, g, o, tc)


def lstm_layer_forward(X, Wx, Wh, b):
    s, T, _ = X.shape
    H = Wh.shape[0]
    h = np.zeros((s, H))
    c = np.zeros((s, H))
    out = np.empty((s, T, H))
    steps = []
    for t in range(T):
        h_prev, c_prev = h, c
        h, c, gates = lstm_cell(X[:, t], h_prev, c_prev, Wx, Wh, b)
        out[:, t] = h
        steps.append((X[:, t], h_prev, c_prev, gates))
    return out, steps


def lstm_layer_backward(dout, steps, Wx, Wh):
    s, T, H = dout.shape
    dWx, dWh, db = np.zeros_like(Wx), np.zeros_like(Wh), np.zeros(4 * H)
    dX = np.empty((s, T, Wx.shape[0]))
    dh_next = np.zeros((s, H))
    dc_next = np.zeros((s, H))
    for t in reversed(range(T)):
        x, h_prev, c_prev, (i, f, g, o, tc) = steps[t]
        dh = dout[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di, dg, df = dc * g, dc * i, dc * c_prev
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1)
        dWx += x.T @ dz
        dWh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dX[:, t] = dz @ Wx.T
        dh_next = dz @ Wh.T
        dc_next = dc * f
    return dX, dWx, dWh, db


def init_lstm(n_in, hidden, n_out, rng):
    p = {}
    width = n_in
    for li, H in enumerate(hidden):
        p.update(init_lstm_layer(width, H, rng, f"L{li}_"))
        width = H
    p["Wo"] = glorot(rng, width, n_out)
    p["bo"] = np.zeros(n_out)
    return p


def _n_layers(p):
    return sum(1 for k in p if k.endswith("_Wx"))


def lstm_forward(p, X, train=False, rng=None, dropout=0.2):
    """``X`` is ``(samples, 2d)`` or ``(samples, time, 2d)``; time defaults to 1."""
    seq = X[:, None, :] if X.ndim == 2 else X
    caches = []
    for li in range(_n_layers(p)):
        seq, steps = lstm_layer_forward(seq, p[f"L{li}_Wx"], p[f"L{li}_Wh"], p[f"L{li}_b"])
        mask = None
        if train and dropout > 0:
            mask = (rng.random(seq.shape) >= dropout) / (1.0 - dropout)
            seq = seq * mask
        caches.append((steps, mask))
    last = seq[:, -1]
    return last @ p["Wo"] + p["bo"], (caches, last, seq.shape)


def lstm_backward(p, cache, dlogits):
    caches, last, shape = cache
    g = {"Wo": last.T @ dlogits, "bo": dlogits.sum(axis=0)}
    dseq = np.zeros(shape)
    dseq[:, -1] = dlogits @ p["Wo"].T
    for li in reversed(range(len(caches))):
        steps, mask = caches[li]
        if mask is not None:
            dseq = dseq * mask
        dseq, g[f"L{li}_Wx"], g[f"L{li}_Wh"], g[f"L{li}_b"] = lstm_layer_backward(
            dseq, steps, p[f"L{li}_Wx"], p[f"L{li}_Wh"])
    return g


NETS = {
    "mlp": (mlp_forward, mlp_backward),
    "lstm": (lstm_forward, lstm_backward),
}
