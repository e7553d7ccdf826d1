"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names dispatch on ``_accel.USE_NUMBA``; the ``*_nb`` / ``*_np``
twins are importable directly so tests and the benchmark can pit them against
each other.  Every kernel is order-deterministic: parallel loops only ever
write disjoint output rows.
"""
import math

import numpy as np
from numba import prange

from . import _accel
from ._accel import njit

TRANSE_L1, TRANSE_L2, TRANSR, RESCAL, DISTMULT, COMPLEX = range(6)
LOSS_MARGIN, LOSS_LOGISTIC = 0, 1


# --------------------------------------------------------------------------
# scatter-add of gradient rows


@njit
def scatter_add_rows_nb(out, rows, values):
    for i in range(rows.shape[0]):
        out[rows[i]] += values[i]


def scatter_add_rows_np(out, rows, values):
    np.add.at(out, rows, values)


def scatter_add_rows(out, rows, values):
    if _accel.USE_NUMBA:
        scatter_add_rows_nb(out, rows, values)
    else:
        scatter_add_rows_np(out, rows, values)


# --------------------------------------------------------------------------
# weighted CSR times dense: y[i] = sum_k w[k] * x[indices[k]]


@njit(parallel=True)
def csr_spmm_nb(indptr, indices, weights, x):
    n = indptr.shape[0] - 1
    out = np.zeros((n, x.shape[1]))
    for i in prange(n):
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            w = weights[k]
            for c in range(x.shape[1]):
                out[i, c] += w * x[j, c]
    return out


def csr_spmm_np(indptr, indices, weights, x):
    n = indptr.shape[0] - 1
    out = np.zeros((n, x.shape[1]))
    rows = np.repeat(np.arange(n), np.diff(indptr))
    np.add.at(out, rows, weights[:, None] * x[indices])
    return out


def csr_spmm(indptr, indices, weights, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if _accel.USE_NUMBA:
        return csr_spmm_nb(indptr, indices, weights, x)
    return csr_spmm_np(indptr, indices, weights, x)


# --------------------------------------------------------------------------
# KGE: per-triple score and gradient accumulation, fused batch loss


@njit
def _softplus(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@njit
def score_one(kind, E, Rv, Rm, h, r, t):
    d = E.shape[1]
    s = 0.0
    if kind == TRANSE_L1:
        for i in range(d):
            s += abs(E[h, i] + Rv[r, i] - E[t, i])
        return -s
    if kind == TRANSE_L2:
        for i in range(d):
            u = E[h, i] + Rv[r, i] - E[t, i]
            s += u * u
        return -math.sqrt(s)
    if kind == TRANSR:
        for a in range(Rv.shape[1]):
            u = Rv[r, a]
            for i in range(d):
                u += Rm[r, a, i] * (E[h, i] - E[t, i])
            s += u * u
        return -math.sqrt(s)
    if kind == RESCAL:
        for a in range(d):
            acc = 0.0
            for b in range(d):
                acc += Rm[r, a, b] * E[t, b]
            s += E[h, a] * acc
        return s
    if kind == DISTMULT:
        for i in range(d):
            s += Rv[r, i] * (E[h, i] * E[t, i])
        return s
    half = d // 2
    for i in range(half):
        a = E[h, i]
        b = E[h, i + half]
        c = Rv[r, i]
        dd = Rv[r, i + half]
        e = E[t, i]
        f = E[t, i + half]
        s += (a * c - b * dd) * e + (a * dd + b * c) * f
    return s


@njit
def grad_one(kind, E, Rv, Rm, h, r, t, coef, gE, gR, gM, buf):
    """Add ``coef * d score(h, r, t) / d params`` into the gradient buffers."""
    d = E.shape[1]
    if kind == TRANSE_L1:
        for i in range(d):
            u = E[h, i] + Rv[r, i] - E[t, i]
            sg = 1.0 if u > 0 else (-1.0 if u < 0 else 0.0)
            gE[h, i] -= coef * sg
            gR[r, i] -= coef * sg
            gE[t, i] += coef * sg
    elif kind == TRANSE_L2:
        nrm = 0.0
        for i in range(d):
            u = E[h, i] + Rv[r, i] - E[t, i]
            nrm += u * u
        nrm = math.sqrt(nrm)
        if nrm == 0.0:
            return
        for i in range(d):
            w = coef * (E[h, i] + Rv[r, i] - E[t, i]) / nrm
            gE[h, i] -= w
            gR[r, i] -= w
            gE[t, i] += w
    elif kind == TRANSR:
        k = Rv.shape[1]
        nrm = 0.0
        for a in range(k):
            u = Rv[r, a]
            for i in range(d):
                u += Rm[r, a, i] * (E[h, i] - E[t, i])
            buf[a] = u
            nrm += u * u
        nrm = math.sqrt(nrm)
        if nrm == 0.0:
            return
        for a in range(k):
            w = coef * buf[a] / nrm
            gR[r, a] -= w
            for i in range(d):
                gM[r, a, i] -= w * (E[h, i] - E[t, i])
                gE[h, i] -= w * Rm[r, a, i]
                gE[t, i] += w * Rm[r, a, i]
    elif kind == RESCAL:
        for a in range(d):
            acc_h = 0.0
            acc_t = 0.0
            for b in range(d):
                acc_h += Rm[r, a, b] * E[t, b]
                acc_t += E[h, b] * Rm[r, b, a]
                gM[r, a, b] += coef * E[h, a] * E[t, b]
            gE[h, a] += coef * acc_h
            gE[t, a] += coef * acc_t
    elif kind == DISTMULT:
        for i in range(d):
            gE[h, i] += coef * Rv[r, i] * E[t, i]
            gR[r, i] += coef * E[h, i] * E[t, i]
            gE[t, i] += coef * E[h, i] * Rv[r, i]
    else:
        half = d // 2
        for i in range(half):
            a = E[h, i]
            b = E[h, i + half]
            c = Rv[r, i]
            dd = Rv[r, i + half]
            e = E[t, i]
            f = E[t, i + half]
            gE[h, i] += coef * (c * e + dd * f)
            gE[h, i + half] += coef * (c * f - dd * e)
            gR[r, i] += coef * (a * e + b * f)
            gR[r, i + half] += coef * (a * f - b * e)
            gE[t, i] += coef * (a * c - b * dd)
            gE[t, i + half] += coef * (a * dd + b * c)


@njit
def _reg_one(E, Rv, Rm, h, r, t, reg, scale, gE, gR, gM):
    total = 0.0
    for i in range(E.shape[1]):
        total += E[h, i] * E[h, i] + E[t, i] * E[t, i]
        gE[h, i] += scale * 2.0 * reg * E[h, i]
        gE[t, i] += scale * 2.0 * reg * E[t, i]
    for i in range(Rv.shape[1]):
        total += Rv[r, i] * Rv[r, i]
        gR[r, i] += scale * 2.0 * reg * Rv[r, i]
    for a in range(Rm.shape[1]):
        for b in range(Rm.shape[2]):
            total += Rm[r, a, b] * Rm[r, a, b]
            gM[r, a, b] += scale * 2.0 * reg * Rm[r, a, b]
    return reg * total


@njit
def kge_batch_loss_grad_nb(kind, loss_kind, E, Rv, Rm, pos, neg_ent, neg_head,
                           margin, reg, gE, gR, gM):
    """Mean per-positive loss of a batch; gradients are accumulated in place."""
    B = pos.shape[0]
    n = neg_ent.shape[1]
    buf = np.empty(max(Rv.shape[1], 1))
    inv_b = 1.0 / B
    total = 0.0
    for b in range(B):
        h = pos[b, 0]
        r = pos[b, 1]
        t = pos[b, 2]
        sp = score_one(kind, E, Rv, Rm, h, r, t)
        if loss_kind == LOSS_MARGIN:
            active = 0
            for j in range(n):
                if neg_head[b, j]:
                    hh = neg_ent[b, j]
                    tt = t
                else:
                    hh = h
                    tt = neg_ent[b, j]
                sn = score_one(kind, E, Rv, Rm, hh, r, tt)
                slack = margin - sp + sn
                if slack > 0.0:
                    total += slack
                    active += 1
                    grad_one(kind, E, Rv, Rm, hh, r, tt, inv_b, gE, gR, gM, buf)
            if active > 0:
                grad_one(kind, E, Rv, Rm, h, r, t, -active * inv_b, gE, gR, gM, buf)
        else:
            total += _softplus(-sp)
            grad_one(kind, E, Rv, Rm, h, r, t, -_sigmoid(-sp) * inv_b, gE, gR, gM, buf)
            for j in range(n):
                if neg_head[b, j]:
                    hh = neg_ent[b, j]
                    tt = t
                else:
                    hh = h
                    tt = neg_ent[b, j]
                sn = score_one(kind, E, Rv, Rm, hh, r, tt)
                total += _softplus(sn) / n
                grad_one(kind, E, Rv, Rm, hh, r, tt, _sigmoid(sn) / n * inv_b,
                         gE, gR, gM, buf)
        if reg > 0.0:
            total += _reg_one(E, Rv, Rm, h, r, t, reg, inv_b, gE, gR, gM)
    return total * inv_b


# --------------------------------------------------------------------------
# decision trees: Gini split search and traversal


@njit
def best_split_nb(X, y, idx, features, n_classes):
    """Best (feature, threshold) by weighted Gini over samples ``idx``.

    Returns ``(-1, 0.0)`` when no split lowers the impurity.  Candidates are
    scanned by ascending feature then ascending threshold and only a strictly
    better purity replaces the incumbent.
    """
    n = idx.shape[0]
    tot = np.zeros(n_classes)
    for p in range(n):
        tot[y[idx[p]]] += 1.0
    parent = 0.0
    for c in range(n_classes):
        parent += tot[c] * tot[c]
    parent = parent / n
    best = parent * (1.0 + 1e-12)
    best_f = -1
    best_thr = 0.0
    vals = np.empty(n)
    left = np.zeros(n_classes)
    for fi in range(features.shape[0]):
        f = features[fi]
        for p in range(n):
            vals[p] = X[idx[p], f]
        order = np.argsort(vals)
        left[:] = 0.0
        for p in range(n - 1):
            left[y[idx[order[p]]]] += 1.0
            v0 = vals[order[p]]
            v1 = vals[order[p + 1]]
            if v0 == v1:
                continue
            nl = p + 1.0
            nr = n - nl
            acc_l = 0.0
            acc_r = 0.0
            for c in range(n_classes):
                acc_l += left[c] * left[c]
                rc = tot[c] - left[c]
                acc_r += rc * rc
            purity = acc_l / nl + acc_r / nr
            if purity > best:
                best = purity
                best_f = f
                thr = 0.5 * (v0 + v1)
                if thr >= v1:
                    thr = v0
                best_thr = thr
    return best_f, best_thr


def best_split_np(X, y, idx, features, n_classes):
    n = idx.shape[0]
    yi = y[idx]
    tot = np.bincount(yi, minlength=n_classes).astype(np.float64)
    parent = 0.0
    for c in range(n_classes):
        parent += tot[c] * tot[c]
    parent = parent / n
    best = parent * (1.0 + 1e-12)
    best_f, best_thr = -1, 0.0
    onehot = np.zeros((n, n_classes))
    for f in features:
        vals = X[idx, f]
        order = np.argsort(vals)
        sv = vals[order]
        onehot[:] = 0.0
        onehot[np.arange(n), yi[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        acc_l = np.zeros(n - 1)
        acc_r = np.zeros(n - 1)
        for c in range(n_classes):
            acc_l += left[:, c] * left[:, c]
            rc = tot[c] - left[:, c]
            acc_r += rc * rc
        purity = acc_l / nl + acc_r / nr
        purity[sv[:-1] == sv[1:]] = -np.inf
        if purity.size == 0:
            continue
        p = int(np.argmax(purity))
        if purity[p] > best:
            best = purity[p]
            best_f = int(f)
            thr = 0.5 * (sv[p] + sv[p + 1])
            best_thr = sv[p] if thr >= sv[p + 1] else thr
    return best_f, float(best_thr)


def best_split(X, y, idx, features, n_classes):
    if _accel.USE_NUMBA:
        f, thr = best_split_nb(X, y, idx, features, n_classes)
        return int(f), float(thr)
    return best_split_np(X, y, idx, features, n_classes)


@njit(parallel=True)
def forest_votes_nb(feature, threshold, left, right, leaf_label, roots, X, n_classes):
    n = X.shape[0]
    votes = np.zeros((n, n_classes), dtype=np.int64)
    for i in prange(n):
        for tr in range(roots.shape[0]):
            node = roots[tr]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            votes[i, leaf_label[node]] += 1
    return votes


def forest_votes_np(feature, threshold, left, right, leaf_label, roots, X, n_classes):
    n = X.shape[0]
    votes = np.zeros((n, n_classes), dtype=np.int64)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        internal = feature[node] >= 0
        while internal.any():
            cur = node[internal]
            go_left = X[rows[internal], feature[cur]] <= threshold[cur]
            node[internal] = np.where(go_left, left[cur], right[cur])
            internal = feature[node] >= 0
        np.add.at(votes, (rows, leaf_label[node]), 1)
    return votes


def forest_votes(feature, threshold, left, right, leaf_label, roots, X, n_classes):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if _accel.USE_NUMBA:
        return forest_votes_nb(feature, threshold, left, right, leaf_label, roots, X, n_classes)
    return forest_votes_np(feature, threshold, left, right, leaf_label, roots, X, n_classes)
