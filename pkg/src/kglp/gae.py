"""Graph auto-encoder: stacked R-GCN encoder and a feed-forward pair decoder.

Layer rule, per node i:

    h_i' = act( sum_r sum_{j in N_r(i)} W_r h_j / |N_r(i)|  +  W_0 h_i  +  b )

``N_r(i)`` holds the sources of edges ``j -r-> i``; the interaction relation
is undirected and contributes neighbours in both directions.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .classifier.nets import glorot, sigmoid
from .graph import DRUG, canonical_pairs
from .optim import Adam, EpochRecord, TrainHistory, TrainingDiverged

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Mean-aggregation operator for one relation and its transpose."""
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    t_indptr: np.ndarray
    t_indices: np.ndarray
    t_weights: np.ndarray

    def apply(self, x):
        return kernels.csr_spmm(self.indptr, self.indices, self.weights, x)

    def apply_transpose(self, x):
        return kernels.csr_spmm(self.t_indptr, self.t_indices, self.t_weights, x)


def _csr_from_coo(rows, cols, vals, n):
    order = np.lexsort((cols, rows))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, np.ascontiguousarray(cols[order]), np.ascontiguousarray(vals[order])


def message_edges(kg, r):
    """``(dst, src)`` arrays of the messages relation ``r`` carries."""
    sel = kg.triples[kg.triples[:, 1] == r]
    src, dst = sel[:, 0], sel[:, 2]
    if r == kg.interaction_relation:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    return dst, src


def relational_adjacency(kg):
    n = kg.entity_count
    out = []
    for r in range(kg.relation_count):
        dst, src = message_edges(kg, r)
        deg = np.bincount(dst, minlength=n)
        w = 1.0 / deg[dst] if len(dst) else np.zeros(0)
        out.append(NormalizedAdjacency(*_csr_from_coo(dst, src, w, n), *_csr_from_coo(src, dst, w, n)))
    return out


@dataclass
class GaeConfig:
    encoder_widths: tuple = (64, 64, 50)
    decoder_widths: tuple = (64, 32, 16)
    input_dim: int = 50
    lr: float = 0.01
    epochs: int = 500
    seed: int = 0


@dataclass(eq=False)
class GaeModel:
    params: dict
    x0: np.ndarray
    n_layers: int
    n_dense: int
    relation_count: int
    init: str = "xavier"
    history: TrainHistory = field(default_factory=TrainHistory)
    train_pairs: np.ndarray = None   # interaction edges message passing was trained on

    @property
    def output_width(self):
        return self.params[f"enc{self.n_layers - 1}_W0"].shape[1]


def init_gae(entity_count, relation_count, config=None, x0=None, init="xavier"):
    """Fresh model; ``x0`` overrides the Xavier-random input features."""
    config = config or GaeConfig()
    rng = np.random.default_rng(config.seed)
    if x0 is None:
        x0 = glorot(rng, entity_count, config.input_dim)
    else:
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape[0] != entity_count:
            raise ValueError(f"initial features have {x0.shape[0]} rows for {entity_count} entities")
        # keep the weight stream independent of the feature source
        glorot(rng, entity_count, config.input_dim)
    params = {}
    width = x0.shape[1]
    for k, out in enumerate(config.encoder_widths):
        params[f"enc{k}_W"] = np.stack([glorot(rng, width, out) for _ in range(relation_count)])
        params[f"enc{k}_W0"] = glorot(rng, width, out)
        params[f"enc{k}_b"] = np.zeros(out)
        width = out
    width *= 2
    for k, out in enumerate(tuple(config.decoder_widths) + (1,)):
        params[f"dec{k}_W"] = glorot(rng, width, out)
        params[f"dec{k}_b"] = np.zeros(out)
        width = out
    return GaeModel(params, x0, len(config.encoder_widths), len(config.decoder_widths) + 1,
                    relation_count, init)


def rgcn_layer_forward(W, W0, b, adj, H, activation="relu"):
    """One R-GCN layer; ``W`` is ``(relations, d_in, d_out)``."""
    if H.shape[1] != W0.shape[0]:
        raise ValueError(f"layer expects width {W0.shape[0]}, got {H.shape[1]}")
    agg = [a.apply(H) for a in adj]
    pre = H @ W0 + b
    for r, A in enumerate(agg):
        pre += A @ W[r]
    out = np.maximum(pre, 0.0) if activation == "relu" else pre
    return out, (H, agg, pre, activation)


def rgcn_layer_backward(W, W0, adj, cache, dout):
    H, agg, pre, activation = cache
    dpre = dout * (pre > 0) if activation == "relu" else dout
    dW = np.stack([A.T @ dpre for A in agg])
    dW0 = H.T @ dpre
    db = dpre.sum(axis=0)
    dH = dpre @ W0.T
    for r, a in enumerate(adj):
        dH += a.apply_transpose(dpre @ W[r].T)
    return dH, dW, dW0, db


def encoder_forward(model, adj, x0=None):
    """ReLU between layers, identity after the last."""
    H = model.x0 if x0 is None else x0
    caches = []
    for k in range(model.n_layers):
        act = "relu" if k < model.n_layers - 1 else "identity"
        H, c = rgcn_layer_forward(model.params[f"enc{k}_W"], model.params[f"enc{k}_W0"],
                                  model.params[f"enc{k}_b"], adj, H, act)
        caches.append(c)
    return H, caches


def decoder_logits(model, Z, pairs):
    pairs = canonical_pairs(pairs)
    x = np.concatenate([Z[pairs[:, 0]], Z[pairs[:, 1]]], axis=1)
    caches = []
    for k in range(model.n_dense):
        pre = x @ model.params[f"dec{k}_W"] + model.params[f"dec{k}_b"]
        caches.append((x, pre))
        x = np.maximum(pre, 0.0) if k < model.n_dense - 1 else pre
    return x[:, 0], (pairs, caches)


def decoder_forward(model, Z, pairs, kg=None):
    """Interaction probability per pair; with ``kg`` given, endpoints must be drugs."""
    pairs = canonical_pairs(pairs)
    if kg is not None and len(pairs):
        kinds = np.asarray(kg.entity_kinds)
        bad = pairs[(kinds[pairs] != DRUG).any(axis=1)]
        if len(bad):
            a, b = bad[0]
            raise ValueError(f"non-drug endpoint in pair ({kg.entity_names[a]}, {kg.entity_names[b]})")
    logits, _ = decoder_logits(model, Z, pairs)
    return sigmoid(logits)


def _backward(model, adj, enc_caches, dec_cache, dlogits, Z_shape):
    grads = {}
    pairs, caches = dec_cache
    d = dlogits[:, None]
    for k in reversed(range(model.n_dense)):
        x, pre = caches[k]
        if k < model.n_dense - 1:
            d = d * (pre > 0)
        grads[f"dec{k}_W"] = x.T @ d
        grads[f"dec{k}_b"] = d.sum(axis=0)
        d = d @ model.params[f"dec{k}_W"].T
    half = d.shape[1] // 2
    dZ = np.zeros(Z_shape)
    kernels.scatter_add_rows(dZ, pairs[:, 0], np.ascontiguousarray(d[:, :half]))
    kernels.scatter_add_rows(dZ, pairs[:, 1], np.ascontiguousarray(d[:, half:]))
    dH = dZ
    for k in reversed(range(model.n_layers)):
        dH, grads[f"enc{k}_W"], grads[f"enc{k}_W0"], grads[f"enc{k}_b"] = rgcn_layer_backward(
            model.params[f"enc{k}_W"], model.params[f"enc{k}_W0"], adj, enc_caches[k], dH)
    return grads


def loss_and_grad(model, adj, pairs, labels):
    """Mean BCE over labelled pairs and its gradient w.r.t. every weight."""
    Z, enc_caches = encoder_forward(model, adj)
    logits, dec_cache = decoder_logits(model, Z, pairs)
    y = np.asarray(labels, dtype=np.float64)
    loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
    dlogits = (sigmoid(logits) - y) / len(y)
    return loss, _backward(model, adj, enc_caches, dec_cache, dlogits, Z.shape)


def predict_pairs(model, adj, pairs):
    Z, _ = encoder_forward(model, adj)
    return decoder_forward(model, Z, pairs)


def train_gae(kg, train_pos, train_neg, valid_pos=None, valid_neg=None, config=None, x0=None,
              init="xavier"):
    """Joint encoder/decoder training with full-graph passes and Adam.

    ``kg`` should hold only training interaction edges.  The weights with the
    best validation AUC are kept.
    """
    from .metrics import auc

    config = config or GaeConfig()
    model = init_gae(kg.entity_count, kg.relation_count, config, x0=x0, init=init)
    model.train_pairs = kg.interaction_pairs()
    if config.epochs == 0:
        return model
    adj = relational_adjacency(kg)
    pairs = np.concatenate([train_pos, train_neg])
    labels = np.r_[np.ones(len(train_pos)), np.zeros(len(train_neg))]
    use_valid = valid_pos is not None and valid_neg is not None and len(valid_pos) and len(valid_neg)
    if use_valid:
        vpairs = np.concatenate([valid_pos, valid_neg])
        vlabels = np.r_[np.ones(len(valid_pos)), np.zeros(len(valid_neg))]
    opt = Adam(model.params, lr=config.lr)
    best_auc, best = -np.inf, None
    for epoch in range(1, config.epochs + 1):
        loss, grads = loss_and_grad(model, adj, pairs, labels)
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch)
        opt.step(grads)
        rec = EpochRecord(epoch, loss)
        if use_valid:
            rec.valid_auc = float(auc(vlabels, predict_pairs(model, adj, vpairs)))
            if rec.valid_auc > best_auc:
                best_auc = rec.valid_auc
                best = {k: v.copy() for k, v in model.params.items()}
                model.history.best_epoch = epoch
        model.history.records.append(rec)
    if best is not None:
        for k, v in best.items():
            model.params[k][...] = v
    return model
