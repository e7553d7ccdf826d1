"""Adam, KGE losses and the mini-batched embedding training loop."""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _accel, kernels
from .kge import GradientSlice, canonical_kind, corrupt_batch, init_params, normalize_rows, score, score_and_grad

log = logging.getLogger(__name__)

LOSS_KINDS = {"margin": kernels.LOSS_MARGIN, "logistic": kernels.LOSS_LOGISTIC}


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, what="loss"):
        super().__init__(f"non-finite {what} at epoch {epoch}")
        self.epoch = epoch


def adam_update(theta, m, v, g, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place bias-corrected Adam update of ``theta`` (any matching shapes)."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    theta -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_tables(cls, tables, lr=0.001, **hyper):
        return cls({k: np.zeros_like(a) for k, a in tables.items()},
                   {k: np.zeros_like(a) for k, a in tables.items()}, 0, lr, **hyper)


def adam_step(state, params, grads):
    """Sparse Adam: only rows named in ``grads`` move; ``state.t`` advances once.

    ``params`` is a dict of tables (or a :class:`KgeParams`); ``grads`` a
    :class:`GradientSlice` of the loss gradient.
    """
    tables = params.tables() if hasattr(params, "tables") else params
    g = grads.coalesce()
    for table, (rows, values) in g.parts.items():
        bad = ~np.isfinite(values.reshape(len(rows), -1)).all(axis=1)
        if bad.any():
            raise FloatingPointError(f"non-finite gradient in table {table!r}, row {int(rows[bad][0])}")
    state.t += 1
    for table, (rows, values) in g.parts.items():
        theta, m, v = tables[table][rows], state.m[table][rows], state.v[table][rows]
        adam_update(theta, m, v, values, state.t, state.lr, state.beta1, state.beta2, state.eps)
        tables[table][rows] = theta
        state.m[table][rows] = m
        state.v[table][rows] = v
    return params, state


class Adam:
    """Dense Adam over a dict of named arrays, for the neural models."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads):
        self.t += 1
        for k, g in grads.items():
            adam_update(self.params[k], self.m[k], self.v[k], g, self.t,
                        self.lr, self.beta1, self.beta2, self.eps)


# --------------------------------------------------------------------------
# losses


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def default_loss(kind):
    return "margin" if canonical_kind(kind) in ("transe_l1", "transe_l2", "transr") else "logistic"


def kge_loss(params, pos_triple, neg_triples, loss_kind, margin=1.0, reg=0.0):
    """Loss of one positive against its negatives, with its gradient.

    margin:   sum_neg max(0, margin - s(pos) + s(neg))
    logistic: softplus(-s(pos)) + mean_neg softplus(s(neg))
    ``reg`` adds ``reg * ||row||^2`` over the positive triple's rows.
    """
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {loss_kind!r}; expected one of {sorted(LOSS_KINDS)}")
    neg = np.asarray(neg_triples, dtype=np.int64).reshape(-1, 3)
    if len(neg) == 0:
        raise ValueError("at least one negative triple is required")
    h, r, t = (int(x) for x in pos_triple)
    allt = np.concatenate([[[h, r, t]], neg])
    s, dh, dr, dt, dmat = score_and_grad(params, allt[:, 0], allt[:, 1], allt[:, 2])
    sp, sn = s[0], s[1:]
    if loss_kind == "margin":
        slack = margin - sp + sn
        active = slack > 0
        loss = float(slack[active].sum())
        coef = np.concatenate([[-active.sum()], active.astype(np.float64)])
    else:
        loss = float(_softplus(-sp) + _softplus(sn).sum() / len(sn))
        coef = np.concatenate([[-_sigmoid(-sp)], _sigmoid(sn) / len(sn)])
    g = GradientSlice.empty()
    g.add("entity", np.concatenate([allt[:, 0], allt[:, 2]]),
          np.concatenate([coef[:, None] * dh, coef[:, None] * dt]))
    if params.relation_emb.shape[1]:
        g.add("relation", allt[:, 1], coef[:, None] * dr)
    if dmat is not None:
        g.add("relation_mat", allt[:, 1], coef[:, None, None] * dmat)
    if reg > 0:
        E, Rv, Rm = params.entity_emb, params.relation_emb, params.relation_mat
        loss += reg * float((E[h] ** 2).sum() + (E[t] ** 2).sum() + (Rv[r] ** 2).sum() + (Rm[r] ** 2).sum())
        g.add("entity", [h, t], 2 * reg * E[[h, t]])
        if Rv.shape[1]:
            g.add("relation", [r], 2 * reg * Rv[[r]])
        if Rm.shape[1]:
            g.add("relation_mat", [r], 2 * reg * Rm[[r]])
    return loss, g


def batch_loss_grad_np(params, pos, neg_ent, neg_head, loss_kind, margin, reg, chunk=4096):
    """Numpy twin of :func:`kernels.kge_batch_loss_grad_nb`; returns dense gradients."""
    E, Rv, Rm = params.entity_emb, params.relation_emb, params.relation_mat
    gE, gR, gM = np.zeros_like(E), np.zeros_like(Rv), np.zeros_like(Rm)
    B, n = neg_ent.shape
    inv_b = 1.0 / B
    total = 0.0
    sp, dh, dr, dt, dmat = score_and_grad(params, pos[:, 0], pos[:, 1], pos[:, 2])
    rows_per_chunk = max(1, chunk // n)
    pos_coef = np.zeros(B)
    for lo in range(0, B, rows_per_chunk):
        hi = min(B, lo + rows_per_chunk)
        p = pos[lo:hi]
        hh = np.where(neg_head[lo:hi], neg_ent[lo:hi], p[:, 0:1]).ravel()
        tt = np.where(neg_head[lo:hi], p[:, 2:3], neg_ent[lo:hi]).ravel()
        rr = np.repeat(p[:, 1], n)
        sn, nh, nr, nt, nm = score_and_grad(params, hh, rr, tt)
        spr = np.repeat(sp[lo:hi], n)
        if loss_kind == kernels.LOSS_MARGIN:
            slack = margin - spr + sn
            active = slack > 0
            total += slack[active].sum()
            coef = active * inv_b
            pos_coef[lo:hi] = -active.reshape(-1, n).sum(axis=1) * inv_b
        else:
            total += _softplus(sn).sum() / n
            coef = _sigmoid(sn) / n * inv_b
        kernels.scatter_add_rows(gE, hh, coef[:, None] * nh)
        kernels.scatter_add_rows(gE, tt, coef[:, None] * nt)
        if Rv.shape[1]:
            kernels.scatter_add_rows(gR, rr, coef[:, None] * nr)
        if nm is not None:
            kernels.scatter_add_rows(gM, rr, coef[:, None, None] * nm)
    if loss_kind == kernels.LOSS_LOGISTIC:
        total += _softplus(-sp).sum()
        pos_coef = -_sigmoid(-sp) * inv_b
    kernels.scatter_add_rows(gE, pos[:, 0], pos_coef[:, None] * dh)
    kernels.scatter_add_rows(gE, pos[:, 2], pos_coef[:, None] * dt)
    if Rv.shape[1]:
        kernels.scatter_add_rows(gR, pos[:, 1], pos_coef[:, None] * dr)
    if dmat is not None:
        kernels.scatter_add_rows(gM, pos[:, 1], pos_coef[:, None, None] * dmat)
    if reg > 0:
        h, r, t = pos[:, 0], pos[:, 1], pos[:, 2]
        total += reg * ((E[h] ** 2).sum() + (E[t] ** 2).sum() + (Rv[r] ** 2).sum() + (Rm[r] ** 2).sum())
        kernels.scatter_add_rows(gE, h, 2 * reg * inv_b * E[h])
        kernels.scatter_add_rows(gE, t, 2 * reg * inv_b * E[t])
        if Rv.shape[1]:
            kernels.scatter_add_rows(gR, r, 2 * reg * inv_b * Rv[r])
        if Rm.shape[1]:
            kernels.scatter_add_rows(gM, r, 2 * reg * inv_b * Rm[r])
    return total * inv_b, gE, gR, gM


def batch_loss_grad(params, pos, neg_ent, neg_head, loss_kind, margin=1.0, reg=0.0):
    """Mean loss over a batch of positives and dense gradient tables."""
    code = LOSS_KINDS[loss_kind] if isinstance(loss_kind, str) else loss_kind
    pos = np.ascontiguousarray(pos, dtype=np.int64)
    neg_ent = np.ascontiguousarray(neg_ent, dtype=np.int64)
    neg_head = np.ascontiguousarray(neg_head, dtype=np.bool_)
    if _accel.USE_NUMBA:
        gE = np.zeros_like(params.entity_emb)
        gR = np.zeros_like(params.relation_emb)
        gM = np.zeros_like(params.relation_mat)
        loss = kernels.kge_batch_loss_grad_nb(params.code, code, params.entity_emb, params.relation_emb,
                                              params.relation_mat, pos, neg_ent, neg_head,
                                              float(margin), float(reg), gE, gR, gM)
        return float(loss), gE, gR, gM
    return batch_loss_grad_np(params, pos, neg_ent, neg_head, code, margin, reg)


def dense_to_slice(params, pos, neg_ent, gE, gR, gM):
    """Restrict dense gradients to the rows the batch touched."""
    ent_rows = np.unique(np.concatenate([pos[:, 0], pos[:, 2], neg_ent.ravel()]))
    rel_rows = np.unique(pos[:, 1])
    g = GradientSlice({"entity": (ent_rows, gE[ent_rows])})
    if params.relation_emb.shape[1]:
        g.parts["relation"] = (rel_rows, gR[rel_rows])
    if params.relation_mat.shape[1]:
        g.parts["relation_mat"] = (rel_rows, gM[rel_rows])
    return g


# --------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    model: str = "complex"
    dim: int = 900
    rel_dim: int = None
    n_neg: int = 256
    batch_size: int = 1024
    max_epochs: int = 500
    patience: int = 10
    lr: float = 0.01
    lr_decay: float = 0.5
    plateau: int = 3
    loss: str = None
    margin: float = 1.0
    reg: float = None
    seed: int = 0

    def __post_init__(self):
        self.model = canonical_kind(self.model)
        if self.loss is None:
            self.loss = default_loss(self.model)
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss!r}")
        if self.reg is None:
            self.reg = 0.0 if self.loss == "margin" else 1e-6
        for name in ("dim", "n_neg", "batch_size", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_epochs < 0 or self.lr <= 0:
            raise ValueError("max_epochs must be >= 0 and lr positive")
        if self.model == "complex" and self.dim % 2:
            raise ValueError("ComplEx requires even dimension")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    valid_auc: float = None


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int = None

    def lines(self):
        for rec in self.records:
            auc = "-" if rec.valid_auc is None else repr(rec.valid_auc)
            yield f"{rec.epoch}\t{rec.loss!r}\t{auc}"

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line + "\n")


def training_triples(kg):
    """All triples, interaction edges in both orientations."""
    tr = kg.triples
    inter = tr[tr[:, 1] == kg.interaction_relation]
    return np.concatenate([tr, inter[:, [2, 1, 0]]])


def train_step(params, state, pos, neg_ent, neg_head, config):
    """One Adam step on a frozen batch; returns the batch loss."""
    loss, gE, gR, gM = batch_loss_grad(params, pos, neg_ent, neg_head, config.loss,
                                       config.margin, config.reg)
    if not np.isfinite(loss):
        return loss
    adam_step(state, params, dense_to_slice(params, pos, neg_ent, gE, gR, gM))
    if params.kind.startswith("transe"):
        rows = np.unique(np.concatenate([pos[:, 0], pos[:, 2], neg_ent.ravel()]))
        normalize_rows(params.entity_emb, rows)
    return loss


def pair_scores(params, pairs, relation):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return score(params, pairs[:, 0], np.full(len(pairs), relation), pairs[:, 1])


def train_kge(kg, valid_pos=None, valid_neg=None, config=None, params=None):
    """Train an embedding model on every triple of ``kg``.

    Epoch order is a pure function of ``(seed, epoch)``.  With validation
    pairs, the snapshot with the best validation AUC is returned and training
    stops after ``patience`` epochs without improvement; the learning rate
    halves after ``plateau`` stale epochs.
    """
    from .metrics import auc

    config = config or TrainConfig()
    if params is None:
        params = init_params(config.model, kg.entity_count, kg.relation_count,
                             config.dim, config.rel_dim, config.seed)
    history = TrainHistory()
    if config.max_epochs == 0:
        return params, history
    state = AdamState.for_tables(params.tables(), lr=config.lr)
    triples = training_triples(kg)
    use_valid = valid_pos is not None and valid_neg is not None and len(valid_pos) and len(valid_neg)
    if use_valid:
        vpairs = np.concatenate([valid_pos, valid_neg])
        vlabels = np.concatenate([np.ones(len(valid_pos)), np.zeros(len(valid_neg))])
    best, best_auc, stale, since_decay = params.copy(), -np.inf, 0, 0
    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(triples))
        total, seen = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            pos = triples[order[lo:lo + config.batch_size]]
            neg_ent, neg_head = corrupt_batch(kg, pos, config.n_neg, rng)
            loss = train_step(params, state, pos, neg_ent, neg_head, config)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            total += loss * len(pos)
            seen += len(pos)
        epoch_loss = total / seen
        rec = EpochRecord(epoch, float(epoch_loss))
        if use_valid:
            s = pair_scores(params, vpairs, kg.interaction_relation)
            if not np.isfinite(s).all():
                raise TrainingDiverged(epoch, "validation score")
            rec.valid_auc = float(auc(vlabels, s))
        history.records.append(rec)
        log.debug("epoch %d loss %.6f auc %s", epoch, rec.loss, rec.valid_auc)
        if not use_valid:
            best = params
            history.best_epoch = epoch
            continue
        if rec.valid_auc > best_auc:
            best_auc, best, stale, since_decay = rec.valid_auc, params.copy(), 0, 0
            history.best_epoch = epoch
        else:
            stale += 1
            since_decay += 1
            if since_decay >= config.plateau:
                state.lr *= config.lr_decay
                since_decay = 0
            if stale >= config.patience:
                break
    return (best if use_valid else params), history
