"""Embedding models: parameter tables, scores and analytic gradients.

All scores are higher-is-better; distance models return the negated norm.
ComplEx rows hold the real lanes in the first half and the imaginary lanes
in the second, so a dimension of ``d`` means ``d / 2`` complex coordinates.
"""
import copy
from dataclasses import dataclass

import numpy as np

from . import kernels

MODEL_KINDS = ("transe_l1", "transe_l2", "transr", "rescal", "distmult", "complex")
KIND_CODES = {
    "transe_l1": kernels.TRANSE_L1,
    "transe_l2": kernels.TRANSE_L2,
    "transr": kernels.TRANSR,
    "rescal": kernels.RESCAL,
    "distmult": kernels.DISTMULT,
    "complex": kernels.COMPLEX,
}
ALIASES = {"transe": "transe_l2"}
TABLES = ("entity", "relation", "relation_mat")


def canonical_kind(kind):
    kind = ALIASES.get(kind.lower().replace("-", "_"), kind.lower().replace("-", "_"))
    if kind not in KIND_CODES:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return kind


@dataclass(eq=False)
class KgeParams:
    kind: str
    entity_emb: np.ndarray      # (n_entities, d)
    relation_emb: np.ndarray    # (n_relations, d); (n_relations, k) for TransR; width 0 for RESCAL
    relation_mat: np.ndarray    # (n_relations, k, d) TransR, (n_relations, d, d) RESCAL, else width 0
    dim: int
    rel_dim: int

    @property
    def code(self):
        return KIND_CODES[self.kind]

    def tables(self):
        return {"entity": self.entity_emb, "relation": self.relation_emb,
                "relation_mat": self.relation_mat}

    def copy(self):
        return copy.deepcopy(self)

    def entity_count(self):
        return self.entity_emb.shape[0]


@dataclass(eq=False)
class GradientSlice:
    """Sparse gradient: per table, the touched row ids and their gradient rows.

    Rows may repeat; repeated rows are summed when the slice is applied.
    """
    parts: dict

    @classmethod
    def empty(cls):
        return cls({})

    def add(self, table, rows, values):
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 0 or values.shape[0] != len(rows):
            values = values[None]
        if table in self.parts:
            r0, v0 = self.parts[table]
            self.parts[table] = (np.concatenate([r0, rows]), np.concatenate([v0, values]))
        else:
            self.parts[table] = (rows, values)
        return self

    def entries(self):
        for table, (rows, values) in self.parts.items():
            for row, val in zip(rows.tolist(), values):
                yield table, row, val

    def coalesce(self):
        """Sum duplicate rows; rows come back sorted."""
        out = {}
        for table, (rows, values) in self.parts.items():
            uniq, inv = np.unique(rows, return_inverse=True)
            summed = np.zeros((len(uniq),) + values.shape[1:])
            kernels.scatter_add_rows(summed, inv.astype(np.int64), values)
            out[table] = (uniq, summed)
        return GradientSlice(out)

    def dense(self, params):
        """Materialize against the shapes of ``params`` (tests and debugging)."""
        out = {k: np.zeros_like(v) for k, v in params.tables().items()}
        for table, (rows, values) in self.parts.items():
            np.add.at(out[table], rows, values)
        return out


def xavier_uniform(rng, shape):
    fan_out, fan_in = shape[-2], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(kind, entity_count, relation_count, dim, rel_dim=None, seed=0):
    """Xavier-uniform tables, deterministic in ``seed``.

    TransE entity rows start at unit L2 norm.  TransR projections start at the
    ``k x d`` identity block plus 0.1-scaled Xavier noise.
    """
    kind = canonical_kind(kind)
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    if kind == "complex" and dim % 2:
        raise ValueError("ComplEx requires even dimension")
    k = dim if rel_dim is None else int(rel_dim)
    if kind == "transr" and k < 1:
        raise ValueError("TransR relation dimension must be at least 1")
    rng = np.random.default_rng(seed)
    ent = xavier_uniform(rng, (entity_count, dim))
    mat = np.zeros((relation_count, 0, 0))
    if kind == "transr":
        rel = xavier_uniform(rng, (relation_count, k))
        eye = np.eye(k, dim)
        mat = eye[None] + 0.1 * xavier_uniform(rng, (relation_count, k, dim))
    elif kind == "rescal":
        rel = np.zeros((relation_count, 0))
        mat = xavier_uniform(rng, (relation_count, dim, dim))
        k = dim
    else:
        rel = xavier_uniform(rng, (relation_count, dim))
        k = dim
    params = KgeParams(kind, ent, rel, mat, int(dim), int(k))
    if kind.startswith("transe"):
        normalize_rows(params.entity_emb)
    return params


def normalize_rows(table, rows=None):
    if rows is None:
        norms = np.linalg.norm(table, axis=1, keepdims=True)
        np.divide(table, np.where(norms > 0, norms, 1.0), out=table)
    else:
        sub = table[rows]
        norms = np.linalg.norm(sub, axis=1, keepdims=True)
        table[rows] = sub / np.where(norms > 0, norms, 1.0)


def _split(x):
    half = x.shape[-1] // 2
    return x[..., :half], x[..., half:]


def score(params, h, r, t):
    """Plausibility of triples; scalars in, float out, arrays in, array out."""
    scalar = np.ndim(h) == 0 and np.ndim(r) == 0 and np.ndim(t) == 0
    s = score_and_grad(params, np.atleast_1d(h), np.atleast_1d(r), np.atleast_1d(t), grad=False)[0]
    return float(s[0]) if scalar else s


def score_and_grad(params, h, r, t, grad=True):
    """Vectorized scores and per-triple partial derivatives.

    Returns ``(s, dh, dr, dt, dmat)``; ``dmat`` is ``None`` for models without
    relation matrices.  With ``grad=False`` only ``s`` is filled.
    """
    h = np.asarray(h, dtype=np.int64)
    r = np.asarray(r, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    E, Rv, Rm = params.entity_emb, params.relation_emb, params.relation_mat
    eh, et = E[h], E[t]
    kind = params.kind
    dmat = None
    if kind in ("transe_l1", "transe_l2"):
        u = eh + Rv[r] - et
        if kind == "transe_l1":
            s = -np.abs(u).sum(axis=1)
            w = np.sign(u)
        else:
            nrm = np.linalg.norm(u, axis=1)
            s = -nrm
            w = u / np.where(nrm > 0, nrm, 1.0)[:, None]
        if not grad:
            return s, None, None, None, None
        return s, -w, -w, w, None
    if kind == "transr":
        M = Rm[r]
        diff = eh - et
        u = np.einsum("nkd,nd->nk", M, diff) + Rv[r]
        nrm = np.linalg.norm(u, axis=1)
        s = -nrm
        if not grad:
            return s, None, None, None, None
        w = u / np.where(nrm > 0, nrm, 1.0)[:, None]
        back = np.einsum("nkd,nk->nd", M, w)
        dmat = -w[:, :, None] * diff[:, None, :]
        return s, -back, -w, back, dmat
    if kind == "rescal":
        W = Rm[r]
        Wt = np.einsum("nab,nb->na", W, et)
        s = np.einsum("na,na->n", eh, Wt)
        if not grad:
            return s, None, None, None, None
        dt = np.einsum("na,nab->nb", eh, W)
        dmat = eh[:, :, None] * et[:, None, :]
        return s, Wt, np.zeros((len(h), 0)), dt, dmat
    if kind == "distmult":
        rr = Rv[r]
        s = (rr * (eh * et)).sum(axis=1)   # h*t first: exact symmetry
        if not grad:
            return s, None, None, None, None
        return s, rr * et, eh * et, eh * rr, None
    a, b = _split(eh)
    c, d = _split(Rv[r])
    e, f = _split(et)
    re_hr = a * c - b * d
    im_hr = a * d + b * c
    s = (re_hr * e + im_hr * f).sum(axis=1)
    if not grad:
        return s, None, None, None, None
    dh = np.concatenate([c * e + d * f, c * f - d * e], axis=1)
    dr = np.concatenate([a * e + b * f, a * f - b * e], axis=1)
    dt = np.concatenate([re_hr, im_hr], axis=1)
    return s, dh, dr, dt, None


def score_gradient(params, h, r, t):
    """Gradient of one triple's score as a :class:`GradientSlice`.

    Only the rows of ``h``, ``t`` and ``r`` (plus the relation matrix for
    TransR/RESCAL) appear.
    """
    _, dh, dr, dt, dmat = score_and_grad(params, [h], [r], [t])
    g = GradientSlice.empty()
    g.add("entity", [h, t], np.concatenate([dh, dt]))
    if params.relation_emb.shape[1]:
        g.add("relation", [r], dr)
    if dmat is not None:
        g.add("relation_mat", [r], dmat)
    return g


class CorruptionError(ValueError):
    """No admissible corruption could be drawn."""


def corrupt_batch(kg, triples, n_neg, rng, max_rounds=50):
    """Filtered corruptions for a batch of triples.

    Returns ``(neg_entity, neg_is_head)``, both ``(len(triples), n_neg)``.
    Each negative swaps the head or the tail (fair coin) for a uniform
    entity; draws that hit a true triple, including the positive itself, are
    redrawn.
    """
    if n_neg < 1:
        raise ValueError("n_neg must be at least 1")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    n_ent, n_rel = kg.entity_count, kg.relation_count
    known = kg.triple_key_set()
    B = len(triples)
    ent = rng.integers(0, n_ent, size=(B, n_neg))
    head = rng.random((B, n_neg)) < 0.5
    h = triples[:, 0:1]
    r = triples[:, 1:2]
    t = triples[:, 2:3]

    def bad_mask(ent, head):
        hh = np.where(head, ent, h)
        tt = np.where(head, t, ent)
        keys = (hh * n_rel + r) * n_ent + tt
        pos = np.searchsorted(known, keys)
        pos = np.minimum(pos, len(known) - 1)
        return known[pos] == keys

    bad = bad_mask(ent, head)
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > max_rounds:
            rows = np.unique(np.nonzero(bad)[0])
            h0, r0, t0 = triples[rows[0]]
            raise CorruptionError(f"no valid corruption for triple ({h0}, {r0}, {t0}) "
                                  f"after {max_rounds} redraw rounds")
        k = int(bad.sum())
        ent[bad] = rng.integers(0, n_ent, size=k)
        head[bad] = rng.random(k) < 0.5
        bad = bad_mask(ent, head)
    return ent, head


def corrupt_triple(kg, triple, n_neg, seed):
    """``n_neg`` filtered corruptions of one triple, as ``(h, r, t)`` tuples."""
    rng = np.random.default_rng(seed)
    h, r, t = (int(x) for x in triple)
    ent, head = corrupt_batch(kg, [(h, r, t)], n_neg, rng)
    return [(int(e), r, t) if hd else (h, r, int(e)) for e, hd in zip(ent[0], head[0])]
