"""The compiled kernels and their numpy twins must agree."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kglp import kernels
from kglp.kge import MODEL_KINDS, init_params
from kglp.optim import LOSS_KINDS, batch_loss_grad_np


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scatter_add_rows(seed):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, 6, 20)
    vals = rng.normal(size=(20, 3))
    a, b = np.zeros((6, 3)), np.zeros((6, 3))
    kernels.scatter_add_rows_nb(a, rows, vals)
    kernels.scatter_add_rows_np(b, rows, vals)
    want = np.zeros((6, 3))
    np.add.at(want, rows, vals)
    assert np.allclose(a, want, atol=1e-12) and np.allclose(b, want, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 15))
def test_csr_spmm(seed, n):
    rng = np.random.default_rng(seed)
    dense = rng.normal(size=(n, n)) * (rng.random((n, n)) < 0.3)
    indptr = np.r_[0, np.cumsum((dense != 0).sum(axis=1))].astype(np.int64)
    rows, cols = np.nonzero(dense)
    x = rng.normal(size=(n, 4))
    for impl in (kernels.csr_spmm_nb, kernels.csr_spmm_np):
        got = impl(indptr, cols.astype(np.int64), dense[rows, cols], x)
        assert np.allclose(got, dense @ x, atol=1e-12)


@pytest.mark.parametrize("kind", MODEL_KINDS)
@pytest.mark.parametrize("loss", ["margin", "logistic"])
def test_kge_batch_loss_grad(kind, loss):
    rng = np.random.default_rng(0)
    p = init_params(kind, 15, 3, 6, rel_dim=4 if kind == "transr" else None, seed=1)
    pos = np.stack([rng.integers(0, 15, 8), rng.integers(0, 3, 8), rng.integers(0, 15, 8)], axis=1)
    neg_ent = rng.integers(0, 15, (8, 5))
    neg_head = rng.random((8, 5)) < 0.5
    gE, gR, gM = np.zeros_like(p.entity_emb), np.zeros_like(p.relation_emb), np.zeros_like(p.relation_mat)
    l_nb = kernels.kge_batch_loss_grad_nb(p.code, LOSS_KINDS[loss], p.entity_emb, p.relation_emb,
                                          p.relation_mat, pos, neg_ent, neg_head, 1.0, 1e-3, gE, gR, gM)
    l_np, nE, nR, nM = batch_loss_grad_np(p, pos, neg_ent, neg_head, LOSS_KINDS[loss], 1.0, 1e-3)
    assert l_nb == pytest.approx(l_np, rel=1e-12, abs=1e-14)
    for a, b in ((gE, nE), (gR, nR), (gM, nM)):
        assert np.allclose(a, b, rtol=1e-10, atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_best_split_backends_identical(seed):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(30, 5)), 1)
    y = rng.integers(0, 3, 30)
    idx = rng.integers(0, 30, 30).astype(np.int64)
    feats = np.arange(5, dtype=np.int64)
    assert kernels.best_split_nb(X, y, idx, feats, 3) == kernels.best_split_np(X, y, idx, feats, 3)


def test_forest_votes_backends_identical():
    from kglp.classifier.forest import train_forest
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 4))
    f = train_forest(X, (X[:, 0] + X[:, 1] > 0).astype(int), 2, n_trees=10, seed=0)
    args = (f.feature, f.threshold, f.left, f.right, f.leaf_label, f.roots, X, 2)
    assert np.array_equal(kernels.forest_votes_nb(*args), kernels.forest_votes_np(*args))
