import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kglp.kge import (CorruptionError, GradientSlice, KgeParams, MODEL_KINDS, corrupt_triple,
                      init_params, score, score_gradient)

from conftest import central_diff, drug_graph, rel_err


def oracle_score(p, h, r, t):
    """Direct per-model formulas, written independently of the vectorized path."""
    E, Rv, Rm = p.entity_emb, p.relation_emb, p.relation_mat
    if p.kind == "transe_l1":
        return -np.sum(np.abs(E[h] + Rv[r] - E[t]))
    if p.kind == "transe_l2":
        return -np.sqrt(np.sum((E[h] + Rv[r] - E[t]) ** 2))
    if p.kind == "transr":
        return -np.linalg.norm(Rm[r] @ E[h] + Rv[r] - Rm[r] @ E[t])
    if p.kind == "rescal":
        return E[h] @ Rm[r] @ E[t]
    if p.kind == "distmult":
        return np.sum(E[h] * Rv[r] * E[t])
    half = p.dim // 2
    c = lambda x: x[:half] + 1j * x[half:]
    return float(np.real(np.sum(c(E[h]) * c(Rv[r]) * np.conj(c(E[t])))))


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_score_matches_oracle(kind):
    p = init_params(kind, 12, 3, 8, rel_dim=5 if kind == "transr" else None, seed=1)
    rng = np.random.default_rng(0)
    for _ in range(50):
        h, t = rng.integers(0, 12, 2)
        r = int(rng.integers(0, 3))
        assert score(p, h, r, t) == pytest.approx(oracle_score(p, h, r, t), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_score_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(3)
    p = init_params(kind, 10, 3, 8, rel_dim=6 if kind == "transr" else None, seed=2)
    # move off the unit sphere so every coordinate matters
    p.entity_emb[:] = rng.normal(size=p.entity_emb.shape)
    worst = 0.0
    for _ in range(100):
        h, t = (int(x) for x in rng.integers(0, 10, 2))
        r = int(rng.integers(0, 3))
        g = score_gradient(p, h, r, t).dense(p)
        names = [k for k, v in p.tables().items() if v.size]
        fd = [central_diff(lambda: score(p, h, r, t), p.tables()[k]) for k in names]
        worst = max(worst, rel_err(np.concatenate([g[k].ravel() for k in names]),
                                   np.concatenate([f.ravel() for f in fd])))
    assert worst <= 1e-4


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_gradient_touches_only_triple_rows(kind):
    p = init_params(kind, 10, 4, 6, seed=0)
    g = score_gradient(p, 2, 1, 7)
    assert set(g.parts["entity"][0].tolist()) == {2, 7}
    for name in ("relation", "relation_mat"):
        if name in g.parts:
            assert set(g.parts[name][0].tolist()) == {1}


def test_transe_unit_norm_at_init():
    p = init_params("transe_l2", 30, 2, 4, seed=0)
    assert np.allclose(np.linalg.norm(p.entity_emb, axis=1), 1.0, atol=1e-12)


def test_complex_odd_dimension_rejected():
    with pytest.raises(ValueError, match="ComplEx requires even dimension"):
        init_params("complex", 5, 1, 5)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_init_is_deterministic_and_xavier_bounded(kind):
    a = init_params(kind, 20, 3, 8, seed=4)
    b = init_params(kind, 20, 3, 8, seed=4)
    for name, table in a.tables().items():
        assert np.array_equal(table, b.tables()[name])
    if kind in ("distmult", "complex", "rescal"):
        bound = np.sqrt(6.0 / (20 + 8))
        assert np.abs(a.entity_emb).max() <= bound


def test_transe_translation_identity_is_max_with_zero_gradient():
    p = init_params("transe_l2", 3, 1, 4, seed=0)
    p.entity_emb[2] = p.entity_emb[0] + p.relation_emb[0]
    assert score(p, 0, 0, 2) == 0.0
    assert score(p, 0, 0, 1) < 0
    g = score_gradient(p, 0, 0, 2).dense(p)
    assert all(np.all(v == 0) for v in g.values())


def test_transe_l1_subgradient_zero_at_kink():
    p = init_params("transe_l1", 3, 1, 4, seed=0)
    p.entity_emb[2] = p.entity_emb[0] + p.relation_emb[0]
    g = score_gradient(p, 0, 0, 2).dense(p)
    assert all(np.all(v == 0) for v in g.values())


def test_distmult_closed_form_gradient():
    p = init_params("distmult", 4, 2, 6, seed=5)
    g = score_gradient(p, 0, 1, 3).dense(p)
    assert np.array_equal(g["entity"][0], p.relation_emb[1] * p.entity_emb[3])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_distmult_symmetry_exact(seed):
    p = init_params("distmult", 6, 2, 8, seed=seed)
    rng = np.random.default_rng(seed)
    h, t = rng.integers(0, 6, 2)
    r = int(rng.integers(0, 2))
    assert score(p, h, r, t) == score(p, t, r, h)


def test_complex_can_be_asymmetric():
    p = init_params("complex", 2, 1, 4, seed=0)
    p.entity_emb[:] = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]   # h = 1, t = i
    p.relation_emb[:] = [[0.0, 0.0, 1.0, 0.0]]                       # r = i
    assert score(p, 0, 0, 1) == 1.0
    assert score(p, 1, 0, 0) == -1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_complex_reduces_to_distmult(seed):
    c = init_params("complex", 5, 2, 8, seed=seed)
    c.entity_emb[:, 4:] = 0.0
    c.relation_emb[:, 4:] = 0.0
    d = KgeParams("distmult", c.entity_emb[:, :4].copy(), c.relation_emb[:, :4].copy(),
                  np.zeros((2, 0, 0)), 4, 4)
    h, r, t = seed % 5, seed % 2, (seed // 7) % 5
    assert score(c, h, r, t) == pytest.approx(score(d, h, r, t), abs=1e-15)


def test_rescal_identity_is_dot_product():
    p = init_params("rescal", 4, 1, 5, seed=0)
    p.relation_mat[0] = np.eye(5)
    assert score(p, 1, 0, 3) == pytest.approx(float(p.entity_emb[1] @ p.entity_emb[3]), abs=1e-15)


def test_array_inputs_vectorize():
    p = init_params("complex", 6, 2, 4, seed=0)
    s = score(p, np.array([0, 1]), np.array([1, 0]), np.array([2, 3]))
    assert s.shape == (2,) and s[1] == score(p, 1, 0, 3)


def test_gradient_slice_sums_duplicates():
    g = GradientSlice.empty().add("entity", [3, 1, 3], np.ones((3, 2)))
    rows, vals = g.coalesce().parts["entity"]
    assert rows.tolist() == [1, 3] and vals.tolist() == [[1, 1], [2, 2]]


def test_corrupt_triple_counts_and_single_slot_change():
    kg = drug_graph(30, [(0, 1), (2, 3), (4, 5)])
    negs = corrupt_triple(kg, (0, 0, 1), 20, seed=3)
    assert len(negs) == 20
    for h, r, t in negs:
        assert r == 0
        assert (h == 0) != (t == 1)
        assert (min(h, t), max(h, t)) not in {(0, 1), (2, 3), (4, 5)}
    assert negs == corrupt_triple(kg, (0, 0, 1), 20, seed=3)


def test_corrupt_triple_exhausted():
    from kglp.graph import KnowledgeGraph
    # two entities, relation r true in every orientation including self-pairs
    tr = np.array([[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 0, 1]])
    kg = KnowledgeGraph.from_arrays(["a", "b"], ["r", "interacts"], ["x", "x"], tr, 1)
    with pytest.raises(CorruptionError, match="no valid corruption"):
        corrupt_triple(kg, (0, 0, 1), 5, seed=0)
