import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kglp.gae import (GaeConfig, decoder_forward, decoder_logits, encoder_forward, init_gae,
                      loss_and_grad, predict_pairs, relational_adjacency, rgcn_layer_forward,
                      train_gae)
from kglp.graph import KnowledgeGraph

from conftest import central_diff, drug_graph, rel_err


def random_graph(rng, n, n_rel=3):
    """Random typed graph; the first half of the nodes are drugs, relation 0 interacts."""
    n_drug = max(2, n // 2)
    kinds = ["drug"] * n_drug + ["target"] * (n - n_drug)
    trip = set()
    for _ in range(int(rng.integers(0, 3 * n))):
        r = int(rng.integers(0, n_rel))
        if r == 0:
            a, b = rng.choice(n_drug, 2, replace=False)
            trip.add((int(min(a, b)), 0, int(max(a, b))))
        else:
            trip.add((int(rng.integers(0, n)), r, int(rng.integers(0, n))))
    tr = np.array(sorted(trip), dtype=np.int64).reshape(-1, 3)
    return KnowledgeGraph.from_arrays([f"e{i}" for i in range(n)], [f"r{i}" for i in range(n_rel)],
                                      kinds, tr, 0)


def oracle_layer(kg, W, W0, b, H, relu):
    """Per-node double sum over relations and neighbours, straight from the triple list."""
    n = kg.entity_count
    out = np.zeros((n, W0.shape[1]))
    for i in range(n):
        acc = H[i] @ W0 + b
        for r in range(kg.relation_count):
            nbrs = [int(h) for h, rr, t in kg.triples.tolist() if rr == r and t == i]
            if r == kg.interaction_relation:
                nbrs += [int(t) for h, rr, t in kg.triples.tolist() if rr == r and h == i]
            if nbrs:
                acc = acc + sum(H[j] @ W[r] for j in nbrs) / len(nbrs)
        out[i] = np.maximum(acc, 0) if relu else acc
    return out


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 20), st.booleans())
def test_layer_matches_dense_oracle(seed, n, relu):
    rng = np.random.default_rng(seed)
    kg = random_graph(rng, n)
    W, W0, b = rng.normal(size=(3, 4, 5)), rng.normal(size=(4, 5)), rng.normal(size=5)
    H = rng.normal(size=(n, 4))
    got, _ = rgcn_layer_forward(W, W0, b, relational_adjacency(kg), H, "relu" if relu else "identity")
    want = oracle_layer(kg, W, W0, b, H, relu)
    assert np.abs(got - want).max() <= 1e-6


def test_one_hop_copies_neighbour_and_no_edges_is_identity():
    kg = drug_graph(3, [(0, 1)])
    H = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    W = np.stack([np.eye(2), np.zeros((2, 2))])
    out, _ = rgcn_layer_forward(W, np.zeros((2, 2)), np.zeros(2), relational_adjacency(kg), H, "identity")
    assert out.tolist() == [[3, 4], [1, 2], [0, 0]]
    empty = drug_graph(3, [])
    out, _ = rgcn_layer_forward(W, np.eye(2), np.zeros(2), relational_adjacency(empty), H, "identity")
    assert np.array_equal(out, H)


def test_layer_width_mismatch():
    kg = drug_graph(3, [(0, 1)])
    with pytest.raises(ValueError, match="expects width 4"):
        rgcn_layer_forward(np.zeros((2, 4, 2)), np.zeros((4, 2)), np.zeros(2),
                           relational_adjacency(kg), np.zeros((3, 3)))


def test_decoder_matches_layer_by_layer_oracle():
    rng = np.random.default_rng(0)
    model = init_gae(8, 2, GaeConfig(encoder_widths=(5,), decoder_widths=(6, 4), input_dim=3))
    Z = rng.normal(size=(8, 5))
    pairs = np.array([[0, 3], [5, 2], [7, 1]])
    got, _ = decoder_logits(model, Z, pairs)
    p = model.params
    for row, (a, c) in enumerate(pairs.tolist()):
        a, c = min(a, c), max(a, c)
        x = np.concatenate([Z[a], Z[c]])
        x = np.maximum(x @ p["dec0_W"] + p["dec0_b"], 0)
        x = np.maximum(x @ p["dec1_W"] + p["dec1_b"], 0)
        z = float(x @ p["dec2_W"][:, 0] + p["dec2_b"][0])
        assert abs(got[row] - z) <= 1e-9
    probs = decoder_forward(model, Z, pairs)
    assert np.allclose(probs, 1 / (1 + np.exp(-got)), atol=1e-15)


def test_whole_model_gradient():
    rng = np.random.default_rng(1)
    kg = random_graph(rng, 6)
    model = init_gae(6, 3, GaeConfig(encoder_widths=(4, 3), decoder_widths=(4,), input_dim=3, seed=2))
    for v in model.params.values():
        v += rng.normal(scale=0.3, size=v.shape)
    adj = relational_adjacency(kg)
    pairs = np.array([[0, 1], [1, 2], [0, 2]])
    labels = np.array([1, 0, 1])
    _, g = loss_and_grad(model, adj, pairs, labels)
    for k, v in model.params.items():
        fd = central_diff(lambda: loss_and_grad(model, adj, pairs, labels)[0], v)
        assert rel_err(g[k], fd) <= 1e-3, k


def test_permutation_equivariance():
    rng = np.random.default_rng(4)
    kg = random_graph(rng, 10)
    perm = rng.permutation(10)            # new id of old entity i is perm[i]
    inv = np.argsort(perm)
    tr = kg.triples.copy()
    tr[:, 0], tr[:, 2] = perm[tr[:, 0]], perm[tr[:, 2]]
    lo, hi = np.minimum(tr[:, 0], tr[:, 2]), np.maximum(tr[:, 0], tr[:, 2])
    inter = tr[:, 1] == 0
    tr[inter, 0], tr[inter, 2] = lo[inter], hi[inter]
    kinds = [kg.entity_kinds[i] for i in inv]
    kg2 = KnowledgeGraph.from_arrays([f"e{i}" for i in inv], list(kg.relation_names), kinds, tr, 0)
    model = init_gae(10, 3, GaeConfig(encoder_widths=(4, 3), input_dim=5))
    Z, _ = encoder_forward(model, relational_adjacency(kg))
    Z2, _ = encoder_forward(model, relational_adjacency(kg2), x0=model.x0[inv])
    assert np.allclose(Z2[perm], Z, atol=1e-12)


def test_isolated_node_sees_only_self_term():
    kg = drug_graph(4, [(0, 1), (1, 2)])
    model = init_gae(4, 2, GaeConfig(encoder_widths=(4, 3), input_dim=5))
    Z, _ = encoder_forward(model, relational_adjacency(kg))
    p = model.params
    h = np.maximum(model.x0[3] @ p["enc0_W0"] + p["enc0_b"], 0)
    assert np.allclose(Z[3], h @ p["enc1_W0"] + p["enc1_b"], atol=1e-14)


def test_init_paths_differ_only_in_features():
    x0 = np.random.default_rng(7).normal(size=(12, 50))
    a = init_gae(12, 2, GaeConfig(seed=3))
    b = init_gae(12, 2, GaeConfig(seed=3), x0=x0, init="complex")
    assert a.x0.shape == b.x0.shape == (12, 50)
    assert not np.array_equal(a.x0, b.x0)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    with pytest.raises(ValueError, match="11 rows for 12 entities"):
        init_gae(12, 2, x0=x0[:11])


def small_task(seed=0):
    rng = np.random.default_rng(seed)
    pairs = [(a, b) for a in range(12) for b in range(a + 1, 12) if (a % 3 == b % 3) and rng.random() < 0.8]
    kg = drug_graph(12, pairs[:-4])
    pos = np.array(pairs[-4:])
    neg = np.array([[0, 1], [1, 2], [2, 4], [4, 5]])
    return kg, pos, neg


def test_zero_epochs_returns_initial_model():
    kg, pos, neg = small_task()
    cfg = GaeConfig(encoder_widths=(4,), decoder_widths=(4,), input_dim=3, epochs=0)
    m = train_gae(kg, pos, neg, config=cfg)
    fresh = init_gae(kg.entity_count, kg.relation_count, cfg)
    assert all(np.array_equal(m.params[k], fresh.params[k]) for k in m.params)
    assert m.history.records == []


def test_training_is_deterministic_and_keeps_best():
    kg, pos, neg = small_task()
    cfg = GaeConfig(encoder_widths=(8, 4), decoder_widths=(8,), input_dim=6, epochs=30, seed=1)
    a = train_gae(kg, pos, neg, pos, neg, config=cfg)
    b = train_gae(kg, pos, neg, pos, neg, config=cfg)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    aucs = [r.valid_auc for r in a.history.records]
    assert len(aucs) == 30 and a.history.best_epoch == int(np.argmax(aucs)) + 1


def test_non_drug_endpoint_rejected():
    kg = drug_graph(3, [(0, 1)], extra=[(0, 3)], n_other=1)
    model = init_gae(4, 2, GaeConfig(encoder_widths=(3,), input_dim=2))
    Z, _ = encoder_forward(model, relational_adjacency(kg))
    with pytest.raises(ValueError, match=r"non-drug endpoint in pair \(d0, x0\)"):
        decoder_forward(model, Z, [(0, 3)], kg=kg)
    assert predict_pairs(model, relational_adjacency(kg), [(0, 1)]).shape == (1,)
