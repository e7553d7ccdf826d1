import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kglp.graph import (GraphError, GraphFormatError, KnowledgeGraph, build_graph, parse_kinds,
                        parse_triples)

from conftest import drug_graph


def test_parse_smallest_input():
    p = parse_triples(b"a\tinteracts\tb\n")
    assert (p.triple_count, p.entity_count, p.relation_count) == (1, 2, 1)


def test_parser_keeps_duplicates_and_build_drops_them():
    p = parse_triples(b"a\tinteracts\tb\na\ttargets\tt\na\ttargets\tt\n")
    assert p.triple_count == 3
    assert build_graph(p).triple_count == 2


def test_parse_arity_error_names_line():
    with pytest.raises(GraphFormatError, match="line 1: expected 3 fields, got 2"):
        parse_triples(b"a\tr\n")
    with pytest.raises(GraphFormatError, match="line 3: expected 3 fields, got 4"):
        parse_triples(b"# header\na\tr\tb\na\tr\tb\tc\n")


def test_parse_empty_input():
    with pytest.raises(GraphFormatError, match="empty"):
        parse_triples(b"# only a comment\n\n")


def test_parse_skips_comments_and_blank_lines_and_assigns_first_appearance_ids():
    p = parse_triples(io.BytesIO(b"# c\n\nb\tr\ta\na\ts\tc\n"))
    assert p.entity_names == ["b", "a", "c"]
    assert p.relation_names == ["r", "s"]
    assert p.triples.tolist() == [[0, 0, 1], [1, 1, 2]]


def test_parse_kinds():
    assert parse_kinds(b"aspirin\tdrug\n# x\nDRD2\ttarget\n") == {"aspirin": "drug", "DRD2": "target"}


def test_interaction_edges_are_canonical_and_undirected():
    kg = drug_graph(2, [(0, 1), (1, 0)])
    assert kg.interaction_pairs().tolist() == [[0, 1]]
    assert kg.neighbors(0, 0, "out").tolist() == [1]
    assert kg.neighbors(1, 0, "out").tolist() == [0]
    assert kg.neighbors(1, 0, "in").tolist() == kg.neighbors(1, 0, "out").tolist()


def test_row_sums_equal_relation_counts():
    kg = drug_graph(3, [(0, 1), (1, 2)], extra=[(0, 3), (2, 4)], n_other=2)
    counts = kg.relation_counts()
    for r in range(kg.relation_count):
        assert kg.out_index[r].edge_count == counts[r]
        assert kg.in_index[r].edge_count == counts[r]
        assert np.all(np.diff(kg.out_index[r].indptr) >= 0)


def test_empty_row_and_isolated_node():
    kg = drug_graph(4, [(0, 1)], extra=[(0, 4)], n_other=1)
    assert kg.neighbors(4, 1, "out").tolist() == []
    assert kg.neighbors(3, 0, "out").tolist() == []
    assert kg.neighbors(3, 1, "in").tolist() == []


def test_star_graph_neighbors():
    kg = drug_graph(1, [], extra=[(0, 1 + i) for i in range(5)], n_other=5)
    assert kg.neighbors(0, 1, "out").tolist() == [1, 2, 3, 4, 5]
    assert kg.neighbors(3, 1, "in").tolist() == [0]


def test_non_drug_interaction_rejected_with_triple_named():
    p = parse_triples(b"aspirin\tinteracts\tDRD2\n")
    with pytest.raises(GraphError, match=r"\(aspirin, interacts, DRD2\)"):
        build_graph(p, {"aspirin": "drug", "DRD2": "target"})


def test_self_loop_rejected():
    with pytest.raises(GraphError, match="self-loop"):
        drug_graph(2, [(1, 1)])


def test_missing_kind_defaults_to_other():
    p = parse_triples(b"a\tinteracts\tb\na\ttargets\tz\n")
    kg = build_graph(p, {"a": "drug", "b": "drug"})
    assert kg.entity_kinds == ("drug", "drug", "other")


def test_unknown_interaction_relation():
    with pytest.raises(GraphError, match="not among"):
        build_graph(parse_triples(b"a\tr\tb\n"), None, "interacts")


def test_toy_fixture_query(toy_kg):
    e = toy_kg.entity_id("haloperidol")
    r = toy_kg.relation_id("interacts")
    names = {toy_kg.entity_names[j] for j in toy_kg.neighbors(e, r)}
    assert names == {"risperidone", "fluoxetine", "lithium"}
    assert toy_kg.entity_kinds[toy_kg.entity_id("insulin glargine")] == "drug"


def test_vocab_hash_tracks_names(toy_kg):
    other = KnowledgeGraph.from_arrays(list(toy_kg.entity_names[:-1]) + ["renamed"],
                                       toy_kg.relation_names, toy_kg.entity_kinds,
                                       toy_kg.triples, toy_kg.interaction_relation)
    assert other.vocab_hash() != toy_kg.vocab_hash()
    assert toy_kg.with_interactions(toy_kg.interaction_pairs()[:3]).vocab_hash() == toy_kg.vocab_hash()


@st.composite
def random_graphs(draw):
    n_drug = draw(st.integers(2, 8))
    n_other = draw(st.integers(0, 6))
    n = n_drug + n_other
    pairs = draw(st.lists(st.tuples(st.integers(0, n_drug - 1), st.integers(0, n_drug - 1))
                          .filter(lambda p: p[0] != p[1]), max_size=20))
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=20))
    return n_drug, n_other, pairs, extra


@settings(max_examples=80, deadline=None)
@given(random_graphs())
def test_neighbors_reconstruct_triples(g):
    n_drug, n_other, pairs, extra = g
    kg = drug_graph(n_drug, pairs, extra, n_other)
    for r in range(kg.relation_count):
        rebuilt = set()
        for e in range(kg.entity_count):
            for j in kg.neighbors(e, r, "out").tolist():
                # interaction lookups are undirected; keep the canonical orientation
                if r == kg.interaction_relation and j < e:
                    continue
                rebuilt.add((e, j))
        truth = {tuple(t) for t in kg.triples[kg.triples[:, 1] == r][:, [0, 2]].tolist()}
        assert rebuilt == truth
        assert kg.out_index[r].edge_count == len(truth) == kg.in_index[r].edge_count
    expected = {(min(a, b), max(a, b)) for a, b in pairs}
    assert {tuple(p) for p in kg.interaction_pairs().tolist()} == expected
