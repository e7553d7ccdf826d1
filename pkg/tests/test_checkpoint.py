import struct

import numpy as np
import pytest

from kglp.checkpoint import (BadMagicError, CorruptCheckpointError, TruncatedCheckpointError,
                             VersionTooNewError, VocabMismatchError, load_checkpoint,
                             read_checkpoint, save_checkpoint)
from kglp.classifier import ClassifierConfig, predict, train_classifier
from kglp.gae import GaeConfig, init_gae
from kglp.kge import MODEL_KINDS, init_params, score


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_kge_round_trip_scores_bit_identical(tmp_path, kind, toy_kg):
    p = init_params(kind, toy_kg.entity_count, toy_kg.relation_count, 8, seed=3)
    path = save_checkpoint(p, tmp_path / "m.ckpt", vocab_hash=toy_kg.vocab_hash(), seed=3)
    q = load_checkpoint(path, expect_vocab=toy_kg.vocab_hash(), kind="kge")
    rng = np.random.default_rng(0)
    h, t = rng.integers(0, toy_kg.entity_count, (2, 100))
    r = rng.integers(0, toy_kg.relation_count, 100)
    assert np.array_equal(score(p, h, r, t), score(q, h, r, t))
    assert read_checkpoint(path)[0]["seed"] == 3


@pytest.mark.parametrize("kind", ["mlp", "lstm", "forest"])
def test_classifier_round_trip(tmp_path, kind):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 4))
    m = train_classifier(kind, X, (X[:, 0] > 0).astype(int), ClassifierConfig(epochs=3, n_trees=5))
    m2 = load_checkpoint(save_checkpoint(m, tmp_path / "c.ckpt"), kind="classifier")
    assert np.array_equal(predict(m, X), predict(m2, X))


def test_gae_and_graph_round_trip(tmp_path, toy_kg):
    m = init_gae(toy_kg.entity_count, toy_kg.relation_count, GaeConfig(encoder_widths=(3,), input_dim=2))
    m2 = load_checkpoint(save_checkpoint(m, tmp_path / "g.ckpt"))
    assert all(np.array_equal(m.params[k], m2.params[k]) for k in m.params)
    assert np.array_equal(m.x0, m2.x0)
    kg2 = load_checkpoint(save_checkpoint(toy_kg, tmp_path / "kg.ckpt"))
    assert kg2.vocab_hash() == toy_kg.vocab_hash()
    assert np.array_equal(kg2.triples, toy_kg.triples)


@pytest.fixture
def saved(tmp_path):
    p = init_params("complex", 10, 2, 4, seed=0)
    return save_checkpoint(p, tmp_path / "x.ckpt", vocab_hash="abc")


def test_truncated_by_one_byte(saved):
    raw = saved.read_bytes()
    saved.write_bytes(raw[:-1])
    with pytest.raises(TruncatedCheckpointError, match="truncated checkpoint"):
        load_checkpoint(saved)
    for cut in (2, 7, 20):
        saved.write_bytes(raw[:cut])
        with pytest.raises(TruncatedCheckpointError):
            read_checkpoint(saved)


def test_bad_magic(saved):
    saved.write_bytes(b"NOPE" + saved.read_bytes()[4:])
    with pytest.raises(BadMagicError, match="bad magic"):
        load_checkpoint(saved)


def test_version_too_new(saved):
    raw = bytearray(saved.read_bytes())
    struct.pack_into("<H", raw, 4, 99)
    saved.write_bytes(bytes(raw))
    with pytest.raises(VersionTooNewError, match="version 99"):
        load_checkpoint(saved)


def test_flipped_payload_byte(saved):
    raw = bytearray(saved.read_bytes())
    raw[-3] ^= 0xFF
    saved.write_bytes(bytes(raw))
    with pytest.raises(CorruptCheckpointError, match="checksum"):
        load_checkpoint(saved)


def test_vocab_mismatch(saved):
    with pytest.raises(VocabMismatchError):
        load_checkpoint(saved, expect_vocab="other")
    assert load_checkpoint(saved, expect_vocab="abc").kind == "complex"


def test_save_leaves_no_temp_files(tmp_path):
    save_checkpoint(init_params("distmult", 4, 1, 2), tmp_path / "a.ckpt")
    assert [p.name for p in tmp_path.iterdir()] == ["a.ckpt"]


def test_unknown_object_rejected(tmp_path):
    with pytest.raises(TypeError, match="cannot checkpoint"):
        save_checkpoint(object(), tmp_path / "z")
