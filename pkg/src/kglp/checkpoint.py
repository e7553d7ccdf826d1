"""Versioned little-endian checkpoint container.

Layout::

    b"KGLP" | u16 version | u32 header length | JSON header | raw tables

The header names the object kind, its metadata, the vocabulary hash of the
graph it was trained on, the seed record and the byte span of every table.
Writes go to a temporary file renamed into place.
"""
import json
import os
import struct
import tempfile
import zlib

import numpy as np

from .classifier import ClassifierModel
from .classifier.forest import Forest
from .gae import GaeModel
from .graph import KnowledgeGraph
from .kge import KgeParams

MAGIC = b"KGLP"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionTooNewError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class VocabMismatchError(CheckpointError):
    pass


FOREST_FIELDS = ("feature", "threshold", "left", "right", "leaf_label", "depth", "roots")


def _encode(obj):
    if isinstance(obj, KgeParams):
        return "kge", {"model": obj.kind, "dim": obj.dim, "rel_dim": obj.rel_dim}, obj.tables()
    if isinstance(obj, ClassifierModel):
        meta = {"classifier": obj.kind, "n_features": obj.n_features,
                "label_count": obj.label_count, "dropout": obj.dropout}
        if obj.forest is not None:
            meta["n_classes"] = obj.forest.n_classes
            return "classifier", meta, {f"forest.{k}": getattr(obj.forest, k) for k in FOREST_FIELDS}
        return "classifier", meta, {f"param.{k}": v for k, v in obj.params.items()}
    if isinstance(obj, GaeModel):
        meta = {"n_layers": obj.n_layers, "n_dense": obj.n_dense,
                "relation_count": obj.relation_count, "init": obj.init}
        tables = {f"param.{k}": v for k, v in obj.params.items()}
        tables["x0"] = obj.x0
        if getattr(obj, "train_pairs", None) is not None:
            tables["train_pairs"] = obj.train_pairs
        return "gae", meta, tables
    if isinstance(obj, KnowledgeGraph):
        meta = {"entity_names": list(obj.entity_names), "relation_names": list(obj.relation_names),
                "entity_kinds": list(obj.entity_kinds), "interaction_relation": obj.interaction_relation}
        return "graph", meta, {"triples": obj.triples}
    raise TypeError(f"cannot checkpoint object of type {type(obj).__name__}")


def _decode(kind, meta, tables):
    if kind == "kge":
        return KgeParams(meta["model"], tables["entity"], tables["relation"], tables["relation_mat"],
                         meta["dim"], meta["rel_dim"])
    if kind == "classifier":
        model = ClassifierModel(meta["classifier"], meta["n_features"], meta["label_count"],
                                dropout=meta["dropout"])
        if "n_classes" in meta:
            model.forest = Forest(*(tables[f"forest.{k}"] for k in FOREST_FIELDS[:-1]),
                                  roots=tables["forest.roots"], n_classes=meta["n_classes"])
        else:
            model.params = {k[6:]: v for k, v in tables.items() if k.startswith("param.")}
        return model
    if kind == "gae":
        params = {k[6:]: v for k, v in tables.items() if k.startswith("param.")}
        model = GaeModel(params, tables["x0"], meta["n_layers"], meta["n_dense"],
                         meta["relation_count"], meta["init"])
        model.train_pairs = tables.get("train_pairs")
        return model
    if kind == "graph":
        return KnowledgeGraph.from_arrays(meta["entity_names"], meta["relation_names"],
                                          meta["entity_kinds"], tables["triples"],
                                          meta["interaction_relation"])
    raise CheckpointError(f"unknown checkpoint kind {kind!r}")


def save_checkpoint(obj, path, vocab_hash=None, seed=None):
    kind, meta, tables = _encode(obj)
    if vocab_hash is None and isinstance(obj, KnowledgeGraph):
        vocab_hash = obj.vocab_hash()
    manifest, blobs, offset = [], [], 0
    for name, arr in tables.items():
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        data = np.ascontiguousarray(le).tobytes()
        manifest.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape),
                         "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    payload = b"".join(blobs)
    header = json.dumps({"kind": kind, "meta": meta, "vocab_hash": vocab_hash, "seed": seed,
                         "tables": manifest, "payload_bytes": len(payload),
                         "crc32": zlib.crc32(payload)}, sort_keys=True).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".kglp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_checkpoint(path):
    """Return ``(header, tables)`` after validating framing and checksum."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != MAGIC:
        if len(raw) < 4 and MAGIC.startswith(raw):
            raise TruncatedCheckpointError(f"{path}: truncated checkpoint")
        raise BadMagicError(f"{path}: not a KGLP checkpoint (bad magic)")
    if len(raw) < _PREFIX.size:
        raise TruncatedCheckpointError(f"{path}: truncated checkpoint")
    _, version, hlen = _PREFIX.unpack_from(raw)
    if version > VERSION:
        raise VersionTooNewError(f"{path}: checkpoint version {version} is newer than supported {VERSION}")
    if len(raw) < _PREFIX.size + hlen:
        raise TruncatedCheckpointError(f"{path}: truncated checkpoint")
    try:
        header = json.loads(raw[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CorruptCheckpointError(f"{path}: unreadable checkpoint header") from None
    payload = raw[_PREFIX.size + hlen:]
    if len(payload) < header["payload_bytes"]:
        raise TruncatedCheckpointError(f"{path}: truncated checkpoint")
    if len(payload) > header["payload_bytes"] or zlib.crc32(payload) != header["crc32"]:
        raise CorruptCheckpointError(f"{path}: checksum mismatch")
    tables = {}
    for entry in header["tables"]:
        buf = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        tables[entry["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return header, tables


def load_checkpoint(path, expect_vocab=None, kind=None):
    """Load a saved object; refuse it if trained against a different vocabulary."""
    header, tables = read_checkpoint(path)
    if expect_vocab is not None and header.get("vocab_hash") not in (None, expect_vocab):
        raise VocabMismatchError(f"{path}: vocabulary hash differs from the supplied graph")
    if kind is not None and header["kind"] != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {header['kind']}")
    return _decode(header["kind"], header["meta"], tables)
