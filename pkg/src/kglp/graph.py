"""Triple-file ingest and the immutable, CSR-indexed multi-relational graph."""
import hashlib
import io
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

DRUG = "drug"
OTHER = "other"


class GraphFormatError(ValueError):
    """Malformed triple or kind file."""


class GraphError(ValueError):
    """Graph content violates a structural rule."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class ParsedTriples:
    triples: np.ndarray          # (n, 3) int64, raw, in file order
    entity_names: list
    relation_names: list

    @property
    def triple_count(self):
        return len(self.triples)

    @property
    def entity_count(self):
        return len(self.entity_names)

    @property
    def relation_count(self):
        return len(self.relation_names)


def _text_lines(stream):
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw.rstrip("\r\n")


def parse_triples(stream, format="tsv"):
    """Read ``head<TAB>relation<TAB>tail`` lines.

    Ids are assigned densely in order of first appearance.  Duplicates are
    kept; ``build_graph`` removes them.
    """
    if format != "tsv":
        raise GraphFormatError(f"unsupported triple format {format!r}")
    ent, rel = {}, {}
    rows = []
    for lineno, line in enumerate(_text_lines(stream), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphFormatError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        h, r, t = (p.strip() for p in parts)
        if not h or not r or not t:
            raise GraphFormatError(f"line {lineno}: empty field")
        hi = ent.setdefault(h, len(ent))
        ri = rel.setdefault(r, len(rel))
        ti = ent.setdefault(t, len(ent))
        rows.append((hi, ri, ti))
    if not rows:
        raise GraphFormatError("empty input: no triples found")
    return ParsedTriples(np.asarray(rows, dtype=np.int64), list(ent), list(rel))


def parse_kinds(stream):
    """Read the ``entity<TAB>kind`` sidecar into a dict."""
    kinds = {}
    for lineno, line in enumerate(_text_lines(stream), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise GraphFormatError(f"line {lineno}: expected 2 fields, got {len(parts)}")
        kinds[parts[0].strip()] = parts[1].strip()
    return kinds


@dataclass(frozen=True)
class CsrIndex:
    indptr: np.ndarray
    indices: np.ndarray

    def row(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def edge_count(self):
        return int(self.indptr[-1])


def _csr(src, dst, n):
    order = np.lexsort((dst, src))
    counts = np.bincount(src, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return CsrIndex(indptr, np.ascontiguousarray(dst[order], dtype=np.int64))


def canonical_pairs(pairs):
    """Sort each pair so the smaller id comes first."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return np.sort(pairs, axis=1)


def pair_keys(pairs, n):
    pairs = canonical_pairs(pairs)
    return pairs[:, 0] * n + pairs[:, 1]


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Deduplicated triples plus per-relation CSR indexes in both directions.

    Interaction edges are undirected and stored once as ``(min, max)``.
    Build through :func:`build_graph` or :meth:`from_arrays`.
    """
    entity_names: tuple
    relation_names: tuple
    entity_kinds: tuple
    triples: np.ndarray
    interaction_relation: int
    out_index: tuple = field(repr=False)
    in_index: tuple = field(repr=False)

    @classmethod
    def from_arrays(cls, entity_names, relation_names, entity_kinds, triples, interaction_relation):
        n, m = len(entity_names), len(relation_names)
        kinds = tuple(entity_kinds)
        if len(kinds) != n:
            raise GraphError("entity_kinds length differs from entity count")
        if not 0 <= interaction_relation < m:
            raise GraphError(f"interaction relation id {interaction_relation} out of range")
        tr = np.asarray(triples, dtype=np.int64).reshape(-1, 3).copy()
        if tr.size and (tr[:, [0, 2]].min() < 0 or tr[:, [0, 2]].max() >= n
                        or tr[:, 1].min() < 0 or tr[:, 1].max() >= m):
            raise GraphError("triple references an unknown entity or relation id")
        inter = tr[:, 1] == interaction_relation
        is_drug = np.array([k == DRUG for k in kinds], dtype=bool)
        for h, r, t in tr[inter]:
            if h == t:
                raise GraphError(f"self-loop on interaction relation: "
                                 f"({entity_names[h]}, {relation_names[r]}, {entity_names[t]})")
            if not (is_drug[h] and is_drug[t]):
                raise GraphError(f"interaction edge between non-drug entities: "
                                 f"({entity_names[h]}, {relation_names[r]}, {entity_names[t]})")
        lo = np.minimum(tr[inter, 0], tr[inter, 2])
        hi = np.maximum(tr[inter, 0], tr[inter, 2])
        tr[inter, 0], tr[inter, 2] = lo, hi
        tr = np.unique(tr, axis=0) if len(tr) else tr
        out_index, in_index = [], []
        for r in range(m):
            sel = tr[tr[:, 1] == r]
            out_index.append(_csr(sel[:, 0], sel[:, 2], n))
            in_index.append(_csr(sel[:, 2], sel[:, 0], n))
        tr.setflags(write=False)
        return cls(tuple(entity_names), tuple(relation_names), kinds, tr,
                   int(interaction_relation), tuple(out_index), tuple(in_index))

    @property
    def entity_count(self):
        return len(self.entity_names)

    @property
    def relation_count(self):
        return len(self.relation_names)

    @property
    def triple_count(self):
        return len(self.triples)

    def entity_id(self, name):
        return self._entity_lookup()[name]

    def relation_id(self, name):
        return self.relation_names.index(name)

    def _entity_lookup(self):
        cache = self.__dict__.get("_ent_lookup")
        if cache is None:
            cache = {name: i for i, name in enumerate(self.entity_names)}
            object.__setattr__(self, "_ent_lookup", cache)
        return cache

    def drug_ids(self):
        return np.array([i for i, k in enumerate(self.entity_kinds) if k == DRUG], dtype=np.int64)

    def interaction_pairs(self):
        """Canonical ``(min, max)`` interaction edges, sorted."""
        sel = self.triples[self.triples[:, 1] == self.interaction_relation]
        return np.ascontiguousarray(sel[:, [0, 2]])

    def relation_counts(self):
        return np.bincount(self.triples[:, 1], minlength=self.relation_count)

    def neighbors(self, entity, relation, direction="out"):
        """Sorted neighbour ids of ``entity`` under ``relation``.

        The interaction relation is undirected, so both directions give the
        union of out- and in-neighbours.
        """
        if not 0 <= entity < self.entity_count or not 0 <= relation < self.relation_count:
            raise IndexError("entity or relation id out of range")
        if relation == self.interaction_relation:
            both = np.concatenate([self.out_index[relation].row(entity),
                                   self.in_index[relation].row(entity)])
            return np.unique(both)
        if direction == "out":
            return np.unique(self.out_index[relation].row(entity))
        if direction == "in":
            return np.unique(self.in_index[relation].row(entity))
        raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")

    def with_interactions(self, pairs):
        """Same entities and side relations, interaction edges replaced by ``pairs``."""
        keep = self.triples[self.triples[:, 1] != self.interaction_relation]
        pairs = canonical_pairs(pairs)
        inter = np.column_stack([pairs[:, 0], np.full(len(pairs), self.interaction_relation), pairs[:, 1]])
        return KnowledgeGraph.from_arrays(self.entity_names, self.relation_names, self.entity_kinds,
                                          np.concatenate([keep, inter]), self.interaction_relation)

    def triple_key_set(self):
        """Sorted int64 keys of every true triple; interaction edges in both orientations."""
        cache = self.__dict__.get("_keys")
        if cache is None:
            tr = self.triples
            inter = tr[tr[:, 1] == self.interaction_relation]
            both = np.concatenate([tr, inter[:, [2, 1, 0]]])
            cache = np.unique(triple_keys(both, self.entity_count, self.relation_count))
            object.__setattr__(self, "_keys", cache)
        return cache

    def vocab_hash(self):
        h = hashlib.sha256()
        for name in self.entity_names:
            h.update(name.encode("utf-8") + b"\n")
        h.update(b"\x00")
        for name in self.relation_names:
            h.update(name.encode("utf-8") + b"\n")
        return h.hexdigest()


def triple_keys(triples, n_entities, n_relations):
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return (triples[:, 0] * n_relations + triples[:, 1]) * n_entities + triples[:, 2]


def build_graph(parsed, entity_kinds=None, interaction_relation_name="interacts"):
    """Index parsed triples into a :class:`KnowledgeGraph`.

    ``entity_kinds`` maps entity name to kind; names it lacks get ``"other"``.
    With no mapping at all, every endpoint of an interaction edge is taken to
    be a drug.
    """
    if interaction_relation_name not in parsed.relation_names:
        raise GraphError(f"interaction relation {interaction_relation_name!r} not among "
                         f"relations {parsed.relation_names}")
    rid = parsed.relation_names.index(interaction_relation_name)
    if entity_kinds is None:
        inter = parsed.triples[parsed.triples[:, 1] == rid]
        drugs = set(inter[:, 0].tolist()) | set(inter[:, 2].tolist())
        kinds = [DRUG if i in drugs else OTHER for i in range(parsed.entity_count)]
    else:
        kinds = [entity_kinds.get(name, OTHER) for name in parsed.entity_names]
    return KnowledgeGraph.from_arrays(parsed.entity_names, parsed.relation_names, kinds,
                                      parsed.triples, rid)


def load_graph(triple_path, kinds_path=None, interaction_relation_name="interacts"):
    with open(triple_path, "rb") as fh:
        parsed = parse_triples(fh)
    kinds = None
    if kinds_path is not None:
        with open(kinds_path, "rb") as fh:
            kinds = parse_kinds(fh)
    return build_graph(parsed, kinds, interaction_relation_name)
