from dataclasses import dataclass

import numpy as np

from ..graph import canonical_pairs


@dataclass(frozen=True)
class PairFeatures:
    matrix: np.ndarray   # (n_pairs, 2d)
    pairs: np.ndarray    # canonical (n_pairs, 2)


def build_pair_features(embeddings, pairs):
    """Row i is ``concat(emb[min(pair_i)], emb[max(pair_i)])``."""
    emb = np.asarray(embeddings, dtype=np.float64)
    pairs = canonical_pairs(pairs)
    if len(pairs):
        bad = pairs[(pairs < 0) | (pairs >= len(emb))]
        if bad.size:
            raise KeyError(f"unknown entity {int(bad[0])}: no embedding row (have {len(emb)})")
    matrix = np.concatenate([emb[pairs[:, 0]], emb[pairs[:, 1]]], axis=1)
    return PairFeatures(matrix.reshape(len(pairs), 2 * emb.shape[1]), pairs)
