"""Train/valid/test splits, negative pair sampling and cold-start holdouts."""
import math
import os
from dataclasses import dataclass

import numpy as np

from .graph import canonical_pairs

SET_TAGS = {"train": 1, "valid": 2, "test": 3, "one_new": 4, "both_new": 5}
MAX_ENUMERATION = 10_000_000


class SamplingError(ValueError):
    """Not enough candidate pairs to satisfy a request."""


def derive_rng(seed, tag):
    return np.random.default_rng([int(seed), SET_TAGS.get(tag, 0) if isinstance(tag, str) else int(tag)])


@dataclass(frozen=True, eq=False)
class SplitBundle:
    train_pos: np.ndarray
    valid_pos: np.ndarray
    test_pos: np.ndarray
    train_neg: np.ndarray
    valid_neg: np.ndarray
    test_neg: np.ndarray
    seed: int
    ratios: tuple = (0.7, 0.3, 0.1)

    def pairs(self, name):
        """Positives then negatives of one set, with 1/0 labels."""
        pos, neg = getattr(self, f"{name}_pos"), getattr(self, f"{name}_neg")
        pairs = np.concatenate([pos, neg]).reshape(-1, 2)
        labels = np.concatenate([np.ones(len(pos), np.int64), np.zeros(len(neg), np.int64)])
        return pairs, labels

    def all_positive(self):
        return np.concatenate([self.train_pos, self.valid_pos, self.test_pos])

    def __eq__(self, other):
        if not isinstance(other, SplitBundle):
            return NotImplemented
        names = ("train_pos", "valid_pos", "test_pos", "train_neg", "valid_neg", "test_neg")
        return (self.seed == other.seed and tuple(self.ratios) == tuple(other.ratios)
                and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in names))


@dataclass(frozen=True, eq=False)
class ColdStartBundle:
    held_out: np.ndarray
    one_new: np.ndarray
    both_new: np.ndarray
    one_new_neg: np.ndarray
    both_new_neg: np.ndarray
    residual_train: SplitBundle
    seed: int

    def stratum(self, name):
        pos, neg = getattr(self, name), getattr(self, f"{name}_neg")
        pairs = np.concatenate([pos, neg]).reshape(-1, 2)
        labels = np.concatenate([np.ones(len(pos), np.int64), np.zeros(len(neg), np.int64)])
        return pairs, labels

    def __eq__(self, other):
        if not isinstance(other, ColdStartBundle):
            return NotImplemented
        names = ("held_out", "one_new", "both_new", "one_new_neg", "both_new_neg")
        return (self.seed == other.seed and self.residual_train == other.residual_train
                and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in names))


def _pool_candidates(left, right):
    """Number of unordered candidate pairs; pools are identical or disjoint."""
    if left is right or np.array_equal(left, right):
        n = len(left)
        return n * (n - 1) // 2, True
    if np.intersect1d(left, right).size:
        raise ValueError("pair pools must be identical or disjoint")
    return len(left) * len(right), False


def _in_pools(pairs, left, right, same):
    a, b = pairs[:, 0], pairs[:, 1]
    if same:
        return np.isin(a, left) & np.isin(b, left) & (a != b)
    return (np.isin(a, left) & np.isin(b, right)) | (np.isin(b, left) & np.isin(a, right))


def _enumerate(left, right, same, n):
    if same:
        left = np.sort(left)
        i, j = np.triu_indices(len(left), k=1)
        return left[i] * n + left[j]
    a, b = np.meshgrid(left, right, indexing="ij")
    pairs = canonical_pairs(np.column_stack([a.ravel(), b.ravel()]))
    return np.sort(pairs[:, 0] * n + pairs[:, 1])


def sample_negative_pairs(kg, exclude, count, seed, left=None, right=None, allow_fewer=False):
    """Draw ``count`` distinct canonical pairs absent from ``exclude``.

    Candidates are unordered pairs ``(a, b)`` with ``a`` in ``left`` and ``b``
    in ``right`` (both default to every drug).  Sampling is uniform without
    replacement: rejection sampling first, full complement enumeration if
    rejections pile up.  ``allow_fewer`` caps ``count`` at the number of
    available pairs instead of failing.
    """
    n = kg.entity_count
    left = kg.drug_ids() if left is None else np.asarray(left, dtype=np.int64)
    right = left if right is None else np.asarray(right, dtype=np.int64)
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return np.zeros((0, 2), dtype=np.int64)
    size, same = _pool_candidates(left, right)
    exclude = canonical_pairs(exclude)
    exclude = exclude[_in_pools(exclude, left, right, same)]
    ex_keys = np.unique(exclude[:, 0] * n + exclude[:, 1])
    available = size - len(ex_keys)
    if allow_fewer:
        count = min(count, available)
        if count == 0:
            return np.zeros((0, 2), dtype=np.int64)
    if count > available:
        raise SamplingError(f"not enough candidate pairs: required {count}, available {available}")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed

    chosen = []
    chosen_set = set()
    failures = 0
    if 2 * count <= available:
        while len(chosen) < count and failures <= 50 * count:
            m = max(64, 2 * (count - len(chosen)))
            a = rng.choice(left, m)
            b = rng.choice(right, m)
            ok = a != b
            failures += int((~ok).sum())
            a, b = a[ok], b[ok]
            keys = np.minimum(a, b) * n + np.maximum(a, b)
            hit = np.isin(keys, ex_keys)
            failures += int(hit.sum())
            for k in keys[~hit].tolist():
                if k in chosen_set:
                    failures += 1
                    continue
                chosen_set.add(k)
                chosen.append(k)
                if len(chosen) == count:
                    break
    if len(chosen) < count:
        if size > MAX_ENUMERATION:
            raise SamplingError(f"rejection sampling exhausted after {failures} failed draws "
                                f"and the candidate space ({size}) is too large to enumerate")
        pool = _enumerate(left, right, same, n)
        pool = pool[~np.isin(pool, ex_keys)]
        if chosen:
            pool = pool[~np.isin(pool, np.asarray(chosen))]
        chosen.extend(rng.choice(pool, count - len(chosen), replace=False).tolist())
    keys = np.asarray(chosen, dtype=np.int64)
    return np.column_stack([keys // n, keys % n])


def split_sizes(n, ratios=(0.7, 0.3, 0.1)):
    """(train, valid, test) counts: floor test and valid, remainder to train."""
    train_r, test_r, valid_r = ratios
    if not math.isclose(train_r + test_r, 1.0, abs_tol=1e-9) or not 0 <= valid_r < 1:
        raise ValueError(f"ratios must be (train, test, valid_of_train) with train+test=1, got {ratios}")
    n_test = math.floor(test_r * n + 1e-9)
    n_valid = math.floor(valid_r * (n - n_test) + 1e-9)
    return n - n_test - n_valid, n_valid, n_test


def _sorted_pairs(pairs):
    pairs = canonical_pairs(pairs)
    if len(pairs) == 0:
        return pairs
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def split_interactions(kg, ratios=(0.7, 0.3, 0.1), seed=0, positives=None, pool=None,
                       exclude=None, min_positives=10):
    """Partition positive pairs and draw a balanced negative set for each part.

    ``positives`` defaults to every interaction edge of ``kg``; ``pool``
    restricts the drugs negatives may use; ``exclude`` adds pairs negatives
    must avoid on top of the graph's positives.  Negative sets are drawn
    test, valid, train in turn, each from its own ``(seed, set)`` stream and
    disjoint from the ones before it.
    """
    pos = _sorted_pairs(kg.interaction_pairs() if positives is None else positives)
    if len(pos) < min_positives:
        raise SamplingError(f"need at least {min_positives} interaction edges to split, got {len(pos)}")
    n_train, n_valid, n_test = split_sizes(len(pos), ratios)
    perm = np.random.default_rng(seed).permutation(len(pos))
    parts = {"test": pos[perm[:n_test]],
             "valid": pos[perm[n_test:n_test + n_valid]],
             "train": pos[perm[n_test + n_valid:]]}

    blocked = [kg.interaction_pairs(), pos]
    if exclude is not None:
        blocked.append(canonical_pairs(exclude))
    negs = {}
    for name in ("test", "valid", "train"):
        try:
            negs[name] = sample_negative_pairs(kg, np.concatenate(blocked), len(parts[name]),
                                               derive_rng(seed, name), left=pool)
        except SamplingError as exc:
            raise SamplingError(f"cannot balance the {name} set: {exc}") from None
        blocked.append(negs[name])
    return SplitBundle(
        _sorted_pairs(parts["train"]), _sorted_pairs(parts["valid"]), _sorted_pairs(parts["test"]),
        _sorted_pairs(negs["train"]), _sorted_pairs(negs["valid"]), _sorted_pairs(negs["test"]),
        int(seed), tuple(ratios))


def cold_start_split(kg, holdout_fraction, seed=0, ratios=(0.7, 0.3, 0.1), held_out=None):
    """Hold out a fraction of drugs and every interaction that touches them.

    Interactions with exactly one held-out endpoint form ``one_new``, those
    with two form ``both_new``; each stratum gets a balanced negative set
    drawn from the same stratum.  The remaining interactions are split as in
    :func:`split_interactions`, with negatives confined to training drugs.
    A stratum whose candidate pairs run out gets fewer negatives than positives.
    """
    drugs = kg.drug_ids()
    if held_out is None:
        if not 0 < holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in (0, 1)")
        k = max(1, math.floor(holdout_fraction * len(drugs)))
        if len(drugs) - k < 2:
            raise SamplingError(f"holding out {k} of {len(drugs)} drugs leaves fewer than 2 for training")
        held = np.sort(np.random.default_rng([int(seed), 99]).choice(drugs, k, replace=False))
    else:
        held = np.unique(np.asarray(held_out, dtype=np.int64))
        if len(drugs) - len(held) < 2:
            raise SamplingError("held-out set leaves fewer than 2 drugs for training")
    keep = np.setdiff1d(drugs, held)

    pos = kg.interaction_pairs()
    a_new, b_new = np.isin(pos[:, 0], held), np.isin(pos[:, 1], held)
    one_new = _sorted_pairs(pos[a_new ^ b_new])
    both_new = _sorted_pairs(pos[a_new & b_new])
    residual = pos[~(a_new | b_new)]

    # the residual set may be tiny once a large share of drugs is held out
    bundle = split_interactions(kg, ratios, seed, positives=residual, pool=keep, min_positives=1)
    blocked = [pos, bundle.train_neg, bundle.valid_neg, bundle.test_neg]
    one_neg = sample_negative_pairs(kg, np.concatenate(blocked), len(one_new),
                                    derive_rng(seed, "one_new"), left=held, right=keep,
                                    allow_fewer=True)
    blocked.append(one_neg)
    both_neg = sample_negative_pairs(kg, np.concatenate(blocked), len(both_new),
                                     derive_rng(seed, "both_new"), left=held,
                                     allow_fewer=True)
    return ColdStartBundle(held, one_new, both_new, _sorted_pairs(one_neg), _sorted_pairs(both_neg),
                           bundle, int(seed))


def write_manifest(path, pairs, labels, seed, set_name):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={seed} set={set_name}\n")
        for (a, b), y in zip(np.asarray(pairs).tolist(), np.asarray(labels).tolist()):
            fh.write(f"{a}\t{b}\t{y}\n")


def read_manifest(path):
    """Return ``(pairs, labels, header)`` where header maps ``seed``/``set``."""
    header, pairs, labels = {}, [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        header[key] = val
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in ("0", "1"):
                raise ValueError(f"{path}: line {lineno}: expected head<TAB>tail<TAB>{{0,1}}")
            pairs.append((int(parts[0]), int(parts[1])))
            labels.append(int(parts[2]))
    return (np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
            np.asarray(labels, dtype=np.int64), header)


def write_split_bundle(bundle, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name in ("train", "valid", "test"):
        pairs, labels = bundle.pairs(name)
        path = os.path.join(out_dir, f"{name}.tsv")
        write_manifest(path, pairs, labels, bundle.seed, name)
        paths.append(path)
    return paths


def read_split_bundle(split_dir):
    sets, seed = {}, 0
    for name in ("train", "valid", "test"):
        pairs, labels, header = read_manifest(os.path.join(split_dir, f"{name}.tsv"))
        seed = int(header.get("seed", seed))
        sets[f"{name}_pos"] = pairs[labels == 1]
        sets[f"{name}_neg"] = pairs[labels == 0]
    return SplitBundle(seed=seed, **sets)
