"""Planted-community drug graphs for desk-scale benchmarks.

Drugs belong to latent communities.  Under the default ``homophilous``
pattern interactions are dense inside a community and rare across; under
``heterophilous`` they are dense between partner communities (``c`` and
``c ^ 1``) and rare elsewhere, including inside a community.  Side relations leak community membership:
drugs mostly target proteins and treat conditions from their community's
pool, while side effects are random.
"""
from dataclasses import dataclass

import numpy as np

from .graph import DRUG, KnowledgeGraph

RELATIONS = ("interacts", "targets", "treats", "causes")


@dataclass(frozen=True, eq=False)
class PlantedTruth:
    community: np.ndarray    # per entity; -1 for non-drugs
    latent: np.ndarray       # (n_entities, 2) drug positions, zeros elsewhere
    centers: np.ndarray      # (n_communities, 2)
    pattern: str = "homophilous"

    def linked(self, ca, cb):
        if self.pattern == "heterophilous":
            return (ca ^ 1) == cb
        return ca == cb


def make_synthetic_kg(n_drugs=200, n_targets=100, n_conditions=100, n_side_effects=100,
                      n_communities=8, p_in=0.7, p_out=0.002, targets_per_drug=8,
                      conditions_per_drug=4, side_effects_per_drug=3, off_pool=0.05,
                      latent_noise=0.08, pattern="homophilous", seed=0):
    if pattern not in ("homophilous", "heterophilous"):
        raise ValueError(f"unknown pattern {pattern!r}")
    if pattern == "heterophilous" and n_communities % 2:
        raise ValueError("heterophilous pattern needs an even number of communities")
    rng = np.random.default_rng(seed)
    names, kinds = [], []
    for prefix, kind, count in (("drug", DRUG, n_drugs), ("target", "target", n_targets),
                                ("condition", "condition", n_conditions),
                                ("side_effect", "side_effect", n_side_effects)):
        names.extend(f"{prefix}_{i:04d}" for i in range(count))
        kinds.extend([kind] * count)
    drugs = np.arange(n_drugs)
    targets = n_drugs + np.arange(n_targets)
    conditions = n_drugs + n_targets + np.arange(n_conditions)
    side = n_drugs + n_targets + n_conditions + np.arange(n_side_effects)

    comm = np.full(len(names), -1)
    comm[drugs] = rng.permutation(np.arange(n_drugs) % n_communities)
    angles = 2 * np.pi * np.arange(n_communities) / n_communities
    centers = np.column_stack([np.cos(angles), np.sin(angles)])
    latent = np.zeros((len(names), 2))
    latent[drugs] = centers[comm[drugs]] + rng.normal(0, latent_noise, (n_drugs, 2))

    triples = []
    iu, ju = np.triu_indices(n_drugs, k=1)
    truth = PlantedTruth(comm, latent, centers, pattern)
    same = truth.linked(comm[iu], comm[ju])
    hit = rng.random(len(iu)) < np.where(same, p_in, p_out)
    triples.extend((a, 0, b) for a, b in zip(iu[hit].tolist(), ju[hit].tolist()))

    def pooled(pool, per_drug, rel):
        groups = np.array_split(pool, n_communities)
        for dr in drugs.tolist():
            own = groups[comm[dr]]
            picks = set()
            while len(picks) < per_drug:
                src = pool if rng.random() < off_pool else own
                picks.add(int(rng.choice(src)))
            triples.extend((dr, rel, p) for p in sorted(picks))

    pooled(targets, targets_per_drug, 1)
    pooled(conditions, conditions_per_drug, 2)
    for dr in drugs.tolist():
        for s in rng.choice(side, side_effects_per_drug, replace=False).tolist():
            triples.append((dr, 3, s))
    kg = KnowledgeGraph.from_arrays(names, RELATIONS, kinds, np.asarray(triples), 0)
    return kg, truth


def nearest_centroid_oracle(truth, pairs):
    """Predict an interaction iff the drugs' nearest latent centroids are linked."""
    drugs = np.flatnonzero(truth.community >= 0)
    k = truth.centers.shape[0]
    centroids = np.stack([truth.latent[drugs[truth.community[drugs] == c]].mean(axis=0)
                          for c in range(k)])
    dist = ((truth.latent[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    assign = np.argmin(dist, axis=1)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return truth.linked(assign[pairs[:, 0]], assign[pairs[:, 1]]).astype(np.float64)


def interaction_types(truth, pairs, n_types):
    """Deterministic type label per pair, a function of both communities."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    ca, cb = truth.community[pairs[:, 0]], truth.community[pairs[:, 1]]
    return (np.minimum(ca, cb) % n_types).astype(np.int64)
