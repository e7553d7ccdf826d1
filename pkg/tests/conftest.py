import os

import numpy as np
import pytest

from kglp.graph import KnowledgeGraph, load_graph

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
TOY = os.path.join(FIXTURES, "toy.tsv")
TOY_KINDS = os.path.join(FIXTURES, "kinds.tsv")


def central_diff(f, x, eps=1e-5):
    """Central finite-difference gradient of scalar ``f`` w.r.t. array ``x`` (modified in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-8))


def drug_graph(n_drugs, pairs, extra=(), n_other=0):
    """Graph of ``n_drugs`` drugs (ids 0..n-1) plus ``n_other`` targets."""
    names = [f"d{i}" for i in range(n_drugs)] + [f"x{i}" for i in range(n_other)]
    kinds = ["drug"] * n_drugs + ["target"] * n_other
    triples = [(a, 0, b) for a, b in pairs] + [(h, 1, t) for h, t in extra]
    return KnowledgeGraph.from_arrays(names, ["interacts", "targets"], kinds,
                                      np.asarray(triples, dtype=np.int64).reshape(-1, 3), 0)


@pytest.fixture(scope="session")
def toy_kg():
    return load_graph(TOY, TOY_KINDS)
