"""Time each hot kernel under numba and under its numpy twin.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Both backends live side by side in ``kglp.kernels`` so one process can time
them; the first numba call (compilation or cache load) is excluded.
"""
import argparse
import timeit

import numpy as np

from kglp import kernels
from kglp.classifier.forest import train_forest
from kglp.kge import init_params
from kglp.optim import LOSS_KINDS, batch_loss_grad_np


def cases(scale, rng):
    n, d = int(20000 * scale), 64
    rows = rng.integers(0, n // 10, n)
    vals = rng.normal(size=(n, d))
    yield "scatter_add_rows", (
        lambda: kernels.scatter_add_rows_nb(np.zeros((n // 10, d)), rows, vals),
        lambda: kernels.scatter_add_rows_np(np.zeros((n // 10, d)), rows, vals))

    m = int(5000 * scale)
    deg = rng.integers(0, 12, m)
    indptr = np.r_[0, np.cumsum(deg)].astype(np.int64)
    indices = rng.integers(0, m, indptr[-1])
    w = rng.random(indptr[-1])
    x = rng.normal(size=(m, d))
    yield "csr_spmm", (lambda: kernels.csr_spmm_nb(indptr, indices, w, x),
                       lambda: kernels.csr_spmm_np(indptr, indices, w, x))

    p = init_params("complex", 500, 4, 64, seed=0)
    b = int(512 * scale)
    pos = np.stack([rng.integers(0, 500, b), rng.integers(0, 4, b), rng.integers(0, 500, b)], 1)
    neg_ent, neg_head = rng.integers(0, 500, (b, 64)), rng.random((b, 64)) < 0.5
    code = LOSS_KINDS["logistic"]

    def kge_nb():
        g = (np.zeros_like(p.entity_emb), np.zeros_like(p.relation_emb), np.zeros_like(p.relation_mat))
        kernels.kge_batch_loss_grad_nb(p.code, code, p.entity_emb, p.relation_emb, p.relation_mat,
                                       pos, neg_ent, neg_head, 1.0, 1e-6, *g)
    yield "kge_batch_loss_grad", (kge_nb, lambda: batch_loss_grad_np(p, pos, neg_ent, neg_head, code, 1.0, 1e-6))

    X = rng.normal(size=(int(2000 * scale), 16))
    y = (X[:, 0] * X[:, 1] > 0).astype(np.int64)
    idx = np.arange(len(X), dtype=np.int64)
    feats = np.arange(16, dtype=np.int64)
    yield "best_split", (lambda: kernels.best_split_nb(X, y, idx, feats, 2),
                         lambda: kernels.best_split_np(X, y, idx, feats, 2))

    f = train_forest(X, y, 2, n_trees=50, seed=0)
    args = (f.feature, f.threshold, f.left, f.right, f.leaf_label, f.roots, X, 2)
    yield "forest_votes", (lambda: kernels.forest_votes_nb(*args), lambda: kernels.forest_votes_np(*args))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, (fast, slow) in cases(args.scale, rng):
        fast()  # warm up
        t_nb = min(timeit.repeat(fast, number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(slow, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<22}{t_nb:>10.2f}{t_np:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
