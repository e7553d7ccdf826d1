"""Multi-relational knowledge-graph link prediction.

Embedding models (TransE, TransR, RESCAL, DistMult, ComplEx), an R-GCN graph
auto-encoder, pair classifiers and an evaluation harness, all in numpy with
numba-compiled hot loops.
"""

__version__ = "0.1.0"
