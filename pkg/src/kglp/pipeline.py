"""End-to-end runs: embed, classify, evaluate."""
from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierConfig, build_pair_features, predict, train_classifier
from .gae import GaeConfig, predict_pairs, relational_adjacency, train_gae
from .metrics import compute_metrics, evaluate_cold_start
from .optim import TrainConfig, train_kge


@dataclass(eq=False)
class PipelineResult:
    report: object
    kge: object = None
    classifier: object = None
    gae: object = None
    history: object = None


def training_graph(kg, bundle, leak_test_edges=False):
    """Graph used for embedding: valid/test interaction edges removed unless leaking."""
    if leak_test_edges:
        return kg
    return kg.with_interactions(bundle.train_pos)


def fit_pair_classifier(emb, bundle, kind="mlp", config=None, seed=0):
    pairs, labels = bundle.pairs("train")
    feats = build_pair_features(emb, pairs)
    return train_classifier(kind, feats, labels, config or ClassifierConfig(), seed=seed)


def pair_scores(clf, emb, pairs):
    return predict(clf, build_pair_features(emb, pairs))[:, 0]


def kge_classifier_pipeline(kg, bundle, kge_config=None, clf_kind="mlp", clf_config=None,
                            seed=0, leak_test_edges=False):
    kge_config = kge_config or TrainConfig()
    params, history = train_kge(training_graph(kg, bundle, leak_test_edges),
                                bundle.valid_pos, bundle.valid_neg, kge_config)
    clf = fit_pair_classifier(params.entity_emb, bundle, clf_kind, clf_config, seed)
    pairs, labels = bundle.pairs("test")
    report = compute_metrics(labels, pair_scores(clf, params.entity_emb, pairs))
    return PipelineResult(report, kge=params, classifier=clf, history=history)


def complex_node_features(kg, bundle, dim=50, seed=0, **overrides):
    """ComplEx embeddings of width ``dim`` to seed the auto-encoder's inputs."""
    cfg = TrainConfig(model="complex", dim=dim, seed=seed, **overrides)
    params, _ = train_kge(training_graph(kg, bundle), bundle.valid_pos, bundle.valid_neg, cfg)
    return params.entity_emb


def gae_pipeline(kg, bundle, config=None, x0=None):
    config = config or GaeConfig()
    train_graph = training_graph(kg, bundle)
    model = train_gae(train_graph, bundle.train_pos, bundle.train_neg, bundle.valid_pos,
                      bundle.valid_neg, config, x0=x0, init="xavier" if x0 is None else "complex")
    pairs, labels = bundle.pairs("test")
    scores = predict_pairs(model, relational_adjacency(train_graph), pairs)
    return PipelineResult(compute_metrics(labels, scores), gae=model, history=model.history)


def cold_start_pipeline(kg, cold, kge_config=None, clf_kind="mlp", clf_config=None, seed=0):
    """Embed on the residual graph (held-out drugs keep only side relations), then score strata."""
    bundle = cold.residual_train
    result = kge_classifier_pipeline(kg, bundle, kge_config, clf_kind, clf_config, seed)
    emb = result.kge.entity_emb
    report = evaluate_cold_start(lambda p: pair_scores(result.classifier, emb, p), cold)
    return report, result
