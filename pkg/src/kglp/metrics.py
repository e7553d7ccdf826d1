"""Binary and multi-class metrics, cold-start strata and prediction-file scoring.

Zero denominators never produce NaN: the value is reported as 0 and the
metric name is added to the report's ``undefined`` flags.
"""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import canonical_pairs

METRIC_ORDER = ("accuracy", "precision", "recall", "f1", "auc", "aupr", "mcc")


class PredictionFileError(ValueError):
    pass


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    aupr: float
    mcc: float
    threshold: float
    n: int
    confusion: Confusion = None
    undefined: tuple = ()

    def lines(self):
        for name in METRIC_ORDER:
            yield f"{name}\t{getattr(self, name)!r}"
        yield f"threshold\t{self.threshold!r}"
        yield f"n\t{self.n}"
        if self.undefined:
            yield f"undefined\t{','.join(self.undefined)}"

    def to_record(self):
        rec = asdict(self)
        rec["undefined"] = list(self.undefined)
        return rec

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=True)


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def confusion(labels, predicted):
    labels = np.asarray(labels).astype(bool)
    predicted = np.asarray(predicted).astype(bool)
    return Confusion(int((labels & predicted).sum()), int((~labels & predicted).sum()),
                     int((labels & ~predicted).sum()), int((~labels & ~predicted).sum()))


def _binary_from_confusion(c, flags):
    precision = _ratio(c.tp, c.tp + c.fp, "precision", flags)
    recall = _ratio(c.tp, c.tp + c.fn, "recall", flags)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", flags)
    accuracy = (c.tp + c.tn) / c.n
    den = math.sqrt(float(c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn))
    mcc = _ratio(float(c.tp) * c.tn - float(c.fp) * c.fn, den, "mcc", flags)
    return accuracy, precision, recall, f1, mcc


def _check(labels, scores):
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ValueError(f"length mismatch: {labels.shape} labels vs {scores.shape} scores")
    if len(labels) == 0:
        raise ValueError("need at least one example")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    return labels.astype(np.int64), scores


def auc(labels, scores):
    """Mann-Whitney AUC: P(s+ > s-) + P(s+ == s-) / 2, via average ranks."""
    labels, scores = _check(labels, scores)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    # average 1-based rank of each tie group
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], len(s)]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(avg, ends - starts)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(labels, scores):
    """Average precision over descending score thresholds, ties grouped."""
    labels, scores = _check(labels, scores)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("AUPR needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev = np.r_[0.0, recall[:-1]]
    return float(((recall - prev) * precision).sum())


def compute_metrics(labels, scores, threshold=0.5):
    """Full binary report; a score counts as positive when ``score >= threshold``."""
    labels, scores = _check(labels, scores)
    flags = []
    c = confusion(labels, scores >= threshold)
    accuracy, precision, recall, f1, mcc = _binary_from_confusion(c, flags)
    try:
        a = auc(labels, scores)
    except ValueError:
        a = 0.0
        flags.append("auc")
    try:
        ap = aupr(labels, scores)
    except ValueError:
        ap = 0.0
        flags.append("aupr")
    return MetricsReport(accuracy, precision, recall, f1, a, ap, mcc, float(threshold), c.n, c,
                         tuple(flags))


def sweep_thresholds(labels, scores):
    """Threshold maximizing accuracy among all distinct scores (and +inf)."""
    labels, scores = _check(labels, scores)
    cands = np.r_[np.unique(scores), np.inf]
    accs = [((scores >= thr) == labels.astype(bool)).mean() for thr in cands]
    i = int(np.argmax(accs))
    return float(cands[i]), float(accs[i])


@dataclass
class MulticlassReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    mcc: float
    n: int
    classes: tuple
    undefined: tuple = ()

    def lines(self):
        for name in ("accuracy", "precision", "recall", "f1", "mcc"):
            yield f"{name}\t{getattr(self, name)!r}"
        yield f"n\t{self.n}"


def confusion_matrix(labels, predicted, K):
    labels = np.asarray(labels, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if labels.shape != predicted.shape:
        raise ValueError("length mismatch between labels and predictions")
    for arr, what in ((labels, "label"), (predicted, "predicted label")):
        if arr.size and (arr.min() < 0 or arr.max() >= K):
            raise ValueError(f"{what} outside 0..{K - 1}")
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (labels, predicted), 1)
    return cm


def multiclass_metrics(labels, predicted, K):
    """Macro precision/recall/F1 over classes present in ``labels``, accuracy and K-class MCC."""
    cm = confusion_matrix(labels, predicted, K)
    n = int(cm.sum())
    if n == 0:
        raise ValueError("need at least one example")
    flags = []
    present = np.flatnonzero(cm.sum(axis=1) > 0)
    precs, recs, f1s = [], [], []
    for k in present:
        tp = cm[k, k]
        p = _ratio(tp, cm[:, k].sum(), f"precision[{k}]", flags)
        r = _ratio(tp, cm[k, :].sum(), f"recall[{k}]", flags)
        precs.append(p)
        recs.append(r)
        f1s.append(_ratio(2 * p * r, p + r, f"f1[{k}]", flags))
    t = cm.sum(axis=1).astype(np.float64)
    p = cm.sum(axis=0).astype(np.float64)
    c = float(np.trace(cm))
    den = math.sqrt((n * n - (p * p).sum()) * (n * n - (t * t).sum()))
    mcc = _ratio(c * n - (p * t).sum(), den, "mcc", flags)
    return MulticlassReport(c / n, float(np.mean(precs)), float(np.mean(recs)), float(np.mean(f1s)),
                            mcc, n, tuple(int(k) for k in present), tuple(flags))


@dataclass
class ColdStartReport:
    one_new: MetricsReport = None
    both_new: MetricsReport = None
    skipped: list = field(default_factory=list)


def evaluate_cold_start(predict_fn, bundle, threshold=0.5):
    """Score each stratum (one new drug, both new) on its own balanced set."""
    out = ColdStartReport()
    for name in ("one_new", "both_new"):
        pairs, labels = bundle.stratum(name)
        if len(getattr(bundle, name)) == 0 or (labels == 0).sum() == 0:
            out.skipped.append(name)
            continue
        scores = np.asarray(predict_fn(pairs), dtype=np.float64).reshape(-1)
        setattr(out, name, compute_metrics(labels, scores, threshold))
    return out


def read_prediction_file(path):
    """Parse ``head<TAB>tail<TAB>score`` lines into canonical pairs and scores."""
    pairs, scores, seen = [], [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            try:
                if len(parts) != 3:
                    raise ValueError
                a, b, s = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise PredictionFileError(f"line {lineno}: expected head<TAB>tail<TAB>score") from None
            key = (min(a, b), max(a, b))
            if key in seen:
                raise PredictionFileError(f"line {lineno}: duplicate pair {key[0]}\t{key[1]}")
            seen.add(key)
            pairs.append(key)
            scores.append(s)
    return pairs, np.asarray(scores, dtype=np.float64)


def score_prediction_file(path, truth_pairs, truth_labels, threshold=0.5):
    """Match an external prediction file against labelled truth pairs."""
    truth = {}
    for (a, b), y in zip(canonical_pairs(truth_pairs).tolist(), np.asarray(truth_labels).tolist()):
        truth[(a, b)] = int(y)
    pairs, scores = read_prediction_file(path)
    unknown = sum(1 for p in pairs if p not in truth)
    if unknown:
        raise PredictionFileError(f"{unknown} unknown pair{'s' if unknown != 1 else ''}")
    missing = len(truth) - len(pairs)
    if missing:
        raise PredictionFileError(f"{missing} missing pair{'s' if missing != 1 else ''}")
    # fixed order so shuffled files give identical reports
    order = sorted(range(len(pairs)), key=pairs.__getitem__)
    labels = np.array([truth[pairs[i]] for i in order])
    return compute_metrics(labels, scores[order], threshold)
