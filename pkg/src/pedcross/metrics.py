"""Binary classification metrics: accuracy, AUC, F1, precision.

AUC is the Mann-Whitney rank statistic: the probability that a random
positive outscores a random negative, with ties counted half. Scores
equal to the 0.5 threshold classify as positive.
"""

import numpy as np


def accuracy(labels, scores, threshold: float = 0.5) -> float:
    y = np.asarray(labels)
    predicted = np.asarray(scores) >= threshold
    return float((predicted == (y == 1)).mean())


def auc(labels, scores) -> float:
    """Rank-based AUC via midranks. Single-class inputs return 0.5."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return 0.5
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def precision_recall_f1(labels, scores, threshold: float = 0.5):
    y = np.asarray(labels) == 1
    predicted = np.asarray(scores) >= threshold
    tp = int((predicted & y).sum())
    fp = int((predicted & ~y).sum())
    fn = int((~predicted & y).sum())
    prec = tp / (tp + fp) if tp + fp > 0 else 0.0
    rec = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return prec, rec, f1


def classification_metrics(labels, scores, threshold: float = 0.5) -> dict:
    prec, _, f1 = precision_recall_f1(labels, scores, threshold)
    return {
        "accuracy": accuracy(labels, scores, threshold),
        "auc": auc(labels, scores),
        "f1": f1,
        "precision": prec,
    }
