"""Evaluation of a session log against ground truth.

ROC-AUC uses the tie-aware rank formula (equivalent to the probability
that a random anomaly outscores a random normal, counting ties as half).
Precision/recall/F1 judge the log's own flags, i.e. the thresholds that
were active while it ran. Detection latency is reported per contiguous
ground-truth anomaly window.
"""

from __future__ import annotations

import numpy as np


def roc_auc(scores, labels) -> float:
    """Tie-aware ROC-AUC of ``scores`` against boolean anomaly labels."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d and the same length")
    pos = int(y.sum())
    neg = int(y.size - pos)
    if pos == 0 or neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    _, inverse, counts = np.unique(s_sorted, return_inverse=True, return_counts=True)
    cum = np.cumsum(counts)
    avg_rank = cum - (counts - 1) / 2.0  # 1-based average rank per tie group
    ranks = np.empty(s.size)
    ranks[order] = avg_rank[inverse]
    return float((ranks[y].sum() - pos * (pos + 1) / 2.0) / (pos * neg))


def precision_recall_f1(predicted, actual) -> tuple[float, float, float]:
    p = np.asarray(predicted, dtype=bool)
    a = np.asarray(actual, dtype=bool)
    tp = int((p & a).sum())
    fp = int((p & ~a).sum())
    fn = int((~p & a).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
    return precision, recall, f1


def anomaly_windows(ids, labels) -> list[tuple[int, int]]:
    """Contiguous id runs marked anomalous, as inclusive (start, end)."""
    windows = []
    start = prev = None
    for iid, is_anom in zip(ids, labels):
        if is_anom:
            if start is None or iid != prev + 1:
                if start is not None:
                    windows.append((start, prev))
                start = iid
            prev = iid
        else:
            if start is not None:
                windows.append((start, prev))
                start = None
    if start is not None:
        windows.append((start, prev))
    return windows


def detection_latency(windows, flagged_ids) -> list[dict]:
    flagged = sorted(flagged_ids)
    out = []
    for start, end in windows:
        hit = next((f for f in flagged if start <= f <= end), None)
        out.append(
            {
                "from": start,
                "to": end,
                "detected": hit is not None,
                "latency": (hit - start) if hit is not None else None,
            }
        )
    return out


def evaluate(records: list[dict], truth) -> dict:
    """Full metric bundle for a list of ScoredRecord dicts.

    ``truth`` is an ``ingest.GroundTruth``; every logged instance id must
    be covered by it.
    """
    if not records:
        raise ValueError("empty session log")
    ids = [r["instance_id"] for r in records]
    try:
        labels = np.array([truth.is_anomaly(i) for i in ids])
    except KeyError as e:
        raise ValueError(f"ground truth does not cover instance id {e.args[0]}") from None
    scores = np.array([r["score"] for r in records])
    flagged = np.array([r["flagged"] for r in records])
    precision, recall, f1 = precision_recall_f1(flagged, labels)
    windows = anomaly_windows(ids, labels)
    events = detection_latency(windows, [i for i, fl in zip(ids, flagged) if fl])
    latencies = [e["latency"] for e in events if e["detected"]]
    return {
        "n": len(records),
        "n_anomalies": int(labels.sum()),
        "auc": roc_auc(scores, labels),
        "thresholds": sorted({r["threshold_used"] for r in records}),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "events": events,
        "detected_events": sum(1 for e in events if e["detected"]),
        "mean_detection_latency": (
            float(np.mean(latencies)) if latencies else None
        ),
    }
