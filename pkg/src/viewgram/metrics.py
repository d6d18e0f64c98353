"""Retrieval evaluation: ranking, PR curves, AP, AUC, F-measure, NDCG.

Conventions fixed here: average precision is the mean of precision taken at
each relevant rank; a query's own id is excluded from its ranking; ties in
similarity break by ascending gallery id; micro aggregates average over
queries, macro over per-class means.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeMismatchError, UndefinedMetricError


@dataclass
class DescriptorSet:
    """Parallel lists of shape ids, class labels, and descriptor rows."""

    ids: list[str]
    labels: list[str]
    vectors: np.ndarray  # (count, dim)

    def __post_init__(self):
        if len(self.ids) != len(self.labels) or len(self.ids) != self.vectors.shape[0]:
            raise ShapeMismatchError(
                f"{len(self.ids)} ids, {len(self.labels)} labels, "
                f"{self.vectors.shape[0]} vectors"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("descriptor ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class RankedList:
    query_id: str
    gallery_ids: list[str]
    scores: list[float]  # similarity, non-increasing after tie-break


@dataclass
class RetrievalReport:
    micro: dict[str, float]
    macro: dict[str, float]
    per_query: list[dict]
    options: dict
    undefined_queries: int
    per_class: dict[str, dict[str, float]] = field(default_factory=dict)
    mean_pr_curve: list[tuple[float, float]] = field(default_factory=list)


def rank_gallery(
    query_id: str,
    query_vec: np.ndarray,
    gallery: DescriptorSet,
    similarity: str = "cosine",
) -> RankedList:
    """Order the gallery by similarity to the query, best first.

    Cosine ranks by descending dot product over norms, euclidean by
    ascending distance (reported as its negation so scores stay
    non-increasing).  Equal scores order by ascending gallery id, and the
    query's own id is dropped when it appears in the gallery.
    """
    if len(gallery) == 0:
        raise ValueError("gallery is empty")
    q = np.asarray(query_vec, dtype=np.float64)
    g = np.asarray(gallery.vectors, dtype=np.float64)
    if q.shape[0] != g.shape[1]:
        raise ShapeMismatchError(
            f"query dim {q.shape[0]} vs gallery dim {g.shape[1]}"
        )
    if similarity == "cosine":
        qn = np.linalg.norm(q)
        if qn == 0.0:
            raise NumericError(f"zero-norm descriptor for query {query_id!r}")
        gn = np.linalg.norm(g, axis=1)
        if (gn == 0.0).any():
            bad = gallery.ids[int(np.argmin(gn != 0.0))]
            raise NumericError(f"zero-norm descriptor for gallery item {bad!r}")
        scores = (g @ q) / (gn * qn)
    elif similarity == "euclidean":
        scores = -np.sqrt(((g - q) ** 2).sum(axis=1))
    else:
        raise ValueError(f"unknown similarity {similarity!r}")

    keep = [i for i in range(len(gallery)) if gallery.ids[i] != query_id]
    order = order_by_score([gallery.ids[i] for i in keep], [scores[i] for i in keep])
    return RankedList(
        query_id,
        [gallery.ids[keep[i]] for i in order],
        [float(scores[keep[i]]) for i in order],
    )


def order_by_score(ids: list[str], scores: list[float]) -> list[int]:
    """Indices sorted by descending score, ties broken by ascending id.

    Pure argsort: any strictly increasing transform of the scores yields
    the same ordering.
    """
    return sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))


def precision_recall_curve(relevance: list[int]) -> list[tuple[float, float]]:
    """One (recall, precision) point per rank position.

    >>> precision_recall_curve([1, 0, 1])
    [(0.5, 1.0), (0.5, 0.5), (1.0, 0.6666666666666666)]
    """
    total = sum(1 for r in relevance if r)
    if total == 0:
        raise UndefinedMetricError("no relevant items in ranking")
    points = []
    hits = 0
    for rank, rel in enumerate(relevance, start=1):
        hits += 1 if rel else 0
        points.append((hits / total, hits / rank))
    return points


def average_precision(relevance: list[int]) -> float:
    """Mean of precision-at-rank over the relevant positions."""
    total = sum(1 for r in relevance if r)
    if total == 0:
        raise UndefinedMetricError("no relevant items in ranking")
    hits = 0
    acc = 0.0
    for rank, rel in enumerate(relevance, start=1):
        if rel:
            hits += 1
            acc += hits / rank
    return acc / total


def pr_auc(points: list[tuple[float, float]]) -> float:
    """Trapezoidal area under a PR curve over recall in [0, 1].

    Precision at recall 0 is extended flat from the first point.
    """
    if not points:
        raise ValueError("empty curve")
    curve = [(0.0, points[0][1])] + list(points)
    area = 0.0
    for (r0, p0), (r1, p1) in zip(curve, curve[1:]):
        area += (r1 - r0) * (p0 + p1) / 2.0
    return area


def f_measure_at(relevance: list[int], k: int, total_relevant: int) -> float:
    """Harmonic mean of precision and recall at cutoff k (0 when both are 0)."""
    if k < 1 or total_relevant < 1:
        raise ValueError(f"need k >= 1 and R >= 1, got k={k}, R={total_relevant}")
    hits = sum(1 for r in relevance[:k] if r)
    precision = hits / k
    recall = hits / total_relevant
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def ndcg_at(gains: list[float], k: int) -> float:
    """Discounted cumulative gain at k over the ideal ordering's gain.

    gain_i / log2(i + 1) with 1-based ranks; the ideal ranking sorts all
    gains descending before truncating at k.
    """
    if k < 1:
        raise ValueError(f"cutoff must be >= 1, got {k}")
    if not any(g > 0 for g in gains):
        raise UndefinedMetricError("all gains are zero")

    def dcg(seq):
        return sum(g / math.log2(i + 1) for i, g in enumerate(seq[:k], start=1))

    return dcg(list(gains)) / dcg(sorted(gains, reverse=True))


def micro_macro_aggregate(
    values: list[float], labels: list[str]
) -> tuple[float, float]:
    """(micro, macro): query-level mean and mean of per-class means."""
    if not values:
        raise ValueError("no values to aggregate")
    by_class: dict[str, list[float]] = {}
    for v, c in zip(values, labels):
        by_class.setdefault(c, []).append(v)
    micro = sum(values) / len(values)
    macro = sum(sum(vs) / len(vs) for vs in by_class.values()) / len(by_class)
    return micro, macro


@dataclass
class EvalOptions:
    similarity: str = "cosine"
    f1_cutoff: int = 32
    ndcg_cutoff: int = 0  # 0 = full gallery
    normalize: bool = False
    relevance: str = "binary"  # graded gains pass through ndcg unchanged

    def to_dict(self) -> dict:
        return {
            "similarity": self.similarity,
            "f1_cutoff": self.f1_cutoff,
            "ndcg_cutoff": self.ndcg_cutoff,
            "normalize": self.normalize,
            "relevance": self.relevance,
        }


def evaluate_retrieval(
    queries: DescriptorSet,
    gallery: DescriptorSet,
    options: EvalOptions | None = None,
    gains_fn=None,
) -> RetrievalReport:
    """Run the full metric suite for every query and aggregate.

    Queries whose class does not occur in the gallery (self-match excluded)
    are flagged undefined, counted, and left out of the aggregates.

    Relevance is binary by class label.  `gains_fn(query_label,
    gallery_label) -> float` optionally grades the NDCG gains (AP, F1, and
    the PR curve stay binary); the report's relevance option then reads
    "graded".
    """
    options = options or EvalOptions()
    gallery_vectors = gallery.vectors
    if options.normalize:
        norms = np.linalg.norm(gallery_vectors.astype(np.float64), axis=1, keepdims=True)
        if (norms == 0.0).any():
            bad = gallery.ids[int(np.argmin(norms.reshape(-1) != 0.0))]
            raise NumericError(f"zero-norm descriptor for gallery item {bad!r}")
        gallery_vectors = gallery_vectors / norms
    gal = DescriptorSet(gallery.ids, gallery.labels, gallery_vectors)
    label_of = dict(zip(gallery.ids, gallery.labels))

    order = sorted(range(len(queries)), key=lambda i: queries.ids[i])
    per_query = []
    values: dict[str, list[float]] = {"map": [], "auc": [], "f1": [], "ndcg": []}
    kept_labels: list[str] = []
    undefined = 0
    curves: list[list[tuple[float, float]]] = []

    for qi in order:
        qid = queries.ids[qi]
        qlabel = queries.labels[qi]
        qvec = queries.vectors[qi].astype(np.float64)
        if options.normalize:
            qn = np.linalg.norm(qvec)
            if qn == 0.0:
                raise NumericError(f"zero-norm descriptor for query {qid!r}")
            qvec = qvec / qn
        ranked = rank_gallery(qid, qvec, gal, options.similarity)
        bits = [1 if label_of[gid] == qlabel else 0 for gid in ranked.gallery_ids]
        total = sum(bits)
        if total == 0:
            undefined += 1
            per_query.append(
                {"id": qid, "class": qlabel, "ap": None, "f1": None, "ndcg": None}
            )
            continue
        curve = precision_recall_curve(bits)
        ap = average_precision(bits)
        auc = pr_auc(curve)
        f1 = f_measure_at(bits, options.f1_cutoff, total)
        ndcg_k = options.ndcg_cutoff if options.ndcg_cutoff > 0 else len(bits)
        if gains_fn is not None:
            gains = [float(gains_fn(qlabel, label_of[gid])) for gid in ranked.gallery_ids]
        else:
            gains = [float(b) for b in bits]
        ndcg = ndcg_at(gains, ndcg_k)
        per_query.append(
            {"id": qid, "class": qlabel, "ap": ap, "f1": f1, "ndcg": ndcg}
        )
        for name, val in (("map", ap), ("auc", auc), ("f1", f1), ("ndcg", ndcg)):
            values[name].append(val)
        kept_labels.append(qlabel)
        curves.append(curve)

    if not kept_labels:
        raise UndefinedMetricError("every query class is absent from the gallery")

    micro: dict[str, float] = {}
    macro: dict[str, float] = {}
    for name in ("map", "auc", "f1", "ndcg"):
        micro[name], macro[name] = micro_macro_aggregate(values[name], kept_labels)

    per_class: dict[str, dict[str, float]] = {}
    for name in ("map", "auc", "f1", "ndcg"):
        by_class: dict[str, list[float]] = {}
        for v, c in zip(values[name], kept_labels):
            by_class.setdefault(c, []).append(v)
        for c, vs in sorted(by_class.items()):
            per_class.setdefault(c, {})[name] = sum(vs) / len(vs)

    emitted_options = options.to_dict()
    if gains_fn is not None:
        emitted_options["relevance"] = "graded"
    return RetrievalReport(
        micro=micro,
        macro=macro,
        per_query=per_query,
        options=emitted_options,
        undefined_queries=undefined,
        per_class=per_class,
        mean_pr_curve=_mean_curve(curves),
    )


def _mean_curve(curves: list[list[tuple[float, float]]], points: int = 21):
    """Average precision at evenly spaced recall levels across queries."""
    if not curves:
        return []
    levels = [i / (points - 1) for i in range(points)]
    mean = []
    for level in levels:
        precs = []
        for curve in curves:
            eligible = [p for r, p in curve if r >= level - 1e-12]
            precs.append(max(eligible) if eligible else curve[-1][1])
        mean.append((level, sum(precs) / len(precs)))
    return mean


def micro_macro_average(report: RetrievalReport) -> dict[str, float]:
    """Arithmetic mean of the micro and macro aggregate of each metric."""
    return {
        name: (report.micro[name] + report.macro[name]) / 2.0
        for name in report.micro
    }


def _round6(value):
    return round(value, 6) if isinstance(value, float) else value


def report_to_json(report: RetrievalReport) -> str:
    """Canonical report serialization: fixed key order, 6-decimal values."""
    doc = {
        "micro": {k: _round6(v) for k, v in report.micro.items()},
        "macro": {k: _round6(v) for k, v in report.macro.items()},
        "per_query": [
            {
                "id": e["id"],
                "class": e["class"],
                "ap": _round6(e["ap"]),
                "f1": _round6(e["f1"]),
                "ndcg": _round6(e["ndcg"]),
            }
            for e in report.per_query
        ],
        "options": report.options,
        "undefined_queries": report.undefined_queries,
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
