import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viewgram import metrics as vm
from viewgram.errors import NumericError, ShapeMismatchError, UndefinedMetricError
from viewgram.rng import Rng


# ---------------------------------------------------------------------------
# independent direct-definition oracles (brute-force loops, no shortcuts)


def oracle_precision_at(bits, k):
    hits = 0
    for i in range(min(k, len(bits))):
        if bits[i]:
            hits += 1
    return hits / k


def oracle_average_precision(bits):
    relevant_ranks = [i + 1 for i, b in enumerate(bits) if b]
    total = 0.0
    for rank in relevant_ranks:
        total += oracle_precision_at(bits, rank)
    return total / len(relevant_ranks)


def oracle_f_measure(bits, k, total_relevant):
    precision = oracle_precision_at(bits, k)
    recall = sum(bits[:k]) / total_relevant
    if precision == 0.0 and recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def oracle_ndcg(gains, k):
    def discounted(seq):
        total = 0.0
        for i, g in enumerate(seq[:k]):
            total += g / math.log2(i + 2)
        return total

    return discounted(gains) / discounted(sorted(gains, reverse=True))


# ---------------------------------------------------------------------------
# ranking


def _descriptor_set(vectors, ids=None, labels=None):
    vectors = np.asarray(vectors, dtype=np.float32)
    n = vectors.shape[0]
    ids = ids or [f"s{i}" for i in range(n)]
    labels = labels or ["x"] * n
    return vm.DescriptorSet(list(ids), list(labels), vectors)


def test_identical_item_ranks_first_under_cosine():
    gallery = _descriptor_set([[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]])
    ranked = vm.rank_gallery("q", np.array([0.0, 1.0]), gallery)
    assert ranked.gallery_ids[0] == "s1"
    assert ranked.scores[0] == pytest.approx(1.0)


def test_tied_similarity_orders_by_ascending_id():
    gallery = _descriptor_set([[1.0, 0.0], [1.0, 0.0]], ids=["zz", "aa"])
    ranked = vm.rank_gallery("q", np.array([1.0, 0.0]), gallery)
    assert ranked.gallery_ids == ["aa", "zz"]


def test_cosine_order_hand_computed():
    gallery = _descriptor_set([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    ranked = vm.rank_gallery("q", np.array([1.0, 0.0]), gallery)
    assert ranked.gallery_ids == ["s0", "s2", "s1"]
    assert ranked.scores == pytest.approx([1.0, 0.6, 0.0])


def test_self_match_excluded():
    gallery = _descriptor_set([[1.0, 0.0], [0.9, 0.1]], ids=["q", "other"])
    ranked = vm.rank_gallery("q", np.array([1.0, 0.0]), gallery)
    assert ranked.gallery_ids == ["other"]


def test_euclidean_ranks_by_distance():
    gallery = _descriptor_set([[0.0, 0.0], [3.0, 4.0], [1.0, 0.0]])
    ranked = vm.rank_gallery("q", np.array([0.0, 0.0]), gallery, similarity="euclidean")
    assert ranked.gallery_ids == ["s0", "s2", "s1"]
    assert ranked.scores == pytest.approx([0.0, -1.0, -5.0])


def test_zero_vector_under_cosine_names_the_id():
    gallery = _descriptor_set([[1.0, 0.0], [0.0, 0.0]], ids=["ok", "broken"])
    with pytest.raises(NumericError) as exc:
        vm.rank_gallery("q", np.array([1.0, 0.0]), gallery)
    assert "broken" in str(exc.value)
    with pytest.raises(NumericError) as exc:
        vm.rank_gallery("q2", np.zeros(2), _descriptor_set([[1.0, 0.0]]))
    assert "q2" in str(exc.value)


def test_dimension_mismatch_rejected():
    with pytest.raises(ShapeMismatchError):
        vm.rank_gallery("q", np.ones(3), _descriptor_set([[1.0, 0.0]]))


def test_rank_deterministic_under_gallery_permutation():
    rng = Rng(0)
    vectors = rng.uniform(-1.0, 1.0, (20, 4))
    ids = [f"g{i:02d}" for i in range(20)]
    base = vm.rank_gallery("q", np.ones(4), _descriptor_set(vectors, ids=ids))
    perm = rng.permutation(20)
    shuffled = _descriptor_set(vectors[perm], ids=[ids[i] for i in perm])
    again = vm.rank_gallery("q", np.ones(4), shuffled)
    assert base.gallery_ids == again.gallery_ids


@given(st.lists(st.integers(min_value=-200, max_value=200), min_size=1, max_size=30))
@settings(max_examples=100, deadline=None)
def test_order_invariant_under_monotone_transform(raw):
    # well-separated scores so the transforms stay strictly monotone in fp
    scores = [v / 2.0 for v in raw]
    ids = [f"i{i:03d}" for i in range(len(scores))]
    base = vm.order_by_score(ids, scores)
    for transform in (lambda s: 3.0 * s + 7.0, math.atan, lambda s: s ** 3):
        assert vm.order_by_score(ids, [transform(s) for s in scores]) == base


# ---------------------------------------------------------------------------
# PR curve / AP / AUC


def test_pr_curve_perfect_ranking():
    assert vm.precision_recall_curve([1, 1]) == [(0.5, 1.0), (1.0, 1.0)]


def test_pr_curve_late_hit():
    assert vm.precision_recall_curve([0, 1]) == [(0.0, 0.0), (1.0, 0.5)]


def test_pr_curve_rank_by_rank():
    points = vm.precision_recall_curve([1, 0, 1])
    assert points == [(0.5, 1.0), (0.5, 0.5), (1.0, pytest.approx(2 / 3))]


def test_pr_curve_needs_a_relevant_item():
    with pytest.raises(UndefinedMetricError):
        vm.precision_recall_curve([0, 0, 0])


def test_average_precision_values():
    assert vm.average_precision([1, 1, 0]) == 1.0
    assert vm.average_precision([1, 0, 1]) == pytest.approx(0.833333, abs=1e-6)
    assert vm.average_precision([0, 0, 1]) == pytest.approx(1 / 3)


def test_average_precision_is_one_iff_relevant_first():
    assert vm.average_precision([1, 1, 1, 0, 0]) == 1.0
    assert vm.average_precision([1, 0, 1, 0]) < 1.0


@given(
    st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=12).filter(any),
    st.integers(min_value=0, max_value=6),
)
@settings(max_examples=200, deadline=None)
def test_ap_invariant_to_trailing_irrelevant_items(bits, extra):
    assert vm.average_precision(bits + [0] * extra) == vm.average_precision(bits)


def test_pr_auc_perfect():
    assert vm.pr_auc(vm.precision_recall_curve([1, 1, 1])) == 1.0
    assert vm.pr_auc([(0.0, 1.0), (1.0, 1.0)]) == 1.0


def test_pr_auc_trapezoid_sum():
    assert vm.pr_auc([(0.0, 1.0), (0.5, 1.0), (1.0, 0.5)]) == pytest.approx(0.875)


# ---------------------------------------------------------------------------
# F-measure / NDCG


def test_f_measure_direct_formula():
    assert vm.f_measure_at([1, 1, 0, 0], 4, 2) == pytest.approx(0.666667, abs=1e-6)


def test_f_measure_perfect():
    assert vm.f_measure_at([1, 1, 1], 3, 3) == 1.0


def test_f_measure_zero_hits():
    assert vm.f_measure_at([0, 0, 0, 0], 4, 2) == 0.0


def test_f_measure_rejects_bad_cutoffs():
    with pytest.raises(ValueError):
        vm.f_measure_at([1], 0, 1)
    with pytest.raises(ValueError):
        vm.f_measure_at([1], 1, 0)


def test_ndcg_values():
    assert vm.ndcg_at([1.0, 1.0, 0.0], 3) == 1.0
    # DCG = 1/log2(3) + 1/log2(4) = 1.130930, IDCG = 1 + 1/log2(3) = 1.630930
    dcg = 1.0 / math.log2(3.0) + 0.5
    idcg = 1.0 + 1.0 / math.log2(3.0)
    assert vm.ndcg_at([0.0, 1.0, 1.0], 3) == pytest.approx(dcg / idcg, abs=1e-12)
    assert vm.ndcg_at([0.0, 1.0, 1.0], 3) == pytest.approx(0.693422, abs=1e-5)
    assert vm.ndcg_at([1.0], 5) == 1.0


def test_ndcg_rejects_all_zero_gains():
    with pytest.raises(UndefinedMetricError):
        vm.ndcg_at([0.0, 0.0], 2)


def test_ndcg_one_iff_non_increasing_within_cutoff():
    rng = Rng(1)
    for _ in range(300):
        n = 2 + int(rng.random() * 6)
        k = 1 + int(rng.random() * n)
        gains = [float(int(rng.random() * 4)) for _ in range(n)]
        if not any(g > 0 for g in gains):
            continue
        value = vm.ndcg_at(gains, k)
        ideal_head = sorted(gains, reverse=True)[:k]
        if gains[:k] == ideal_head:
            assert value == pytest.approx(1.0)
        else:
            assert value < 1.0


def test_graded_gains_pass_through():
    assert vm.ndcg_at([3.0, 2.0, 1.0], 3) == 1.0
    assert vm.ndcg_at([1.0, 2.0, 3.0], 3) < 1.0


# ---------------------------------------------------------------------------
# exhaustive oracle equality on all binary lists of length <= 8


def test_metrics_match_oracle_on_all_short_binary_lists():
    for length in range(1, 9):
        for pattern in itertools.product((0, 1), repeat=length):
            if not any(pattern):
                continue
            bits = list(pattern)
            total = sum(bits)
            assert abs(vm.average_precision(bits) - oracle_average_precision(bits)) < 1e-12
            for k in range(1, length + 1):
                assert abs(
                    vm.f_measure_at(bits, k, total) - oracle_f_measure(bits, k, total)
                ) < 1e-12
                gains = [float(b) for b in bits]
                assert abs(vm.ndcg_at(gains, k) - oracle_ndcg(gains, k)) < 1e-12


# ---------------------------------------------------------------------------
# aggregation


def test_micro_macro_single_class_equal():
    micro, macro = vm.micro_macro_aggregate([0.5, 0.7], ["a", "a"])
    assert micro == macro == pytest.approx(0.6)


def test_micro_macro_unbalanced_classes():
    micro, macro = vm.micro_macro_aggregate([1.0, 1.0, 0.0], ["a", "a", "b"])
    assert micro == pytest.approx(2 / 3)
    assert macro == pytest.approx(0.5)


def test_micro_macro_constant_values():
    micro, macro = vm.micro_macro_aggregate([0.25] * 5, ["a", "b", "a", "c", "b"])
    assert micro == macro == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# full evaluation


def _one_hot_sets(per_class=2, classes=3):
    ids, labels, vectors = [], [], []
    for c in range(classes):
        for i in range(per_class):
            ids.append(f"c{c}-{i}")
            labels.append(f"class{c}")
            vec = np.zeros(classes, dtype=np.float32)
            vec[c] = 1.0
            vectors.append(vec)
    return vm.DescriptorSet(ids, labels, np.stack(vectors))


def test_one_hot_descriptors_give_perfect_metrics():
    ds = _one_hot_sets()
    report = vm.evaluate_retrieval(ds, ds)
    assert report.micro["map"] == 1.0
    assert report.micro["auc"] == 1.0
    assert report.micro["ndcg"] == 1.0
    assert report.macro["map"] == 1.0
    assert report.undefined_queries == 0


def test_random_descriptors_two_classes_near_half_map():
    rng = Rng(123)
    n = 200
    vectors = rng.uniform(-1.0, 1.0, (n, 16)).astype(np.float32)
    labels = [f"class{i % 2}" for i in range(n)]
    ids = [f"r{i:03d}" for i in range(n)]
    ds = vm.DescriptorSet(ids, labels, vectors)
    report = vm.evaluate_retrieval(ds, ds)
    assert abs(report.micro["map"] - 0.5) < 0.05


def test_query_class_absent_from_gallery_is_flagged():
    queries = vm.DescriptorSet(
        ["q0", "q1"], ["present", "missing"],
        np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32),
    )
    gallery = vm.DescriptorSet(
        ["g0", "g1"], ["present", "present"],
        np.array([[1.0, 0.0], [0.9, 0.1]], dtype=np.float32),
    )
    report = vm.evaluate_retrieval(queries, gallery)
    assert report.undefined_queries == 1
    entries = {e["id"]: e for e in report.per_query}
    assert entries["q1"]["ap"] is None
    assert entries["q0"]["ap"] == 1.0


def test_report_json_schema_and_formatting():
    report = vm.evaluate_retrieval(_one_hot_sets(), _one_hot_sets())
    doc = json.loads(vm.report_to_json(report))
    assert list(doc.keys()) == ["micro", "macro", "per_query", "options", "undefined_queries"]
    assert list(doc["micro"].keys()) == ["map", "auc", "f1", "ndcg"]
    assert list(doc["per_query"][0].keys()) == ["id", "class", "ap", "f1", "ndcg"]
    assert doc["options"] == {
        "similarity": "cosine",
        "f1_cutoff": 32,
        "ndcg_cutoff": 0,
        "normalize": False,
        "relevance": "binary",
    }
    for value in doc["micro"].values():
        assert round(value, 6) == value


def test_micro_macro_average_helper():
    report = vm.evaluate_retrieval(_one_hot_sets(), _one_hot_sets())
    combined = vm.micro_macro_average(report)
    assert combined["map"] == pytest.approx((report.micro["map"] + report.macro["map"]) / 2)


def test_graded_gains_pathway_in_evaluation():
    ds = _one_hot_sets()
    # uniform scaling of the gains leaves NDCG unchanged
    scaled = vm.evaluate_retrieval(ds, ds, gains_fn=lambda q, g: 2.0 if q == g else 0.0)
    binary = vm.evaluate_retrieval(ds, ds)
    assert scaled.micro["ndcg"] == pytest.approx(binary.micro["ndcg"])
    assert scaled.options["relevance"] == "graded"
    assert binary.options["relevance"] == "binary"
    # partial credit for near misses lifts NDCG above the binary value
    partial = vm.evaluate_retrieval(
        ds, ds, vm.EvalOptions(), lambda q, g: 1.0 if q == g else 0.25
    )
    assert partial.micro["ndcg"] >= binary.micro["ndcg"]


def test_all_metric_outputs_in_unit_interval():
    rng = Rng(31)
    for _ in range(300):
        n = 1 + int(rng.random() * 10)
        bits = [int(rng.random() < 0.4) for _ in range(n)]
        if not any(bits):
            bits[int(rng.random() * n)] = 1
        total = sum(bits)
        k = 1 + int(rng.random() * n)
        for value in (
            vm.average_precision(bits),
            vm.pr_auc(vm.precision_recall_curve(bits)),
            vm.f_measure_at(bits, k, total),
            vm.ndcg_at([float(b) for b in bits], k),
        ):
            assert 0.0 <= value <= 1.0


def test_normalize_option_changes_only_scores_not_cosine_order():
    rng = Rng(5)
    vectors = rng.uniform(0.1, 1.0, (10, 4)).astype(np.float32)
    labels = [f"class{i % 2}" for i in range(10)]
    ids = [f"n{i}" for i in range(10)]
    ds = vm.DescriptorSet(ids, labels, vectors)
    plain = vm.evaluate_retrieval(ds, ds, vm.EvalOptions(normalize=False))
    normed = vm.evaluate_retrieval(ds, ds, vm.EvalOptions(normalize=True))
    # cosine already ignores magnitude, so metrics agree
    assert plain.micro["map"] == pytest.approx(normed.micro["map"])
