import numpy as np
import pytest

from trajeval.errors import ValidationError
from trajeval.metrics import (
    BinaryHeadReport,
    MetricsReport,
    average_ranks,
    binary_metrics,
    relative_l2,
    render_report_table,
    srcc,
)


def rank_brute(values):
    """Average ranks by explicit pairwise counting."""
    out = []
    for x in values:
        less = sum(1 for y in values if y < x)
        equal = sum(1 for y in values if y == x)
        out.append(less + (equal + 1) / 2.0)
    return out


def srcc_brute(g, p):
    rg, rp = rank_brute(g), rank_brute(p)
    n = len(g)
    mg, mp = sum(rg) / n, sum(rp) / n
    num = sum((a - mg) * (b - mp) for a, b in zip(rg, rp))
    den = (sum((a - mg) ** 2 for a in rg) * sum((b - mp) ** 2 for b in rp)) ** 0.5
    return num / den


def auc_brute(labels, probs):
    """Exhaustive pairwise comparison, ties worth one half."""
    pos = [p for y, p in zip(labels, probs) if y]
    neg = [p for y, p in zip(labels, probs) if not y]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return 100.0 * wins / (len(pos) * len(neg))


def test_average_ranks_with_ties():
    assert average_ranks([3.0, 1.0, 3.0, 2.0]).tolist() == [3.5, 1.0, 3.5, 2.0]


def test_srcc_known_cases():
    assert srcc([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert srcc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert srcc([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)


def test_srcc_monotone_transform_invariance():
    rng = np.random.default_rng(5)
    g = rng.normal(size=30)
    p = rng.normal(size=30)
    base = srcc(g, p)
    assert srcc(np.exp(g), p) == pytest.approx(base, abs=1e-12)
    assert srcc(g, 3.0 * p + 11.0) == pytest.approx(base, abs=1e-12)


def test_srcc_constant_vector_is_an_error():
    with pytest.raises(ValidationError):
        srcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValidationError):
        srcc([1.0, 2.0], [5.0, 5.0])


def test_srcc_matches_brute_force_with_ties():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        # coarse grid forces ties
        g = rng.integers(0, 5, size=n).astype(float)
        p = rng.integers(0, 5, size=n).astype(float)
        if len(set(g)) < 2 or len(set(p)) < 2:
            continue
        assert srcc(g, p) == pytest.approx(srcc_brute(g, p), abs=1e-9)


def test_relative_l2_known_case():
    assert relative_l2([1.0, 10.0], [1.0, 10.0]) == 0.0
    assert relative_l2([1.0, 10.0], [1.0, 5.0]) == pytest.approx(1250.0 / 81.0, abs=1e-9)


def test_relative_l2_affine_invariance():
    rng = np.random.default_rng(23)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        g = rng.uniform(0, 10, size=n)
        g[0], g[1] = 0.0, 10.0  # nonzero range
        p = rng.uniform(0, 10, size=n)
        base = relative_l2(g, p)
        a, b = 2.5, -7.0
        assert relative_l2(a * g + b, a * p + b) == pytest.approx(base, rel=1e-9)


def test_relative_l2_zero_range_is_an_error():
    with pytest.raises(ValidationError):
        relative_l2([4.0, 4.0], [1.0, 2.0])


def test_binary_metrics_known_confusion():
    # TP=2, FP=1, FN=1, TN=1
    labels = [True, True, True, False, False]
    probs = [0.9, 0.8, 0.1, 0.7, 0.2]
    rep = binary_metrics(labels, probs)
    assert rep.acc == pytest.approx(60.0)
    assert rep.f1 == pytest.approx(200.0 / 3.0, abs=1e-9)


def test_binary_metrics_perfect_separation_and_ties():
    rep = binary_metrics([True, True, False, False], [0.9, 0.8, 0.2, 0.1])
    assert rep.auc == pytest.approx(100.0)
    rep = binary_metrics([True, False, True, False], [0.5, 0.5, 0.5, 0.5])
    assert rep.auc == pytest.approx(50.0)


def test_binary_metrics_errors():
    with pytest.raises(ValidationError):
        binary_metrics([], [])
    with pytest.raises(ValidationError):
        binary_metrics([True, True], [0.4, 0.6])  # single class: AUC undefined
    with pytest.raises(ValidationError):
        binary_metrics([True, False], [0.4, 1.5])


def test_auc_matches_exhaustive_pairwise():
    rng = np.random.default_rng(31)
    for _ in range(100):
        n = int(rng.integers(2, 60))
        labels = rng.random(n) < 0.5
        if labels.all() or not labels.any():
            continue
        probs = np.round(rng.random(n), 1)  # rounding makes ties common
        rep = binary_metrics(labels, probs)
        assert rep.auc == pytest.approx(auc_brute(labels, probs), abs=1e-9)


def test_f1_zero_when_no_positive_predictions():
    rep = binary_metrics([True, False], [0.1, 0.2], threshold=0.5)
    assert rep.f1 == 0.0


def test_acc_invariant_under_joint_complementation():
    rng = np.random.default_rng(41)
    labels = rng.random(50) < 0.5
    labels[0], labels[1] = True, False
    probs = rng.random(50)  # continuous draws never hit the 0.5 boundary
    a = binary_metrics(labels, probs).acc
    b = binary_metrics(~labels, 1.0 - probs).acc
    assert a == pytest.approx(b, abs=1e-9)


def test_report_table_layout():
    rows = {
        "success": MetricsReport(srcc=0.5, r_l2=1.0, acc=90.0, f1=91.0, auc=92.0),
        "source": MetricsReport(srcc=0.5, r_l2=1.0, acc=99.0, f1=98.0, auc=97.0),
    }
    table = render_report_table(rows)
    assert "SRCC" in table and "R_l2" in table and "AUC(%)" in table
    assert table.count("\n") == 4

    assert isinstance(binary_metrics([True, False], [0.9, 0.1]), BinaryHeadReport)
