import pytest
from hypothesis import given
from hypothesis import strategies as st

from laddr.core import DiameterVector, LaddrError, ReliabilityConfig
from laddr.metrics import (
    AcceptanceCriterion,
    Cell,
    ConfusionCounts,
    classify,
    degradation,
    dumps_report,
    ineptitude,
    metrics_report,
    peril,
    tally,
)

# report rows: correct accept, correct reject, incorrect accept, incorrect reject
D1_ROW = (13825, 4084, 635, 931)
D2_ROW = (6865, 3487, 400, 3783)


@pytest.mark.parametrize("row,expect", [
    (D1_ROW, (0.043914, 0.063093, 0.080411)),
    (D2_ROW, (0.055058, 0.355278, 0.287788)),
])
def test_reported_table_rows(row, expect):
    c = ConfusionCounts.from_table_row(*row)
    got = (peril(c), degradation(c), ineptitude(c))
    assert got == pytest.approx(expect, abs=1e-6)
    # reported to 0.1 percentage points
    assert [round(100 * v, 1) for v in got] == [round(100 * v, 1) for v in expect]


def test_table_row_decoding():
    c = ConfusionCounts.from_table_row(1, 2, 3, 4)
    assert (c.accepted_correct, c.rejected_incorrect, c.accepted_incorrect, c.rejected_correct) == (1, 2, 3, 4)


def test_undefined_ratios_are_none():
    everything_rejected = ConfusionCounts(rejected_correct=3, rejected_incorrect=2)
    assert peril(everything_rejected) is None
    assert degradation(everything_rejected) == 1.0
    all_wrong = ConfusionCounts(accepted_incorrect=2, rejected_incorrect=5)
    assert degradation(all_wrong) is None
    empty = ConfusionCounts()
    assert peril(empty) is None and degradation(empty) is None and ineptitude(empty) is None
    rep = metrics_report(empty)
    assert rep["peril"] is None and '"peril": null' in dumps_report(rep)


def test_counts_validation_and_arithmetic():
    with pytest.raises(LaddrError):
        ConfusionCounts(accepted_correct=-1)
    with pytest.raises(LaddrError):
        ConfusionCounts(accepted_correct=1.5)
    c = ConfusionCounts(1, 2, 3, 4) + ConfusionCounts(1, 1, 1, 1)
    assert c == ConfusionCounts(2, 3, 4, 5) and c.total == 14
    assert ConfusionCounts().add(Cell.REJECTED_CORRECT) == ConfusionCounts(rejected_correct=1)


CFG = ReliabilityConfig(DiameterVector([0.1]), accept_threshold=0.5)
EPS = AcceptanceCriterion(10.0)


@pytest.mark.parametrize("pred,truth,score,cell", [
    (100.0, 105.0, 0.49, Cell.REJECTED_CORRECT),
    (100.0, 115.0, 0.5, Cell.ACCEPTED_INCORRECT),
    (100.0, 110.0, 0.5, Cell.ACCEPTED_CORRECT),
    (100.0, 130.0, 0.1, Cell.REJECTED_INCORRECT),
])
def test_classify_boundaries(pred, truth, score, cell):
    assert classify(pred, truth, score, CFG, EPS) is cell


def test_classify_rejects_non_finite():
    with pytest.raises(LaddrError):
        classify(float("nan"), 1.0, 0.9, CFG, EPS)
    with pytest.raises(LaddrError):
        AcceptanceCriterion(0.0)


def test_tally_matches_classify(rng):
    n = 400
    scores = rng.uniform(0, 1, n)
    preds = rng.normal(0, 10, n)
    truths = rng.normal(0, 10, n)
    c = tally(scores, preds, truths, 0.5, EPS)
    manual = ConfusionCounts()
    for s, p, t in zip(scores, preds, truths):
        manual = manual.add(classify(p, t, s, CFG, EPS))
    assert c == manual and c.total == n


counts = st.builds(ConfusionCounts, *[st.integers(0, 10_000)] * 4)


@given(counts)
def test_ratio_ranges_and_identity(c):
    p, d, i = peril(c), degradation(c), ineptitude(c)
    for v in (p, d, i):
        assert v is None or 0.0 <= v <= 1.0
    if c.total:
        assert i * c.total == pytest.approx(c.accepted_incorrect + c.rejected_correct)
        if p is not None and d is not None:
            # both error kinds combine into ineptitude
            n_acc = c.accepted_correct + c.accepted_incorrect
            n_ok = c.accepted_correct + c.rejected_correct
            assert i == pytest.approx((p * n_acc + d * n_ok) / c.total)
