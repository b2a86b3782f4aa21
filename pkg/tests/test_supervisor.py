import io
import math

import numpy as np
import pytest

from laddr.core import DiameterVector, Mode, ReliabilityConfig, SchemaError
from laddr.metrics import AcceptanceCriterion, Cell
from laddr.supervisor import Sample, Supervisor, decision_log_csv, read_samples, supervise_stream


def _samples(table, predictor=None):
    preds = None if predictor is None else predictor(table.inputs)
    for i, row in enumerate(table.data):
        x = tuple(row[[6, 7]])
        yield Sample(i, x, float(row[8]), None if preds is None else float(preds[i]), float(row[2]))


def test_kb_rows_with_perfect_predictor_score_one(study):
    train = study.data.train
    decisions, summary = supervise_stream(_samples(train, lambda x: train.target), None, study.kb,
                                          study.config, study.criterion)
    assert all(d.score == 1.0 and d.accept for d in decisions)
    assert summary["metrics"]["degradation"] == 0.0 and summary["metrics"]["peril"] == 0.0


def test_replay_is_byte_identical(study):
    tab = study.data.d2_test.episode(int(study.data.d2_test.episodes[0]))
    logs = []
    for _ in range(2):
        decisions, _ = supervise_stream(_samples(tab), study.predictor, study.kb, study.config, study.criterion)
        logs.append(decision_log_csv(decisions, comment="replay"))
    assert logs[0] == logs[1]
    assert [int(line.split(",")[0]) for line in logs[0].splitlines()[2:]] == list(range(len(tab)))


def test_read_samples_reports_malformed_rows():
    text = "id,time,a,truth\n0,0.0,0.5,1\n1,1.0,oops,1\n2,2.0,0.5\n# note\n3,3.0,0.4,1\n"
    items = list(read_samples(io.StringIO(text), ["a"]))
    assert [type(i).__name__ for i in items] == ["Sample", "tuple", "tuple", "Sample"]
    assert items[1][0] == 2 and items[2][0] == 3
    with pytest.raises(SchemaError):
        list(read_samples(io.StringIO(text), ["missing"]))


def test_malformed_rows_skipped_stream_continues():
    from conftest import point_kb

    kb = point_kb([[0.5]])
    cfg = ReliabilityConfig(DiameterVector([0.2]), mode=Mode.INPUT_ONLY)
    text = "id,a\n0,0.5\n1,NaN\n2,0.5\n"
    sup = Supervisor(kb, cfg, predictor=lambda x: 0.0)
    decisions = list(sup.run(read_samples(io.StringIO(text), ["a"])))
    assert [d.sample_id for d in decisions] == ["0", "2"]
    assert sup.summary()["malformed_rows"] == [{"row": 2, "error": "non-finite input"}]


def test_predictor_failure_becomes_error_decision():
    from conftest import point_kb

    kb = point_kb([[0.5]])
    cfg = ReliabilityConfig(DiameterVector([0.2]), mode=Mode.INPUT_ONLY)

    def flaky(x):
        if x[0] > 0.7:
            raise RuntimeError("model offline")
        return 1.0

    sup = Supervisor(kb, cfg, AcceptanceCriterion(1.0), predictor=flaky)
    out = list(sup.run([Sample(0, (0.5,), 1.0), Sample(1, (0.9,), 1.0), Sample(2, (0.5,), 1.0)]))
    assert out[1].error == "predictor: model offline" and math.isnan(out[1].score) and not out[1].accept
    assert out[1].engaged_auxiliary and out[1].cell is None
    assert out[0].cell is Cell.ACCEPTED_CORRECT and out[2].accept
    s = sup.summary()
    assert s["decisions"] == 3 and s["predictor_errors"] == 1 and s["metrics"]["counts"]["A_o"] == 2


def test_no_truth_means_no_metrics():
    from conftest import point_kb

    kb = point_kb([[0.5]])
    cfg = ReliabilityConfig(DiameterVector([0.2]), mode=Mode.INPUT_ONLY)
    decisions, summary = supervise_stream([Sample(0, (0.5,))], lambda x: 0.0, kb, cfg)
    assert decisions[0].correct is None and summary["metrics"] is None


def test_distribution_shift_raises_degradation(study):
    def run(table):
        _, summary = supervise_stream(_samples(table), study.predictor, study.kb, study.config, study.criterion)
        return summary["metrics"]

    held = set(study.d1_episodes_heldout)
    d1 = study.data.d1_test
    from laddr.casestudy import EpisodeTable

    mask = np.isin(d1.column("episode").astype(int), list(held))
    m1, m2 = run(EpisodeTable(d1.data[mask])), run(study.data.d2_test)
    assert m2["degradation"] > m1["degradation"]
    c = m2["counts"]
    assert c["R_x"] / (c["R_x"] + c["A_x"]) >= 0.9


def test_mismatched_index_rejected(study):
    from laddr.index import build_index

    other = build_index(study.kb, study.config.with_diameters([0.5, 0.5, 0.5]).covariance, study.config.mode)
    with pytest.raises(SchemaError):
        Supervisor(study.kb, study.config, index=other)
