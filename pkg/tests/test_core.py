import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laddr.core import (
    CovarianceStructure,
    DiameterVector,
    DimensionError,
    FeatureScaler,
    KnowledgeBase,
    LaddrError,
    Mode,
    ReliabilityConfig,
    Schema,
    SchemaError,
    build_knowledge_base,
    load_knowledge_base,
    read_raw_csv,
    save_knowledge_base,
    solve_covariance,
)
from laddr.index import build_index
from laddr.reliability import reliability


def test_build_endpoints_map_to_unit_interval():
    kb = build_knowledge_base([(0.0,), (10.0,)], Schema.from_names(["x"]), created="")
    assert kb.scaler.minimum.tolist() == [0.0]
    assert kb.scaler.maximum.tolist() == [10.0]
    assert kb.points[:, 0].tolist() == [0.0, 1.0]


def test_constant_column_rejected():
    with pytest.raises(LaddrError, match="constant"):
        build_knowledge_base([(5.0,)], Schema.from_names(["x"]))


def test_empty_input_rejected():
    with pytest.raises(LaddrError, match="empty input"):
        build_knowledge_base([], Schema.from_names(["x"]))


def test_non_finite_reports_location():
    with pytest.raises(LaddrError, match=r"row 1, column 'b'"):
        build_knowledge_base([(0.0, 1.0), (1.0, float("nan"))], Schema.from_names(["a", "b"]))


def test_row_width_checked():
    with pytest.raises(DimensionError):
        build_knowledge_base([(0.0, 1.0), (1.0,)], Schema.from_names(["a", "b"]))


def test_case_study_kb_has_three_features(study):
    kb = study.kb
    assert kb.dim == 3
    assert kb.schema.names == ["up_temp", "core_flow", "t_fcl"]
    assert kb.schema.target_name == "t_fcl"
    assert np.all(kb.points >= 0) and np.all(kb.points <= 1)
    n_d1 = len(study.data.d1_profiles)
    assert len(study.data.train_episodes) == round(0.1 * n_d1)


def test_duplicates_kept_and_order_preserved():
    rows = [(1.0, 2.0), (0.0, 0.0), (1.0, 2.0), (2.0, 4.0)]
    kb = build_knowledge_base(rows, Schema.from_names(["a", "b"]))
    assert kb.count == 4
    np.testing.assert_array_equal(kb.points[0], kb.points[2])
    np.testing.assert_allclose(kb.scaler.denormalize(kb.points), rows)


def test_kb_is_read_only():
    kb = build_knowledge_base([(0.0,), (1.0,)], Schema.from_names(["x"]))
    with pytest.raises(ValueError):
        kb.points[0, 0] = 3.0
    with pytest.raises(AttributeError):
        kb.points = np.zeros((2, 1))


def test_projection_by_mode():
    kb = build_knowledge_base([(0, 0, 0), (1, 2, 3)], Schema.from_names(["a", "b"], "y"))
    assert kb.project(Mode.INPUT_ONLY).shape == (2, 2)
    assert kb.project(Mode.INPUT_PLUS_TARGET).shape == (2, 3)
    no_target = build_knowledge_base([(0, 0), (1, 2)], Schema.from_names(["a", "b"]))
    with pytest.raises(SchemaError):
        no_target.project(Mode.INPUT_PLUS_TARGET)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(0.001, 1e6)), min_size=1, max_size=5),
       st.data())
def test_scaler_round_trips(bounds, data):
    lo = np.array([b[0] for b in bounds])
    hi = lo + np.array([b[1] for b in bounds])
    scaler = FeatureScaler(lo, hi)
    raw = np.array([data.draw(st.floats(l, h)) for l, h in zip(lo, hi)])
    back = scaler.denormalize(scaler.normalize(raw))
    assert np.all(np.abs(back - raw) <= 1e-12 * np.maximum(np.abs(hi), np.abs(lo)).clip(min=1.0))
    norm = np.array([data.draw(st.floats(0.0, 1.0)) for _ in lo])
    again = scaler.normalize(scaler.denormalize(norm))
    assert np.all(np.abs(again - norm) <= 1e-12 * np.maximum(np.abs(hi), np.abs(lo)).clip(min=1.0) / (hi - lo))


def test_scaler_rejects_equal_bounds():
    with pytest.raises(LaddrError):
        FeatureScaler([0.0, 1.0], [1.0, 1.0])


def test_solve_covariance_single_point_example():
    V = solve_covariance(DiameterVector([0.36]), 0.2)
    assert V.betas[0] == pytest.approx(0.050033, abs=1e-6)
    assert math.exp(-2 * 0.18 / math.sqrt(V.betas[0])) == pytest.approx(0.2, abs=1e-12)


def test_solve_covariance_unit():
    assert solve_covariance([math.log(5.0)], 0.2).betas[0] == pytest.approx(1.0, rel=1e-15)


def test_solve_covariance_table2_peril_row():
    V = solve_covariance([0.0254, 0.0254, 0.064], 0.2)
    np.testing.assert_allclose(V.betas, [0.000249069, 0.000249069, 0.00158129], rtol=1e-5)
    # per-axis radius check against an isolated point
    for n, g in enumerate([0.0254, 0.0254, 0.064]):
        q = np.zeros(3)
        q[n] = g / 2
        d = math.sqrt(q[n] ** 2 / V.betas[n])
        assert math.exp(-2 * d) == pytest.approx(0.2, abs=1e-12)


@pytest.mark.parametrize("bad", [[0.0], [-0.1], [float("inf")], [float("nan")]])
def test_solve_covariance_rejects_bad_diameters(bad):
    with pytest.raises(LaddrError):
        solve_covariance(bad, 0.2)


@pytest.mark.parametrize("L", [0.0, 1.0, -0.5, 1.5])
def test_solve_covariance_rejects_bad_threshold(L):
    with pytest.raises(LaddrError):
        solve_covariance([0.1], L)


@given(st.floats(1e-4, 10.0), st.floats(1e-4, 10.0))
def test_solve_covariance_strictly_monotone(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert solve_covariance([hi], 0.2).betas[0] > solve_covariance([lo], 0.2).betas[0]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-3, 2.0), min_size=1, max_size=4), st.floats(0.01, 0.99), st.data())
def test_half_diameter_round_trip_scores_decay_threshold(gammas, L, data):
    n = len(gammas)
    axis = data.draw(st.integers(0, n - 1))
    center = np.full(n, 0.5)
    kb = KnowledgeBase.from_normalized(center.reshape(1, -1), Schema.from_names([f"f{i}" for i in range(n)]))
    index = build_index(kb, solve_covariance(gammas, L))
    q = center.copy()
    q[axis] += gammas[axis] / 2
    assert reliability(q, index).value == pytest.approx(L, abs=1e-9)


def test_reliability_config_validation():
    d = DiameterVector([0.1])
    cfg = ReliabilityConfig(d)
    assert cfg.decay_threshold == 0.2 and cfg.accept_threshold == 0.5 and cfg.scale_factor == 0.5
    assert cfg.mode is Mode.INPUT_PLUS_TARGET
    for kwargs in ({"decay_threshold": 1.0}, {"decay_threshold": 0.0}, {"accept_threshold": 1.0},
                   {"accept_threshold": 0.0}):
        with pytest.raises(LaddrError):
            ReliabilityConfig(d, **kwargs)
    with pytest.raises(TypeError):
        ReliabilityConfig(d, scale_factor=0.3)


def test_covariance_structure_equality():
    a = CovarianceStructure([1.0, 2.0])
    assert a == CovarianceStructure([1.0, 2.0])
    assert a != CovarianceStructure([1.0, 2.5])
    with pytest.raises(LaddrError):
        CovarianceStructure([1.0, 0.0])


def test_save_load_round_trip(tmp_path, rng):
    raw = rng.normal(size=(50, 3)) * [1e3, 1e-3, 7.0]
    kb = build_knowledge_base(raw, Schema.from_names(["a", "b"], "y"), source="unit", created="2026-01-01T00:00:00")
    hp, cp = save_knowledge_base(kb, tmp_path / "demo")
    assert hp.name == "demo.kb.json" and cp.name == "demo.kb.csv"
    header = json.loads(hp.read_text())
    assert header["schema"][2] == {"name": "y", "role": "target"}
    assert header["metadata"] == {"source": "unit", "created": "2026-01-01T00:00:00", "count": 50}
    back = load_knowledge_base(hp)
    assert back.schema == kb.schema
    np.testing.assert_array_equal(back.points, kb.points)
    np.testing.assert_array_equal(back.scaler.minimum, kb.scaler.minimum)
    np.testing.assert_array_equal(back.scaler.maximum, kb.scaler.maximum)
    # 15 significant digits is the contract; repr gives exact round trips
    np.testing.assert_allclose(back.points, kb.points, rtol=1e-15, atol=0)


def test_load_rejects_mismatched_columns(tmp_path):
    kb = build_knowledge_base([(0, 0), (1, 1)], Schema.from_names(["a", "b"]))
    hp, cp = save_knowledge_base(kb, tmp_path / "k")
    cp.write_text(cp.read_text().replace("a,b", "a,c"))
    with pytest.raises(SchemaError):
        load_knowledge_base(hp)


def test_read_raw_csv_selects_columns(tmp_path):
    p = tmp_path / "raw.csv"
    p.write_text("# comment\nx,y,z\n1,2,3\n4,5,6\n")
    names, arr = read_raw_csv(p, ["z", "x"])
    assert names == ["z", "x"]
    assert arr.tolist() == [[3.0, 1.0], [6.0, 4.0]]
    with pytest.raises(SchemaError):
        read_raw_csv(p, ["w"])
