import numpy as np
import pytest
from conftest import make_ds
from hypothesis import given
from hypothesis import strategies as st
from oracles import brute_knn

from edtl.config import DataConfig, ExperimentConfig
from edtl.dataset import AnomalySpec
from edtl.harness import (REPORT_COLUMNS, ExperimentReport, HarnessError, Record,
                          knn_predict, knn_predict_batch, mape, mape_detail,
                          read_report_csv, run_direct, run_sweep, svg_line_chart,
                          write_report_csv)
from edtl.nn import TrainConfig

TINY = ExperimentConfig(data=DataConfig(n_source=600, n_target=150),
                        train=TrainConfig(epochs=2), hidden=(8, 8, 8, 8, 8),
                        seeds=(1,), fractions=(0.5, 1.0), methods=("direct", "knn"))


def test_mape_hand_cases():
    assert mape([100, 200], [110, 180]) == pytest.approx(10.0, rel=1e-14)
    assert mape([3.0, -2.0], [3.0, -2.0]) == 0.0


def test_mape_exclusion_and_errors():
    m, excluded = mape_detail([0.0, 100.0], [5.0, 110.0])
    assert (m, excluded) == (pytest.approx(10.0), 1)
    with pytest.raises(HarnessError):
        mape([0.0, 1e-9], [1.0, 1.0])
    with pytest.raises(HarnessError):
        mape([1.0, 2.0], [1.0])


@given(st.lists(st.floats(0.1, 1e3), min_size=1, max_size=20), st.floats(0.01, 100),
       st.integers(0, 1000))
def test_mape_scale_invariant_and_non_negative(y, c, seed):
    y = np.array(y)
    yhat = y * np.random.default_rng(seed).uniform(0.5, 1.5, len(y))
    assert mape(y, yhat) >= 0
    assert mape(c * y, c * yhat) == pytest.approx(mape(y, yhat), rel=1e-9)


def test_knn_cases(rng):
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    ds = make_ds(X, y)
    assert knn_predict(ds, rng.normal(size=3), 30) == pytest.approx(y.mean(), rel=1e-12)
    assert knn_predict(ds, X[7], 1) == y[7]
    with pytest.raises(HarnessError):
        knn_predict(make_ds(np.empty((0, 3)), []), X[0], 1)
    with pytest.raises(HarnessError):
        knn_predict(ds, X[0], 31)


def test_knn_ties_by_row_index():
    ds = make_ds([[1.0], [-1.0], [1.0]], [10.0, 20.0, 30.0])
    assert knn_predict(ds, [0.0], 1) == 10.0
    assert knn_predict(ds, [0.0], 2) == 15.0


@pytest.mark.parametrize("seed", range(5))
def test_knn_matches_brute_force(seed):
    r = np.random.default_rng(seed)
    X, y = r.normal(size=(50, 4)), r.normal(size=50)
    Q = r.normal(size=(10, 4))
    got = knn_predict_batch(make_ds(X, y), Q, 5)
    np.testing.assert_allclose(got, [brute_knn(X, y, q, 5) for q in Q], rtol=1e-13)


def test_direct_on_toy_line():
    r = np.random.default_rng(0)
    x = r.uniform(1, 2, 400)
    tr, te = make_ds(x[:300], 2 * x[:300]), make_ds(x[300:], 2 * x[300:])
    res = run_direct(tr, te, TrainConfig(epochs=30, seed=1), hidden=(16, 16))
    assert res.mape_percent < 2.0
    again = run_direct(tr, te, TrainConfig(epochs=30, seed=1), hidden=(16, 16))
    assert again.mape_percent == res.mape_percent


def test_sweep_cardinality_and_round_trip(tmp_path):
    rep = run_sweep(TINY, tmp_path)
    assert len(rep.records) == 4 and not rep.failures
    assert {r.condition for r in rep.records} == {"clean"}
    assert rep.degradation() == {}
    back = read_report_csv(tmp_path / "report.csv")
    assert back.records == rep.records
    header = (tmp_path / "report.csv").read_text().splitlines()[0]
    assert header == ",".join(REPORT_COLUMNS)
    assert (tmp_path / "charts" / "mape_E_clean.svg").is_file()


def test_sweep_with_anomalies_has_degradation():
    cfg = TINY.override(anomaly=AnomalySpec(), fractions=(1.0,), methods=("knn", "direct"))
    rep = run_sweep(cfg)
    assert len(rep.records) == 4
    assert set(rep.degradation()) == {("direct", "E", 1.0), ("knn", "E", 1.0)}


def test_degradation_only_when_both_conditions_ran():
    recs = [Record("direct", "E", 0.2, "clean", 1, 5.0, 0),
            Record("direct", "E", 0.2, "anomalous", 1, 6.5, 0),
            Record("knn", "E", 0.2, "clean", 1, 9.0, 0)]
    assert ExperimentReport(recs).degradation() == {("direct", "E", 0.2): 1.5}


def test_failed_legs_are_recorded_and_sweep_continues():
    # with no hidden layers there is nothing to transfer, so that leg fails
    cfg = TINY.override(methods=("knn", "transfer"), fractions=(1.0,), hidden=())
    rep = run_sweep(cfg)
    assert [r.method for r in rep.records] == ["knn"]
    assert [f.method for f in rep.failures] == ["transfer"]


def test_paired_test_sets(monkeypatch):
    seen = []
    import edtl.harness as h
    real = h._result

    def spy(method, y, yhat, t0):
        seen.append((method, y.tobytes()))
        return real(method, y, yhat, t0)

    monkeypatch.setattr(h, "_result", spy)
    run_sweep(TINY.override(fractions=(0.5,)))
    assert len({b for _, b in seen}) == 1 and len(seen) == 2


def test_sweep_wall_time_switch():
    rep = run_sweep(TINY.override(record_wall_time=False, fractions=(1.0,)))
    assert all(r.wall_ms == 0 for r in rep.records)


def test_aggregates_stdev():
    recs = [Record("knn", "E", 1.0, "clean", s, v, 0) for s, v in ((1, 2.0), (2, 4.0))]
    mean, sd, n = ExperimentReport(recs).aggregates()[("knn", "E", 1.0, "clean")]
    assert (mean, n) == (3.0, 2)
    assert sd == pytest.approx(np.sqrt(2.0))


def test_report_csv_rejects_wrong_columns(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("method,mape\nknn,1\n")
    with pytest.raises(HarnessError):
        read_report_csv(p)


def test_report_csv_exact_round_trip(tmp_path):
    recs = [Record("edtl", "M", 0.2, "anomalous", 3, 1 / 3, 17),
            Record("direct", "M", 0.2, "clean", 3, 2.0000000000000004, 5)]
    write_report_csv(ExperimentReport(recs), tmp_path / "r.csv")
    assert read_report_csv(tmp_path / "r.csv").records == sorted(recs, key=lambda r: r.key)


def test_svg_chart_is_well_formed():
    import xml.etree.ElementTree as ET
    svg = svg_line_chart({"a<b": [(0.2, 3.0), (0.4, 2.0)], "c": [(0.2, 1.0), (0.4, 1.5)]}, "t")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 2


def test_compare_sources_uses_identical_target_data():
    from edtl.harness import compare_sources
    c = compare_sources(TINY, "B", "E", 0.5)
    assert c.transfer_gap == c.transfer_bad - c.transfer_good
    assert min(c.transfer_good, c.transfer_bad, c.edtl_good, c.edtl_bad) > 0
