import json
import math

import numpy as np
import pytest
from scipy import stats

from icudo.bench import (
    BenchConfig,
    emit_table,
    paired_eff_diff,
    parse_table_csv,
    result_table,
    run_bench,
    simulate_sample,
)
from icudo.cli import load_preset_or_path, preset_names
from icudo.errors import DataError
from icudo.hoeffding import HoeffdingComponents, mse_complete


def small_config(**over):
    raw = {
        "name": "small",
        "kernel": {"name": "product2"},
        "samples": [{"dist": "normal", "n": 30, "mean": 1.0, "cov": 1.0}],
        "estimators": [
            {"label": "RND", "scheme": "icur"},
            {"label": "DC", "scheme": "dc"},
            {"label": "oa", "scheme": "icudo", "t": 2, "partition": "sort"},
            {"label": "oa-deb", "scheme": "icudo", "t": 2, "partition": "sort", "debiased": True},
        ],
        "m_grid": {"m": [10, 60, 200]},
        "replicates": 20,
        "seed": 5,
        "theta": 1.0,
    }
    raw.update(over)
    return BenchConfig.from_dict(raw)


@pytest.fixture(scope="module")
def small_result():
    return run_bench(small_config())


def test_stats_identities(small_result):
    res = small_result
    assert res.ref_source == "complete-mc"
    for s in res.stats:
        for j in range(3):
            if s.mse[j] is None:
                continue
            assert s.mse[j] == pytest.approx(s.bias[j] ** 2 + s.variance[j], rel=1e-9)
            assert s.mse_se[j] > 0 and s.eff_se[j] > 0
            assert s.eff[j] == pytest.approx(res.ref_mse / s.mse[j])


def test_unavailable_cells(small_result):
    dc = small_result.by_label("DC")
    assert dc.mse[0] is None and dc.mse[1] is not None
    table = result_table(small_result)
    i = table.header.index("DC:eff")
    assert table.rows[0][i] == "-"


def test_realized_m(small_result):
    oa = small_result.by_label("oa")
    assert oa.m == [9, 64, 196]
    assert small_result.by_label("RND").m == [10, 60, 200]


def test_worker_count_does_not_change_output(small_result):
    again = run_bench(small_config(), workers=2)
    assert emit_table(again) == emit_table(small_result)
    assert np.array_equal(again.values["oa"], small_result.values["oa"])


def test_paired_difference_matches_table(small_result):
    res = small_result
    diff, se = paired_eff_diff(res, "oa-deb", "RND", 2)
    assert diff == pytest.approx(res.by_label("oa-deb").eff[2] - res.by_label("RND").eff[2])
    assert se > 0


def test_table_formats(small_result):
    table = result_table(small_result)
    csv_text = emit_table(table, "csv")
    assert csv_text.startswith("# small: reference MSE")
    back = parse_table_csv(csv_text)
    assert emit_table(back, "csv") == csv_text
    md = emit_table(table, "markdown")
    assert "| m_target | m/n | ref_mse | RND:m |" in md
    doc = json.loads(emit_table(table, "json"))
    assert len(doc["rows"]) == 3 and doc["columns"] == table.header
    with pytest.raises(DataError):
        emit_table(table, "xml")


def test_paper_style_caps_efficiency(small_result):
    capped = result_table(small_result, paper_style=True)
    i = capped.header.index("oa-deb:eff")
    assert all(float(r[i]) <= 1 for r in capped.rows)


def test_empty_estimator_list_gives_header_only():
    res = run_bench(small_config(estimators=[], replicates=2))
    text = emit_table(res, "csv")
    assert text.splitlines()[1:] == ["m_target,m/n,ref_mse"]


def test_fixed_reference_is_labelled():
    res = run_bench(small_config(
        estimators=[{"label": "RND", "scheme": "icur"}], replicates=3,
        reference={"mode": "fixed", "mse": 0.1, "note": "published value"},
    ))
    assert res.ref_source == "fixed: published value"
    assert "fixed: published value" in emit_table(res, "csv").splitlines()[0]


def test_reference_modes_agree():
    # product kernel x1 x2 x3 under N(1, 1): delta^2 = (1, 1, 1)
    raw = {
        "kernel": {"name": "product3"},
        "samples": [{"dist": "normal", "n": 50, "mean": 1.0, "cov": 1.0}],
        "estimators": [],
        "m_grid": {"m": [10]},
        "replicates": 2000,
        "seed": 11,
        "theta": 1.0,
    }
    res = run_bench(BenchConfig.from_dict(raw))
    err2 = (res.u0 - 1.0) ** 2
    se = err2.std(ddof=1) / math.sqrt(err2.size)
    analytic = mse_complete(50, (3,), HoeffdingComponents.one_sample([1, 1, 1]))
    assert abs(res.ref_mse - analytic) < 3 * se
    raw["reference"] = {"mode": "analytic", "delta2": [1, 1, 1]}
    assert run_bench(BenchConfig.from_dict(raw)).ref_mse == pytest.approx(analytic)


def test_efficiency_increases_with_m():
    raw = {
        "kernel": {"name": "product2"},
        "samples": [{"dist": "normal", "n": 200, "mean": 1.0, "cov": 1.0}],
        "estimators": [{"label": "oa", "scheme": "icudo", "t": 2, "partition": "sort"}],
        "m_grid": {"m_over_n": [0.1, 0.25, 0.5, 1, 2, 4, 8]},
        "replicates": 500,
        "seed": 3,
        "theta": 1.0,
    }
    res = run_bench(BenchConfig.from_dict(raw))
    eff = res.by_label("oa").eff
    rho, p = stats.spearmanr(res.m_targets, eff)
    assert rho > 0 and p < 0.01


def test_table2_shape():
    cfg = BenchConfig.from_dict(dict(load_preset_or_path("table2"), replicates=2))
    res = run_bench(cfg)
    table = result_table(res)
    assert [r[1] for r in table.rows] == ["0.005", "0.01", "0.05", "0.1", "0.5", "1"]
    assert [s.label for s in res.stats] == ["RND", "oa2", "oa3"]


def test_two_sample_and_auto_tune():
    raw = {
        "kernel": {"name": "rank-hinge"},
        "samples": [{"dist": "normal", "n": 40}, {"dist": "normal", "n": 40, "mean": 1.0}],
        "estimators": [
            {"label": "RND", "scheme": "icur"},
            {"label": "oa", "scheme": "icudo", "debiased": True, "auto_tune": True, "boots": 500, "probes": 500},
        ],
        "m_grid": {"m": [25, 100]},
        "replicates": 3,
        "theta": "complete-mean",
    }
    res = run_bench(BenchConfig.from_dict(raw))
    assert res.by_label("oa").m == [25, 100]
    assert all(v is not None for v in res.by_label("RND").mse)


@pytest.mark.parametrize("change,msg", [
    ({"replicates": 1}, "replicates"),
    ({"bogus": 1}, "unknown config keys"),
    ({"reference": {"mode": "fixed", "mse": 1.0}}, "provenance"),
    ({"reference": {"mode": "analytic"}}, "delta2"),
    ({"m_grid": {"m": [1], "m_over_n": [1]}}, "exactly one"),
    ({"estimators": [{"scheme": "bibd"}]}, "scheme"),
    ({"estimators": [{"scheme": "icur"}, {"scheme": "icur"}]}, "duplicate"),
    ({"samples": [{"dist": "cauchy", "n": 5}]}, "distribution"),
    ({"samples": [{"dist": "normal", "n": 5}] * 2}, "sample"),
    ({"theta": None, "reference": {"mode": "analytic", "delta2": [1, 1]}}, "theta"),
])
def test_config_validation(change, msg):
    with pytest.raises(DataError, match=msg):
        small_config(**change)
    with pytest.raises(DataError):
        BenchConfig.from_dict({})


def test_simulated_distributions():
    r = np.random.default_rng(0)
    x = simulate_sample({"dist": "normal", "n": 20_000, "mean": [0, 0], "cov": [3, 1]}, r)
    assert np.allclose(np.cov(x.T), np.diag([3, 1]), atol=0.1)
    full = simulate_sample({"dist": "normal", "n": 20_000, "mean": [0, 0], "cov": [[1, 0.5], [0.5, 1]]}, r)
    assert np.cov(full.T)[0, 1] == pytest.approx(0.5, abs=0.05)
    u = simulate_sample({"dist": "uniform", "n": 1000, "low": 2, "high": 3}, r)
    assert u.min() >= 2 and u.max() < 3
    a, b = 3.0, 2.0
    p = simulate_sample({"dist": "pareto", "n": 5000, "a": a, "b": b}, r)[:, 0]
    assert p.min() >= b
    assert stats.kstest(1 - (b / p) ** a, "uniform").pvalue > 1e-3


@pytest.mark.parametrize("name", preset_names())
def test_presets_validate(name):
    cfg = BenchConfig.from_dict(load_preset_or_path(name))
    assert cfg.replicates >= 2 and cfg.m_targets()


def test_expected_presets_exist():
    assert {f"table{i}" for i in range(1, 8)} <= set(preset_names())
