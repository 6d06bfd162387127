import json
import math
from pathlib import Path

import pytest

import appraisal

ROOT = Path(__file__).resolve().parents[2]
DEMO = ROOT / "data" / "demo"


def demo_config(tmp_path, strategies='"10 ex. mixed"', sample=30):
    text = f"""name = "py"
seed = 0
test_sample = {sample}
strategies = [{strategies}]
datasets = ["{DEMO / 'dataset.toml'}"]
reports_dir = "{DEMO / 'reports'}"
geocode_cache = "{DEMO / 'geocode.tsv'}"
cache_dir = "{tmp_path / 'cache'}"
output_dir = "{tmp_path / 'out'}"

[[endpoints]]
name = "comp-median"
kind = "mock"
behavior = "comp-median"

[baselines]
knn = ["10 ex. mixed"]
knn_aggregation = "median"
gbt = false
gbt_without_xy = false
enbpi = false
shapley = false
"""
    path = tmp_path / "run.toml"
    path.write_text(text)
    return path


def test_haversine_quarter_meridian():
    d = appraisal.haversine(0.0, 0.0, 90.0, 0.0)
    assert d == pytest.approx(math.pi / 2 * 6371.0088, rel=1e-9)
    assert appraisal.haversine(47.6, -122.3, 47.6, -122.3) == 0.0
    with pytest.raises(appraisal.DataError):
        appraisal.haversine(95.0, 0.0, 0.0, 0.0)


def test_parsers():
    assert appraisal.parse_price("The price is 450,000 USD.", "USD") == 450000.0
    assert appraisal.parse_price("I cannot say.", "USD") is None
    assert appraisal.parse_price("1.250.000 €", "EUR") == 1250000.0
    assert appraisal.parse_interval("400,000 - 500,000 USD") == (400000.0, 500000.0, False)
    lo, hi, swapped = appraisal.parse_interval("500,000 - 400,000 USD")
    assert (lo, hi, swapped) == (400000.0, 500000.0, True)
    assert appraisal.parse_features("Grade, LAT, garage", ["grade", "lat", "view"]) == ["grade", "lat"]


def test_strategies_match_names():
    names = appraisal.strategy_names()
    assert len(names) == 12 == len(set(names))
    assert [s["name"] for s in appraisal.strategies()] == names


def test_metrics():
    m, std, n_valid, n_invalid = appraisal.mape([100.0, 200.0, 50.0], [110.0, 180.0, None])
    assert m == pytest.approx(0.10)
    assert std == pytest.approx(0.10)
    assert (n_valid, n_invalid) == (2, 1)
    cov, mpiw, n_valid, _ = appraisal.interval_metrics([100.0, 100.0], [(90.0, 110.0), (120.0, 130.0)])
    assert cov == pytest.approx(50.0)
    assert mpiw == pytest.approx(15.0)


def test_reference_tables_render():
    t2, t3 = appraisal.render_tables(str(ROOT / "tests" / "fixtures" / "reference_results.json"))
    assert t2 == (ROOT / "tests" / "fixtures" / "reference_table2.txt").read_text()
    assert t3 == (ROOT / "tests" / "fixtures" / "reference_table3.txt").read_text()


def test_grid_mock_equals_knn_median(tmp_path):
    reports = appraisal.run_grid(demo_config(tmp_path), write_outputs=False)
    by_model = {r["model"]: r for r in reports}
    assert by_model["comp-median"]["mape"] == by_model["kNN"]["mape"]


def test_appraiser_round_trip(tmp_path):
    a = appraisal.Appraiser(demo_config(tmp_path))
    request = {
        "dataset": "demo",
        "strategy": "10 ex. mixed",
        "property": {
            "lat": 47.61, "lon": -122.25, "date": "2015-01-10",
            "features": {"bedrooms": 3, "bathrooms": 2, "sqft_living": 1800, "sqft_lot": 5000, "floors": 1,
                         "waterfront": "0", "view": 0, "condition": 3, "grade": 7, "yr_built": 1978},
        },
    }
    status, body = a.appraise(request)
    assert status == 200
    prices = sorted(c["price"] for c in body["comparables"])
    assert body["price"]["value"] == pytest.approx((prices[4] + prices[5]) / 2)

    request["property"]["lat"] = 95
    status, body = a.appraise(request)
    assert status == 400
    assert body["fields"][0]["field"] == "property.lat"

    comps = a.comparables(47.61, -122.25, mode="geo", k=3)
    assert len(comps["comparables"]) == 3


def test_config_error_is_typed(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('seed = "zero"\n')
    with pytest.raises(appraisal.ConfigError):
        appraisal.run_grid(bad)
