"""HTTP service endpoints through the ASGI test client."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from mobicast import data as dt
from mobicast.service import ServiceState, create_app


@pytest.fixture(scope="module")
def client(tiny_fit_module):
    res, panel = tiny_fit_module
    state = ServiceState.build(res.params, res.stats, panel)
    return TestClient(create_app(state))


@pytest.fixture(scope="module")
def tiny_fit_module():
    from mobicast import model as md
    from mobicast import train as tr

    panel = dt.synth_generate(dt.SynthConfig(n_regions=4, days=80, seed=5))
    cfg = tr.TrainConfig(epochs=4, window=7, seed=1)
    mcfg = md.ModelConfig(
        n_regions=4, window=7, gcn_dims=(8, 8), hidden_case=8, hidden_mob=8,
        attn_dim=4, adj_hidden=(8, 8), dec_hidden=8,
    )
    return tr.fit(panel, cfg, mcfg), panel


class TestRegions:
    def test_lists_all_regions(self, client):
        r = client.get("/regions")
        assert r.status_code == 200
        regions = r.json()["regions"]
        assert len(regions) == 4
        assert {"id", "name", "population"} <= set(regions[0])


class TestModel:
    def test_config_stats_attention(self, client):
        r = client.get("/model")
        assert r.status_code == 200
        body = r.json()
        assert body["config"]["n_regions"] == 4
        assert body["attention"]["enabled"] is True
        assert len(body["attention"]["case_stream"]) == 7
        assert sum(body["attention"]["case_stream"]) == pytest.approx(1.0, abs=1e-9)
        assert body["attention"]["offsets"][0] == -7
        assert "daily" in body["normalization"]


class TestForecast:
    def test_shape(self, client):
        r = client.post("/forecast", json={"horizon": 10})
        assert r.status_code == 200
        body = r.json()
        assert len(body["dates"]) == 10
        assert len(body["daily"]) == 10
        assert len(body["daily"][0]) == 4
        assert all(v >= 0 for row in body["daily"] for v in row)

    def test_malformed_body_400_with_field(self, client):
        r = client.post("/forecast", json={"horizon": "soon"})
        assert r.status_code == 400
        assert any("horizon" in d["field"] for d in r.json()["details"])

    def test_zero_horizon_400(self, client):
        r = client.post("/forecast", json={"horizon": 0})
        assert r.status_code == 400

    def test_excessive_horizon_422(self, client):
        r = client.post("/forecast", json={"horizon": 10000})
        assert r.status_code == 422


class TestScenario:
    def test_empty_transforms_zero_deltas(self, client):
        r = client.post("/scenario", json={"transforms": [], "horizon": 8})
        assert r.status_code == 200
        assert all(d == 0.0 for d in r.json()["delta"])

    def test_scale_scenario_payload(self, client):
        r = client.post(
            "/scenario",
            json={
                "transforms": [{"kind": "scale", "factor": 0.5}],
                "horizon": 8,
                "label": "halve",
            },
        )
        assert r.status_code == 200
        body = r.json()
        assert body["label"] == "halve"
        assert len(body["delta"]) == 4
        np.testing.assert_allclose(
            np.array(body["scenario_cases"]) - np.array(body["baseline_cases"]),
            np.array(body["delta"]),
            rtol=1e-12,
        )
        assert len(body["daily"]["dates"]) == 8

    def test_isolate_with_dates(self, client):
        r = client.post(
            "/scenario",
            json={
                "transforms": [
                    {"kind": "isolate", "region": "R01", "start": "2021-03-25"}
                ],
                "horizon": 8,
            },
        )
        assert r.status_code == 200

    def test_unknown_region_400(self, client):
        r = client.post(
            "/scenario",
            json={"transforms": [{"kind": "isolate", "region": "XX"}], "horizon": 5},
        )
        assert r.status_code == 400

    def test_unknown_kind_400(self, client):
        r = client.post(
            "/scenario", json={"transforms": [{"kind": "teleport"}], "horizon": 5}
        )
        assert r.status_code == 400

    def test_identical_requests_identical_bodies(self, client):
        payload = {
            "transforms": [{"kind": "scale", "factor": 0.7}],
            "horizon": 6,
        }
        a = client.post("/scenario", json=payload)
        b = client.post("/scenario", json=payload)
        assert a.json() == b.json()

    def test_eval_window_before_seed_422(self, client):
        r = client.post(
            "/scenario",
            json={
                "transforms": [],
                "horizon": 5,
                "eval_start": "2020-01-01",
                "eval_end": "2020-01-05",
            },
        )
        assert r.status_code == 422


class TestConcurrency:
    def test_parallel_scenario_requests_agree(self, client):
        from concurrent.futures import ThreadPoolExecutor

        payload = {"transforms": [{"kind": "scale", "factor": 0.5}], "horizon": 6}

        def call(_):
            return client.post("/scenario", json=payload).json()

        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(call, range(4)))
        assert all(r == results[0] for r in results)
