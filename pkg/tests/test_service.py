import numpy as np
import pytest

pytest.importorskip("fastapi")
from fastapi.testclient import TestClient

from darcygp import confidence as conf
from darcygp import pipeline, service


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    cfg = pipeline.RunConfig(
        s=8, d=16, n_train=128, calibration_levels=2, calibration_samples=16,
        qmc_nodes=256, qmc_replicates=2, workers=2,
    )
    return pipeline.run_full(cfg, tmp_path_factory.mktemp("svc"))


@pytest.fixture(scope="module")
def client(artifacts):
    bundle = service.load_bundle(artifacts["model_path"])
    return TestClient(service.create_app(bundle)), bundle


class TestEndpoints:
    def test_health(self, client):
        cli, bundle = client
        resp = cli.get("/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok", "config_hash": bundle.config_hash}

    def test_model_info_fields(self, client, artifacts):
        cli, bundle = client
        info = cli.get("/model-info").json()
        assert info["n"] == 128
        assert info["s"] == 8
        assert info["d"] == 16
        assert info["w"] == pytest.approx(0.031688)
        assert info["zeta"] == artifacts["model"].zeta
        assert info["config_hash"] == bundle.config_hash
        assert info["head_range"][0] < info["head_range"][1]
        assert "zeta_init" in info["fit"]

    def test_confidence_matches_library(self, client, artifacts):
        cli, bundle = client
        r, h = 0.01, 0.002
        got = cli.get("/confidence", params={"r": r, "h": h, "nodes": 256, "replicates": 2}).json()
        want = conf.expected_confidence(
            bundle.model, bundle.domain_map, r, h, n_nodes=256, replicates=2, seed=bundle.seed
        )
        assert got["estimate"] == want.estimate
        assert got["stderr"] == want.std_error

    def test_curve_matches_library(self, client):
        cli, bundle = client
        h = 0.0015
        rows = cli.get("/curve", params={"h": h, "points": 9, "nodes": 256, "replicates": 2}).json()
        grid = np.linspace(0.0, bundle.w, 9)
        want = conf.confidence_curve(
            bundle.model, bundle.domain_map, grid, h, n_nodes=256, replicates=2, seed=bundle.seed
        )
        assert [row["estimate"] for row in rows] == [c.estimate for c in want]
        assert [row["r"] for row in rows] == [c.rate for c in want]

    def test_heatmap_shape_and_monotonicity(self, client):
        cli, _ = client
        doc = cli.get("/heatmap", params={"rs": 5, "hs": 7, "nodes": 128, "replicates": 2}).json()
        values = np.asarray(doc["values"])
        assert values.shape == (5, 7)
        assert np.all(np.diff(values, axis=1) >= 0)
        assert len(doc["r_grid"]) == 5 and len(doc["h_grid"]) == 7

    def test_min_rate_consistent_with_curve(self, client):
        cli, bundle = client
        h, target = 0.002, 0.6
        rows = cli.get("/curve", params={"h": h, "points": 17, "nodes": 256, "replicates": 2}).json()
        got = cli.get("/min-rate", params={"h": h, "target": target, "points": 17, "nodes": 256, "replicates": 2}).json()
        above = [row["r"] for row in rows if row["estimate"] >= target]
        assert got["rate"] == (above[0] if above else None)


class TestErrors:
    def test_rate_out_of_domain_is_422(self, client):
        cli, bundle = client
        resp = cli.get("/confidence", params={"r": bundle.w * 1.5, "h": 0.0})
        assert resp.status_code == 422
        assert "outside" in resp.json()["detail"]

    def test_malformed_parameter_is_400(self, client):
        cli, _ = client
        resp = cli.get("/confidence", params={"r": "not-a-number", "h": 0.0})
        assert resp.status_code == 400

    def test_missing_parameter_is_400(self, client):
        cli, _ = client
        assert cli.get("/confidence").status_code == 400

    def test_bad_target_is_422(self, client):
        cli, _ = client
        assert cli.get("/min-rate", params={"h": 0.0, "target": 1.5}).status_code == 422

    def test_bad_node_count_is_422(self, client):
        cli, _ = client
        assert cli.get("/confidence", params={"r": 0.0, "h": 0.0, "nodes": 100}).status_code == 422


class TestCors:
    def test_cors_header_present(self, client):
        cli, _ = client
        resp = cli.get("/health", headers={"Origin": "http://localhost:5173"})
        assert resp.headers.get("access-control-allow-origin") in ("*", "http://localhost:5173")
