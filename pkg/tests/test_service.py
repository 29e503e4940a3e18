import warnings

import numpy as np
import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore", DeprecationWarning)
    from fastapi.testclient import TestClient

from tsnopt.harness import gen_traffic, scenario_from_mapping
from tsnopt.optimizer import run_scheme
from tsnopt.service import app


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


class TestHealth:
    def test_healthz(self, client):
        response = client.get("/healthz")
        assert response.status_code == 200
        assert response.json()["status"] == "ok"


class TestSolve:
    def test_matches_direct_run(self, client):
        response = client.post("/solve", json={"seed": 0, "scheme": 1})
        assert response.status_code == 200
        body = response.json()
        direct = run_scheme(scenario_from_mapping({}), gen_traffic(5, 1e4, 0), 1)
        assert body["feasible"]
        assert body["efficiency_bits_per_J"] == pytest.approx(
            direct.efficiency, rel=1e-12)
        assert body["k_star"] == direct.vars.k_star + 1
        assert body["n0"] == direct.vars.n0
        assert set(body["breakdown"]) == {
            "caching", "computing", "ground_tx", "balloon_tx", "satellite_tx",
            "laser_static", "laser_dynamic", "laser_launch", "total",
            "throughput", "efficiency"}
        assert body["min_slack"] >= -1e-8

    def test_scenario_overrides_apply(self, client):
        response = client.post("/solve", json={
            "seed": 0, "scheme": 3,
            "scenario": {"num_satellites": 3, "max_serving_periods": 4}})
        assert response.status_code == 200
        assert response.json()["n0"] == 1.0

    def test_explicit_traffic(self, client):
        traffic = np.zeros((5, 5))
        traffic[0, 4] = traffic[4, 0] = 1e4
        response = client.post("/solve", json={
            "scheme": 2, "traffic": traffic.tolist()})
        assert response.status_code == 200
        assert response.json()["alpha"] == 0.5

    def test_traffic_size_mismatch_rejected(self, client):
        response = client.post("/solve", json={
            "traffic": [[0.0, 1.0], [1.0, 0.0]]})
        assert response.status_code == 422

    def test_bad_scenario_key_rejected(self, client):
        response = client.post("/solve", json={"scenario": {"bogus": 1}})
        assert response.status_code == 422

    def test_bad_scheme_rejected(self, client):
        response = client.post("/solve", json={"scheme": 4})
        assert response.status_code == 422

    def test_infeasible_reported_as_payload(self, client):
        response = client.post("/solve", json={
            "scenario": {"computing_pool_cps": 1.0}})
        assert response.status_code == 200
        body = response.json()
        assert not body["feasible"]
        assert body["efficiency_bits_per_J"] is None


class TestSchedule:
    def test_stms_cover_traffic_and_matrices_valid(self, client):
        response = client.post("/schedule", json={"seed": 0, "scheme": 1})
        assert response.status_code == 200
        body = response.json()
        assert body["feasible"]
        traffic = gen_traffic(5, 1e4, 0)
        total = np.sum([np.asarray(m) for m in body["stms"]], axis=0)
        np.testing.assert_allclose(total, traffic.bits, rtol=1e-9)
        assert "relay plan" in body["text"]
        for segment in body["segments"]:
            for pattern in segment["matrices"]:
                p = np.asarray(pattern)
                assert p.sum(axis=0).max(initial=0) <= 1
                assert p.sum(axis=1).max(initial=0) <= 1


class TestSweep:
    def test_cardinality_and_metadata(self, client):
        response = client.post("/sweep", json={
            "axis": "n_max", "values": [1, 2], "schemes": [3],
            "seed": 5, "reps": 2, "theta_bits": 1e3})
        assert response.status_code == 200
        body = response.json()
        assert len(body["rows"]) == 4
        assert body["metadata"]["seed"] == 5
        assert body["metadata"]["prng"] == "numpy-pcg64"
        for row in body["rows"]:
            assert set(row) == {
                "axis_name", "axis_value", "scheme", "rep",
                "efficiency_bits_per_J", "n0", "m_bar", "alpha", "k_star",
                "feasible", "walltime_s"}

    def test_bad_axis_rejected(self, client):
        response = client.post("/sweep", json={"axis": "voltage"})
        assert response.status_code == 422

    def test_unsorted_values_rejected(self, client):
        response = client.post("/sweep", json={
            "axis": "n_max", "values": [3, 1], "schemes": [3]})
        assert response.status_code == 422


class TestSelftest:
    def test_passes(self, client):
        response = client.post("/selftest", json={})
        assert response.status_code == 200
        body = response.json()
        assert body["passed"]
        names = {c["name"] for c in body["checks"]}
        assert "coefficient_bits" in names
        assert all(c["ok"] for c in body["checks"])
