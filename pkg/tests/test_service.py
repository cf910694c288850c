import numpy as np
import pytest
from fastapi.testclient import TestClient

from parapet import __version__
from parapet.config import build_run_config
from parapet.runner import dispatch, field_from_payload
from parapet.service import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def test_healthz(client):
    r = client.get("/healthz")
    assert r.status_code == 200
    assert r.json() == {"status": "ok", "version": __version__}


def test_petrovskii_check_member(client):
    r = client.post("/petrovskii/check",
                    json={"matrix": [[2.0, 0.5], [0.5, 2.0]], "delta": 1.0})
    assert r.status_code == 200
    body = r.json()
    assert body["mode"] == "check-petrovskii"
    assert body["report"]["ok"] and body["report"]["member"]
    assert body["trace"] is None
    assert body["final_state"] is None


def test_petrovskii_check_violation_maps_to_422(client):
    r = client.post("/petrovskii/check",
                    json={"matrix": [[-1.0]], "delta": 0.5})
    assert r.status_code == 422
    err = r.json()["error"]
    assert err["kind"] == "PetrovskiiViolationError"
    assert err["exit_code"] == 4
    assert "admissible" in err["message"]
    # the partial report travels with the error body
    assert err["report"]["member"] is False


def test_run_endpoint_with_overrides_and_mode(client):
    r = client.post("/run", json={
        "config": "grid.n = 64\n",
        "overrides": {"lp.n_fields": "5"},
        "mode": "lp-calibrate",
    })
    assert r.status_code == 200
    body = r.json()
    assert body["mode"] == "lp-calibrate"
    assert body["report"]["version"] == __version__
    assert body["report"]["partition_defect"] < 1e-13


def test_run_endpoint_unknown_key_maps_to_400(client):
    r = client.post("/run", json={"overrides": {"grid.zz": "1"}})
    assert r.status_code == 400
    err = r.json()["error"]
    assert err["kind"] == "UsageError"
    assert err["exit_code"] == 2
    assert "grid.zz" in err["message"]


def test_solve_linear_final_state_matches_direct_dispatch(client):
    req = {
        "matrix": [[2.0, 0.5], [0.5, 2.0]],
        "horizon": 0.5,
        "dt": 0.01,
        "n": 32,
        "delta": 1.0,
    }
    r = client.post("/solve/linear", json=req)
    assert r.status_code == 200
    body = r.json()
    assert body["report"]["certificate_holds"]
    assert len(body["trace"]) == 51

    cfg = build_run_config({
        "mode": "solve-linear",
        "linear.matrix": "2.0 0.5; 0.5 2.0",
        "linear.delta": "1.0",
        "time.horizon": "0.5",
        "time.dt": "0.01",
        "grid.n": "32",
    })
    direct = dispatch(cfg)
    rebuilt = field_from_payload(body["final_state"])
    assert np.array_equal(rebuilt.coeffs, direct.final_field.coeffs)


def test_solve_nonlinear_small(client):
    r = client.post("/solve/nonlinear", json={
        "horizon": 0.2, "dt": 0.002, "n": 32,
    })
    assert r.status_code == 200
    body = r.json()
    assert body["report"]["completed"]
    assert body["report"]["reason"] == "horizon"
    assert body["final_state"]["ncomp"] == 2
    assert body["final_state"]["n"] == 32


def test_nonlinear_failure_maps_to_numeric_status(client):
    # data far outside the small-data regime collapses the horizon
    r = client.post("/solve/nonlinear", json={
        "horizon": 1.0, "dt": 0.001, "n": 32,
        "base": [100.0, 100.0], "amplitude": 10.0,
    })
    assert r.status_code == 422
    err = r.json()["error"]
    assert err["kind"] == "DataTooLargeError"
    assert err["exit_code"] == 5


def test_skt_structure_endpoint(client):
    r = client.post("/models/skt/structure", json={
        "horizon": 0.2, "dt": 0.002, "n": 32,
        "skt": {"a12": 0.5, "r1": 1.0, "r2": 0.8, "s11": 1.0, "s22": 1.0},
    })
    assert r.status_code == 200
    report = r.json()["report"]
    assert report["mode"] == "skt"
    assert report["split_ok"] and report["cone_ok"]
    assert report["completed"]


def test_lp_calibrate_endpoint_reads_lp_s(client):
    r = client.post("/lp/calibrate", json={"n": 64, "s": 2.5, "n_fields": 5})
    assert r.status_code == 200
    report = r.json()["report"]
    assert report["s"] == 2.5
    assert 0.0 < report["equiv_lower"] <= report["equiv_upper"]


def test_request_validation_error_is_fastapi_shaped(client):
    # missing required field: handled by the framework, not the error mapper
    r = client.post("/petrovskii/check", json={"delta": 1.0})
    assert r.status_code == 422
    assert "detail" in r.json()
