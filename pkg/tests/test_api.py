import numpy as np
import pytest
from fastapi.testclient import TestClient

from app.errors import NearSingularityError
from app.main import app
from app.routers import capacity as capacity_router

V1 = {"slits": [{"vertices": [[0.0, 0.0], [0.0, 1.0]]}]}
MIRROR = {"slits": [{"vertices": [[-1.0, 0.0], [-1.0, 1.0]]}, {"vertices": [[1.0, 0.0], [1.0, 1.0]]}]}


@pytest.fixture
def client():
    with TestClient(app) as c:
        yield c


def test_root_and_health(client):
    assert client.get("/").json()["status"] == "healthy"
    health = client.get("/health").json()
    assert health["default_grid"] == 129
    assert health["tilted_steps"] is False


def test_chain_capacity(client):
    response = client.post("/capacity/chain", json={"multislit": V1})
    assert response.status_code == 200
    body = response.json()
    assert body["chain"]["value"] == pytest.approx(0.5, rel=1e-6)
    assert body["chain"]["method"] == "chain"


def test_empty_multislit_is_rejected(client):
    response = client.post("/capacity/chain", json={"multislit": {"slits": []}})
    assert response.status_code == 422


def test_invalid_multislit_detail(client):
    clash = {"slits": [{"vertices": [[0, 0], [0, 1]]}, {"vertices": [[0, 0], [0, 0.5]]}]}
    response = client.post("/fit", json={"multislit": clash})
    assert response.status_code == 422
    assert response.json()["detail"]["error"] == "InvalidMultiSlitError"


def test_numerical_error_maps_to_500(client, monkeypatch):
    def broken(m):
        raise NearSingularityError("probe too close to a slit", {"distance": 1e-13})

    monkeypatch.setattr(capacity_router, "hcap_chain", broken)
    response = client.post("/capacity/chain", json={"multislit": V1})
    assert response.status_code == 500
    assert response.json()["detail"]["diagnostics"] == {"distance": 1e-13}


def test_single_slit_driving(client):
    response = client.post("/driving/single", json={"slit": V1["slits"][0], "grid": 64})
    assert response.status_code == 200
    body = response.json()
    assert body["T"] == pytest.approx(0.25, abs=1e-6)
    assert len(body["times"]) == 64
    assert np.abs(body["U"]).max() <= 1e-4
    assert body["weights"][0] == [1.0]


def test_trace_constant_driving(client):
    response = client.post("/driving/trace", json={"T": 0.25, "U": [[0.0] * 33]})
    assert response.status_code == 200
    tip = response.json()["slits"][0]["vertices"][-1]
    assert tip == pytest.approx([0.0, 1.0], abs=1e-2)


def test_trace_rejects_ragged_driving(client):
    response = client.post("/driving/trace", json={"T": 1.0, "U": [[0.0, 0.0], [0.0]]})
    assert response.status_code == 422


def test_fit_single_slit(client):
    response = client.post("/fit", json={"multislit": V1})
    assert response.status_code == 200
    body = response.json()
    assert body["fits"][0]["lambda"] == [1.0]
    assert body["agreement"] is None


@pytest.mark.slow
def test_fit_mirror_pair(client):
    response = client.post("/fit", json={"multislit": MIRROR, "levels": 6})
    assert response.status_code == 200
    fit = response.json()["fits"][0]
    assert fit["method"] == "bangbang"
    assert fit["lambda"][0] == pytest.approx(0.5, abs=1e-3)
    # monotone and subadditive: hcap lies between one slit and two
    assert 0.25 < fit["T"] < 0.5
