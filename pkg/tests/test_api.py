import numpy as np
import pytest
from fastapi.testclient import TestClient

from src.api.main import create_app
from src.monitoring.metrics_collector import InferenceMetrics
from src.persistence.imaging import decode_rgb, encode_png


@pytest.fixture
def metrics():
    return InferenceMetrics()


@pytest.fixture
def client(xxs_model, metrics):
    return TestClient(create_app(xxs_model, "grayscale", metrics))


@pytest.fixture
def upload(rng):
    png = encode_png(rng.random((1, 3, 48, 80), dtype=np.float32))
    return {"image": ("scene.png", png, "image/png")}


def test_health(client, xxs_model):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "healthy"
    assert body["variant"] == "XXS"
    assert body["input_size"] == "64x64"
    assert body["params"] == xxs_model.param_count


def test_infer_returns_colormapped_png(client, upload, metrics):
    response = client.post("/api/v1/depth/infer", files=upload)
    assert response.status_code == 200
    assert response.headers["content-type"] == "image/png"
    image = decode_rgb(response.content)
    assert image.shape == (1, 3, 32, 32)
    low, high = float(response.headers["X-Depth-Min"]), float(response.headers["X-Depth-Max"])
    assert 0.1 <= low <= high <= 10.0
    assert float(response.headers["X-Latency-Ms"]) >= 0.0
    assert metrics.snapshot()["meter_forward_total{variant=XXS}"] == 1.0


def test_grayscale_output_is_gray(client, upload):
    image = decode_rgb(client.post("/api/v1/depth/infer", files=upload).content)
    np.testing.assert_array_equal(image[0, 0], image[0, 1])


def test_stats(client, upload):
    response = client.post("/api/v1/depth/stats", files=upload)
    assert response.status_code == 200
    body = response.json()
    assert body["input_size"] == "64x64"
    assert body["output_size"] == "32x32"
    assert body["min_m"] <= body["mean_m"] <= body["max_m"]
    assert body["depth_range"] == [0.1, 10.0]


def test_undecodable_upload(client, metrics):
    response = client.post("/api/v1/depth/infer", files={"image": ("x.png", b"not an image", "image/png")})
    assert response.status_code == 400
    assert response.json()["code"] == "DecodeError"
    assert "meter_forward_total{variant=XXS}" not in metrics.snapshot()


def test_unknown_colormap(client, upload):
    response = client.post("/api/v1/depth/infer", params={"colormap": "jet"}, files=upload)
    assert response.status_code == 400
    assert response.json()["code"] == "InvalidInputError"


def test_profile_route(client):
    response = client.get("/api/v1/profile/xs", params={"input_size": "636x192"})
    assert response.status_code == 200
    body = response.json()
    assert body["variant"] == "XS"
    assert body["working_size"] == [192, 640]
    assert body["macs_total"] > 0


@pytest.mark.parametrize(
    "path,code",
    [
        ("/api/v1/profile/m", "ConfigurationError"),
        ("/api/v1/profile/s?input_size=99x100", "UsageError"),
    ],
)
def test_profile_rejects_bad_arguments(client, path, code):
    response = client.get(path)
    assert response.status_code == 400
    assert response.json()["code"] == code


def test_model_size_published(client, metrics, xxs_model):
    assert metrics.snapshot()["meter_model_params{variant=XXS}"] == xxs_model.param_count
