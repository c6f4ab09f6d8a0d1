import numpy as np
import pytest

from model_server.models import load_model


@pytest.fixture(scope="session")
def resnet50_random():
    return load_model("resnet50", weights="random")


@pytest.fixture(scope="session")
def pretrained_resnet50():
    try:
        return load_model("resnet50", weights="pretrained")
    except Exception as exc:
        pytest.skip(f"pretrained resnet50 unavailable in this environment: {exc}")


def random_batch(n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.random((n, 3, 224, 224)).astype(np.float32)
