import numpy as np
import pytest

from app.core.config import PROJECT_ROOT, load_config
from fusion.attributes import AttributeCatalog
from fusion.classification import ClassBank, ClassDefinition
from fusion.distributions import Gaussian, Rayleigh

CONFIG_PATH = PROJECT_ROOT / "config" / "config.json"


def make_classes():
    """The three ship classes of the experiment"""
    table = [(1, 5.0, 4.0, 15.0), (2, 15.0, 2.0, 10.0), (3, 30.0, 0.5, 5.0)]
    return [
        ClassDefinition(
            class_id=cid,
            name=f"Class {cid}",
            speed=Gaussian(mean=v, sigma=3.0),
            amplitude=Rayleigh(sigma=a),
            length=Gaussian(mean=length, sigma=2.0),
        )
        for cid, v, a, length in table
    ]


def make_length_catalog(measurement_sigma: float = 5.0) -> AttributeCatalog:
    sigma = float(np.sqrt(2.0 ** 2 + measurement_sigma ** 2))
    outcomes = [
        {
            "name": name,
            "prior": 1.0 / 3.0,
            "class_id": cid,
            "likelihood": {"field": "length", "distribution": {"kind": "gaussian", "mean": mean, "sigma": sigma}},
        }
        for name, cid, mean in (("long", 1, 15.0), ("medium", 2, 10.0), ("short", 3, 5.0))
    ]
    return AttributeCatalog.model_validate(
        {
            "attributes": {
                "length": {"outcomes": outcomes},
                "number_of_emitters": {"outcomes": [{"name": "one", "prior": 0.5}, {"name": "several", "prior": 0.5}]},
            }
        }
    )


@pytest.fixture
def classes():
    return make_classes()


@pytest.fixture
def bank(classes):
    return ClassBank(classes)


@pytest.fixture
def length_catalog():
    return make_length_catalog()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def config_path():
    return CONFIG_PATH


@pytest.fixture(scope="session")
def shipped_config():
    return load_config(CONFIG_PATH)
