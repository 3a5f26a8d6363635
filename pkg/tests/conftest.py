"""Shared test fixtures for the set-top box simulator."""

import copy
import random
import sys
from pathlib import Path

import pytest

# Ensure src is importable
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from src.cas_engine.models import SECONDS_PER_DAY, UsageConstraints
from src.common.config import settings
from src.measured_boot.boot import boot
from src.measured_boot.models import BootManifest
from src.measured_boot.reference import ReferenceTable
from src.provider_services.models import ChargingModel
from src.sim_harness.runner import World, build_world
from src.sim_harness.scenario import ScenarioConfig
from src.tpm_core.manufacturer import Manufacturer
from src.tpm_core.tpm import Tpm

FIXTURES = PROJECT_ROOT / "fixtures"
SCENARIOS = PROJECT_ROOT / "config" / "scenarios"

OWNER_AUTH = bytes(range(settings.tpm.owner_auth_bytes))

BASE_SCENARIO = {
    "name": "unit",
    "seed": 5,
    "fixtures": {
        "reference": "fixtures/reference_pcrs.yaml",
        "catalog": "fixtures/firmware_catalog.yaml",
    },
    "endpoints": {
        "pca": "pca",
        "auditor": "auditor",
        "time_authority": "tsa",
        "manufacturers": [{"id": "acme"}],
        "providers": [{
            "name": "vendor-1",
            "services": [
                {"stream_id": 1, "description": "News"},
                {"stream_id": 2, "description": "Sports", "cas_id": "cas-b", "online_gated": True},
            ],
            "tariffs": {"prepaid": 2, "postpaid": 3},
        }],
        "charging": [{"name": "mno"}],
        "update_services": [{"name": "updates"}],
        "secondary_devices": [{"name": "phone"}],
        "boxes": [
            {"name": "box-1", "manufacturer": "acme", "manifest": "fixtures/boot/stb100_v1.yaml",
             "customer_id": "customer-test-0001", "deposit": 100, "charging": "mno"},
            {"name": "box-2", "manufacturer": "acme", "manifest": "fixtures/boot/stb100_v1.yaml",
             "customer_id": "customer-test-0002", "deposit": 100, "charging": "mno"},
        ],
    },
}


def scenario_dict(**overrides) -> dict:
    """Deep copy of the base scenario with top-level keys replaced."""
    data = copy.deepcopy(BASE_SCENARIO)
    data.update(overrides)
    return data


def make_world(**overrides) -> World:
    return build_world(ScenarioConfig.from_dict(scenario_dict(**overrides)))


@pytest.fixture
def project_root() -> Path:
    return PROJECT_ROOT


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)


@pytest.fixture
def manufacturer() -> Manufacturer:
    return Manufacturer("acme", random.Random("manufacturer"))


@pytest.fixture
def tpm(manufacturer: Manufacturer) -> Tpm:
    """Fresh, unowned TPM."""
    return manufacturer.manufacture_tpm("stb-100", random.Random("tpm"))


@pytest.fixture
def owned_tpm(tpm: Tpm) -> Tpm:
    tpm.take_ownership(OWNER_AUTH)
    return tpm


@pytest.fixture
def manifest() -> BootManifest:
    return BootManifest.from_yaml(FIXTURES / "boot" / "stb100_v1.yaml")


@pytest.fixture
def manifest_v2() -> BootManifest:
    return BootManifest.from_yaml(FIXTURES / "boot" / "stb100_v2.yaml")


@pytest.fixture
def reference() -> ReferenceTable:
    return ReferenceTable.from_yaml(FIXTURES / "reference_pcrs.yaml")


@pytest.fixture
def booted_tpm(owned_tpm: Tpm, manifest: BootManifest) -> Tpm:
    boot(owned_tpm, manifest.images)
    return owned_tpm


@pytest.fixture
def world() -> World:
    """Base world: PCA, auditor, TSA, one provider, charging, updates, a relay and two boxes."""
    return make_world()


@pytest.fixture
def enrolled_world(world: World) -> World:
    for box in world.boxes.values():
        box.take_ownership_online()
    world.net.run_until_quiet()
    return world


def day_constraints(world: World, days: int = 1, **kwargs) -> UsageConstraints:
    now = world.net.now()
    return UsageConstraints(now, now + days * SECONDS_PER_DAY, **kwargs)


def subscribe(
    world: World,
    box: str = "box-1",
    stream_id: int = 1,
    model: ChargingModel = ChargingModel.PREPAID,
    provider: str = "vendor-1",
) -> None:
    """Register ``box`` for a stream and install a one-day entitlement."""
    stb = world.box(box)
    stb.register(provider, stream_id, model)
    stb.request_entitlement(provider, stream_id, day_constraints(world))
    world.net.run_until_quiet()
