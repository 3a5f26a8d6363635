"""Runs every bundled scenario and checks its declared verdicts."""

import pytest

from src.sim_harness.adversary import FakeTpmBox
from src.sim_harness.runner import OK
from src.sim_harness.scenario import ScenarioConfig
from src.sim_harness.simulation import run_scenario
from tests.conftest import SCENARIOS

BUNDLED = sorted(SCENARIOS.glob("*.yaml"))


def _failures(report) -> list[str]:
    return [f"{a.name}: {a.detail}" for a in report.assertions if not a.passed]


class TestBundledScenarios:
    def test_all_eleven_present(self):
        assert len(BUNDLED) == 11

    @pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
    def test_scenario_passes(self, path):
        report, _ = run_scenario(ScenarioConfig.from_yaml(path))
        assert report.passed, _failures(report)
        assert report.queue_empty


class TestScenarioDetails:
    """Spot checks beyond the declared assertions."""

    def test_e2e_purchase_meters_every_period(self):
        report, world = run_scenario(ScenarioConfig.from_yaml(SCENARIOS / "e2e-purchase.yaml"))
        box = world.box("box-1")
        assert box.state.prepaid_charged == 200
        assert box.state.voucher_total == 400
        assert all(o.result == OK for o in report.outcomes)
        assert world.playbacks[-1].periods == 100

    def test_report_names_crypto_schemes(self):
        report, _ = run_scenario(ScenarioConfig.from_yaml(SCENARIOS / "multi-cas.yaml"))
        assert report.to_dict()["crypto"] == {
            "signature_scheme": "ed25519",
            "encryption_scheme": "x25519-hkdf-aesgcm",
            "compat_label": "rsa-1024",
        }

    def test_fake_tpm_never_gets_a_credential(self):
        _, world = run_scenario(ScenarioConfig.from_yaml(SCENARIOS / "fake-tpm.yaml"))
        fakes = [name for name, box in world.boxes.items() if isinstance(box, FakeTpmBox)]
        assert len(fakes) == 3
        for name in fakes:
            assert world.pca.issued[name] == 0
            assert world.box(name).identity_label is None

    def test_tamper_boot_blocks_keys(self):
        _, world = run_scenario(ScenarioConfig.from_yaml(SCENARIOS / "tamper-boot.yaml"))
        verdicts = [v for p in world.providers.values() for _, v in p.verifier.verdicts]
        assert any(not v.trusted for v in verdicts)

    def test_eavesdropper_sees_no_identity(self):
        _, world = run_scenario(ScenarioConfig.from_yaml(SCENARIOS / "eavesdrop-privacy.yaml"))
        captured = [d for a in world.adversaries for d in getattr(a, "captured", [])]
        assert captured
        for box in world.boxes.values():
            assert all(box.customer_id.encode() not in d.payload for d in captured)
