"""Tests for transcript files, offline verification and the CLI."""

import json

import pytest
import yaml

from src.common.errors import ConfigError, FixtureMissing
from src.crypto_envelope.wire import MsgType, WireMessage, encode
from src.sim_harness.main import main
from src.sim_harness.network import Delivery
from src.sim_harness.runner import build_world, run_events
from src.sim_harness.scenario import ScenarioConfig
from src.sim_harness.simulation import run_scenario
from src.sim_harness.transcript import (
    format_line,
    read_sidecar,
    sidecar_path,
    verify_transcript,
    write_transcript,
)
from tests.conftest import SCENARIOS, scenario_dict

E2E = SCENARIOS / "e2e-purchase.yaml"


@pytest.fixture(scope="module")
def e2e_run():
    return run_scenario(ScenarioConfig.from_yaml(E2E))


class TestTranscriptFiles:
    def test_write_and_verify(self, tmp_path, e2e_run):
        report, world = e2e_run
        path = write_transcript(tmp_path / "e2e.txt", world.net.transcript)
        assert sidecar_path(path).exists()
        check = verify_transcript(path)
        assert check.ok, check.problems
        assert check.deliveries == report.deliveries

    def test_line_format(self, e2e_run):
        _, world = e2e_run
        first = format_line(world.net.transcript[0])
        seq, sender, arrow, receiver, name, hexdigest = first.split()
        assert (seq, sender, arrow, receiver, name) == ("000001", "box-1", "->", "pca", "ENROLL_REQUEST")
        assert len(hexdigest) == 64

    def test_sidecar_round_trip(self, tmp_path, e2e_run):
        _, world = e2e_run
        path = write_transcript(tmp_path / "e2e.txt", world.net.transcript)
        assert read_sidecar(sidecar_path(path)) == world.net.transcript

    def test_edited_line_detected(self, tmp_path, e2e_run):
        _, world = e2e_run
        path = write_transcript(tmp_path / "e2e.txt", world.net.transcript)
        lines = path.read_text().splitlines()
        lines[3] = lines[3][:-1] + ("0" if lines[3][-1] != "0" else "1")
        path.write_text("\n".join(lines) + "\n")
        check = verify_transcript(path)
        assert not check.ok
        assert any("seq 4" in p for p in check.problems)

    def test_dropped_line_detected(self, tmp_path, e2e_run):
        _, world = e2e_run
        path = write_transcript(tmp_path / "e2e.txt", world.net.transcript)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[1:]) + "\n")
        assert not verify_transcript(path).ok

    def test_missing_sidecar(self, tmp_path, e2e_run):
        _, world = e2e_run
        path = write_transcript(tmp_path / "e2e.txt", world.net.transcript)
        sidecar_path(path).unlink()
        with pytest.raises(FixtureMissing):
            verify_transcript(path)

    def test_truncated_sidecar(self, tmp_path, e2e_run):
        _, world = e2e_run
        path = write_transcript(tmp_path / "e2e.txt", world.net.transcript)
        side = sidecar_path(path)
        side.write_bytes(side.read_bytes()[:-5])
        check = verify_transcript(path)
        assert not check.ok

    def test_ungated_voucher_flagged(self, tmp_path):
        voucher = encode(WireMessage(MsgType.DEPOSIT_VOUCHER, (b"ct",)))
        path = write_transcript(tmp_path / "t.txt", [Delivery(1, "mno", "box-1", voucher)])
        check = verify_transcript(path)
        assert any("without prior attestation" in p for p in check.problems)

    def test_private_section_flagged(self, tmp_path):
        private = encode(WireMessage(MsgType.TPM_PRIVATE_SECTION, (b"k",)))
        path = write_transcript(tmp_path / "t.txt", [Delivery(1, "box-1", "pca", private)])
        check = verify_transcript(path)
        assert any("TPM_PRIVATE_SECTION" in p for p in check.problems)

    def test_bundled_adversary_runs_verify(self, tmp_path):
        report, _ = run_scenario(
            ScenarioConfig.from_yaml(SCENARIOS / "replay-attack.yaml"), transcript_path=tmp_path / "r.txt",
        )
        assert verify_transcript(report.transcript_path).ok


class TestScenarioErrors:
    def test_duplicate_endpoint_names(self):
        data = scenario_dict()
        data["endpoints"]["charging"] = [{"name": "vendor-1"}]
        with pytest.raises(ConfigError, match="duplicate"):
            ScenarioConfig.from_dict(data)

    def test_schema_violation(self):
        data = scenario_dict()
        del data["endpoints"]["boxes"]
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict(data)

    def test_missing_fixture(self):
        data = scenario_dict()
        data["endpoints"]["boxes"][0]["manifest"] = "fixtures/boot/none.yaml"
        with pytest.raises(FixtureMissing):
            build_world(ScenarioConfig.from_dict(data))

    def test_unknown_event_op(self):
        world = build_world(ScenarioConfig.from_dict(scenario_dict(events=[{"op": "teleport"}])))
        with pytest.raises(ConfigError, match="teleport"):
            run_events(world)

    def test_bad_pull_scope(self):
        events = [{"op": "pull", "charging": "mno", "box": "box-1", "scope": "some"}]
        world = build_world(ScenarioConfig.from_dict(scenario_dict(events=events)))
        with pytest.raises(ConfigError):
            run_events(world)

    def test_unknown_adversary(self):
        with pytest.raises(ConfigError):
            build_world(ScenarioConfig.from_dict(scenario_dict(adversaries=[{"kind": "Wormhole"}])))

    def test_error_outcome_is_recorded(self):
        events = [{"op": "register", "box": "box-1", "provider": "vendor-1", "stream": 1, "expect": "InactiveAik"}]
        report, _ = run_scenario(ScenarioConfig.from_dict(scenario_dict(events=events)))
        assert report.outcomes[0].result == "InactiveAik"
        assert report.passed

    def test_failed_assertion_fails_report(self):
        assertions = [{"check": "deposit", "box": "box-1", "equals": 999}]
        report, _ = run_scenario(ScenarioConfig.from_dict(scenario_dict(assertions=assertions)))
        assert not report.passed
        assert "actual 100" in report.assertions[0].detail


class TestCli:
    def test_simulate_and_verify(self, tmp_path):
        transcript = tmp_path / "e2e.txt"
        report = tmp_path / "e2e.json"
        code = main(["simulate", "--scenario", str(E2E), "--transcript", str(transcript), "--report", str(report)])
        assert code == 0
        data = json.loads(report.read_text(encoding="utf-8"))
        assert data["passed"] is True
        assert data["seed"] == 7
        assert main(["verify-transcript", str(transcript)]) == 0

    def test_verify_fails_on_edit(self, tmp_path):
        transcript = tmp_path / "e2e.txt"
        assert main(["simulate", "--scenario", str(E2E), "--transcript", str(transcript), "--no-report"]) == 0
        lines = transcript.read_text().splitlines()
        transcript.write_text("\n".join(lines[:-1]) + "\n")
        assert main(["verify-transcript", str(transcript)]) == 1

    def test_failing_scenario_exit_code(self, tmp_path):
        scenario = tmp_path / "failing.yaml"
        data = scenario_dict(assertions=[{"check": "deposit", "box": "box-1", "equals": 999}])
        scenario.write_text(yaml.safe_dump(data), encoding="utf-8")
        code = main(["simulate", "--scenario", str(scenario), "--transcript", str(tmp_path / "t.txt"), "--no-report"])
        assert code == 1

    def test_extra_adversary_flag(self, tmp_path):
        transcript = tmp_path / "t.txt"
        code = main([
            "simulate", "--scenario", str(E2E), "--adversary", "Eavesdrop",
            "--transcript", str(transcript), "--no-report",
        ])
        assert code == 0
        assert verify_transcript(transcript).ok

    def test_missing_scenario(self, tmp_path):
        assert main(["simulate", "--scenario", str(tmp_path / "none.yaml"), "--no-report"]) == 2

    def test_missing_transcript(self, tmp_path):
        assert main(["verify-transcript", str(tmp_path / "none.txt")]) == 2
