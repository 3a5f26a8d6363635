"""Same scenario and seed must give byte-identical transcripts."""

from src.sim_harness.scenario import AdversarySpec, ScenarioConfig
from src.sim_harness.simulation import run_scenario
from tests.conftest import SCENARIOS


def _load(name: str) -> ScenarioConfig:
    return ScenarioConfig.from_yaml(SCENARIOS / f"{name}.yaml")


class TestDeterminism:
    def test_same_seed_same_digest(self):
        config = _load("postpaid-settle")
        first, _ = run_scenario(config)
        second, _ = run_scenario(config)
        assert first.transcript_digest == second.transcript_digest
        assert first.deliveries == second.deliveries

    def test_identical_payloads(self):
        config = _load("multi-cas")
        _, a = run_scenario(config)
        _, b = run_scenario(config)
        assert [d.payload for d in a.net.transcript] == [d.payload for d in b.net.transcript]

    def test_seed_changes_transcript(self):
        config = _load("e2e-purchase")
        a, _ = run_scenario(config, seed=7)
        b, _ = run_scenario(config, seed=8)
        assert a.seed == 7 and b.seed == 8
        assert a.transcript_digest != b.transcript_digest
        assert a.passed and b.passed

    def test_seed_override_leaves_config_untouched(self):
        config = _load("e2e-purchase")
        run_scenario(config, seed=99)
        assert config.seed == 7

    def test_extra_adversary_is_deterministic(self):
        config = _load("e2e-purchase")
        extra = [AdversarySpec(kind="Eavesdrop")]
        a, _ = run_scenario(config, adversaries=extra)
        b, _ = run_scenario(config, adversaries=extra)
        plain, _ = run_scenario(config)
        assert a.transcript_digest == b.transcript_digest == plain.transcript_digest
