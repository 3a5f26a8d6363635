"""Project configuration and paths.

Loads settings from config/settings.yaml and environment variables.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Literal

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field

# === Paths ===
PROJECT_ROOT = Path(__file__).parent.parent.parent
CONFIG_DIR = PROJECT_ROOT / "config"
SCENARIO_DIR = CONFIG_DIR / "scenarios"
FIXTURES_DIR = PROJECT_ROOT / "fixtures"

# Load .env from project root
load_dotenv(PROJECT_ROOT / ".env")

DATA_DIR = Path(os.getenv("STB_DATA_DIR", str(PROJECT_ROOT / "data")))
DATA_TRANSCRIPTS_DIR = DATA_DIR / "transcripts"
DATA_REPORTS_DIR = DATA_DIR / "reports"


class CryptoSettings(BaseModel):
    """Key schemes behind the sign/verify and encrypt/decrypt contracts."""
    signature_scheme: Literal["ed25519"] = "ed25519"
    encryption_scheme: Literal["x25519-hkdf-aesgcm"] = "x25519-hkdf-aesgcm"
    # The historical AIK size; kept as a label only.
    compat_label: str = "rsa-1024"


class TpmSettings(BaseModel):
    """Software TPM geometry."""
    pcr_count: int = 16
    owner_auth_bytes: int = 20
    persist_nonce_cache: bool = True
    attest_pcrs: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])


class StreamSettings(BaseModel):
    """Transport stream packetization."""
    packets_per_period: int = Field(default=100, gt=0)
    payload_bytes: int = 184


class WatermarkSettings(BaseModel):
    """Client-side tag placement inside each packet payload."""
    offset: int = 176
    length: int = 8


class ServiceSettings(BaseModel):
    """Head-end party defaults."""
    permit_ttl_seconds: int = 3600
    default_tariff: int = 1


class SimSettings(BaseModel):
    """Simulation harness defaults."""
    default_seed: int = 1
    start_time: int = 1_700_000_000


class Settings(BaseModel):
    """Top-level application settings."""
    crypto: CryptoSettings = Field(default_factory=CryptoSettings)
    tpm: TpmSettings = Field(default_factory=TpmSettings)
    stream: StreamSettings = Field(default_factory=StreamSettings)
    watermark: WatermarkSettings = Field(default_factory=WatermarkSettings)
    services: ServiceSettings = Field(default_factory=ServiceSettings)
    sim: SimSettings = Field(default_factory=SimSettings)

    @classmethod
    def load(cls) -> Settings:
        """Load settings from config/settings.yaml, falling back to defaults."""
        settings_path = CONFIG_DIR / "settings.yaml"
        data: dict = {}
        if settings_path.exists():
            with open(settings_path, encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        loaded = cls(**data)
        if seed := os.getenv("STB_SIM_SEED"):
            loaded.sim.default_seed = int(seed)
        return loaded


# Singleton settings instance
settings = Settings.load()
