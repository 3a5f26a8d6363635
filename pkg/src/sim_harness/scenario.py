"""Scenario files: who exists, what happens, what must hold afterwards."""

from __future__ import annotations

from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.common.config import PROJECT_ROOT, settings
from src.common.errors import ConfigError, FixtureMissing


# === Endpoints ===

class ServiceSpec(BaseModel):
    stream_id: int = Field(ge=0, lt=1 << 16)
    description: str = ""
    cas_id: str = "cas-main"
    online_gated: bool = False


class ProviderSpec(BaseModel):
    """A service provider; ``vouched`` providers are not pre-installed in boxes."""
    name: str
    offer_id: str = "offer-1"
    services: list[ServiceSpec] = Field(min_length=1)
    tariffs: dict[str, int] = Field(default_factory=lambda: {"prepaid": settings.services.default_tariff})
    vouched: bool = False


class NamedSpec(BaseModel):
    name: str


class ManufacturerSpec(BaseModel):
    id: str


class SecondaryDeviceSpec(BaseModel):
    name: str


class BoxSpec(BaseModel):
    name: str
    manufacturer: str
    model: str = "stb-100"
    manifest: str
    customer_id: str
    deposit: int = Field(default=0, ge=0)
    charging: str | None = None
    hw_revision: str = "A"


class EndpointsSpec(BaseModel):
    pca: str = "pca"
    auditor: str | None = None
    time_authority: str | None = None
    manufacturers: list[ManufacturerSpec] = Field(min_length=1)
    providers: list[ProviderSpec] = Field(default_factory=list)
    charging: list[NamedSpec] = Field(default_factory=list)
    update_services: list[NamedSpec] = Field(default_factory=list)
    secondary_devices: list[SecondaryDeviceSpec] = Field(default_factory=list)
    boxes: list[BoxSpec] = Field(min_length=1)


class FixturesSpec(BaseModel):
    reference: str
    catalog: str | None = None


# === Script ===

class AdversarySpec(BaseModel):
    """``kind`` plus free-form parameters (copies, mode, victim, event_index)."""
    model_config = ConfigDict(extra="allow")

    kind: str
    target: str | None = None

    @property
    def params(self) -> dict:
        return dict(self.model_extra or {})


class EventSpec(BaseModel):
    """One scripted step. ``expect`` is "ok" or an error code."""
    model_config = ConfigDict(extra="allow")

    op: str
    id: str | None = None
    expect: str | None = None

    @property
    def params(self) -> dict:
        return dict(self.model_extra or {})


class AssertionSpec(BaseModel):
    model_config = ConfigDict(extra="allow")

    check: str
    id: str | None = None

    @property
    def params(self) -> dict:
        return dict(self.model_extra or {})


class ScenarioConfig(BaseModel):
    """A complete scenario file."""
    name: str
    description: str = ""
    seed: int = Field(default=1, ge=0, lt=1 << 64)
    fixtures: FixturesSpec
    endpoints: EndpointsSpec
    adversaries: list[AdversarySpec] = Field(default_factory=list)
    events: list[EventSpec] = Field(default_factory=list)
    assertions: list[AssertionSpec] = Field(default_factory=list)

    # Fixture paths are resolved against this directory.
    base_dir: Path = Field(default=PROJECT_ROOT, exclude=True)

    def resolve(self, relative: str) -> Path:
        """Absolute fixture path; raises FixtureMissing if it does not exist."""
        path = Path(relative)
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.exists():
            raise FixtureMissing(str(path))
        return path

    def check_fixtures(self) -> None:
        self.resolve(self.fixtures.reference)
        if self.fixtures.catalog:
            self.resolve(self.fixtures.catalog)
        for box in self.endpoints.boxes:
            self.resolve(box.manifest)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> ScenarioConfig:
        try:
            config = cls(**data, base_dir=base_dir or PROJECT_ROOT)
        except (ValidationError, TypeError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc
        names = [config.endpoints.pca]
        names += [n for n in (config.endpoints.auditor, config.endpoints.time_authority) if n]
        names += [p.name for p in config.endpoints.providers]
        names += [c.name for c in config.endpoints.charging]
        names += [u.name for u in config.endpoints.update_services]
        names += [s.name for s in config.endpoints.secondary_devices]
        names += [b.name for b in config.endpoints.boxes]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ConfigError(f"duplicate endpoint names: {', '.join(duplicates)}")
        return config

    @classmethod
    def from_yaml(cls, path: str | Path) -> ScenarioConfig:
        """Load a scenario; fixture paths are relative to the project root."""
        path = Path(path)
        if not path.exists():
            raise FixtureMissing(str(path))
        with open(path, encoding="utf-8") as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)
